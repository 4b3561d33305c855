#pragma once

// Residual quantization with implicit neural codebooks. Stage n >= 2 does not
// look up a fixed table: each base centroid is passed, together with the
// reconstruction so far, through a small network that emits the adapted
// centroid. Stage 1 uses its base codebook unchanged.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "resq/binary_io.hpp"
#include "resq/error.hpp"
#include "resq/matrix.hpp"
#include "resq/nn.hpp"
#include "resq/rvq.hpp"
#include "resq/vq_core.hpp"

namespace resq {

template <class T = float>
struct QincoModel {
  RvqModel<T> base;                   // plain RVQ codebooks C̄_1..C̄_N
  std::vector<nn::StageNet<T>> nets;  // nets[i] drives stage i + 2
  std::size_t hidden = 0;
  std::size_t blocks = 0;

  std::size_t num_stages() const noexcept { return base.num_stages(); }
  std::size_t codebook_size() const noexcept { return base.codebook_size(); }
  std::size_t dim() const noexcept { return base.dim(); }

  /// Network for 0-based stage n (n >= 1).
  const nn::StageNet<T>& net(std::size_t n) const { return nets[n - 1]; }

  std::size_t num_params() const {
    std::size_t total = 0;
    for (const auto& n : nets) total += n.num_params();
    return total;
  }

  void validate() const {
    base.validate();
    require(base.variant == RvqVariant::Plain, ErrorKind::InvalidArgument,
            "base codebooks must come from plain RVQ");
    require(nets.size() + 1 == num_stages(), ErrorKind::CorruptHeader,
            "need one network per stage after the first");
    for (const auto& n : nets) {
      require(n.dim() == dim() && n.hidden() == hidden && n.layout.blocks == blocks,
              ErrorKind::DimensionMismatch, "stage network shape mismatch");
      require(all_finite(std::span<const T>(n.params)), ErrorKind::NonFiniteValue,
              "non-finite network parameter");
    }
  }

  template <class U>
  QincoModel<U> cast() const {
    QincoModel<U> out;
    out.base = base.template cast<U>();
    out.hidden = hidden;
    out.blocks = blocks;
    for (const auto& n : nets) out.nets.push_back(n.template cast<U>());
    return out;
  }

  friend bool operator==(const QincoModel&, const QincoModel&) = default;
};

/// Copies the base codebooks and builds one network per stage after the first.
template <class T>
QincoModel<T> qinco_init(const RvqModel<T>& base, std::size_t blocks, std::size_t hidden,
                         std::uint64_t seed) {
  require(base.variant == RvqVariant::Plain, ErrorKind::InvalidArgument,
          "qinco_init expects a plain RVQ model");
  require(base.num_stages() >= 1, ErrorKind::InvalidArgument, "base model has no stages");
  require(hidden >= 1, ErrorKind::InvalidArgument, "hidden width must be >= 1");
  QincoModel<T> model;
  model.base = base;
  model.hidden = hidden;
  model.blocks = blocks;
  std::mt19937_64 rng(seed);
  for (std::size_t n = 1; n < base.num_stages(); ++n) {
    nn::StageNet<T> net(base.dim(), hidden, blocks);
    nn::init_stage(net, rng);
    model.nets.push_back(std::move(net));
  }
  return model;
}

template <class T>
std::vector<T> stage_forward(const nn::StageNet<T>& net, std::span<const T> x_hat,
                             std::span<const T> base_centroid) {
  return net.forward(x_hat, base_centroid);
}

/// Evaluates all K adapted centroids of each stage for a frame. Holds the
/// per-stage base projections so they are computed once per model.
template <class T>
class QincoCandidateEvaluator {
 public:
  explicit QincoCandidateEvaluator(const QincoModel<T>& model) : model_(&model) {
    const std::size_t k = model.codebook_size();
    for (std::size_t n = 1; n < model.num_stages(); ++n) {
      std::vector<T> proj(k * model.hidden);
      model.net(n).project_base(model.base.codebooks[n].entries.data(), k, proj.data());
      base_proj_.push_back(std::move(proj));
    }
  }

  /// Writes the K x D candidate centroids of 0-based stage n >= 1 given x_hat.
  void candidates(std::size_t n, std::span<const T> x_hat, std::vector<T>& out) {
    const auto& net = model_->net(n);
    const std::size_t k = model_->codebook_size();
    const std::size_t hd = model_->hidden;
    px_.resize(hd);
    net.project_reconstruction(x_hat.data(), px_.data());
    h_.resize(k * hd);
    const auto& bp = base_proj_[n - 1];
    for (std::size_t c = 0; c < k; ++c) {
      for (std::size_t j = 0; j < hd; ++j) h_[c * hd + j] = bp[c * hd + j] + px_[j];
    }
    out.resize(k * model_->dim());
    net.run_trunk(h_.data(), k, model_->base.codebooks[n].entries.data(), out.data(), a_, b_);
  }

 private:
  const QincoModel<T>* model_;
  std::vector<std::vector<T>> base_proj_;
  std::vector<T> px_, h_, a_, b_;
};

/// Encode-side bookkeeping: final residual and reconstruction.
template <class T>
struct QincoEncodeState {
  std::vector<T> residual;
  std::vector<T> x_hat;
};

namespace detail {

template <class T>
void qinco_encode_with(const QincoModel<T>& model, QincoCandidateEvaluator<T>& eval,
                       std::span<const T> x, std::span<std::uint32_t> codes,
                       QincoEncodeState<T>& st, std::vector<T>& cand) {
  const std::size_t dim = model.dim();
  st.residual.assign(x.begin(), x.end());
  st.x_hat.assign(dim, T(0));
  const std::size_t k_count = model.codebook_size();
  for (std::size_t n = 0; n < model.num_stages(); ++n) {
    const T* table;
    if (n == 0) {
      table = model.base.codebooks[0].entries.data();
    } else {
      eval.candidates(n, st.x_hat, cand);
      table = cand.data();
    }
    std::size_t best = 0;
    T best_dist = std::numeric_limits<T>::infinity();
    for (std::size_t k = 0; k < k_count; ++k) {
      const T dist = squared_distance<T>(st.residual, std::span<const T>(table + k * dim, dim));
      if (dist < best_dist) {
        best_dist = dist;
        best = k;
      }
    }
    const T* c = table + best * dim;
    for (std::size_t d = 0; d < dim; ++d) {
      st.residual[d] -= c[d];
      st.x_hat[d] += c[d];
    }
    codes[n] = static_cast<std::uint32_t>(best);
  }
}

}  // namespace detail

template <class T>
std::vector<std::uint32_t> qinco_encode(const QincoModel<T>& model, std::span<const T> x,
                                        QincoEncodeState<T>* state = nullptr) {
  require_dim(model.dim(), x.size(), "qinco_encode");
  QincoCandidateEvaluator<T> eval(model);
  std::vector<std::uint32_t> codes(model.num_stages());
  QincoEncodeState<T> st;
  std::vector<T> cand;
  detail::qinco_encode_with(model, eval, x, std::span<std::uint32_t>(codes), st, cand);
  if (state) *state = std::move(st);
  return codes;
}

/// Encodes every row; frames.rows() x N codes, row-major.
template <class T>
std::vector<std::uint32_t> qinco_encode_all(const QincoModel<T>& model, const Matrix<T>& frames,
                                            unsigned threads = 1) {
  require_dim(model.dim(), frames.cols(), "qinco_encode");
  const std::size_t n = model.num_stages();
  std::vector<std::uint32_t> codes(frames.rows() * n);
  parallel_for(frames.rows(), threads, [&](std::size_t b, std::size_t e) {
    QincoCandidateEvaluator<T> eval(model);
    QincoEncodeState<T> st;
    std::vector<T> cand;
    for (std::size_t i = b; i < e; ++i) {
      detail::qinco_encode_with(model, eval, frames.row(i),
                                std::span<std::uint32_t>(codes).subspan(i * n, n), st, cand);
    }
  });
  return codes;
}

/// Replays x_hat <- x_hat + f_n(x_hat, base[code_n]), calling visit(n, x_hat)
/// after each stage.
template <class T, class Visit>
void qinco_decode_prefixes(const QincoModel<T>& model, std::span<const std::uint32_t> codes,
                           std::span<T> x_hat, Visit&& visit) {
  require(codes.size() == model.num_stages(), ErrorKind::LengthMismatch,
          "code vector length must equal the number of stages");
  require_dim(model.dim(), x_hat.size(), "qinco_decode");
  std::ranges::fill(x_hat, T(0));
  std::vector<T> snapshot(x_hat.size());
  for (std::size_t n = 0; n < model.num_stages(); ++n) {
    const auto& cb = model.base.codebooks[n];
    if (codes[n] >= cb.size()) {
      throw Error(ErrorKind::IndexOutOfRange, "code " + std::to_string(codes[n]) +
                                                  " out of range at stage " + std::to_string(n));
    }
    if (n == 0) {
      const auto c = cb.entry(codes[n]);
      for (std::size_t d = 0; d < x_hat.size(); ++d) x_hat[d] += c[d];
    } else {
      std::ranges::copy(x_hat, snapshot.begin());
      const auto c = model.net(n).forward(snapshot, cb.entry(codes[n]));
      for (std::size_t d = 0; d < x_hat.size(); ++d) x_hat[d] += c[d];
    }
    visit(n, std::span<const T>(x_hat));
  }
}

template <class T>
std::vector<T> qinco_decode(const QincoModel<T>& model, std::span<const std::uint32_t> codes) {
  std::vector<T> x_hat(model.dim());
  qinco_decode_prefixes(model, codes, std::span<T>(x_hat), [](std::size_t, std::span<const T>) {});
  return x_hat;
}

template <class T>
Matrix<T> qinco_decode_all(const QincoModel<T>& model, std::span<const std::uint32_t> codes,
                           unsigned threads = 1) {
  const std::size_t n = model.num_stages();
  require(codes.size() % n == 0, ErrorKind::LengthMismatch, "code count not a multiple of N");
  Matrix<T> out(codes.size() / n, model.dim());
  parallel_for(out.rows(), threads, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      qinco_decode_prefixes(model, codes.subspan(i * n, n), out.row(i),
                            [](std::size_t, std::span<const T>) {});
    }
  });
  return out;
}

/// Mean squared reconstruction error after each stage prefix 1..N.
template <class T>
std::vector<double> qinco_eval(const QincoModel<T>& model, const Matrix<T>& frames,
                               unsigned threads = 1) {
  require(!frames.empty(), ErrorKind::EmptyInput, "qinco_eval needs at least one frame");
  const auto codes = qinco_encode_all(model, frames, threads);
  const std::size_t n = model.num_stages();
  std::vector<double> per_frame(frames.rows() * n);
  parallel_for(frames.rows(), threads, [&](std::size_t b, std::size_t e) {
    std::vector<T> x_hat(model.dim());
    for (std::size_t i = b; i < e; ++i) {
      const auto x = frames.row(i);
      qinco_decode_prefixes(model, std::span<const std::uint32_t>(codes).subspan(i * n, n),
                            std::span<T>(x_hat), [&](std::size_t stage, std::span<const T> xh) {
                              double acc = 0.0;
                              for (std::size_t d = 0; d < xh.size(); ++d) {
                                const double diff = static_cast<double>(x[d]) - xh[d];
                                acc += diff * diff;
                              }
                              per_frame[i * n + stage] = acc;
                            });
    }
  });
  std::vector<double> mse(n, 0.0);
  for (std::size_t i = 0; i < frames.rows(); ++i) {
    for (std::size_t s = 0; s < n; ++s) mse[s] += per_frame[i * n + s];
  }
  for (auto& v : mse) v /= static_cast<double>(frames.rows());
  return mse;
}

// ---------------------------------------------------------------------------
// Training objective

struct QincoLoss {
  double total = 0.0;
  std::vector<double> per_stage;  // mean ||r_n - c_n||^2 for n = 1..N
};

/// Gradient buffers shaped like the model's networks.
template <class T>
struct QincoGrad {
  std::vector<std::vector<T>> nets;

  explicit QincoGrad(const QincoModel<T>& model) {
    for (const auto& n : model.nets) nets.emplace_back(n.num_params(), T(0));
  }
  double norm() const {
    double acc = 0.0;
    for (const auto& g : nets) {
      for (T v : g) acc += static_cast<double>(v) * static_cast<double>(v);
    }
    return std::sqrt(acc);
  }
  void scale(T factor) {
    for (auto& g : nets) {
      for (auto& v : g) v *= factor;
    }
  }
};

/// Summed per-stage MSE with the code selections held fixed, plus (when `grad`
/// is given) its gradient with respect to every network parameter. Codes are
/// treated as constants; gradients flow through both the residual and the
/// network's reconstruction input.
template <class T>
QincoLoss qinco_loss_frozen(const QincoModel<T>& model, const Matrix<T>& batch,
                            std::span<const std::uint32_t> codes, QincoGrad<T>* grad = nullptr) {
  require(!batch.empty(), ErrorKind::EmptyInput, "loss needs a nonempty batch");
  require_dim(model.dim(), batch.cols(), "qinco_loss");
  const std::size_t stages = model.num_stages();
  const std::size_t dim = model.dim();
  require(codes.size() == batch.rows() * stages, ErrorKind::LengthMismatch,
          "need N codes per frame");

  QincoLoss loss;
  loss.per_stage.assign(stages, 0.0);
  const T inv_b = T(1) / static_cast<T>(batch.rows());

  std::vector<nn::StageCache<T>> caches(stages);
  std::vector<std::vector<T>> residual(stages + 1, std::vector<T>(dim));
  std::vector<std::vector<T>> x_hat(stages + 1, std::vector<T>(dim));
  std::vector<T> g_r(dim), g_x(dim), g_c(dim);

  for (std::size_t i = 0; i < batch.rows(); ++i) {
    const auto x = batch.row(i);
    std::ranges::copy(x, residual[0].begin());
    std::ranges::fill(x_hat[0], T(0));
    for (std::size_t n = 0; n < stages; ++n) {
      const std::uint32_t k = codes[i * stages + n];
      const auto& cb = model.base.codebooks[n];
      require(k < cb.size(), ErrorKind::IndexOutOfRange, "code out of range");
      std::span<const T> c;
      if (n == 0) {
        c = cb.entry(k);
      } else {
        model.net(n).forward_cached(x_hat[n], cb.entry(k), caches[n]);
        c = caches[n].output;
      }
      T term = T(0);
      for (std::size_t d = 0; d < dim; ++d) {
        residual[n + 1][d] = residual[n][d] - c[d];
        x_hat[n + 1][d] = x_hat[n][d] + c[d];
        term += residual[n + 1][d] * residual[n + 1][d];
      }
      loss.per_stage[n] += static_cast<double>(term);
    }

    if (!grad) continue;
    // state after stage n is (r_{n+1}, x_hat_{n+1});
    // r_{n+1} = r_n - c_n, x_hat_{n+1} = x_hat_n + c_n, c_n = f_n(x_hat_n, base).
    std::ranges::fill(g_x, T(0));
    for (std::size_t d = 0; d < dim; ++d) g_r[d] = T(2) * inv_b * residual[stages][d];
    for (std::size_t n = stages; n-- > 1;) {
      for (std::size_t d = 0; d < dim; ++d) g_c[d] = g_x[d] - g_r[d];
      const auto gx_in = model.net(n).backward(caches[n], g_c, grad->nets[n - 1]);
      for (std::size_t d = 0; d < dim; ++d) {
        g_x[d] += gx_in[d];
        g_r[d] += T(2) * inv_b * residual[n][d];
      }
    }
  }
  for (auto& v : loss.per_stage) v /= static_cast<double>(batch.rows());
  loss.total = std::accumulate(loss.per_stage.begin(), loss.per_stage.end(), 0.0);
  return loss;
}

/// Loss with codes chosen by the current model.
template <class T>
QincoLoss qinco_loss(const QincoModel<T>& model, const Matrix<T>& batch, unsigned threads = 1) {
  require(!batch.empty(), ErrorKind::EmptyInput, "loss needs a nonempty batch");
  const auto codes = qinco_encode_all(model, batch, threads);
  return qinco_loss_frozen(model, batch, codes);
}

struct QincoTrainConfig {
  double learning_rate = 1e-4;
  std::size_t batch_size = 256;
  std::size_t steps = 1000;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double clip_norm = 1.0;  // <= 0 disables clipping
  std::uint64_t seed = 0;
  unsigned threads = 1;

  void validate() const {
    require(learning_rate >= 0.0 && std::isfinite(learning_rate), ErrorKind::InvalidArgument,
            "learning rate must be finite and non-negative");
    require(batch_size >= 1, ErrorKind::InvalidArgument, "batch size must be >= 1");
  }
};

struct QincoStepReport {
  std::uint64_t step = 0;
  QincoLoss loss;
  double grad_norm = 0.0;
};

/// Optimizer state plus the step routine. Codes are re-derived from the
/// current parameters on every step.
template <class T>
class QincoTrainer {
 public:
  QincoTrainer(QincoModel<T>& model, QincoTrainConfig cfg) : model_(&model), cfg_(cfg) {
    cfg_.validate();
    std::vector<std::size_t> sizes;
    for (const auto& n : model.nets) sizes.push_back(n.num_params());
    adam_ = nn::Adam<T>({cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon}, sizes);
  }

  /// One optimizer step on `batch`. Throws NonFiniteLoss without touching the
  /// parameters if the loss or gradient is not finite.
  QincoStepReport step(const Matrix<T>& batch) {
    const auto codes = qinco_encode_all(*model_, batch, cfg_.threads);
    QincoGrad<T> grad(*model_);
    QincoStepReport report;
    report.loss = qinco_loss_frozen(*model_, batch, codes, &grad);
    report.grad_norm = grad.norm();
    if (!std::isfinite(report.loss.total) || !std::isfinite(report.grad_norm)) {
      throw Error(ErrorKind::NonFiniteLoss, "non-finite loss or gradient; step aborted");
    }
    if (cfg_.clip_norm > 0.0 && report.grad_norm > cfg_.clip_norm) {
      grad.scale(static_cast<T>(cfg_.clip_norm / report.grad_norm));
    }
    std::vector<std::vector<T>*> params;
    for (auto& n : model_->nets) params.push_back(&n.params);
    if (!params.empty()) adam_.step(params, grad.nets);
    report.step = adam_.steps();
    return report;
  }

  /// Runs cfg.steps steps over shuffled mini-batches of `frames`.
  void fit(const Matrix<T>& frames,
           const std::function<void(const QincoStepReport&)>& on_step = {}) {
    require(!frames.empty(), ErrorKind::EmptyInput, "training needs at least one frame");
    std::mt19937_64 rng(cfg_.seed);
    std::vector<std::size_t> order(frames.rows());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::size_t cursor = order.size();
    const std::size_t bs = std::min(cfg_.batch_size, frames.rows());
    std::vector<std::size_t> idx(bs);
    for (std::size_t s = 0; s < cfg_.steps; ++s) {
      for (auto& i : idx) {
        if (cursor == order.size()) {
          std::shuffle(order.begin(), order.end(), rng);
          cursor = 0;
        }
        i = order[cursor++];
      }
      const auto report = step(frames.gather(idx));
      if (on_step) on_step(report);
    }
  }

 private:
  QincoModel<T>* model_;
  QincoTrainConfig cfg_;
  nn::Adam<T> adam_;
};

template <class T>
QincoStepReport qinco_train_step(QincoModel<T>& model, const Matrix<T>& batch,
                                 const QincoTrainConfig& cfg) {
  QincoTrainer<T> trainer(model, cfg);
  return trainer.step(batch);
}

// ---------------------------------------------------------------------------
// Finite-difference verification

struct GradientCheckReport {
  std::size_t samples = 0;
  double max_rel_error = 0.0;
  double mean_rel_error = 0.0;
  double loss = 0.0;
};

/// Compares reverse-mode gradients against central differences
/// (L(θ+h) - L(θ-h)) / 2h on `samples` randomly chosen parameters, with codes
/// frozen at the unperturbed model. Runs in double precision.
template <class T>
GradientCheckReport gradient_check(const QincoModel<T>& model, const Matrix<T>& batch,
                                   std::size_t samples, double h, std::uint64_t seed = 0) {
  auto m = model.template cast<double>();
  const auto b = batch.template cast<double>();
  const auto codes = qinco_encode_all(m, b);
  QincoGrad<double> grad(m);
  GradientCheckReport report;
  report.loss = qinco_loss_frozen(m, b, codes, &grad).total;
  const std::size_t total = m.num_params();
  if (total == 0 || samples == 0) return report;

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, total - 1);
  double sum = 0.0;
  for (std::size_t s = 0; s < samples; ++s) {
    std::size_t flat = pick(rng);
    std::size_t net = 0;
    while (flat >= m.nets[net].num_params()) flat -= m.nets[net++].num_params();
    double& p = m.nets[net].params[flat];
    const double saved = p;
    p = saved + h;
    const double up = qinco_loss_frozen(m, b, codes).total;
    p = saved - h;
    const double down = qinco_loss_frozen(m, b, codes).total;
    p = saved;
    const double numeric = (up - down) / (2.0 * h);
    const double analytic = grad.nets[net][flat];
    const double denom = std::max({std::abs(numeric), std::abs(analytic), 1e-8});
    const double rel = std::abs(numeric - analytic) / denom;
    report.max_rel_error = std::max(report.max_rel_error, rel);
    sum += rel;
  }
  report.samples = samples;
  report.mean_rel_error = sum / static_cast<double>(samples);
  return report;
}

// ---------------------------------------------------------------------------
// Model file: "RESQQNC1", u32 N, K, D, L, H, N codebooks, then for every stage
// net the tensors (u32 name length, name, u32 rank, u32 dims..., f32 data).

inline constexpr std::string_view kQincoMagic{"RESQQNC1", 8};

template <class T>
std::vector<std::uint8_t> serialize_qinco(const QincoModel<T>& model) {
  io::ByteWriter w;
  w.put_magic(kQincoMagic);
  w.put_u32(static_cast<std::uint32_t>(model.num_stages()));
  w.put_u32(static_cast<std::uint32_t>(model.codebook_size()));
  w.put_u32(static_cast<std::uint32_t>(model.dim()));
  w.put_u32(static_cast<std::uint32_t>(model.blocks));
  w.put_u32(static_cast<std::uint32_t>(model.hidden));
  for (const auto& cb : model.base.codebooks) write_codebook(w, cb);
  for (std::size_t s = 0; s < model.nets.size(); ++s) {
    const auto& net = model.nets[s];
    for (const auto& t : net.layout.tensors()) {
      w.put_string("stage" + std::to_string(s + 2) + "." + t.name);
      w.put_u32(static_cast<std::uint32_t>(t.shape.size()));
      for (auto dim : t.shape) w.put_u32(static_cast<std::uint32_t>(dim));
      for (std::size_t i = 0; i < t.size(); ++i) w.put_f32(static_cast<float>(net.params[t.offset + i]));
    }
  }
  return w.take();
}

template <class T = float>
QincoModel<T> deserialize_qinco(std::span<const std::uint8_t> bytes) {
  io::ByteReader r(bytes);
  if (!r.match_magic(kQincoMagic)) throw Error(ErrorKind::CorruptHeader, "bad Qinco model magic");
  const std::size_t n = r.u32();
  const std::size_t k = r.u32();
  const std::size_t dim = r.u32();
  QincoModel<T> model;
  model.blocks = r.u32();
  model.hidden = r.u32();
  model.base.variant = RvqVariant::Plain;
  for (std::size_t i = 0; i < n; ++i) model.base.codebooks.push_back(read_codebook<T>(r));
  require(model.codebook_size() == k && model.dim() == dim, ErrorKind::CorruptHeader,
          "codebook shape disagrees with header");
  for (std::size_t s = 1; s < n; ++s) {
    nn::StageNet<T> net(dim, model.hidden, model.blocks);
    for (const auto& t : net.layout.tensors()) {
      const std::string expected = "stage" + std::to_string(s + 1) + "." + t.name;
      const std::string name = r.string();
      require(name == expected, ErrorKind::CorruptHeader,
              "expected tensor " + expected + ", found " + name);
      const std::uint32_t rank = r.u32();
      require(rank == t.shape.size(), ErrorKind::CorruptHeader, "bad rank for " + name);
      for (auto want : t.shape) {
        require(r.u32() == want, ErrorKind::CorruptHeader, "bad shape for " + name);
      }
      for (std::size_t i = 0; i < t.size(); ++i) net.params[t.offset + i] = static_cast<T>(r.f32());
    }
    model.nets.push_back(std::move(net));
  }
  require(r.remaining() == 0, ErrorKind::CorruptHeader, "trailing bytes after Qinco model");
  model.validate();
  return model;
}

template <class T>
void save_qinco(const std::filesystem::path& path, const QincoModel<T>& model) {
  io::write_file_atomic(path, serialize_qinco(model));
}

template <class T = float>
QincoModel<T> load_qinco(const std::filesystem::path& path) {
  return deserialize_qinco<T>(io::read_file(path));
}

}  // namespace resq
