#pragma once

// Residual vector quantization: the plain additive cascade and the
// re-standardized variant, which divides every residual by the spread of the
// cluster that produced it before handing it to the next stage.

#include <cstdint>
#include <filesystem>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "resq/binary_io.hpp"
#include "resq/error.hpp"
#include "resq/matrix.hpp"
#include "resq/vq_core.hpp"

namespace resq {

enum class RvqVariant : std::uint8_t { Plain = 0, Improved = 1 };

template <class T = float>
struct RvqModel {
  std::vector<Codebook<T>> codebooks;
  RvqVariant variant = RvqVariant::Plain;

  std::size_t num_stages() const noexcept { return codebooks.size(); }
  std::size_t codebook_size() const noexcept {
    return codebooks.empty() ? 0 : codebooks.front().size();
  }
  std::size_t dim() const noexcept { return codebooks.empty() ? 0 : codebooks.front().dim(); }

  void validate() const {
    require(!codebooks.empty(), ErrorKind::InvalidArgument, "model has no codebooks");
    for (std::size_t n = 0; n < codebooks.size(); ++n) {
      const auto& cb = codebooks[n];
      cb.validate();
      require(cb.size() == codebook_size() && cb.dim() == dim(), ErrorKind::DimensionMismatch,
              "all codebooks must share K and D");
      require(cb.has_scales() == (variant == RvqVariant::Improved), ErrorKind::CorruptHeader,
              "scales must be present exactly for the improved variant");
      if (n > 0) {
        require(cb.null_index.has_value(), ErrorKind::CorruptHeader,
                "codebook " + std::to_string(n) + " lacks a null entry");
      }
    }
  }

  template <class U>
  RvqModel<U> cast() const {
    RvqModel<U> out;
    out.variant = variant;
    for (const auto& cb : codebooks) out.codebooks.push_back(cb.template cast<U>());
    return out;
  }

  friend bool operator==(const RvqModel&, const RvqModel&) = default;
};

namespace detail {

/// Distance in standardized coordinates weighted by the cumulative scale,
/// i.e. the squared error this choice leaves in the original space.
template <class T>
T weighted_distance(std::span<const T> r, std::span<const T> c, std::span<const T> s) noexcept {
  T acc = T(0);
  for (std::size_t d = 0; d < r.size(); ++d) {
    const T diff = s[d] * (r[d] - c[d]);
    acc += diff * diff;
  }
  return acc;
}

template <class T>
std::size_t nearest_weighted(const Codebook<T>& cb, std::span<const T> r,
                             std::span<const T> s) {
  std::size_t best = 0;
  T best_dist = std::numeric_limits<T>::infinity();
  for (std::size_t k = 0; k < cb.size(); ++k) {
    const T d = weighted_distance(r, cb.entry(k), s);
    if (d < best_dist) {
      best_dist = d;
      best = k;
    }
  }
  return best;
}

template <class T>
std::size_t smallest_norm_entry(const Codebook<T>& cb) {
  std::size_t best = 0;
  T best_norm = std::numeric_limits<T>::infinity();
  for (std::size_t k = 0; k < cb.size(); ++k) {
    const T n = squared_norm(cb.entry(k));
    if (n < best_norm) {
      best_norm = n;
      best = k;
    }
  }
  return best;
}

/// k-means on a stage's residuals. When the residuals hold fewer than K
/// distinct points (for instance, all zero after a perfect first stage) the
/// codebook is the distinct points padded with zeros.
template <class T>
Codebook<T> fit_stage(const Matrix<T>& residuals, KMeansConfig cfg) {
  if (count_distinct_up_to(residuals, cfg.k) >= cfg.k) return kmeans_fit(residuals, cfg);
  Matrix<T> entries(cfg.k, residuals.cols(), T(0));
  std::unordered_set<std::string> seen;
  std::size_t filled = 0;
  for (std::size_t i = 0; i < residuals.rows() && filled < cfg.k; ++i) {
    const auto r = residuals.row(i);
    std::vector<T> canon(r.begin(), r.end());
    for (auto& v : canon) v += T(0);
    if (!seen.emplace(reinterpret_cast<const char*>(canon.data()), canon.size() * sizeof(T))
             .second) {
      continue;
    }
    std::ranges::copy(canon, entries.row(filled++).begin());
  }
  return Codebook<T>(std::move(entries));
}

}  // namespace detail

struct RvqTrainOptions {
  std::size_t num_stages = 4;
  KMeansConfig kmeans;  // kmeans.k is the codebook size K
  unsigned threads = 1;
};

/// Conventional RVQ: stage n is fitted on the residuals left by stages
/// 1..n-1; every stage after the first reserves its smallest-norm entry as
/// the null vector.
template <class T>
RvqModel<T> rvq_train(const Matrix<T>& frames, const RvqTrainOptions& opt) {
  require(!frames.empty(), ErrorKind::EmptyInput, "rvq_train needs at least one frame");
  require(opt.num_stages >= 1, ErrorKind::InvalidArgument, "need at least one stage");
  RvqModel<T> model;
  model.variant = RvqVariant::Plain;
  Matrix<T> residuals = frames;
  for (std::size_t n = 0; n < opt.num_stages; ++n) {
    KMeansConfig cfg = opt.kmeans;
    cfg.seed = opt.kmeans.seed + n;
    Codebook<T> cb = detail::fit_stage(residuals, cfg);
    if (n > 0) cb.set_null(detail::smallest_norm_entry(cb));
    const auto codes = assign_all(cb, residuals, opt.threads);
    for (std::size_t i = 0; i < residuals.rows(); ++i) {
      auto r = residuals.row(i);
      const auto c = cb.entry(codes[i]);
      for (std::size_t d = 0; d < r.size(); ++d) r[d] -= c[d];
    }
    model.codebooks.push_back(std::move(cb));
  }
  return model;
}

/// Re-standardized RVQ. After stage n is fitted, per-cluster spreads are
/// measured and the next stage sees (r - c) / sigma_c.
template <class T>
RvqModel<T> irvq_train(const Matrix<T>& frames, const RvqTrainOptions& opt) {
  require(!frames.empty(), ErrorKind::EmptyInput, "irvq_train needs at least one frame");
  require(opt.num_stages >= 1, ErrorKind::InvalidArgument, "need at least one stage");
  RvqModel<T> model;
  model.variant = RvqVariant::Improved;
  Matrix<T> residuals = frames;
  Matrix<T> cumulative(frames.rows(), frames.cols(), T(1));
  std::vector<std::size_t> codes(frames.rows());
  for (std::size_t n = 0; n < opt.num_stages; ++n) {
    KMeansConfig cfg = opt.kmeans;
    cfg.seed = opt.kmeans.seed + n;
    Codebook<T> cb = detail::fit_stage(residuals, cfg);
    if (n > 0) cb.set_null(detail::smallest_norm_entry(cb));
    parallel_for(residuals.rows(), opt.threads, [&](std::size_t b, std::size_t e) {
      for (std::size_t i = b; i < e; ++i) {
        codes[i] = detail::nearest_weighted<T>(cb, residuals.row(i), cumulative.row(i));
      }
    });
    cb = cluster_stats_from_codes(residuals, codes, std::move(cb));
    for (std::size_t i = 0; i < residuals.rows(); ++i) {
      auto r = residuals.row(i);
      auto s = cumulative.row(i);
      const auto c = cb.entry(codes[i]);
      const auto sigma = cb.scales->row(codes[i]);
      for (std::size_t d = 0; d < r.size(); ++d) {
        r[d] = (r[d] - c[d]) / sigma[d];
        s[d] *= sigma[d];
      }
    }
    model.codebooks.push_back(std::move(cb));
  }
  return model;
}

/// What encode leaves behind: the final residual in the coordinates of the
/// last stage, and the cumulative scale mapping it back to input space.
template <class T>
struct RvqEncodeState {
  std::vector<T> residual;
  std::vector<T> scale;

  /// Squared reconstruction error implied by the tracked residual.
  double error() const {
    double acc = 0.0;
    for (std::size_t d = 0; d < residual.size(); ++d) {
      const double e = static_cast<double>(scale[d]) * static_cast<double>(residual[d]);
      acc += e * e;
    }
    return acc;
  }
};

/// Greedy per-stage encode; ties go to the lowest index.
template <class T>
void rvq_encode_into(const RvqModel<T>& model, std::span<const T> x,
                     std::span<std::uint32_t> codes, RvqEncodeState<T>* state = nullptr) {
  require_dim(model.dim(), x.size(), "rvq_encode");
  require(codes.size() == model.num_stages(), ErrorKind::LengthMismatch,
          "code buffer length must equal the number of stages");
  std::vector<T> r(x.begin(), x.end());
  std::vector<T> s(x.size(), T(1));
  const bool improved = model.variant == RvqVariant::Improved;
  for (std::size_t n = 0; n < model.num_stages(); ++n) {
    const auto& cb = model.codebooks[n];
    if (!improved) {
      const std::size_t k = nearest<T>(cb, r);
      const auto c = cb.entry(k);
      for (std::size_t d = 0; d < r.size(); ++d) r[d] -= c[d];
      codes[n] = static_cast<std::uint32_t>(k);
    } else {
      const std::size_t k = detail::nearest_weighted<T>(cb, r, s);
      const auto c = cb.entry(k);
      const auto sigma = cb.scales->row(k);
      for (std::size_t d = 0; d < r.size(); ++d) {
        r[d] = (r[d] - c[d]) / sigma[d];
        s[d] *= sigma[d];
      }
      codes[n] = static_cast<std::uint32_t>(k);
    }
  }
  if (state) {
    state->residual = std::move(r);
    state->scale = std::move(s);
  }
}

template <class T>
std::vector<std::uint32_t> rvq_encode(const RvqModel<T>& model, std::span<const T> x,
                                      RvqEncodeState<T>* state = nullptr) {
  std::vector<std::uint32_t> codes(model.num_stages());
  rvq_encode_into(model, x, std::span<std::uint32_t>(codes), state);
  return codes;
}

/// Encodes every row; the result is frames.rows() x N, row-major.
template <class T>
std::vector<std::uint32_t> rvq_encode_all(const RvqModel<T>& model, const Matrix<T>& frames,
                                          unsigned threads = 1) {
  require_dim(model.dim(), frames.cols(), "rvq_encode");
  const std::size_t n = model.num_stages();
  std::vector<std::uint32_t> codes(frames.rows() * n);
  parallel_for(frames.rows(), threads, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      rvq_encode_into(model, frames.row(i), std::span<std::uint32_t>(codes).subspan(i * n, n));
    }
  });
  return codes;
}

/// Decodes the first `stages` codes, calling visit(n, x_hat) after each stage
/// n (0-based). Plain sums entries; improved weights stage n by the product of
/// the scales selected before it.
template <class T, class Visit>
void rvq_decode_prefixes(const RvqModel<T>& model, std::span<const std::uint32_t> codes,
                         std::span<T> x_hat, Visit&& visit) {
  require(codes.size() == model.num_stages(), ErrorKind::LengthMismatch,
          "code vector length must equal the number of stages");
  require_dim(model.dim(), x_hat.size(), "rvq_decode");
  std::ranges::fill(x_hat, T(0));
  std::vector<T> s(x_hat.size(), T(1));
  const bool improved = model.variant == RvqVariant::Improved;
  for (std::size_t n = 0; n < model.num_stages(); ++n) {
    const auto& cb = model.codebooks[n];
    if (codes[n] >= cb.size()) {
      throw Error(ErrorKind::IndexOutOfRange, "code " + std::to_string(codes[n]) +
                                                  " out of range at stage " + std::to_string(n));
    }
    const auto c = cb.entry(codes[n]);
    if (!improved) {
      for (std::size_t d = 0; d < x_hat.size(); ++d) x_hat[d] += c[d];
    } else {
      const auto sigma = cb.scales->row(codes[n]);
      for (std::size_t d = 0; d < x_hat.size(); ++d) {
        x_hat[d] += s[d] * c[d];
        s[d] *= sigma[d];
      }
    }
    visit(n, std::span<const T>(x_hat));
  }
}

template <class T>
std::vector<T> rvq_decode(const RvqModel<T>& model, std::span<const std::uint32_t> codes) {
  std::vector<T> x_hat(model.dim());
  rvq_decode_prefixes(model, codes, std::span<T>(x_hat), [](std::size_t, std::span<const T>) {});
  return x_hat;
}

template <class T>
Matrix<T> rvq_decode_all(const RvqModel<T>& model, std::span<const std::uint32_t> codes,
                         unsigned threads = 1) {
  const std::size_t n = model.num_stages();
  require(codes.size() % n == 0, ErrorKind::LengthMismatch, "code count not a multiple of N");
  Matrix<T> out(codes.size() / n, model.dim());
  parallel_for(out.rows(), threads, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      rvq_decode_prefixes(model, codes.subspan(i * n, n), out.row(i),
                          [](std::size_t, std::span<const T>) {});
    }
  });
  return out;
}

/// Mean squared reconstruction error after each stage prefix 1..N.
template <class T>
std::vector<double> rvq_eval(const RvqModel<T>& model, const Matrix<T>& frames,
                             unsigned threads = 1) {
  require(!frames.empty(), ErrorKind::EmptyInput, "rvq_eval needs at least one frame");
  const auto codes = rvq_encode_all(model, frames, threads);
  const std::size_t n = model.num_stages();
  std::vector<double> per_frame(frames.rows() * n);
  parallel_for(frames.rows(), threads, [&](std::size_t b, std::size_t e) {
    std::vector<T> x_hat(model.dim());
    for (std::size_t i = b; i < e; ++i) {
      const auto x = frames.row(i);
      rvq_decode_prefixes(model, std::span<const std::uint32_t>(codes).subspan(i * n, n),
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
// Model file: "RESQRVQ1", u8 variant, u32 N, N codebooks.

inline constexpr std::string_view kRvqMagic{"RESQRVQ1", 8};

template <class T>
std::vector<std::uint8_t> serialize_rvq(const RvqModel<T>& model) {
  io::ByteWriter w;
  w.put_magic(kRvqMagic);
  w.put_u8(static_cast<std::uint8_t>(model.variant));
  w.put_u32(static_cast<std::uint32_t>(model.num_stages()));
  for (const auto& cb : model.codebooks) write_codebook(w, cb);
  return w.take();
}

template <class T = float>
RvqModel<T> deserialize_rvq(std::span<const std::uint8_t> bytes) {
  io::ByteReader r(bytes);
  if (!r.match_magic(kRvqMagic)) throw Error(ErrorKind::CorruptHeader, "bad RVQ model magic");
  RvqModel<T> model;
  const std::uint8_t variant = r.u8();
  require(variant <= 1, ErrorKind::CorruptHeader, "unknown RVQ variant");
  model.variant = static_cast<RvqVariant>(variant);
  const std::uint32_t n = r.u32();
  for (std::uint32_t i = 0; i < n; ++i) model.codebooks.push_back(read_codebook<T>(r));
  require(r.remaining() == 0, ErrorKind::CorruptHeader, "trailing bytes after RVQ model");
  model.validate();
  return model;
}

template <class T>
void save_rvq(const std::filesystem::path& path, const RvqModel<T>& model) {
  io::write_file_atomic(path, serialize_rvq(model));
}

template <class T = float>
RvqModel<T> load_rvq(const std::filesystem::path& path) {
  return deserialize_rvq<T>(io::read_file(path));
}

}  // namespace resq
