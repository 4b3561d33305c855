#pragma once

// Small dense network pieces for the conditional centroid generator: a stage
// network with flat parameter storage, forward passes that give bit-identical
// results whether evaluated one candidate at a time or for all K at once, a
// reverse-mode backward pass, and an Adam optimizer.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "resq/error.hpp"

namespace resq::nn {

/// out[r] = bias + in[r] * W for each of `rows` rows. `wt` is input-major
/// (in_dim x out_dim). Every output element accumulates over the input index in
/// the same order regardless of `rows`, so batching never changes results.
template <class T>
void affine_rows(const T* in, std::size_t rows, std::size_t in_dim, const T* wt, const T* bias,
                 std::size_t out_dim, T* out) {
  for (std::size_t r = 0; r < rows; ++r) {
    T* o = out + r * out_dim;
    const T* x = in + r * in_dim;
    if (bias) {
      std::copy_n(bias, out_dim, o);
    } else {
      std::fill_n(o, out_dim, T(0));
    }
    for (std::size_t i = 0; i < in_dim; ++i) {
      const T a = x[i];
      const T* w = wt + i * out_dim;
      for (std::size_t j = 0; j < out_dim; ++j) o[j] += a * w[j];
    }
  }
}

/// Offsets of one affine map inside a flat parameter vector.
struct AffineSlot {
  std::size_t in = 0;
  std::size_t out = 0;
  std::size_t weight = 0;  // in x out, input-major
  std::size_t bias = 0;    // out
};

/// Parameter layout of a stage network:
///   in_proj   R^{2D} -> R^{H}   (input is [base centroid, reconstruction])
///   L blocks  h + fc2(relu(fc1(h)))
///   out_proj  R^{H} -> R^{D}, added to the base centroid
struct StageLayout {
  std::size_t dim = 0;
  std::size_t hidden = 0;
  std::size_t blocks = 0;
  AffineSlot in_proj;
  std::vector<AffineSlot> fc1;
  std::vector<AffineSlot> fc2;
  AffineSlot out_proj;
  std::size_t total = 0;

  StageLayout() = default;
  StageLayout(std::size_t d, std::size_t h, std::size_t l) : dim(d), hidden(h), blocks(l) {
    auto slot = [this](std::size_t in, std::size_t out) {
      AffineSlot s{in, out, total, total + in * out};
      total += in * out + out;
      return s;
    };
    in_proj = slot(2 * d, h);
    for (std::size_t b = 0; b < l; ++b) {
      fc1.push_back(slot(h, h));
      fc2.push_back(slot(h, h));
    }
    out_proj = slot(h, d);
  }

  /// Named tensors in storage order: (name, shape, offset).
  struct Tensor {
    std::string name;
    std::vector<std::size_t> shape;
    std::size_t offset;
    std::size_t size() const {
      std::size_t n = 1;
      for (auto s : shape) n *= s;
      return n;
    }
  };
  std::vector<Tensor> tensors() const {
    std::vector<Tensor> out;
    auto add = [&out](const std::string& prefix, const AffineSlot& s) {
      out.push_back({prefix + ".weight", {s.in, s.out}, s.weight});
      out.push_back({prefix + ".bias", {s.out}, s.bias});
    };
    add("in_proj", in_proj);
    for (std::size_t b = 0; b < blocks; ++b) {
      add("blocks." + std::to_string(b) + ".fc1", fc1[b]);
      add("blocks." + std::to_string(b) + ".fc2", fc2[b]);
    }
    add("out_proj", out_proj);
    return out;
  }
};

/// Activations of one forward pass, kept for the backward pass.
template <class T>
struct StageCache {
  std::vector<T> input;                // [base, x_hat]
  std::vector<std::vector<T>> h;       // h[0..L], block inputs plus final
  std::vector<std::vector<T>> pre;     // fc1 outputs before relu
  std::vector<std::vector<T>> act;     // relu outputs
  std::vector<T> output;               // generated centroid
};

template <class T>
struct StageNet {
  StageLayout layout;
  std::vector<T> params;

  StageNet() = default;
  StageNet(std::size_t dim, std::size_t hidden, std::size_t blocks)
      : layout(dim, hidden, blocks), params(layout.total, T(0)) {}

  std::size_t dim() const noexcept { return layout.dim; }
  std::size_t hidden() const noexcept { return layout.hidden; }
  std::size_t num_params() const noexcept { return params.size(); }

  const T* weight(const AffineSlot& s) const { return params.data() + s.weight; }
  const T* bias(const AffineSlot& s) const { return params.data() + s.bias; }

  /// Projection of base centroids through the first D input rows of in_proj,
  /// without bias: rows x H.
  void project_base(const T* base, std::size_t rows, T* out) const {
    affine_rows(base, rows, dim(), weight(layout.in_proj), static_cast<const T*>(nullptr),
                hidden(), out);
  }
  /// Projection of the reconstruction through the last D input rows, plus bias.
  void project_reconstruction(const T* x_hat, T* out) const {
    affine_rows(x_hat, 1, dim(), weight(layout.in_proj) + dim() * hidden(),
                bias(layout.in_proj), hidden(), out);
  }

  /// Runs the trunk (blocks and output projection) on `rows` hidden states and
  /// writes base + out_proj(h) to `out`. `h` is overwritten.
  void run_trunk(T* h, std::size_t rows, const T* base, T* out, std::vector<T>& scratch_a,
                 std::vector<T>& scratch_b) const {
    const std::size_t hd = hidden();
    scratch_a.resize(rows * hd);
    scratch_b.resize(rows * hd);
    for (std::size_t b = 0; b < layout.blocks; ++b) {
      affine_rows(h, rows, hd, weight(layout.fc1[b]), bias(layout.fc1[b]), hd, scratch_a.data());
      for (auto& v : scratch_a) v = v > T(0) ? v : T(0);
      affine_rows(scratch_a.data(), rows, hd, weight(layout.fc2[b]), bias(layout.fc2[b]), hd,
                  scratch_b.data());
      for (std::size_t i = 0; i < rows * hd; ++i) h[i] += scratch_b[i];
    }
    affine_rows(h, rows, hd, weight(layout.out_proj), bias(layout.out_proj), dim(), out);
    for (std::size_t i = 0; i < rows * dim(); ++i) out[i] = base[i] + out[i];
  }

  /// Generated centroid for one (reconstruction, base centroid) pair.
  std::vector<T> forward(std::span<const T> x_hat, std::span<const T> base) const {
    require_dim(dim(), x_hat.size(), "stage_forward reconstruction");
    require_dim(dim(), base.size(), "stage_forward base centroid");
    StageCache<T> cache;
    forward_cached(x_hat, base, cache);
    return cache.output;
  }

  /// Forward pass that records activations. Produces exactly the values of
  /// the batched candidate path.
  void forward_cached(std::span<const T> x_hat, std::span<const T> base,
                      StageCache<T>& cache) const {
    const std::size_t d = dim();
    const std::size_t hd = hidden();
    cache.input.resize(2 * d);
    std::copy(base.begin(), base.end(), cache.input.begin());
    std::copy(x_hat.begin(), x_hat.end(), cache.input.begin() + static_cast<std::ptrdiff_t>(d));

    std::vector<T> pb(hd), px(hd);
    project_base(base.data(), 1, pb.data());
    project_reconstruction(x_hat.data(), px.data());
    cache.h.assign(layout.blocks + 1, std::vector<T>(hd));
    cache.pre.assign(layout.blocks, std::vector<T>(hd));
    cache.act.assign(layout.blocks, std::vector<T>(hd));
    for (std::size_t j = 0; j < hd; ++j) cache.h[0][j] = pb[j] + px[j];

    std::vector<T> u(hd);
    for (std::size_t b = 0; b < layout.blocks; ++b) {
      affine_rows(cache.h[b].data(), 1, hd, weight(layout.fc1[b]), bias(layout.fc1[b]), hd,
                  cache.pre[b].data());
      for (std::size_t j = 0; j < hd; ++j) {
        cache.act[b][j] = cache.pre[b][j] > T(0) ? cache.pre[b][j] : T(0);
      }
      affine_rows(cache.act[b].data(), 1, hd, weight(layout.fc2[b]), bias(layout.fc2[b]), hd,
                  u.data());
      for (std::size_t j = 0; j < hd; ++j) cache.h[b + 1][j] = cache.h[b][j] + u[j];
    }
    cache.output.resize(d);
    affine_rows(cache.h[layout.blocks].data(), 1, hd, weight(layout.out_proj),
                bias(layout.out_proj), d, cache.output.data());
    for (std::size_t j = 0; j < d; ++j) cache.output[j] = base[j] + cache.output[j];
  }

  /// Reverse pass for one cached forward. Accumulates parameter gradients into
  /// `grad` (same layout as params) and returns d(output)/d(x_hat)^T * g_out.
  std::vector<T> backward(const StageCache<T>& cache, std::span<const T> g_out,
                          std::span<T> grad) const {
    const std::size_t d = dim();
    const std::size_t hd = hidden();

    auto accumulate_affine = [&](const AffineSlot& s, const T* in, const T* g) {
      T* gw = grad.data() + s.weight;
      T* gb = grad.data() + s.bias;
      for (std::size_t i = 0; i < s.in; ++i) {
        const T a = in[i];
        T* row = gw + i * s.out;
        for (std::size_t j = 0; j < s.out; ++j) row[j] += a * g[j];
      }
      for (std::size_t j = 0; j < s.out; ++j) gb[j] += g[j];
    };
    // g_in[i] = sum_j W[i][j] g[j]
    auto input_grad = [&](const AffineSlot& s, const T* g, T* g_in) {
      const T* w = params.data() + s.weight;
      for (std::size_t i = 0; i < s.in; ++i) {
        T acc = T(0);
        const T* row = w + i * s.out;
        for (std::size_t j = 0; j < s.out; ++j) acc += row[j] * g[j];
        g_in[i] = acc;
      }
    };

    std::vector<T> gh(hd), tmp(hd), ga(hd);
    accumulate_affine(layout.out_proj, cache.h[layout.blocks].data(), g_out.data());
    input_grad(layout.out_proj, g_out.data(), gh.data());

    for (std::size_t b = layout.blocks; b-- > 0;) {
      // h[b+1] = h[b] + fc2(relu(fc1(h[b])))
      accumulate_affine(layout.fc2[b], cache.act[b].data(), gh.data());
      input_grad(layout.fc2[b], gh.data(), tmp.data());
      for (std::size_t j = 0; j < hd; ++j) ga[j] = cache.pre[b][j] > T(0) ? tmp[j] : T(0);
      accumulate_affine(layout.fc1[b], cache.h[b].data(), ga.data());
      input_grad(layout.fc1[b], ga.data(), tmp.data());
      for (std::size_t j = 0; j < hd; ++j) gh[j] += tmp[j];
    }

    accumulate_affine(layout.in_proj, cache.input.data(), gh.data());
    std::vector<T> g_in(2 * d);
    input_grad(layout.in_proj, gh.data(), g_in.data());
    return {g_in.begin() + static_cast<std::ptrdiff_t>(d), g_in.end()};
  }

  template <class U>
  StageNet<U> cast() const {
    StageNet<U> out(layout.dim, layout.hidden, layout.blocks);
    std::transform(params.begin(), params.end(), out.params.begin(),
                   [](T v) { return static_cast<U>(v); });
    return out;
  }

  friend bool operator==(const StageNet& a, const StageNet& b) {
    return a.layout.dim == b.layout.dim && a.layout.hidden == b.layout.hidden &&
           a.layout.blocks == b.layout.blocks && a.params == b.params;
  }
};

/// Uniform(+-1/sqrt(fan_in)) for every map except out_proj, which starts at
/// zero so a fresh network returns its base centroid unchanged.
template <class T>
void init_stage(StageNet<T>& net, std::mt19937_64& rng) {
  auto fill = [&](const AffineSlot& s) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(s.in));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (std::size_t i = 0; i < s.in * s.out; ++i) net.params[s.weight + i] = static_cast<T>(u(rng));
    for (std::size_t j = 0; j < s.out; ++j) net.params[s.bias + j] = static_cast<T>(u(rng));
  };
  fill(net.layout.in_proj);
  for (std::size_t b = 0; b < net.layout.blocks; ++b) {
    fill(net.layout.fc1[b]);
    fill(net.layout.fc2[b]);
  }
  const auto& o = net.layout.out_proj;
  std::fill_n(net.params.begin() + static_cast<std::ptrdiff_t>(o.weight), o.in * o.out + o.out,
              T(0));
}

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adam over a list of flat parameter vectors.
template <class T>
class Adam {
 public:
  Adam() = default;
  Adam(AdamConfig cfg, std::span<const std::size_t> sizes) : cfg_(cfg) {
    for (auto n : sizes) {
      m_.emplace_back(n, 0.0);
      v_.emplace_back(n, 0.0);
    }
  }

  std::uint64_t steps() const noexcept { return t_; }

  void step(std::span<std::vector<T>*> params, std::span<const std::vector<T>> grads) {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t p = 0; p < params.size(); ++p) {
      auto& w = *params[p];
      const auto& g = grads[p];
      auto& m = m_[p];
      auto& v = v_[p];
      for (std::size_t i = 0; i < w.size(); ++i) {
        const double gi = static_cast<double>(g[i]);
        m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * gi;
        v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * gi * gi;
        const double update =
            cfg_.learning_rate * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg_.epsilon);
        w[i] = static_cast<T>(static_cast<double>(w[i]) - update);
      }
    }
  }

 private:
  AdamConfig cfg_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  std::uint64_t t_ = 0;
};

}  // namespace resq::nn
