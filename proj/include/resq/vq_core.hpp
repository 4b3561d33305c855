#pragma once

// Codebooks, nearest-centroid assignment, mini-batch k-means and per-cluster
// spread statistics. Everything else in the library builds on these.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "resq/binary_io.hpp"
#include "resq/error.hpp"
#include "resq/matrix.hpp"

namespace resq {

/// Lower bound applied to every per-cluster standard deviation.
inline constexpr double kSigmaFloor = 1e-6;

template <class T = float>
struct Codebook {
  Matrix<T> entries;                      // K x D centroids
  std::optional<Matrix<T>> scales;        // K x D per-cluster spread, if fitted
  std::optional<std::size_t> null_index;  // reserved all-zero entry

  Codebook() = default;
  explicit Codebook(Matrix<T> e) : entries(std::move(e)) {}

  std::size_t size() const noexcept { return entries.rows(); }
  std::size_t dim() const noexcept { return entries.cols(); }
  std::span<const T> entry(std::size_t k) const { return entries.row(k); }

  bool has_scales() const noexcept { return scales.has_value(); }

  /// Overwrites entry k with the zero vector and marks it as the null entry.
  void set_null(std::size_t k) {
    require(k < size(), ErrorKind::IndexOutOfRange, "null index out of range");
    std::ranges::fill(entries.row(k), T(0));
    if (scales) std::ranges::fill(scales->row(k), T(1));
    null_index = k;
  }

  /// Checks the structural invariants; throws on the first violation.
  void validate() const {
    require(size() >= 1, ErrorKind::InvalidK, "codebook must have at least one entry");
    require(all_finite(std::span<const T>(entries.storage())), ErrorKind::NonFiniteValue,
            "codebook entries must be finite");
    if (scales) {
      require(scales->rows() == size() && scales->cols() == dim(), ErrorKind::LengthMismatch,
              "scale matrix shape differs from entries");
      for (T s : scales->storage()) {
        require(std::isfinite(s) && s >= static_cast<T>(kSigmaFloor),
                ErrorKind::NonFiniteValue, "scales must be finite and >= sigma floor");
      }
    }
    if (null_index) {
      require(*null_index < size(), ErrorKind::IndexOutOfRange, "null index out of range");
      for (T v : entries.row(*null_index)) {
        require(v == T(0), ErrorKind::CorruptHeader, "null entry is not the zero vector");
      }
      if (scales) {
        for (T v : scales->row(*null_index)) {
          require(v == T(1), ErrorKind::CorruptHeader, "null entry scale is not all-ones");
        }
      }
    }
  }

  template <class U>
  Codebook<U> cast() const {
    Codebook<U> out(entries.template cast<U>());
    if (scales) out.scales = scales->template cast<U>();
    out.null_index = null_index;
    return out;
  }

  friend bool operator==(const Codebook&, const Codebook&) = default;
};

template <class T = float>
struct Assignment {
  std::size_t code = 0;
  std::vector<T> residual;
};

/// Index of the nearest entry; ties go to the lowest index.
template <class T>
std::size_t nearest(const Codebook<T>& cb, std::span<const T> x) {
  std::size_t best = 0;
  T best_dist = std::numeric_limits<T>::infinity();
  for (std::size_t k = 0; k < cb.size(); ++k) {
    const T d = squared_distance(x, cb.entry(k));
    if (d < best_dist) {
      best_dist = d;
      best = k;
    }
  }
  return best;
}

template <class T>
Assignment<T> assign(const Codebook<T>& cb, std::span<const T> x) {
  require_dim(cb.dim(), x.size(), "assign");
  Assignment<T> out;
  out.code = nearest(cb, x);
  out.residual.resize(x.size());
  const auto c = cb.entry(out.code);
  for (std::size_t d = 0; d < x.size(); ++d) out.residual[d] = x[d] - c[d];
  return out;
}

template <class T>
std::vector<std::size_t> assign_all(const Codebook<T>& cb, const Matrix<T>& frames,
                                    unsigned threads = 1) {
  require_dim(cb.dim(), frames.cols(), "assign_all");
  std::vector<std::size_t> codes(frames.rows());
  parallel_for(frames.rows(), threads, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) codes[i] = nearest(cb, frames.row(i));
  });
  return codes;
}

/// Mean over frames of the squared distance to the nearest entry.
template <class T>
double quantization_objective(const Codebook<T>& cb, const Matrix<T>& frames) {
  if (frames.empty()) return 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < frames.rows(); ++i) {
    const auto x = frames.row(i);
    acc += static_cast<double>(squared_distance(x, cb.entry(nearest(cb, x))));
  }
  return acc / static_cast<double>(frames.rows());
}

// ---------------------------------------------------------------------------
// Mini-batch k-means

struct KMeansConfig {
  std::size_t k = 256;
  std::size_t batch_size = 0;  // 0 selects 3 * k
  std::size_t max_iters = 2000;
  std::uint64_t seed = 0;
  std::size_t checkpoint_every = 0;  // 0 selects max_iters / 10
  std::size_t validation_size = 0;   // 0 selects max(4 * batch, 1024)

  std::size_t effective_batch() const { return batch_size == 0 ? 3 * k : batch_size; }
};

/// Objective on the fixed validation batch, recorded at each checkpoint.
struct KMeansTrace {
  std::vector<std::size_t> iterations;
  std::vector<double> objective;
  std::size_t reseeded = 0;
};

namespace detail {

template <class T>
std::size_t count_distinct_up_to(const Matrix<T>& frames, std::size_t limit) {
  std::unordered_set<std::string> seen;
  std::vector<T> canon(frames.cols());
  for (std::size_t i = 0; i < frames.rows() && seen.size() < limit; ++i) {
    const auto r = frames.row(i);
    // +0 folds -0.0 onto 0.0 so equal values hash equally.
    for (std::size_t d = 0; d < r.size(); ++d) canon[d] = r[d] + T(0);
    seen.emplace(reinterpret_cast<const char*>(canon.data()), canon.size() * sizeof(T));
  }
  return seen.size();
}

/// k-means++ seeding over `pool`, falling back to the full data set once the
/// pool has no remaining mass (fewer distinct points than k in the pool).
template <class T>
Matrix<T> kmeanspp_seed(const Matrix<T>& frames, std::span<const std::size_t> pool,
                        std::size_t k, std::mt19937_64& rng) {
  const std::size_t dim = frames.cols();
  Matrix<T> centers(0, dim);
  std::vector<std::size_t> all;
  std::span<const std::size_t> candidates = pool;
  std::vector<double> d2(candidates.size(), std::numeric_limits<double>::infinity());

  auto refresh = [&](std::span<const T> c) {
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      d2[i] = std::min(d2[i], static_cast<double>(squared_distance(frames.row(candidates[i]), c)));
    }
  };

  std::uniform_int_distribution<std::size_t> first(0, candidates.size() - 1);
  centers.append_row(frames.row(candidates[first(rng)]));
  refresh(centers.row(0));

  while (centers.rows() < k) {
    double total = std::accumulate(d2.begin(), d2.end(), 0.0);
    if (!(total > 0.0)) {
      if (candidates.size() == frames.rows()) {
        throw Error(ErrorKind::DegenerateData, "ran out of distinct points during seeding");
      }
      all.resize(frames.rows());
      std::iota(all.begin(), all.end(), std::size_t{0});
      candidates = all;
      d2.assign(candidates.size(), std::numeric_limits<double>::infinity());
      for (std::size_t c = 0; c < centers.rows(); ++c) refresh(centers.row(c));
      continue;
    }
    std::uniform_real_distribution<double> u(0.0, total);
    double target = u(rng);
    std::size_t pick = candidates.size();
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      if (d2[i] <= 0.0) continue;
      pick = i;
      target -= d2[i];
      if (target < 0.0) break;
    }
    centers.append_row(frames.row(candidates[pick]));
    refresh(centers.row(centers.rows() - 1));
  }
  return centers;
}

}  // namespace detail

/// Mini-batch k-means with per-centre learning rates 1/count.
///
/// Seeding is k-means++ over the first mini-batch. A centroid that receives no
/// assignment for a full epoch is moved onto the batch point farthest from its
/// own centroid. Deterministic for a fixed seed and frame order.
template <class T>
Codebook<T> kmeans_fit(const Matrix<T>& frames, const KMeansConfig& cfg,
                       KMeansTrace* trace = nullptr) {
  require(!frames.empty(), ErrorKind::EmptyInput, "k-means needs at least one frame");
  require(cfg.k >= 1, ErrorKind::InvalidK, "k must be >= 1");
  const std::size_t batch = cfg.effective_batch();
  require(batch >= cfg.k, ErrorKind::InvalidArgument, "batch_size must be >= k");
  if (detail::count_distinct_up_to(frames, cfg.k) < cfg.k) {
    throw Error(ErrorKind::DegenerateData,
                "fewer distinct frames than k=" + std::to_string(cfg.k));
  }

  const std::size_t n = frames.rows();
  const std::size_t dim = frames.cols();
  std::mt19937_64 rng(cfg.seed);
  std::mt19937_64 val_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);

  // A data set no larger than one batch is used whole on every iteration.
  const bool full_batch = n <= batch;
  std::vector<std::size_t> batch_idx(full_batch ? n : batch);
  auto draw_batch = [&] {
    if (full_batch) {
      std::iota(batch_idx.begin(), batch_idx.end(), std::size_t{0});
    } else {
      for (auto& i : batch_idx) i = pick(rng);
    }
  };

  Matrix<T> validation;
  {
    const std::size_t vsize =
        cfg.validation_size ? cfg.validation_size : std::max<std::size_t>(4 * batch, 1024);
    if (n <= vsize) {
      validation = frames;
    } else {
      std::uniform_int_distribution<std::size_t> vpick(0, n - 1);
      std::vector<std::size_t> vidx(vsize);
      for (auto& i : vidx) i = vpick(val_rng);
      validation = frames.gather(vidx);
    }
  }

  draw_batch();
  Codebook<T> cb(detail::kmeanspp_seed(frames, batch_idx, cfg.k, rng));

  const std::size_t every =
      cfg.checkpoint_every ? cfg.checkpoint_every : std::max<std::size_t>(1, cfg.max_iters / 10);
  auto checkpoint = [&](std::size_t iter) {
    if (!trace) return;
    trace->iterations.push_back(iter);
    trace->objective.push_back(quantization_objective(cb, validation));
  };
  checkpoint(0);

  const std::size_t epoch_iters = std::max<std::size_t>(1, (n + batch - 1) / batch);
  std::vector<std::uint64_t> counts(cfg.k, 0);
  std::vector<std::size_t> last_hit(cfg.k, 0);
  std::vector<std::size_t> labels(batch_idx.size());
  std::vector<T> dists(batch_idx.size());

  for (std::size_t iter = 1; iter <= cfg.max_iters; ++iter) {
    if (iter > 1 || !full_batch) draw_batch();
    for (std::size_t b = 0; b < batch_idx.size(); ++b) {
      const auto x = frames.row(batch_idx[b]);
      labels[b] = nearest(cb, x);
      dists[b] = squared_distance(x, cb.entry(labels[b]));
    }
    for (std::size_t b = 0; b < batch_idx.size(); ++b) {
      const std::size_t c = labels[b];
      const auto x = frames.row(batch_idx[b]);
      auto centre = cb.entries.row(c);
      const T eta = T(1) / static_cast<T>(++counts[c]);
      for (std::size_t d = 0; d < dim; ++d) centre[d] += eta * (x[d] - centre[d]);
      last_hit[c] = iter;
    }

    for (std::size_t c = 0; c < cfg.k; ++c) {
      if (iter - last_hit[c] < epoch_iters) continue;
      std::size_t far = batch_idx.size();
      T far_dist = T(0);
      for (std::size_t b = 0; b < batch_idx.size(); ++b) {
        if (dists[b] > far_dist) {
          far_dist = dists[b];
          far = b;
        }
      }
      if (far == batch_idx.size()) continue;  // every batch point sits on a centroid
      std::ranges::copy(frames.row(batch_idx[far]), cb.entries.row(c).begin());
      dists[far] = T(0);
      counts[c] = 1;
      last_hit[c] = iter;
      if (trace) ++trace->reseeded;
    }

    if (iter % every == 0 || iter == cfg.max_iters) checkpoint(iter);
  }
  return cb;
}

/// Per-cluster population standard deviation of the residuals x - c[code],
/// floored at kSigmaFloor. Clusters with fewer than two members, and the null
/// entry, get all-ones scales.
template <class T>
Codebook<T> cluster_stats_from_codes(const Matrix<T>& frames, std::span<const std::size_t> codes,
                                     Codebook<T> cb) {
  require(!frames.empty(), ErrorKind::EmptyInput, "cluster_stats needs at least one frame");
  require_dim(cb.dim(), frames.cols(), "cluster_stats");
  require(codes.size() == frames.rows(), ErrorKind::LengthMismatch,
          "one code per frame required");
  const std::size_t k = cb.size();
  const std::size_t dim = cb.dim();
  std::vector<std::size_t> count(k, 0);
  std::vector<double> mean(k * dim, 0.0);
  for (std::size_t i = 0; i < frames.rows(); ++i) {
    const std::size_t c = codes[i];
    require(c < k, ErrorKind::IndexOutOfRange, "code out of range");
    ++count[c];
    const auto x = frames.row(i);
    const auto e = cb.entry(c);
    for (std::size_t d = 0; d < dim; ++d) {
      mean[c * dim + d] += static_cast<double>(x[d] - e[d]);
    }
  }
  for (std::size_t c = 0; c < k; ++c) {
    if (count[c] == 0) continue;
    for (std::size_t d = 0; d < dim; ++d) mean[c * dim + d] /= static_cast<double>(count[c]);
  }
  std::vector<double> var(k * dim, 0.0);
  for (std::size_t i = 0; i < frames.rows(); ++i) {
    const std::size_t c = codes[i];
    const auto x = frames.row(i);
    const auto e = cb.entry(c);
    for (std::size_t d = 0; d < dim; ++d) {
      const double dev = static_cast<double>(x[d] - e[d]) - mean[c * dim + d];
      var[c * dim + d] += dev * dev;
    }
  }

  Matrix<T> scales(k, dim, T(1));
  for (std::size_t c = 0; c < k; ++c) {
    if (count[c] < 2 || (cb.null_index && *cb.null_index == c)) continue;
    for (std::size_t d = 0; d < dim; ++d) {
      const double sd = std::sqrt(var[c * dim + d] / static_cast<double>(count[c]));
      scales(c, d) = static_cast<T>(std::max(kSigmaFloor, sd));
    }
  }
  cb.scales = std::move(scales);
  return cb;
}

template <class T>
Codebook<T> cluster_stats(const Matrix<T>& frames, Codebook<T> cb, unsigned threads = 1) {
  require(!frames.empty(), ErrorKind::EmptyInput, "cluster_stats needs at least one frame");
  const auto codes = assign_all(cb, frames, threads);
  return cluster_stats_from_codes(frames, codes, std::move(cb));
}

// ---------------------------------------------------------------------------
// Serialization: "RESQCB1\0", u32 K, u32 D, u8 flags, [u32 null], f32 entries,
// [f32 scales].

inline constexpr std::string_view kCodebookMagic{"RESQCB1\0", 8};

template <class T>
void write_codebook(io::ByteWriter& w, const Codebook<T>& cb) {
  w.put_magic(kCodebookMagic);
  w.put_u32(static_cast<std::uint32_t>(cb.size()));
  w.put_u32(static_cast<std::uint32_t>(cb.dim()));
  std::uint8_t flags = 0;
  if (cb.scales) flags |= 0x1;
  if (cb.null_index) flags |= 0x2;
  w.put_u8(flags);
  if (cb.null_index) w.put_u32(static_cast<std::uint32_t>(*cb.null_index));
  for (T v : cb.entries.storage()) w.put_f32(static_cast<float>(v));
  if (cb.scales) {
    for (T v : cb.scales->storage()) w.put_f32(static_cast<float>(v));
  }
}

template <class T = float>
Codebook<T> read_codebook(io::ByteReader& r) {
  if (!r.match_magic(kCodebookMagic)) {
    throw Error(ErrorKind::CorruptHeader, "bad codebook magic");
  }
  const std::size_t k = r.u32();
  const std::size_t dim = r.u32();
  const std::uint8_t flags = r.u8();
  require((flags & ~0x3) == 0, ErrorKind::CorruptHeader, "unknown codebook flags");
  std::optional<std::size_t> null_index;
  if (flags & 0x2) null_index = r.u32();
  auto read_matrix = [&] {
    Matrix<T> m(k, dim);
    for (auto& v : m.storage()) v = static_cast<T>(r.f32());
    return m;
  };
  Codebook<T> cb(read_matrix());
  if (flags & 0x1) cb.scales = read_matrix();
  cb.null_index = null_index;
  cb.validate();
  return cb;
}

}  // namespace resq
