#pragma once

// Frame files, streaming reservoir sampling, and synthetic mixtures.
//
// Frame file: "RESQFR01", u32 D, u64 count, count x D f32 little-endian.
// "RESQFR64" is the same layout with f64 values; it is narrowed to f32 on load.

#include <algorithm>
#include <bit>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "resq/binary_io.hpp"
#include "resq/error.hpp"
#include "resq/matrix.hpp"

namespace resq {

inline constexpr std::string_view kFrameMagic{"RESQFR01", 8};
inline constexpr std::string_view kFrameMagic64{"RESQFR64", 8};
inline constexpr std::size_t kFrameHeaderBytes = 8 + 4 + 8;

/// Anything that hands out frames one at a time.
template <class S>
concept FrameSource = requires(S s, std::span<float> out) {
  { s.dim() } -> std::convertible_to<std::size_t>;
  { s.next(out) } -> std::same_as<bool>;
};

/// Streams frames from a frame file without loading it whole. Every value is
/// checked for finiteness as it is read.
class FrameReader {
 public:
  explicit FrameReader(const std::filesystem::path& path) : in_(path, std::ios::binary) {
    if (!in_) throw Error(ErrorKind::Io, "cannot open " + path.string());
    std::uint8_t header[kFrameHeaderBytes];
    in_.read(reinterpret_cast<char*>(header), sizeof header);
    if (in_.gcount() != static_cast<std::streamsize>(sizeof header)) {
      throw Error(ErrorKind::CorruptHeader, path.string() + ": short frame-file header");
    }
    io::ByteReader r(std::span<const std::uint8_t>(header, sizeof header));
    const std::string magic(reinterpret_cast<const char*>(header), 8);
    if (magic == kFrameMagic) {
      value_bytes_ = 4;
    } else if (magic == kFrameMagic64) {
      value_bytes_ = 8;
    } else {
      throw Error(ErrorKind::CorruptHeader, path.string() + ": bad frame-file magic");
    }
    r.take(8);
    dim_ = r.u32();
    count_ = r.u64();
    require(dim_ >= 1, ErrorKind::CorruptHeader, path.string() + ": zero latent dimension");

    const auto size = std::filesystem::file_size(path);
    const auto payload = size - kFrameHeaderBytes;
    const std::uint64_t frame_bytes = dim_ * value_bytes_;
    if (count_ > payload / frame_bytes) {
      throw Error(ErrorKind::TruncatedPayload, path.string() + ": payload holds " +
                                                   std::to_string(payload / frame_bytes) +
                                                   " frames, header says " + std::to_string(count_));
    }
    require(payload == count_ * frame_bytes, ErrorKind::CorruptHeader,
            path.string() + ": trailing bytes after payload");
    buf_.resize(dim_ * value_bytes_);
  }

  std::size_t dim() const noexcept { return dim_; }
  std::uint64_t count() const noexcept { return count_; }
  std::uint64_t position() const noexcept { return pos_; }
  /// True when the file stores f64 values that are narrowed on load.
  bool narrowing() const noexcept { return value_bytes_ == 8; }

  bool next(std::span<float> out) {
    if (pos_ == count_) return false;
    require_dim(dim_, out.size(), "frame reader");
    in_.read(reinterpret_cast<char*>(buf_.data()), static_cast<std::streamsize>(buf_.size()));
    if (in_.gcount() != static_cast<std::streamsize>(buf_.size())) {
      throw Error(ErrorKind::TruncatedPayload, "frame file ended early");
    }
    io::ByteReader r(buf_);
    for (std::size_t d = 0; d < dim_; ++d) {
      const float v = value_bytes_ == 4 ? r.f32() : static_cast<float>(r.f64());
      if (!std::isfinite(v)) throw NonFiniteValueError(pos_);
      out[d] = v;
    }
    ++pos_;
    return true;
  }

 private:
  std::ifstream in_;
  std::size_t dim_ = 0;
  std::uint64_t count_ = 0;
  std::uint64_t pos_ = 0;
  std::size_t value_bytes_ = 4;
  std::vector<std::uint8_t> buf_;
};

/// Adapts an in-memory matrix to FrameSource.
class MatrixSource {
 public:
  explicit MatrixSource(const Matrix<float>& m) : m_(&m) {}
  std::size_t dim() const noexcept { return m_->cols(); }
  bool next(std::span<float> out) {
    if (pos_ == m_->rows()) return false;
    std::ranges::copy(m_->row(pos_++), out.begin());
    return true;
  }

 private:
  const Matrix<float>* m_;
  std::size_t pos_ = 0;
};

template <FrameSource S>
Matrix<float> read_all(S& source) {
  Matrix<float> out(0, source.dim());
  std::vector<float> frame(source.dim());
  while (source.next(frame)) out.append_row(frame);
  return out;
}

inline Matrix<float> load_frames(const std::filesystem::path& path) {
  FrameReader reader(path);
  return read_all(reader);
}

/// Serializes frames in the f32 frame-file format.
inline std::vector<std::uint8_t> serialize_frames(const Matrix<float>& frames) {
  io::ByteWriter w;
  w.put_magic(kFrameMagic);
  w.put_u32(static_cast<std::uint32_t>(frames.cols()));
  w.put_u64(frames.rows());
  for (float v : frames.storage()) w.put_f32(v);
  return w.take();
}

inline void save_frames(const std::filesystem::path& path, const Matrix<float>& frames) {
  require(frames.cols() >= 1, ErrorKind::InvalidArgument, "frames need a dimension");
  io::write_file_atomic(path, serialize_frames(frames));
}

/// Converts a headerless little-endian f32 blob into a frame file.
inline std::uint64_t import_raw(const std::filesystem::path& raw, std::size_t dim,
                                const std::filesystem::path& out) {
  require(dim >= 1, ErrorKind::InvalidArgument, "latent dimension must be >= 1");
  const auto bytes = io::read_file(raw);
  if (bytes.size() % (4 * dim) != 0) {
    throw Error(ErrorKind::LengthMismatch, raw.string() + ": " + std::to_string(bytes.size()) +
                                               " bytes is not a whole number of " +
                                               std::to_string(dim) + "-dim f32 frames");
  }
  const std::size_t count = bytes.size() / (4 * dim);
  Matrix<float> frames(count, dim);
  io::ByteReader r(bytes);
  for (std::size_t i = 0; i < count; ++i) {
    for (std::size_t d = 0; d < dim; ++d) {
      const float v = r.f32();
      if (!std::isfinite(v)) throw NonFiniteValueError(i);
      frames(i, d) = v;
    }
  }
  save_frames(out, frames);
  return count;
}

/// Uniform reservoir sample of min(count, available) frames, then a seeded
/// shuffle. Reads the source once and keeps only `count` frames in memory.
template <FrameSource S>
Matrix<float> sample_shuffle(S& source, std::size_t count, std::uint64_t seed) {
  require(count >= 1, ErrorKind::InvalidArgument, "sample size must be >= 1");
  const std::size_t dim = source.dim();
  std::mt19937_64 rng(seed);
  Matrix<float> reservoir(0, dim);
  std::vector<float> frame(dim);
  std::uint64_t seen = 0;
  while (source.next(frame)) {
    if (reservoir.rows() < count) {
      reservoir.append_row(frame);
    } else {
      std::uniform_int_distribution<std::uint64_t> slot(0, seen);
      const auto j = slot(rng);
      if (j < count) std::ranges::copy(frame, reservoir.row(static_cast<std::size_t>(j)).begin());
    }
    ++seen;
  }
  require(seen > 0, ErrorKind::EmptyInput, "cannot sample from an empty stream");
  for (std::size_t i = reservoir.rows(); i-- > 1;) {
    std::uniform_int_distribution<std::size_t> pick(0, i);
    const std::size_t j = pick(rng);
    if (j != i) std::swap_ranges(reservoir.row(i).begin(), reservoir.row(i).end(), reservoir.row(j).begin());
  }
  return reservoir;
}

// ---------------------------------------------------------------------------
// Synthetic data

enum class SynthKind { Isotropic, Anisotropic, HeavyTailed };

struct SynthSpec {
  SynthKind kind = SynthKind::Isotropic;
  std::size_t components = 8;
  std::size_t dim = 8;
  /// Isotropic: per-component spreads, cycled. Anisotropic: {min, max} of the
  /// log-uniform per-dimension spread. Heavy-tailed: {base} spread.
  std::vector<double> spreads{1.0};
  /// Heavy-tailed only: largest / smallest component spread, >= 10.
  double spread_ratio = 10.0;
  /// Heavy-tailed only: each component is a Gaussian with random principal
  /// directions whose standard deviations run geometrically from the
  /// component spread down to spread / axis_ratio.
  double axis_ratio = 10.0;
  /// Component centres are drawn from N(0, center_scale^2 I).
  double center_scale = 5.0;
  std::uint64_t seed = 0;

  void validate() const {
    require(components >= 1, ErrorKind::InvalidArgument, "need at least one component");
    require(dim >= 1, ErrorKind::InvalidArgument, "dimension must be >= 1");
    require(!spreads.empty(), ErrorKind::InvalidArgument, "need at least one spread");
    for (double s : spreads) {
      require(s > 0.0 && std::isfinite(s), ErrorKind::InvalidArgument, "spreads must be > 0");
    }
    require(center_scale >= 0.0, ErrorKind::InvalidArgument, "center scale must be >= 0");
    if (kind == SynthKind::HeavyTailed) {
      require(spread_ratio >= 10.0, ErrorKind::InvalidArgument,
              "heavy-tailed mixtures need a spread ratio >= 10");
      require(axis_ratio >= 1.0 && std::isfinite(axis_ratio), ErrorKind::InvalidArgument,
              "axis ratio must be >= 1");
    }
  }
};

struct SynthData {
  Matrix<float> frames;
  std::vector<std::uint32_t> component;  // source component of each frame
  Matrix<double> centers;                // components x D
  Matrix<double> spreads;                // components x D standard deviations
  /// Heavy-tailed only: per component a D x D matrix whose rows are the
  /// principal directions; spreads(c, i) is the deviation along row i.
  /// Empty for the axis-aligned kinds.
  std::vector<Matrix<double>> axes;
};

namespace detail {

/// Random orthonormal basis by Gram-Schmidt on a Gaussian matrix.
inline Matrix<double> random_basis(std::size_t dim, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix<double> q(dim, dim);
  for (auto& v : q.storage()) v = normal(rng);
  for (std::size_t i = 0; i < dim; ++i) {
    auto qi = q.row(i);
    for (std::size_t j = 0; j < i; ++j) {
      const auto qj = q.row(j);
      double dot = 0.0;
      for (std::size_t d = 0; d < dim; ++d) dot += qi[d] * qj[d];
      for (std::size_t d = 0; d < dim; ++d) qi[d] -= dot * qj[d];
    }
    double norm = 0.0;
    for (double v : qi) norm += v * v;
    norm = std::sqrt(norm);
    for (auto& v : qi) v /= norm;
  }
  return q;
}

}  // namespace detail

inline SynthData synth_generate(const SynthSpec& spec, std::size_t count) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  const std::size_t c_count = spec.components;
  const std::size_t dim = spec.dim;
  SynthData out;
  out.centers = Matrix<double>(c_count, dim);
  out.spreads = Matrix<double>(c_count, dim);

  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t c = 0; c < c_count; ++c) {
    for (std::size_t d = 0; d < dim; ++d) out.centers(c, d) = spec.center_scale * normal(rng);
  }
  for (std::size_t c = 0; c < c_count; ++c) {
    switch (spec.kind) {
      case SynthKind::Isotropic: {
        const double s = spec.spreads[c % spec.spreads.size()];
        std::ranges::fill(out.spreads.row(c), s);
        break;
      }
      case SynthKind::Anisotropic: {
        const double lo = *std::ranges::min_element(spec.spreads);
        const double hi = *std::ranges::max_element(spec.spreads);
        std::uniform_real_distribution<double> u(std::log(lo), std::log(hi));
        for (auto& s : out.spreads.row(c)) s = lo == hi ? lo : std::exp(u(rng));
        break;
      }
      case SynthKind::HeavyTailed: {
        // Component spreads run geometrically from base to base * ratio.
        const double base = spec.spreads.front();
        const double t = c_count == 1 ? 0.0 : static_cast<double>(c) / static_cast<double>(c_count - 1);
        const double s = base * std::pow(spec.spread_ratio, t);
        for (std::size_t i = 0; i < dim; ++i) {
          const double u = dim == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(dim - 1);
          out.spreads(c, i) = s / std::pow(spec.axis_ratio, u);
        }
        out.axes.push_back(detail::random_basis(dim, rng));
        break;
      }
    }
  }

  out.frames = Matrix<float>(count, dim);
  out.component.resize(count);
  std::uniform_int_distribution<std::size_t> which(0, c_count - 1);
  std::vector<double> z(dim);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t c = which(rng);
    out.component[i] = static_cast<std::uint32_t>(c);
    for (std::size_t d = 0; d < dim; ++d) z[d] = out.spreads(c, d) * normal(rng);
    for (std::size_t d = 0; d < dim; ++d) {
      double v = out.centers(c, d);
      if (out.axes.empty()) {
        v += z[d];
      } else {
        for (std::size_t k = 0; k < dim; ++k) v += z[k] * out.axes[c](k, d);
      }
      out.frames(i, d) = static_cast<float>(v);
    }
  }
  return out;
}

}  // namespace resq
