#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "resq/error.hpp"
#include "resq/matrix.hpp"

namespace resq {

/// Mean over frames of the squared L2 distance (summed over dimensions).
template <class T>
double mse(const Matrix<T>& original, const Matrix<T>& reconstructed) {
  if (original.rows() != reconstructed.rows() || original.cols() != reconstructed.cols()) {
    throw Error(ErrorKind::LengthMismatch,
                "mse: shapes " + std::to_string(original.rows()) + "x" +
                    std::to_string(original.cols()) + " and " +
                    std::to_string(reconstructed.rows()) + "x" +
                    std::to_string(reconstructed.cols()) + " differ");
  }
  if (original.empty()) return 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < original.rows(); ++i) {
    const auto a = original.row(i);
    const auto b = reconstructed.row(i);
    for (std::size_t d = 0; d < a.size(); ++d) {
      const double diff = static_cast<double>(a[d]) - static_cast<double>(b[d]);
      acc += diff * diff;
    }
  }
  return acc / static_cast<double>(original.rows());
}

/// Per-stage usage counts of codebook entries.
class CodeHistogram {
 public:
  CodeHistogram(std::size_t stages, std::size_t k) : stages_(stages), k_(k), counts_(stages * k, 0) {}

  /// Builds from a frames x stages row-major code matrix.
  static CodeHistogram from_codes(std::span<const std::uint32_t> codes, std::size_t stages,
                                  std::size_t k) {
    require(stages > 0 && codes.size() % stages == 0, ErrorKind::LengthMismatch,
            "code count not a multiple of the stage count");
    CodeHistogram h(stages, k);
    for (std::size_t i = 0; i < codes.size(); i += stages) h.add(codes.subspan(i, stages));
    return h;
  }

  void add(std::span<const std::uint32_t> frame_codes) {
    require(frame_codes.size() == stages_, ErrorKind::LengthMismatch,
            "one code per stage required");
    for (std::size_t s = 0; s < stages_; ++s) {
      require(frame_codes[s] < k_, ErrorKind::IndexOutOfRange, "code out of range");
      ++counts_[s * k_ + frame_codes[s]];
    }
    ++total_;
  }

  std::size_t stages() const noexcept { return stages_; }
  std::size_t codebook_size() const noexcept { return k_; }
  std::uint64_t total() const noexcept { return total_; }
  std::span<const std::uint64_t> counts(std::size_t stage) const {
    return {counts_.data() + stage * k_, k_};
  }

  /// Sets one stage's counts directly; `total` must match their sum.
  void set_counts(std::size_t stage, std::span<const std::uint64_t> counts) {
    require(counts.size() == k_, ErrorKind::LengthMismatch, "need K counts");
    const auto sum = std::accumulate(counts.begin(), counts.end(), std::uint64_t{0});
    require(total_ == 0 || sum == total_, ErrorKind::LengthMismatch,
            "stage counts must sum to the frame total");
    std::copy(counts.begin(), counts.end(), counts_.begin() + static_cast<std::ptrdiff_t>(stage * k_));
    total_ = sum;
  }

 private:
  std::size_t stages_;
  std::size_t k_;
  std::vector<std::uint64_t> counts_;
  std::uint64_t total_ = 0;
};

/// exp of the Shannon entropy (nats) of a stage's usage, with 0 ln 0 = 0.
/// Lies in [1, K].
inline double perplexity(const CodeHistogram& hist, std::size_t stage) {
  require(stage < hist.stages(), ErrorKind::IndexOutOfRange, "stage out of range");
  if (hist.total() == 0) throw Error(ErrorKind::EmptyHistogram, "histogram has no frames");
  const double total = static_cast<double>(hist.total());
  double entropy = 0.0;
  for (std::uint64_t c : hist.counts(stage)) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) / total;
    entropy -= p * std::log(p);
  }
  return std::exp(entropy);
}

inline std::vector<double> perplexity_curve(const CodeHistogram& hist) {
  std::vector<double> out(hist.stages());
  for (std::size_t s = 0; s < hist.stages(); ++s) out[s] = perplexity(hist, s);
  return out;
}

/// Single-number perplexity for a model: the arithmetic mean over stages.
inline double aggregate_perplexity(std::span<const double> curve) {
  require(!curve.empty(), ErrorKind::EmptyHistogram, "empty perplexity curve");
  return std::accumulate(curve.begin(), curve.end(), 0.0) / static_cast<double>(curve.size());
}

/// Everything the eval command reports about one model on one data set.
struct EvalReport {
  std::string quantizer;
  std::size_t frames = 0;
  std::size_t stages = 0;
  std::size_t codebook_size = 0;
  std::vector<double> mse_per_stage;
  std::vector<double> perplexity_per_stage;

  double final_mse() const { return mse_per_stage.empty() ? 0.0 : mse_per_stage.back(); }
  double mean_perplexity() const { return aggregate_perplexity(perplexity_per_stage); }

  /// One JSON record per (metric, stage, value).
  std::string records() const {
    std::ostringstream out;
    for (std::size_t s = 0; s < mse_per_stage.size(); ++s) {
      out << nlohmann::json{{"metric", "mse"}, {"stage", s + 1}, {"value", mse_per_stage[s]}}.dump()
          << '\n';
    }
    for (std::size_t s = 0; s < perplexity_per_stage.size(); ++s) {
      out << nlohmann::json{{"metric", "perplexity"}, {"stage", s + 1},
                            {"value", perplexity_per_stage[s]}}
                 .dump()
          << '\n';
    }
    return out.str();
  }

  nlohmann::json summary() const {
    return {{"quantizer", quantizer},
            {"frames", frames},
            {"stages", stages},
            {"codebook_size", codebook_size},
            {"mse", final_mse()},
            {"mse_per_stage", mse_per_stage},
            {"perplexity_per_stage", perplexity_per_stage},
            {"perplexity", mean_perplexity()}};
  }

  /// Two-column CSV: stage, perplexity.
  std::string perplexity_csv() const {
    std::ostringstream out;
    out.precision(17);
    out << "stage,perplexity\n";
    for (std::size_t s = 0; s < perplexity_per_stage.size(); ++s) {
      out << s + 1 << ',' << perplexity_per_stage[s] << '\n';
    }
    return out.str();
  }
};

}  // namespace resq
