#pragma once

// Uniform handling of any saved quantizer: load by magic, encode, decode,
// evaluate.

#include <filesystem>
#include <string>
#include <variant>

#include "resq/binary_io.hpp"
#include "resq/metrics.hpp"
#include "resq/qinco.hpp"
#include "resq/rvq.hpp"

namespace resq {

using AnyModel = std::variant<RvqModel<float>, QincoModel<float>>;

inline AnyModel load_model(const std::filesystem::path& path) {
  const auto bytes = io::read_file(path);
  const std::string magic(bytes.begin(), bytes.begin() + std::min<std::size_t>(8, bytes.size()));
  if (magic == kRvqMagic) return deserialize_rvq<float>(bytes);
  if (magic == kQincoMagic) return deserialize_qinco<float>(bytes);
  throw Error(ErrorKind::CorruptHeader, path.string() + ": not a model file");
}

inline void save_model(const std::filesystem::path& path, const AnyModel& model) {
  std::visit(
      [&](const auto& m) {
        using M = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<M, RvqModel<float>>) {
          save_rvq(path, m);
        } else {
          save_qinco(path, m);
        }
      },
      model);
}

inline std::string quantizer_name(const AnyModel& model) {
  if (const auto* r = std::get_if<RvqModel<float>>(&model)) {
    return r->variant == RvqVariant::Plain ? "rvq" : "irvq";
  }
  return "qinco";
}

inline std::size_t model_dim(const AnyModel& m) {
  return std::visit([](const auto& x) { return x.dim(); }, m);
}
inline std::size_t model_stages(const AnyModel& m) {
  return std::visit([](const auto& x) { return x.num_stages(); }, m);
}
inline std::size_t model_codebook_size(const AnyModel& m) {
  return std::visit([](const auto& x) { return x.codebook_size(); }, m);
}

inline std::vector<std::uint32_t> encode_all(const AnyModel& model, const Matrix<float>& frames,
                                             unsigned threads = 1) {
  if (const auto* r = std::get_if<RvqModel<float>>(&model)) {
    return rvq_encode_all(*r, frames, threads);
  }
  return qinco_encode_all(std::get<QincoModel<float>>(model), frames, threads);
}

inline Matrix<float> decode_all(const AnyModel& model, std::span<const std::uint32_t> codes,
                                unsigned threads = 1) {
  if (const auto* r = std::get_if<RvqModel<float>>(&model)) {
    return rvq_decode_all(*r, codes, threads);
  }
  return qinco_decode_all(std::get<QincoModel<float>>(model), codes, threads);
}

inline std::vector<double> stage_mse(const AnyModel& model, const Matrix<float>& frames,
                                     unsigned threads = 1) {
  if (const auto* r = std::get_if<RvqModel<float>>(&model)) return rvq_eval(*r, frames, threads);
  return qinco_eval(std::get<QincoModel<float>>(model), frames, threads);
}

/// Per-stage perplexity of the codes a model assigns to `frames`.
template <class Model>
std::vector<double> perplexity_curve(const Model& model, const Matrix<float>& frames,
                                     unsigned threads = 1) {
  require(!frames.empty(), ErrorKind::EmptyInput, "perplexity needs at least one frame");
  std::vector<std::uint32_t> codes;
  if constexpr (std::is_same_v<Model, AnyModel>) {
    codes = encode_all(model, frames, threads);
  } else if constexpr (std::is_same_v<Model, RvqModel<float>>) {
    codes = rvq_encode_all(model, frames, threads);
  } else {
    codes = qinco_encode_all(model, frames, threads);
  }
  std::size_t stages = 0, k = 0;
  if constexpr (std::is_same_v<Model, AnyModel>) {
    stages = model_stages(model);
    k = model_codebook_size(model);
  } else {
    stages = model.num_stages();
    k = model.codebook_size();
  }
  return perplexity_curve(CodeHistogram::from_codes(codes, stages, k));
}

inline EvalReport evaluate(const AnyModel& model, const Matrix<float>& frames,
                           unsigned threads = 1) {
  require(!frames.empty(), ErrorKind::EmptyInput, "evaluation needs at least one frame");
  require_dim(model_dim(model), frames.cols(), "evaluate");
  EvalReport report;
  report.quantizer = quantizer_name(model);
  report.frames = frames.rows();
  report.stages = model_stages(model);
  report.codebook_size = model_codebook_size(model);
  report.mse_per_stage = stage_mse(model, frames, threads);
  report.perplexity_per_stage = perplexity_curve(model, frames, threads);
  return report;
}

}  // namespace resq
