// resq: train, run and inspect residual quantizers from the command line.
//
// stdout carries machine-readable JSON; stderr carries logs. Failures print a
// single JSON error record on stderr and exit with
//   2  usage / invalid argument
//   3  data or model mismatch, unreadable input
//   4  numeric failure

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "resq/resq.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

int exit_code(resq::ErrorKind kind) {
  using K = resq::ErrorKind;
  switch (kind) {
    case K::InvalidArgument:
    case K::InvalidK:
    case K::NonPowerOfTwoK:
      return 2;
    case K::NonFiniteLoss:
    case K::NonFiniteValue:
      return 4;
    default:
      return 3;
  }
}

void log(const std::string& msg) { std::cerr << "resq: " << msg << '\n'; }

void emit(const json& j) { std::cout << j.dump() << std::endl; }

resq::Matrix<float> read_frames(const fs::path& path) {
  resq::FrameReader reader(path);
  if (reader.narrowing()) log("warning: " + path.string() + " holds f64 values; narrowing to f32");
  return resq::read_all(reader);
}

struct TrainArgs {
  std::string quantizer = "rvq";
  std::string frames, out;
  std::size_t stages = 4;
  std::size_t k = 256;
  std::size_t kmeans_iters = 2000;
  std::size_t kmeans_batch = 0;
  std::size_t hidden = 256;
  std::size_t blocks = 2;
  std::size_t steps = 1000;
  std::size_t batch = 256;
  double lr = 1e-4;
  double clip = 1.0;
  std::size_t log_every = 100;
  std::uint64_t seed = 0;
  unsigned threads = 1;

  json config() const {
    json j{{"quantizer", quantizer},   {"frames", frames},          {"out", out},
           {"n_codebooks", stages},    {"codebook_size", k},        {"kmeans_iters", kmeans_iters},
           {"kmeans_batch", kmeans_batch ? kmeans_batch : 3 * k}, {"seed", seed},
           {"threads", threads}};
    if (quantizer == "qinco") {
      j["hidden_dim"] = hidden;
      j["blocks"] = blocks;
      j["steps"] = steps;
      j["batch_size"] = batch;
      j["lr"] = lr;
      j["clip_norm"] = clip;
    }
    return j;
  }

  void validate() const {
    using resq::require;
    using K = resq::ErrorKind;
    require(quantizer == "rvq" || quantizer == "irvq" || quantizer == "qinco", K::InvalidArgument,
            "--quantizer must be rvq, irvq or qinco");
    require(k >= 1, K::InvalidK, "--codebook-size must be >= 1");
    require(stages >= 1, K::InvalidArgument, "--n-codebooks must be >= 1");
    require(kmeans_iters >= 1, K::InvalidArgument, "--kmeans-iters must be >= 1");
    require(kmeans_batch == 0 || kmeans_batch >= k, K::InvalidArgument,
            "--kmeans-batch must be >= --codebook-size");
    if (quantizer == "qinco") {
      require(hidden >= 1, K::InvalidArgument, "--hidden-dim must be >= 1");
      require(batch >= 1, K::InvalidArgument, "--batch-size must be >= 1");
      require(lr >= 0.0, K::InvalidArgument, "--lr must be >= 0");
    }
  }
};

int cmd_train(const TrainArgs& a) {
  a.validate();
  log("config " + a.config().dump());
  const auto frames = read_frames(a.frames);
  resq::require(!frames.empty(), resq::ErrorKind::EmptyInput, a.frames + " holds no frames");

  resq::RvqTrainOptions opt;
  opt.num_stages = a.stages;
  opt.kmeans.k = a.k;
  opt.kmeans.batch_size = a.kmeans_batch;
  opt.kmeans.max_iters = a.kmeans_iters;
  opt.kmeans.seed = a.seed;
  opt.threads = a.threads;

  resq::AnyModel model;
  json trajectory = json::array();
  if (a.quantizer == "rvq") {
    model = resq::rvq_train(frames, opt);
  } else if (a.quantizer == "irvq") {
    model = resq::irvq_train(frames, opt);
  } else {
    log("fitting base codebooks");
    const auto base = resq::rvq_train(frames, opt);
    auto q = resq::qinco_init(base, a.blocks, a.hidden, a.seed);
    resq::QincoTrainConfig cfg;
    cfg.learning_rate = a.lr;
    cfg.batch_size = a.batch;
    cfg.steps = a.steps;
    cfg.clip_norm = a.clip;
    cfg.seed = a.seed;
    cfg.threads = a.threads;
    resq::QincoTrainer<float> trainer(q, cfg);
    trainer.fit(frames, [&](const resq::QincoStepReport& r) {
      if (a.log_every == 0 || (r.step % a.log_every != 0 && r.step != a.steps)) return;
      json line{{"step", r.step},
                {"loss", r.loss.total},
                {"stage_loss", r.loss.per_stage},
                {"grad_norm", r.grad_norm}};
      std::cerr << line.dump() << '\n';
      trajectory.push_back(std::move(line));
    });
    model = std::move(q);
  }

  const auto report = resq::evaluate(model, frames, a.threads);
  resq::save_model(a.out, model);
  log("wrote " + a.out + ", train mse " + std::to_string(report.final_mse()));
  json summary{{"command", "train"}, {"config", a.config()}, {"train_mse", report.final_mse()},
               {"mse_per_stage", report.mse_per_stage}};
  if (a.quantizer == "qinco") summary["trajectory"] = trajectory;
  emit(summary);
  return 0;
}

int cmd_encode(const std::string& model_path, const std::string& frames_path,
               const std::string& out, std::optional<double> frame_rate, unsigned threads) {
  const auto model = resq::load_model(model_path);
  const auto frames = read_frames(frames_path);
  resq::require_dim(resq::model_dim(model), frames.cols(), "encode: model vs frames");
  resq::CodeStream s;
  s.k = static_cast<std::uint32_t>(resq::model_codebook_size(model));
  s.stages = static_cast<std::uint32_t>(resq::model_stages(model));
  s.dim = static_cast<std::uint32_t>(resq::model_dim(model));
  s.frames = frames.rows();
  s.frame_rate = frame_rate;
  s.codes = resq::encode_all(model, frames, threads);
  resq::save_stream(out, s);
  json summary{{"command", "encode"}, {"frames", s.frames}, {"n_codebooks", s.stages},
               {"codebook_size", s.k},  {"out", out}};
  if (frame_rate) summary["bitrate"] = resq::bitrate(s.stages, s.k, *frame_rate);
  emit(summary);
  return 0;
}

int cmd_decode(const std::string& model_path, const std::string& stream_path,
               const std::string& out, unsigned threads) {
  const auto model = resq::load_model(model_path);
  const auto s = resq::load_stream(stream_path);
  const auto n = resq::model_stages(model);
  const auto k = resq::model_codebook_size(model);
  if (s.stages != n || s.k != k || s.dim != resq::model_dim(model)) {
    throw resq::Error(resq::ErrorKind::ModelStreamMismatch,
                      "stream has N=" + std::to_string(s.stages) + " K=" + std::to_string(s.k) +
                          " D=" + std::to_string(s.dim) + ", model has N=" + std::to_string(n) +
                          " K=" + std::to_string(k) + " D=" + std::to_string(resq::model_dim(model)));
  }
  auto frames = resq::decode_all(model, s.codes, threads);
  if (frames.rows() == 0) frames = resq::Matrix<float>(0, resq::model_dim(model));
  resq::save_frames(out, frames);
  emit({{"command", "decode"}, {"frames", s.frames}, {"out", out}});
  return 0;
}

int cmd_eval(const std::string& model_path, const std::string& frames_path,
             const std::string& csv, bool records, unsigned threads) {
  const auto model = resq::load_model(model_path);
  const auto frames = read_frames(frames_path);
  const auto report = resq::evaluate(model, frames, threads);
  if (!csv.empty()) {
    const auto text = report.perplexity_csv();
    resq::io::write_file_atomic(csv, std::vector<std::uint8_t>(text.begin(), text.end()));
  }
  if (records) std::cout << report.records();
  json summary = report.summary();
  summary["command"] = "eval";
  emit(summary);
  return 0;
}

int cmd_import(const std::string& raw, std::size_t dim, const std::string& out) {
  const auto count = resq::import_raw(raw, dim, out);
  emit({{"command", "import"}, {"frames", count}, {"latent_dim", dim}, {"out", out}});
  return 0;
}

int cmd_dump(const std::string& stream_path) {
  const auto s = resq::load_stream(stream_path);
  json header{{"codebook_size", s.k}, {"n_codebooks", s.stages}, {"latent_dim", s.dim},
              {"frames", s.frames}};
  if (s.frame_rate) header["frame_rate"] = *s.frame_rate;
  std::cerr << header.dump() << '\n';
  std::cout << resq::dump_text(s);
  return 0;
}

struct SynthArgs {
  std::string kind = "isotropic";
  std::size_t components = 8;
  std::size_t dim = 8;
  std::vector<double> spreads{1.0};
  double ratio = 10.0;
  double axis_ratio = 10.0;
  double center_scale = 5.0;
  std::size_t count = 10000;
  std::uint64_t seed = 0;
  std::string out;
};

int cmd_synth(const SynthArgs& a) {
  resq::SynthSpec spec;
  if (a.kind == "isotropic") {
    spec.kind = resq::SynthKind::Isotropic;
  } else if (a.kind == "anisotropic") {
    spec.kind = resq::SynthKind::Anisotropic;
  } else if (a.kind == "heavy-tailed") {
    spec.kind = resq::SynthKind::HeavyTailed;
  } else {
    throw resq::Error(resq::ErrorKind::InvalidArgument,
                      "--kind must be isotropic, anisotropic or heavy-tailed");
  }
  spec.components = a.components;
  spec.dim = a.dim;
  spec.spreads = a.spreads;
  spec.spread_ratio = a.ratio;
  spec.axis_ratio = a.axis_ratio;
  spec.center_scale = a.center_scale;
  spec.seed = a.seed;
  spec.validate();
  const auto data = resq::synth_generate(spec, a.count);
  resq::save_frames(a.out, data.frames);
  emit({{"command", "synth"},
        {"kind", a.kind},
        {"components", a.components},
        {"latent_dim", a.dim},
        {"frames", a.count},
        {"seed", a.seed},
        {"out", a.out}});
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Residual vector quantization toolkit"};
  app.require_subcommand(1);

  TrainArgs train;
  auto* t = app.add_subcommand("train", "fit a quantizer on a frame file");
  t->add_option("--quantizer", train.quantizer, "rvq, irvq or qinco")->capture_default_str();
  t->add_option("--frames", train.frames, "training frame file")->required();
  t->add_option("--out", train.out, "model file to write")->required();
  t->add_option("--n-codebooks", train.stages, "number of stages N")->capture_default_str();
  t->add_option("--codebook-size", train.k, "entries per codebook K")->capture_default_str();
  t->add_option("--kmeans-iters", train.kmeans_iters, "mini-batch steps per stage")
      ->capture_default_str();
  t->add_option("--kmeans-batch", train.kmeans_batch, "k-means batch size (default 3K)");
  t->add_option("--hidden-dim", train.hidden, "qinco hidden width")->capture_default_str();
  t->add_option("--blocks", train.blocks, "qinco residual blocks per stage")->capture_default_str();
  t->add_option("--steps", train.steps, "qinco optimizer steps")->capture_default_str();
  t->add_option("--batch-size", train.batch, "qinco batch size")->capture_default_str();
  t->add_option("--lr", train.lr, "qinco learning rate")->capture_default_str();
  t->add_option("--clip-norm", train.clip, "gradient clip norm, <= 0 disables")
      ->capture_default_str();
  t->add_option("--log-every", train.log_every, "steps between progress lines")
      ->capture_default_str();
  t->add_option("--seed", train.seed)->capture_default_str();
  t->add_option("--threads", train.threads)->capture_default_str()->check(CLI::PositiveNumber);

  std::string model, frames, out, stream, csv, raw;
  std::optional<double> frame_rate;
  unsigned threads = 1;
  bool records = false;
  std::size_t latent_dim = 0;

  auto* enc = app.add_subcommand("encode", "quantize frames into a code stream");
  enc->add_option("--model", model)->required();
  enc->add_option("--frames", frames)->required();
  enc->add_option("--out", out)->required();
  enc->add_option("--frame-rate", frame_rate, "frames per second, recorded in the stream");
  enc->add_option("--threads", threads)->check(CLI::PositiveNumber);

  auto* dec = app.add_subcommand("decode", "reconstruct frames from a code stream");
  dec->add_option("--model", model)->required();
  dec->add_option("--stream", stream)->required();
  dec->add_option("--out", out)->required();
  dec->add_option("--threads", threads)->check(CLI::PositiveNumber);

  auto* ev = app.add_subcommand("eval", "report MSE and perplexity of a model");
  ev->add_option("--model", model)->required();
  ev->add_option("--frames", frames)->required();
  ev->add_option("--csv", csv, "write the per-stage perplexity curve here");
  ev->add_flag("--records", records, "also print one JSON record per metric and stage");
  ev->add_option("--threads", threads)->check(CLI::PositiveNumber);

  auto* imp = app.add_subcommand("import", "convert raw little-endian f32 into a frame file");
  imp->add_option("--raw", raw)->required();
  imp->add_option("--latent-dim", latent_dim)->required();
  imp->add_option("--out", out)->required();

  auto* dump = app.add_subcommand("dump", "print the codes of a stream, one frame per line");
  dump->add_option("--stream", stream)->required();

  std::size_t br_n = 0, br_k = 0;
  double br_f = 0.0;
  auto* br = app.add_subcommand("bitrate", "N * log2(K) * F");
  br->add_option("--n-codebooks", br_n)->required();
  br->add_option("--codebook-size", br_k)->required();
  br->add_option("--frame-rate", br_f)->required();

  SynthArgs synth;
  auto* syn = app.add_subcommand("synth", "write a synthetic Gaussian-mixture frame file");
  syn->add_option("--kind", synth.kind, "isotropic, anisotropic or heavy-tailed")
      ->capture_default_str();
  syn->add_option("--components", synth.components)->capture_default_str();
  syn->add_option("--latent-dim", synth.dim)->capture_default_str();
  syn->add_option("--spread", synth.spreads, "component spreads")->capture_default_str();
  syn->add_option("--spread-ratio", synth.ratio, "heavy-tailed largest/smallest spread")
      ->capture_default_str();
  syn->add_option("--axis-ratio", synth.axis_ratio,
                  "heavy-tailed largest/smallest principal spread within a component")
      ->capture_default_str();
  syn->add_option("--center-scale", synth.center_scale)->capture_default_str();
  syn->add_option("--count", synth.count)->capture_default_str();
  syn->add_option("--seed", synth.seed)->capture_default_str();
  syn->add_option("--out", synth.out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << json{{"error", "Usage"}, {"message", e.what()}}.dump() << '\n';
    return 2;
  }

  try {
    if (*t) return cmd_train(train);
    if (*enc) return cmd_encode(model, frames, out, frame_rate, threads);
    if (*dec) return cmd_decode(model, stream, out, threads);
    if (*ev) return cmd_eval(model, frames, csv, records, threads);
    if (*imp) return cmd_import(raw, latent_dim, out);
    if (*dump) return cmd_dump(stream);
    if (*br) {
      emit({{"command", "bitrate"}, {"bitrate", resq::bitrate(br_n, br_k, br_f)}});
      return 0;
    }
    if (*syn) return cmd_synth(synth);
  } catch (const resq::NonFiniteValueError& e) {
    std::cerr << json{{"error", "NonFiniteValue"}, {"frame", e.frame_index()}, {"message", e.what()}}
                     .dump()
              << '\n';
    return 4;
  } catch (const resq::Error& e) {
    std::cerr << json{{"error", std::string(resq::to_string(e.kind()))}, {"message", e.message()}}
                     .dump()
              << '\n';
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << json{{"error", "Internal"}, {"message", e.what()}}.dump() << '\n';
    return 1;
  }
  return 2;
}
