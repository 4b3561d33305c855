#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <map>
#include <random>
#include <set>

#include "resq/dataset.hpp"

namespace fs = std::filesystem;
using resq::Matrix;

namespace {

class TempDir {
 public:
  TempDir() {
    path_ = fs::temp_directory_path() /
            ("resq_dataset_" + std::to_string(std::random_device{}()));
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

Matrix<float> random_frames(std::size_t n, std::size_t d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> g(0.0f, 2.0f);
  Matrix<float> m(n, d);
  for (auto& v : m.storage()) v = g(rng);
  return m;
}

}  // namespace

TEST(FrameFile, RoundTripIsBitExact) {
  TempDir dir;
  const auto frames = random_frames(1000, 7, 1);
  resq::save_frames(dir / "f.frm", frames);
  EXPECT_EQ(resq::load_frames(dir / "f.frm"), frames);
}

TEST(FrameFile, EmptyFile) {
  TempDir dir;
  resq::save_frames(dir / "e.frm", Matrix<float>(0, 4));
  const auto back = resq::load_frames(dir / "e.frm");
  EXPECT_EQ(back.rows(), 0u);
  EXPECT_EQ(back.cols(), 4u);
}

TEST(FrameFile, NanReportsFrameIndex) {
  TempDir dir;
  auto frames = random_frames(20, 3, 2);
  frames(7, 1) = std::numeric_limits<float>::quiet_NaN();
  resq::save_frames(dir / "n.frm", frames);
  try {
    resq::load_frames(dir / "n.frm");
    FAIL();
  } catch (const resq::NonFiniteValueError& e) {
    EXPECT_EQ(e.kind(), resq::ErrorKind::NonFiniteValue);
    EXPECT_EQ(e.frame_index(), 7u);
  }
}

TEST(FrameFile, TruncatedAndCorrupt) {
  TempDir dir;
  auto bytes = resq::serialize_frames(random_frames(10, 3, 3));
  auto cut = bytes;
  cut.resize(cut.size() - 5);
  resq::io::write_file_atomic(dir / "t.frm", cut);
  try {
    resq::load_frames(dir / "t.frm");
    FAIL();
  } catch (const resq::Error& e) {
    EXPECT_EQ(e.kind(), resq::ErrorKind::TruncatedPayload);
  }
  bytes[0] = 'Z';
  resq::io::write_file_atomic(dir / "m.frm", bytes);
  try {
    resq::load_frames(dir / "m.frm");
    FAIL();
  } catch (const resq::Error& e) {
    EXPECT_EQ(e.kind(), resq::ErrorKind::CorruptHeader);
  }
}

TEST(FrameFile, DoublePrecisionIsNarrowed) {
  TempDir dir;
  resq::io::ByteWriter w;
  w.put_magic(resq::kFrameMagic64);
  w.put_u32(2);
  w.put_u64(2);
  for (double v : {0.1, -2.5, 1e-3, 7.0}) w.put_f64(v);
  resq::io::write_file_atomic(dir / "d.frm", w.take());
  resq::FrameReader reader(dir / "d.frm");
  EXPECT_TRUE(reader.narrowing());
  const auto m = resq::read_all(reader);
  EXPECT_EQ(m(0, 0), 0.1f);
  EXPECT_EQ(m(1, 1), 7.0f);
}

TEST(Import, RawBlob) {
  TempDir dir;
  const auto frames = random_frames(12, 4, 4);
  resq::io::ByteWriter w;
  for (float v : frames.storage()) w.put_f32(v);
  resq::io::write_file_atomic(dir / "x.raw", w.take());
  EXPECT_EQ(resq::import_raw(dir / "x.raw", 4, dir / "x.frm"), 12u);
  EXPECT_EQ(resq::load_frames(dir / "x.frm"), frames);
  try {
    resq::import_raw(dir / "x.raw", 5, dir / "y.frm");
    FAIL();
  } catch (const resq::Error& e) {
    EXPECT_EQ(e.kind(), resq::ErrorKind::LengthMismatch);
  }
  EXPECT_FALSE(fs::exists(dir / "y.frm"));
}

TEST(SampleShuffle, FullStreamIsAPermutation) {
  const auto frames = random_frames(100, 2, 5);
  resq::MatrixSource src(frames);
  const auto out = resq::sample_shuffle(src, 500, 9);
  ASSERT_EQ(out.rows(), 100u);
  std::multiset<std::pair<float, float>> a, b;
  for (std::size_t i = 0; i < 100; ++i) {
    a.insert({frames(i, 0), frames(i, 1)});
    b.insert({out(i, 0), out(i, 1)});
  }
  EXPECT_EQ(a, b);
  EXPECT_FALSE(out == frames);
}

TEST(SampleShuffle, SameSeedSameOrder) {
  const auto frames = random_frames(1000, 3, 6);
  resq::MatrixSource s1(frames), s2(frames), s3(frames);
  const auto a = resq::sample_shuffle(s1, 100, 4);
  const auto b = resq::sample_shuffle(s2, 100, 4);
  const auto c = resq::sample_shuffle(s3, 100, 5);
  EXPECT_EQ(a, b);
  EXPECT_FALSE(a == c);
}

TEST(SampleShuffle, SubsetOfInput) {
  const auto frames = random_frames(300, 2, 7);
  resq::MatrixSource src(frames);
  const auto out = resq::sample_shuffle(src, 50, 1);
  std::multiset<std::pair<float, float>> pool;
  for (std::size_t i = 0; i < frames.rows(); ++i) pool.insert({frames(i, 0), frames(i, 1)});
  for (std::size_t i = 0; i < out.rows(); ++i) {
    auto it = pool.find({out(i, 0), out(i, 1)});
    ASSERT_NE(it, pool.end());
    pool.erase(it);
  }
}

TEST(SampleShuffle, UniformSelection) {
  Matrix<float> items(10, 1);
  for (std::size_t i = 0; i < 10; ++i) items(i, 0) = static_cast<float>(i);
  std::vector<int> hits(10, 0);
  for (std::uint64_t trial = 0; trial < 10000; ++trial) {
    resq::MatrixSource src(items);
    const auto out = resq::sample_shuffle(src, 1, trial);
    ++hits[static_cast<std::size_t>(out(0, 0))];
  }
  for (int h : hits) {
    EXPECT_GE(h, 850);
    EXPECT_LE(h, 1150);
  }
}

TEST(SampleShuffle, EmptyStream) {
  const Matrix<float> empty(0, 3);
  resq::MatrixSource src(empty);
  try {
    resq::sample_shuffle(src, 5, 0);
    FAIL();
  } catch (const resq::Error& e) {
    EXPECT_EQ(e.kind(), resq::ErrorKind::EmptyInput);
  }
}

TEST(SampleShuffle, StreamsFromFile) {
  TempDir dir;
  const auto frames = random_frames(500, 3, 8);
  resq::save_frames(dir / "s.frm", frames);
  resq::FrameReader reader(dir / "s.frm");
  resq::MatrixSource mem(frames);
  EXPECT_EQ(resq::sample_shuffle(reader, 64, 3), resq::sample_shuffle(mem, 64, 3));
}

TEST(Synth, SingleComponentMeanNearOrigin) {
  resq::SynthSpec spec;
  spec.components = 1;
  spec.dim = 8;
  spec.spreads = {1.0};
  spec.center_scale = 0.0;
  const std::size_t count = 20000;
  const auto data = resq::synth_generate(spec, count);
  for (std::size_t d = 0; d < 8; ++d) {
    double mean = 0.0;
    for (std::size_t i = 0; i < count; ++i) mean += data.frames(i, d);
    mean /= static_cast<double>(count);
    EXPECT_LT(std::abs(mean), 5.0 / std::sqrt(double(count)));
  }
}

TEST(Synth, FixedSeedIsReproducible) {
  resq::SynthSpec spec;
  spec.kind = resq::SynthKind::Anisotropic;
  spec.spreads = {0.1, 3.0};
  spec.seed = 12;
  EXPECT_EQ(resq::synth_generate(spec, 500).frames, resq::synth_generate(spec, 500).frames);
}

TEST(Synth, HeavyTailedSpreadRatio) {
  resq::SynthSpec spec;
  spec.kind = resq::SynthKind::HeavyTailed;
  spec.components = 5;
  spec.dim = 16;
  spec.spreads = {0.5};
  spec.spread_ratio = 10.0;
  spec.seed = 3;
  const auto data = resq::synth_generate(spec, 20000);
  // Empirical spread of every component from its own frames.
  std::vector<double> sd(spec.components);
  for (std::size_t c = 0; c < spec.components; ++c) {
    double acc = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < data.frames.rows(); ++i) {
      if (data.component[i] != c) continue;
      for (std::size_t d = 0; d < spec.dim; ++d) {
        const double e = data.frames(i, d) - data.centers(c, d);
        acc += e * e;
      }
      ++n;
    }
    sd[c] = std::sqrt(acc / double(n * spec.dim));
  }
  const auto [lo, hi] = std::minmax_element(sd.begin(), sd.end());
  EXPECT_GE(*hi / *lo, 8.0);
}

TEST(Synth, HeavyTailedComponentsAreOrientedAndAnisotropic) {
  resq::SynthSpec spec;
  spec.kind = resq::SynthKind::HeavyTailed;
  spec.components = 2;
  spec.dim = 6;
  spec.spreads = {1.0};
  spec.axis_ratio = 10.0;
  spec.seed = 4;
  const auto data = resq::synth_generate(spec, 40000);
  ASSERT_EQ(data.axes.size(), 2u);
  for (const auto& q : data.axes) {
    for (std::size_t i = 0; i < 6; ++i) {
      for (std::size_t j = 0; j < 6; ++j) {
        double dot = 0.0;
        for (std::size_t d = 0; d < 6; ++d) dot += q(i, d) * q(j, d);
        EXPECT_NEAR(dot, i == j ? 1.0 : 0.0, 1e-12);
      }
    }
  }
  // Deviation along the first and last principal direction of component 0.
  double first = 0.0, last = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < data.frames.rows(); ++i) {
    if (data.component[i] != 0) continue;
    double p0 = 0.0, p5 = 0.0;
    for (std::size_t d = 0; d < 6; ++d) {
      const double e = data.frames(i, d) - data.centers(0, d);
      p0 += e * data.axes[0](0, d);
      p5 += e * data.axes[0](5, d);
    }
    first += p0 * p0;
    last += p5 * p5;
    ++n;
  }
  const double ratio = std::sqrt(first / last);
  EXPECT_NEAR(ratio, 10.0, 0.5);
  EXPECT_NEAR(std::sqrt(first / double(n)), 1.0, 0.03);
}

TEST(Synth, InvalidSpec) {
  resq::SynthSpec spec;
  spec.kind = resq::SynthKind::HeavyTailed;
  spec.spread_ratio = 4.0;
  EXPECT_THROW(resq::synth_generate(spec, 10), resq::Error);
  spec.spread_ratio = 10.0;
  spec.axis_ratio = 0.5;
  EXPECT_THROW(resq::synth_generate(spec, 10), resq::Error);
}
