#pragma once

// Fixed-width code streams. Header integers are little-endian; codes are
// packed MSB-first at log2(K) bits each, frame-major (all N codes of frame 0,
// then frame 1, ...), and the payload is zero-padded to a whole byte.

#include <bit>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <sstream>
#include <span>
#include <string>
#include <vector>

#include "resq/binary_io.hpp"
#include "resq/error.hpp"

namespace resq {

struct CodeStream {
  std::uint32_t k = 0;       // codebook size
  std::uint32_t stages = 0;  // N
  std::uint32_t dim = 0;     // latent dimension of the model that produced it
  std::uint64_t frames = 0;  // T
  std::optional<double> frame_rate;  // F, Hz
  std::vector<std::uint32_t> codes;  // T x N, frame-major

  std::span<const std::uint32_t> frame(std::size_t t) const {
    return std::span<const std::uint32_t>(codes).subspan(t * stages, stages);
  }

  void validate() const {
    require(codes.size() == frames * stages, ErrorKind::LengthMismatch,
            "code count must equal T * N");
    for (auto c : codes) {
      require(c < k, ErrorKind::IndexOutOfRange,
              "code " + std::to_string(c) + " >= K=" + std::to_string(k));
    }
  }

  friend bool operator==(const CodeStream&, const CodeStream&) = default;
};

inline bool is_power_of_two(std::uint64_t k) { return k >= 1 && std::has_single_bit(k); }

/// Bits per code, log2(K).
inline double code_bits(std::uint64_t k) {
  if (k < 2) throw Error(ErrorKind::InvalidK, "K must be >= 2, got " + std::to_string(k));
  if (std::has_single_bit(k)) return static_cast<double>(std::countr_zero(k));
  return std::log2(static_cast<double>(k));
}

/// N * log2(K) * F bits per second.
inline double bitrate(std::uint64_t stages, std::uint64_t k, double frame_rate) {
  require(frame_rate > 0.0 && std::isfinite(frame_rate), ErrorKind::InvalidArgument,
          "frame rate must be positive");
  return static_cast<double>(stages) * code_bits(k) * frame_rate;
}

inline constexpr std::string_view kStreamMagic{"RESQST01", 8};
inline constexpr std::uint16_t kStreamVersion = 1;
inline constexpr std::size_t kStreamHeaderBytes = 8 + 2 + 1 + 4 + 4 + 8 + 4 + 8;

namespace detail {

inline constexpr std::uint8_t kFlagFrameRate = 0x1;
inline constexpr std::uint8_t kFlagRawCodes = 0x2;

inline void write_stream_header(io::ByteWriter& w, const CodeStream& s, std::uint8_t flags) {
  if (s.frame_rate) flags |= kFlagFrameRate;
  w.put_magic(kStreamMagic);
  w.put_u16(kStreamVersion);
  w.put_u8(flags);
  w.put_u32(s.k);
  w.put_u32(s.stages);
  w.put_u64(s.frames);
  w.put_u32(s.dim);
  w.put_f64(s.frame_rate.value_or(0.0));
}

}  // namespace detail

/// Payload size in bytes for T*N codes of `bits` bits.
inline std::uint64_t packed_payload_bytes(std::uint64_t frames, std::uint64_t stages,
                                          unsigned bits) {
  return (frames * stages * bits + 7) / 8;
}

/// Packs the stream at exactly log2(K) bits per code. K must be a power of two.
inline std::vector<std::uint8_t> pack(const CodeStream& s) {
  if (s.k < 2 || !std::has_single_bit(s.k)) {
    throw Error(ErrorKind::NonPowerOfTwoK,
                "packing needs K a power of two >= 2, got " + std::to_string(s.k));
  }
  s.validate();
  const unsigned bits = static_cast<unsigned>(std::countr_zero(s.k));
  io::ByteWriter w;
  detail::write_stream_header(w, s, 0);
  std::vector<std::uint8_t> payload(packed_payload_bytes(s.frames, s.stages, bits), 0);
  std::uint64_t bitpos = 0;
  for (std::uint32_t code : s.codes) {
    for (unsigned b = bits; b-- > 0; ++bitpos) {
      if ((code >> b) & 1u) payload[bitpos / 8] |= static_cast<std::uint8_t>(0x80u >> (bitpos % 8));
    }
  }
  w.put_bytes(payload);
  return w.take();
}

/// Debug container storing each code as a little-endian u32; any K >= 1.
inline std::vector<std::uint8_t> pack_raw(const CodeStream& s) {
  require(s.k >= 1, ErrorKind::InvalidK, "K must be >= 1");
  s.validate();
  io::ByteWriter w;
  detail::write_stream_header(w, s, detail::kFlagRawCodes);
  for (std::uint32_t code : s.codes) w.put_u32(code);
  return w.take();
}

inline CodeStream unpack(std::span<const std::uint8_t> bytes) {
  io::ByteReader r(bytes, ErrorKind::CorruptHeader);
  if (!r.match_magic(kStreamMagic)) throw Error(ErrorKind::CorruptHeader, "bad stream magic");
  const std::uint16_t version = r.u16();
  if (version != kStreamVersion) {
    throw Error(ErrorKind::VersionUnsupported, "stream version " + std::to_string(version));
  }
  const std::uint8_t flags = r.u8();
  require((flags & ~0x3) == 0, ErrorKind::CorruptHeader, "unknown stream flags");
  CodeStream s;
  s.k = r.u32();
  s.stages = r.u32();
  s.frames = r.u64();
  s.dim = r.u32();
  const double rate = r.f64();
  if (flags & detail::kFlagFrameRate) s.frame_rate = rate;

  const bool raw = flags & detail::kFlagRawCodes;
  require(s.k >= (raw ? 1u : 2u), ErrorKind::CorruptHeader, "invalid K in header");
  if (!raw && !std::has_single_bit(s.k)) {
    throw Error(ErrorKind::CorruptHeader, "packed stream with non power-of-two K");
  }
  const unsigned bits = raw ? 32u : static_cast<unsigned>(std::countr_zero(s.k));
  // Guard T*N*bits against overflow before trusting the header.
  const std::uint64_t max_codes = (std::uint64_t{1} << 58) / bits;
  require(s.stages == 0 || s.frames <= max_codes / s.stages, ErrorKind::CorruptHeader,
          "implausible stream size");
  const std::uint64_t count = s.frames * s.stages;
  const std::uint64_t need = raw ? count * 4 : packed_payload_bytes(s.frames, s.stages, bits);
  if (r.remaining() < need) {
    throw Error(ErrorKind::TruncatedPayload, "payload has " + std::to_string(r.remaining()) +
                                                 " bytes, header requires " + std::to_string(need));
  }
  if (r.remaining() > need) throw Error(ErrorKind::CorruptHeader, "trailing bytes after payload");

  s.codes.resize(count);
  if (raw) {
    for (auto& c : s.codes) c = r.u32();
  } else {
    const auto payload = r.take(need);
    std::uint64_t bitpos = 0;
    for (auto& c : s.codes) {
      std::uint32_t v = 0;
      for (unsigned b = 0; b < bits; ++b, ++bitpos) {
        v = (v << 1) | ((payload[bitpos / 8] >> (7 - bitpos % 8)) & 1u);
      }
      c = v;
    }
  }
  s.validate();
  return s;
}

inline void save_stream(const std::filesystem::path& path, const CodeStream& s) {
  const auto bytes = (s.k >= 2 && std::has_single_bit(s.k)) ? pack(s) : pack_raw(s);
  io::write_file_atomic(path, bytes);
}

inline CodeStream load_stream(const std::filesystem::path& path) {
  return unpack(io::read_file(path));
}

/// One frame per line, codes separated by spaces.
inline std::string dump_text(const CodeStream& s) {
  std::ostringstream out;
  for (std::uint64_t t = 0; t < s.frames; ++t) {
    const auto f = s.frame(t);
    for (std::size_t n = 0; n < f.size(); ++n) {
      if (n) out << ' ';
      out << f[n];
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace resq
