// Copyright 2026 The fsqz Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Wire format for model messages. Layout (all multi-byte fields little-endian):
//
//   header, 26 bytes, never compressed
//     0  magic "FSQZ"
//     4  u8  version (1)
//     5  u8  direction (0 server->client, 1 client->server)
//     6  u8  payload kind (0 dense_f32, 1 sparse_f32, 2 quant_int, 3 binary)
//     7  u8  compressed (0/1): payload is a raw DEFLATE stream
//     8  u32 round
//    12  u32 sender id
//    16  u64 param count
//    24  u8  index encoding (sparse only: 0 delta varint, 1 bitmap; else 0)
//    25  u8  reserved (0)
//
//   payload
//     dense_f32   N x f32
//     sparse_f32  u64 nnz, indices, nnz x f32 values (entries with nonzero bit pattern)
//                   delta varint: LEB128 of first index, then index - previous index
//                   bitmap: ceil(N/8) bytes, MSB-first, padding bits zero
//     quant_int   u8 bits, u32 L, L x u32 lengths, L x i8 scale exponents,
//                 codes: int8 per code (bits 8) or two nibbles per byte, low first (bits 4)
//     binary      u32 L, L x u32 lengths, sign bitmap MSB-first (1 = +1), padding zero

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "fsqz/compress.hpp"
#include "fsqz/error.hpp"
#include "fsqz/nn.hpp"

namespace fsqz {

using Bytes = std::vector<std::uint8_t>;

inline constexpr std::uint8_t kWireVersion = 1;
inline constexpr std::size_t kHeaderBytes = 26;
inline constexpr std::string_view kMagic = "FSQZ";
inline constexpr int kDeflateLevel = 6;

enum class Direction : std::uint8_t { server_to_client = 0, client_to_server = 1 };
enum class PayloadKind : std::uint8_t { dense_f32 = 0, sparse_f32 = 1, quant_int = 2, binary = 3 };
enum class IndexEncoding : std::uint8_t { delta_varint = 0, bitmap = 1 };

inline std::string to_string(PayloadKind k) {
  switch (k) {
    case PayloadKind::dense_f32: return "dense_f32";
    case PayloadKind::sparse_f32: return "sparse_f32";
    case PayloadKind::quant_int: return "quant_int";
    case PayloadKind::binary: return "binary";
  }
  return "unknown";
}

struct MessageHeader {
  Direction direction = Direction::server_to_client;
  std::uint32_t round = 0;
  PayloadKind payload_kind = PayloadKind::dense_f32;
  std::uint64_t param_count = 0;
  bool compressed = false;
  std::uint32_t sender_id = 0;
  IndexEncoding index_encoding = IndexEncoding::delta_varint;  // chosen by the encoder

  bool operator==(const MessageHeader&) const = default;
};

/// ParamVector for dense/sparse kinds, QuantizedModel for quant_int/binary.
using Payload = std::variant<ParamVector, QuantizedModel>;

struct Message {
  MessageHeader header;
  Payload payload;
};

// ---------------------------------------------------------------------------
// DEFLATE

/// Largest raw DEFLATE stream made of maximal stored blocks.
inline std::size_t stored_deflate_bound(std::size_t n) { return n + n / 65535 * 5 + 11; }

/// Raw DEFLATE of stored blocks only (BTYPE 00), 65535 bytes each.
inline Bytes stored_deflate(std::span<const std::uint8_t> in) {
  Bytes out;
  std::size_t off = 0;
  do {
    const std::size_t len = std::min<std::size_t>(in.size() - off, 65535);
    const bool last = off + len == in.size();
    out.push_back(last ? 1 : 0);
    out.push_back(static_cast<std::uint8_t>(len));
    out.push_back(static_cast<std::uint8_t>(len >> 8));
    out.push_back(static_cast<std::uint8_t>(~len));
    out.push_back(static_cast<std::uint8_t>(~len >> 8));
    out.insert(out.end(), in.begin() + static_cast<std::ptrdiff_t>(off), in.begin() + static_cast<std::ptrdiff_t>(off + len));
    off += len;
  } while (off < in.size());
  return out;
}

/// zlib raw DEFLATE at `level`; incompressible input falls back to maximal
/// stored blocks so the output never exceeds stored_deflate_bound.
inline Bytes deflate_compress(std::span<const std::uint8_t> in, int level = kDeflateLevel) {
  z_stream zs{};
  if (deflateInit2(&zs, level, Z_DEFLATED, -15, 8, Z_DEFAULT_STRATEGY) != Z_OK) throw EncodeError("deflateInit2 failed");
  Bytes out(deflateBound(&zs, static_cast<uLong>(in.size())));
  zs.next_in = const_cast<Bytef*>(in.data());
  zs.avail_in = static_cast<uInt>(in.size());
  zs.next_out = out.data();
  zs.avail_out = static_cast<uInt>(out.size());
  const int rc = deflate(&zs, Z_FINISH);
  deflateEnd(&zs);
  if (rc != Z_STREAM_END) throw EncodeError("deflate did not finish");
  out.resize(zs.total_out);
  if (out.size() > stored_deflate_bound(in.size())) return stored_deflate(in);
  return out;
}

inline Bytes deflate_decompress(std::span<const std::uint8_t> in, std::size_t max_out = std::size_t{1} << 32) {
  z_stream zs{};
  if (inflateInit2(&zs, -15) != Z_OK) throw DecompressionError("inflateInit2 failed");
  Bytes out;
  zs.next_in = const_cast<Bytef*>(in.data());
  zs.avail_in = static_cast<uInt>(in.size());
  std::uint8_t chunk[1 << 16];
  int rc = Z_OK;
  while (rc != Z_STREAM_END) {
    zs.next_out = chunk;
    zs.avail_out = sizeof(chunk);
    rc = inflate(&zs, Z_NO_FLUSH);
    if (rc != Z_OK && rc != Z_STREAM_END) {
      inflateEnd(&zs);
      throw DecompressionError("corrupt deflate stream");
    }
    const std::size_t produced = sizeof(chunk) - zs.avail_out;
    if (out.size() + produced > max_out) {
      inflateEnd(&zs);
      throw DecompressionError("inflated payload exceeds limit");
    }
    out.insert(out.end(), chunk, chunk + produced);
    if (rc == Z_OK && produced == 0 && zs.avail_in == 0) {
      inflateEnd(&zs);
      throw DecompressionError("truncated deflate stream");
    }
  }
  const bool trailing = zs.avail_in != 0;
  inflateEnd(&zs);
  if (trailing) throw DecompressionError("bytes after end of deflate stream");
  return out;
}

// ---------------------------------------------------------------------------
// Byte helpers

namespace detail {

class Writer {
 public:
  explicit Writer(Bytes& out) : out_(out) {}

  void u8(std::uint8_t v) { out_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void varint(std::uint64_t v) {
    while (v >= 0x80) {
      out_.push_back(static_cast<std::uint8_t>(v | 0x80));
      v >>= 7;
    }
    out_.push_back(static_cast<std::uint8_t>(v));
  }
  void bytes(std::span<const std::uint8_t> b) { out_.insert(out_.end(), b.begin(), b.end()); }

 private:
  Bytes& out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}

  std::size_t remaining() const { return in_.size() - pos_; }

  std::span<const std::uint8_t> take(std::size_t n) {
    if (n > remaining()) throw IoError("message truncated: need " + std::to_string(n) + " bytes, have " + std::to_string(remaining()));
    auto s = in_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  std::uint8_t u8() { return take(1)[0]; }
  std::uint32_t u32() {
    auto s = take(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t{s[static_cast<std::size_t>(i)]} << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    auto s = take(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t{s[static_cast<std::size_t>(i)]} << (8 * i);
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::uint64_t varint() {
    std::uint64_t v = 0;
    for (int shift = 0; shift < 64; shift += 7) {
      const std::uint8_t b = u8();
      v |= std::uint64_t{b & 0x7Fu} << shift;
      if (!(b & 0x80)) return v;
    }
    throw CorruptionError("varint longer than 10 bytes");
  }

 private:
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

inline std::size_t varint_len(std::uint64_t v) {
  std::size_t n = 1;
  while (v >= 0x80) {
    v >>= 7;
    ++n;
  }
  return n;
}

inline bool is_nonzero(float v) { return std::bit_cast<std::uint32_t>(v) != 0; }

inline std::size_t bitmap_bytes(std::uint64_t n) { return static_cast<std::size_t>((n + 7) / 8); }

/// Exact varint index bytes for the nonzeros of v.
inline std::size_t varint_index_bytes(std::span<const float> v) {
  std::size_t total = 0;
  std::uint64_t prev = 0;
  bool first = true;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!is_nonzero(v[i])) continue;
    total += varint_len(first ? i : i - prev);
    prev = i;
    first = false;
  }
  return total;
}

inline void check_payload_matches(const MessageHeader& h, const Payload& p) {
  const bool is_vector = std::holds_alternative<ParamVector>(p);
  const bool wants_vector = h.payload_kind == PayloadKind::dense_f32 || h.payload_kind == PayloadKind::sparse_f32;
  if (is_vector != wants_vector) throw EncodeError("payload type does not match payload kind " + to_string(h.payload_kind));
  const std::uint64_t n = is_vector ? std::get<ParamVector>(p).size() : std::get<QuantizedModel>(p).param_count();
  if (n != h.param_count)
    throw EncodeError("header param_count " + std::to_string(h.param_count) + " but payload holds " + std::to_string(n));
  if (!is_vector) {
    const auto& q = std::get<QuantizedModel>(p);
    if (h.payload_kind == PayloadKind::binary && q.bits != 1) throw EncodeError("binary payload needs bits == 1");
    if (h.payload_kind == PayloadKind::quant_int && q.bits != 4 && q.bits != 8)
      throw EncodeError("quant_int payload needs bits 4 or 8");
    const int lim = q.bits == 1 ? 1 : qmax_for(q.bits);
    for (const auto& l : q.layers) {
      if (l.codes.size() > UINT32_MAX) throw EncodeError("layer too long for u32 length");
      for (std::int8_t c : l.codes) {
        if (c < -lim || c > lim || (q.bits == 1 && c == 0)) throw EncodeError("quantized code out of range");
      }
    }
  }
}

inline void write_layer_table(Writer& w, const QuantizedModel& q) {
  w.u32(static_cast<std::uint32_t>(q.layers.size()));
  for (const auto& l : q.layers) w.u32(static_cast<std::uint32_t>(l.codes.size()));
}

inline std::vector<std::uint32_t> read_layer_table(Reader& r, std::uint64_t param_count) {
  const std::uint32_t count = r.u32();
  if (count > r.remaining() / 4) throw IoError("message truncated in layer table");
  std::vector<std::uint32_t> lengths(count);
  std::uint64_t total = 0;
  for (auto& len : lengths) total += (len = r.u32());
  if (total != param_count) throw CorruptionError("layer lengths do not sum to param_count");
  return lengths;
}

inline IndexEncoding encode_payload(const MessageHeader& h, const Payload& p, Bytes& out) {
  Writer w(out);
  IndexEncoding enc = IndexEncoding::delta_varint;
  switch (h.payload_kind) {
    case PayloadKind::dense_f32: {
      for (float v : std::get<ParamVector>(p)) w.f32(v);
      break;
    }
    case PayloadKind::sparse_f32: {
      const auto& v = std::get<ParamVector>(p);
      const std::uint64_t nnz = static_cast<std::uint64_t>(std::count_if(v.begin(), v.end(), is_nonzero));
      w.u64(nnz);
      if (bitmap_bytes(v.size()) < varint_index_bytes(v)) {
        enc = IndexEncoding::bitmap;
        std::vector<std::uint8_t> bits(bitmap_bytes(v.size()), 0);
        for (std::size_t i = 0; i < v.size(); ++i)
          if (is_nonzero(v[i])) bits[i / 8] |= static_cast<std::uint8_t>(0x80u >> (i % 8));
        w.bytes(bits);
      } else {
        std::uint64_t prev = 0;
        bool first = true;
        for (std::size_t i = 0; i < v.size(); ++i) {
          if (!is_nonzero(v[i])) continue;
          w.varint(first ? i : i - prev);
          prev = i;
          first = false;
        }
      }
      for (float x : v)
        if (is_nonzero(x)) w.f32(x);
      break;
    }
    case PayloadKind::quant_int: {
      const auto& q = std::get<QuantizedModel>(p);
      w.u8(static_cast<std::uint8_t>(q.bits));
      write_layer_table(w, q);
      for (const auto& l : q.layers) w.u8(static_cast<std::uint8_t>(l.scale_exp));
      if (q.bits == 8) {
        for (const auto& l : q.layers)
          for (std::int8_t c : l.codes) w.u8(static_cast<std::uint8_t>(c));
      } else {
        std::uint8_t pending = 0;
        bool half = false;
        for (const auto& l : q.layers) {
          for (std::int8_t c : l.codes) {
            const auto nib = static_cast<std::uint8_t>(c & 0x0F);
            if (!half) {
              pending = nib;
            } else {
              w.u8(static_cast<std::uint8_t>(pending | (nib << 4)));
            }
            half = !half;
          }
        }
        if (half) w.u8(pending);
      }
      break;
    }
    case PayloadKind::binary: {
      const auto& q = std::get<QuantizedModel>(p);
      write_layer_table(w, q);
      std::vector<std::uint8_t> bits(bitmap_bytes(q.param_count()), 0);
      std::size_t i = 0;
      for (const auto& l : q.layers)
        for (std::int8_t c : l.codes) {
          if (c > 0) bits[i / 8] |= static_cast<std::uint8_t>(0x80u >> (i % 8));
          ++i;
        }
      w.bytes(bits);
      break;
    }
  }
  return enc;
}

inline void write_header(const MessageHeader& h, Bytes& out) {
  Writer w(out);
  for (char c : kMagic) w.u8(static_cast<std::uint8_t>(c));
  w.u8(kWireVersion);
  w.u8(static_cast<std::uint8_t>(h.direction));
  w.u8(static_cast<std::uint8_t>(h.payload_kind));
  w.u8(h.compressed ? 1 : 0);
  w.u32(h.round);
  w.u32(h.sender_id);
  w.u64(h.param_count);
  w.u8(h.payload_kind == PayloadKind::sparse_f32 ? static_cast<std::uint8_t>(h.index_encoding) : 0);
  w.u8(0);
}

inline Payload decode_payload(const MessageHeader& h, std::span<const std::uint8_t> body) {
  Reader r(body);
  const std::uint64_t n = h.param_count;
  Payload result;
  switch (h.payload_kind) {
    case PayloadKind::dense_f32: {
      if (n > r.remaining() / 4) throw IoError("dense payload truncated");
      ParamVector v(static_cast<std::size_t>(n));
      for (float& x : v) x = r.f32();
      result = std::move(v);
      break;
    }
    case PayloadKind::sparse_f32: {
      const std::uint64_t nnz = r.u64();
      if (nnz > n) throw CorruptionError("sparse nnz exceeds param_count");
      std::vector<std::uint64_t> idx;
      idx.reserve(static_cast<std::size_t>(std::min<std::uint64_t>(nnz, r.remaining())));
      if (h.index_encoding == IndexEncoding::bitmap) {
        const auto bits = r.take(bitmap_bytes(n));
        for (std::uint64_t i = 0; i < n; ++i)
          if (bits[i / 8] & (0x80u >> (i % 8))) idx.push_back(i);
        if (n % 8 != 0 && (bits.back() & (0xFFu >> (n % 8))) != 0) throw CorruptionError("nonzero bitmap padding");
        if (idx.size() != nnz) throw CorruptionError("bitmap population does not match nnz");
      } else {
        std::uint64_t prev = 0;
        for (std::uint64_t k = 0; k < nnz; ++k) {
          const std::uint64_t d = r.varint();
          if (k > 0 && d == 0) throw CorruptionError("sparse indices not strictly increasing");
          const std::uint64_t i = k == 0 ? d : prev + d;
          if (i >= n || (k > 0 && i < prev)) throw CorruptionError("sparse index out of range");
          idx.push_back(i);
          prev = i;
        }
      }
      if (nnz > r.remaining() / 4) throw IoError("sparse values truncated");
      ParamVector v(static_cast<std::size_t>(n), 0.0f);
      for (std::uint64_t i : idx) {
        v[static_cast<std::size_t>(i)] = r.f32();
        if (!is_nonzero(v[static_cast<std::size_t>(i)])) throw CorruptionError("sparse payload stores a zero value");
      }
      result = std::move(v);
      break;
    }
    case PayloadKind::quant_int: {
      QuantizedModel q;
      q.bits = r.u8();
      if (q.bits != 4 && q.bits != 8) throw CorruptionError("quant_int bits must be 4 or 8");
      const auto lengths = read_layer_table(r, n);
      q.layers.resize(lengths.size());
      for (auto& l : q.layers) l.scale_exp = static_cast<std::int8_t>(r.u8());
      const int qmax = qmax_for(q.bits);
      const std::size_t packed = q.bits == 8 ? static_cast<std::size_t>(n) : static_cast<std::size_t>((n + 1) / 2);
      const auto data = r.take(packed);
      std::size_t i = 0;
      for (std::size_t l = 0; l < lengths.size(); ++l) {
        q.layers[l].codes.resize(lengths[l]);
        for (auto& c : q.layers[l].codes) {
          int code;
          if (q.bits == 8) {
            code = static_cast<std::int8_t>(data[i]);
          } else {
            const std::uint8_t nib = (i % 2 == 0) ? (data[i / 2] & 0x0F) : (data[i / 2] >> 4);
            code = nib >= 8 ? static_cast<int>(nib) - 16 : nib;
          }
          if (code < -qmax || code > qmax) throw CorruptionError("quantized code out of range");
          c = static_cast<std::int8_t>(code);
          ++i;
        }
      }
      if (q.bits == 4 && n % 2 == 1 && (data.back() & 0xF0) != 0) throw CorruptionError("nonzero nibble padding");
      result = std::move(q);
      break;
    }
    case PayloadKind::binary: {
      QuantizedModel q;
      q.bits = 1;
      const auto lengths = read_layer_table(r, n);
      const auto bits = r.take(bitmap_bytes(n));
      std::size_t i = 0;
      for (std::uint32_t len : lengths) {
        QuantLayer layer;
        layer.codes.resize(len);
        for (auto& c : layer.codes) {
          c = (bits[i / 8] & (0x80u >> (i % 8))) ? 1 : -1;
          ++i;
        }
        q.layers.push_back(std::move(layer));
      }
      if (n % 8 != 0 && (bits.back() & (0xFFu >> (n % 8))) != 0) throw CorruptionError("nonzero bitmap padding");
      result = std::move(q);
      break;
    }
  }
  if (r.remaining() != 0) throw CorruptionError("trailing bytes after payload");
  return result;
}

}  // namespace detail

/// Serializes header + payload. The payload is deflated when
/// header.compressed is set; the header never is.
inline Bytes encode(const MessageHeader& header, const Payload& payload) {
  detail::check_payload_matches(header, payload);
  Bytes body;
  MessageHeader h = header;
  h.index_encoding = detail::encode_payload(header, payload, body);
  Bytes out;
  detail::write_header(h, out);
  if (h.compressed) {
    const Bytes z = deflate_compress(body);
    out.insert(out.end(), z.begin(), z.end());
  } else {
    out.insert(out.end(), body.begin(), body.end());
  }
  return out;
}

inline MessageHeader decode_header(std::span<const std::uint8_t> bytes) {
  detail::Reader r(bytes);
  const auto magic = r.take(4);
  if (!std::equal(magic.begin(), magic.end(), kMagic.begin())) throw FormatError("bad magic");
  const std::uint8_t version = r.u8();
  if (version != kWireVersion) throw VersionError("unsupported wire version " + std::to_string(version));
  MessageHeader h;
  const std::uint8_t dir = r.u8();
  if (dir > 1) throw FormatError("invalid direction byte");
  h.direction = static_cast<Direction>(dir);
  const std::uint8_t kind = r.u8();
  if (kind > 3) throw VersionError("unknown payload kind " + std::to_string(kind));
  h.payload_kind = static_cast<PayloadKind>(kind);
  const std::uint8_t compressed = r.u8();
  if (compressed > 1) throw FormatError("invalid compressed flag");
  h.compressed = compressed == 1;
  h.round = r.u32();
  h.sender_id = r.u32();
  h.param_count = r.u64();
  const std::uint8_t enc = r.u8();
  if (enc > 1 || (enc != 0 && h.payload_kind != PayloadKind::sparse_f32)) throw FormatError("invalid index encoding");
  h.index_encoding = static_cast<IndexEncoding>(enc);
  if (r.u8() != 0) throw FormatError("reserved header byte must be zero");
  return h;
}

inline Message decode(std::span<const std::uint8_t> bytes) {
  Message m;
  m.header = decode_header(bytes);
  const auto body = bytes.subspan(kHeaderBytes);
  if (m.header.compressed) {
    // Generous bound on any valid payload for this param count.
    const std::size_t limit = static_cast<std::size_t>(m.header.param_count) * 16 + (std::size_t{1} << 20);
    const Bytes raw = deflate_decompress(body, limit);
    m.payload = detail::decode_payload(m.header, raw);
  } else {
    m.payload = detail::decode_payload(m.header, body);
  }
  return m;
}

// ---------------------------------------------------------------------------
// Size accounting

/// A payload kind plus bit width, spelled dense, sparse, q8, q4 or b1.
struct Encoding {
  PayloadKind kind = PayloadKind::dense_f32;
  int bits = 32;

  std::string name() const {
    switch (kind) {
      case PayloadKind::dense_f32: return "dense";
      case PayloadKind::sparse_f32: return "sparse";
      case PayloadKind::quant_int: return "q" + std::to_string(bits);
      case PayloadKind::binary: return "b1";
    }
    return "?";
  }

  static Encoding parse(std::string_view s) {
    if (s == "dense") return {PayloadKind::dense_f32, 32};
    if (s == "sparse") return {PayloadKind::sparse_f32, 32};
    if (s == "q8") return {PayloadKind::quant_int, 8};
    if (s == "q4") return {PayloadKind::quant_int, 4};
    if (s == "b1") return {PayloadKind::binary, 1};
    throw ConfigError("unknown encoding '" + std::string(s) + "' (expected dense, sparse, q8, q4, b1)");
  }

  bool operator==(const Encoding&) const = default;
};

/// Analytic payload size in bytes (header excluded). Dense, quant_int and
/// binary are exact for the given layer count. Sparse is the expectation
/// under i.i.d. zero placement with the encoder's varint/bitmap choice.
inline std::uint64_t estimate_size(std::uint64_t param_count, PayloadKind kind, int bits = 32, double sparsity = 0.0,
                                   std::uint64_t layer_count = 1) {
  const std::uint64_t n = param_count;
  switch (kind) {
    case PayloadKind::dense_f32: return 4 * n;
    case PayloadKind::sparse_f32: {
      if (n == 0) return 0;
      const double density = std::clamp(1.0 - sparsity, 0.0, 1.0);
      const auto nnz = static_cast<std::uint64_t>(std::llround(density * static_cast<double>(n)));
      // Geometric gaps: P(gap >= m) = (1 - p)^(m - 1); varint length counts 7-bit thresholds crossed.
      double expected_len = 1.0;
      if (density > 0.0 && density < 1.0)
        for (double m = 128.0; m < 1e19; m *= 128.0) expected_len += std::pow(1.0 - density, m - 1.0);
      const double varint = expected_len * static_cast<double>(nnz);
      const double bitmap = static_cast<double>(detail::bitmap_bytes(n));
      return 8 + 4 * nnz + static_cast<std::uint64_t>(std::ceil(std::min(varint, bitmap)));
    }
    case PayloadKind::quant_int:
      if (bits != 4 && bits != 8) throw ConfigError("quant_int size needs bits 4 or 8");
      return 1 + 4 + 5 * layer_count + (n * static_cast<std::uint64_t>(bits) + 7) / 8;
    case PayloadKind::binary: return 4 + 4 * layer_count + (n + 7) / 8;
  }
  return 0;
}

inline std::uint64_t estimate_size(std::uint64_t param_count, Encoding enc, double sparsity = 0.0,
                                   std::uint64_t layer_count = 1) {
  return estimate_size(param_count, enc.kind, enc.bits, sparsity, layer_count);
}

struct SizeReport {
  Encoding encoding;
  std::uint64_t raw_bytes = 0;       // payload before DEFLATE
  std::uint64_t deflated_bytes = 0;  // payload after DEFLATE
  std::uint64_t header_bytes = kHeaderBytes;
  double sparsity = 0.0;             // fraction of exactly-zero entries in the input vector
};

inline constexpr double kMiB = 1024.0 * 1024.0;

/// Payload for v under an encoding; quantized kinds use `group_sizes` as layers.
inline Payload make_payload(std::span<const float> v, Encoding enc, std::span<const std::size_t> group_sizes) {
  if (enc.kind == PayloadKind::dense_f32 || enc.kind == PayloadKind::sparse_f32) return ParamVector(v.begin(), v.end());
  return quantize(v, group_sizes, enc.bits);
}

/// Encodes v under each encoding, deflates the payload and reports both sizes.
inline std::vector<SizeReport> measure_sizes(std::span<const float> v, std::span<const Encoding> encodings,
                                             std::vector<std::size_t> group_sizes = {}) {
  if (group_sizes.empty()) group_sizes.push_back(v.size());
  const double zeros = static_cast<double>(std::count(v.begin(), v.end(), 0.0f));
  std::vector<SizeReport> reports;
  for (const Encoding& enc : encodings) {
    MessageHeader h;
    h.payload_kind = enc.kind;
    h.param_count = v.size();
    const Bytes raw = encode(h, make_payload(v, enc, group_sizes));
    const std::span<const std::uint8_t> body(raw.data() + kHeaderBytes, raw.size() - kHeaderBytes);
    SizeReport rep;
    rep.encoding = enc;
    rep.raw_bytes = body.size();
    rep.deflated_bytes = deflate_compress(body).size();
    rep.sparsity = v.empty() ? 0.0 : zeros / static_cast<double>(v.size());
    reports.push_back(rep);
  }
  return reports;
}

}  // namespace fsqz
