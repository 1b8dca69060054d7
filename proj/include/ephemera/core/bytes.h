// Fixed-width byte identifiers plus little-endian buffer codec helpers used by
// every wire format in the project.
#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <cstring>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace ephemera {

using Bytes = std::vector<std::uint8_t>;

std::string to_hex(std::span<const std::uint8_t> bytes);
std::optional<Bytes> from_hex(std::string_view hex);

template <typename Tag>
struct Bytes32 {
  std::array<std::uint8_t, 32> bytes{};

  auto operator<=>(const Bytes32&) const = default;

  static Bytes32 filled(std::uint8_t value) {
    Bytes32 out;
    out.bytes.fill(value);
    return out;
  }

  static std::optional<Bytes32> from_hex(std::string_view hex) {
    auto raw = ephemera::from_hex(hex);
    if (!raw || raw->size() != 32) return std::nullopt;
    Bytes32 out;
    std::memcpy(out.bytes.data(), raw->data(), 32);
    return out;
  }

  static Bytes32 from_span(std::span<const std::uint8_t> raw) {
    Bytes32 out;
    if (raw.size() == 32) std::memcpy(out.bytes.data(), raw.data(), 32);
    return out;
  }

  std::string hex() const { return to_hex(bytes); }
  bool is_zero() const {
    for (auto b : bytes)
      if (b != 0) return false;
    return true;
  }
};

// Account and program addresses order bytewise; maps keyed by Address rely on this.
using Address = Bytes32<struct AddressTag>;
using Hash32 = Bytes32<struct HashTag>;

class ByteWriter {
 public:
  void put_u8(std::uint8_t v) { buf_.push_back(v); }
  void put_u16(std::uint16_t v) { put_le(v, 2); }
  void put_u32(std::uint32_t v) { put_le(v, 4); }
  void put_u64(std::uint64_t v) { put_le(v, 8); }
  void put_i64(std::int64_t v) { put_le(static_cast<std::uint64_t>(v), 8); }
  void put_f64(double v) {
    std::uint64_t raw;
    std::memcpy(&raw, &v, 8);
    put_le(raw, 8);
  }
  void put_bytes(std::span<const std::uint8_t> data) {
    buf_.insert(buf_.end(), data.begin(), data.end());
  }
  void put_address(const Address& a) { put_bytes(a.bytes); }
  void put_hash(const Hash32& h) { put_bytes(h.bytes); }

  const Bytes& buffer() const { return buf_; }
  Bytes take() { return std::move(buf_); }

 private:
  void put_le(std::uint64_t v, int width) {
    for (int i = 0; i < width; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  Bytes buf_;
};

// Reads fail soft: on underflow the reader returns zeroes and ok() flips false,
// so callers validate once at the end instead of around every field.
class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> data) : data_(data) {}

  std::uint8_t get_u8() { return static_cast<std::uint8_t>(get_le(1)); }
  std::uint16_t get_u16() { return static_cast<std::uint16_t>(get_le(2)); }
  std::uint32_t get_u32() { return static_cast<std::uint32_t>(get_le(4)); }
  std::uint64_t get_u64() { return get_le(8); }
  std::int64_t get_i64() { return static_cast<std::int64_t>(get_le(8)); }
  double get_f64() {
    std::uint64_t raw = get_le(8);
    double v;
    std::memcpy(&v, &raw, 8);
    return v;
  }
  Bytes get_bytes(std::size_t n) {
    if (pos_ + n > data_.size()) {
      ok_ = false;
      pos_ = data_.size();
      return {};
    }
    Bytes out(data_.begin() + pos_, data_.begin() + pos_ + n);
    pos_ += n;
    return out;
  }
  Address get_address() {
    auto raw = get_bytes(32);
    return raw.size() == 32 ? Address::from_span(raw) : Address{};
  }
  Hash32 get_hash() {
    auto raw = get_bytes(32);
    return raw.size() == 32 ? Hash32::from_span(raw) : Hash32{};
  }

  bool ok() const { return ok_; }
  bool at_end() const { return pos_ == data_.size(); }
  std::size_t remaining() const { return data_.size() - pos_; }

 private:
  std::uint64_t get_le(int width) {
    if (pos_ + static_cast<std::size_t>(width) > data_.size()) {
      ok_ = false;
      pos_ = data_.size();
      return 0;
    }
    std::uint64_t v = 0;
    for (int i = 0; i < width; ++i) v |= static_cast<std::uint64_t>(data_[pos_ + i]) << (8 * i);
    pos_ += width;
    return v;
  }
  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
  bool ok_ = true;
};

inline Bytes u64_le(std::uint64_t v) {
  ByteWriter w;
  w.put_u64(v);
  return w.take();
}

inline Bytes to_bytes(std::string_view s) {
  return Bytes(s.begin(), s.end());
}

}  // namespace ephemera
