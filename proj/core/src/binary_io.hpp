#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "disp/error.hpp"

namespace disp::detail {

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

class BinaryWriter {
 public:
  void bytes(std::string_view s) { buffer_.insert(buffer_.end(), s.begin(), s.end()); }

  template <typename T>
  void scalar(T value) {
    static_assert(std::is_trivially_copyable_v<T>);
    const auto* p = reinterpret_cast<const char*>(&value);
    buffer_.insert(buffer_.end(), p, p + sizeof(T));
  }

  template <typename T>
  void array(const T* data, std::size_t count) {
    const auto* p = reinterpret_cast<const char*>(data);
    buffer_.insert(buffer_.end(), p, p + count * sizeof(T));
  }

  void write_to(const std::string& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + path);
    out.write(buffer_.data(), static_cast<std::streamsize>(buffer_.size()));
    if (!out) throw DataError("write failed: " + path);
  }

 private:
  std::vector<char> buffer_;
};

// Bounds-checked reader over a whole file; every failure reports the byte offset.
class BinaryReader {
 public:
  explicit BinaryReader(const std::string& path) : source_(path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path);
    buffer_.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  }

  std::string_view bytes(std::size_t count) {
    require(count);
    std::string_view out(buffer_.data() + offset_, count);
    offset_ += count;
    return out;
  }

  template <typename T>
  T scalar() {
    require(sizeof(T));
    T value;
    std::memcpy(&value, buffer_.data() + offset_, sizeof(T));
    offset_ += sizeof(T);
    return value;
  }

  template <typename T>
  void array(T* out, std::size_t count) {
    if (count > (buffer_.size() - offset_) / sizeof(T)) fail("truncated file");
    std::memcpy(out, buffer_.data() + offset_, count * sizeof(T));
    offset_ += count * sizeof(T);
  }

  std::uint64_t offset() const noexcept { return offset_; }
  bool at_end() const noexcept { return offset_ == buffer_.size(); }
  const std::string& source() const noexcept { return source_; }

  [[noreturn]] void fail(const std::string& what) const {
    throw CorruptFileError(source_, offset_, what);
  }

 private:
  void require(std::size_t count) const {
    if (count > buffer_.size() - offset_) fail("truncated file");
  }

  std::string source_;
  std::vector<char> buffer_;
  std::size_t offset_ = 0;
};

}  // namespace disp::detail
