#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <type_traits>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "mhf/error.hpp"

namespace mhf {

// Little-endian append-only byte buffer for model payloads.
class BinaryWriter {
 public:
  template <typename T>
    requires std::is_trivially_copyable_v<T>
  void put(const T& v) {
    const auto* p = reinterpret_cast<const char*>(&v);
    bytes_.insert(bytes_.end(), p, p + sizeof(T));
  }
  template <typename T>
    requires std::is_trivially_copyable_v<T>
  void put_vector(const std::vector<T>& v) {
    put<std::uint64_t>(v.size());
    const auto* p = reinterpret_cast<const char*>(v.data());
    bytes_.insert(bytes_.end(), p, p + v.size() * sizeof(T));
  }
  void put_string(const std::string& s) {
    put<std::uint64_t>(s.size());
    bytes_.insert(bytes_.end(), s.begin(), s.end());
  }
  void put_matrix(const Eigen::MatrixXd& m) {
    put<std::int64_t>(m.rows());
    put<std::int64_t>(m.cols());
    const auto* p = reinterpret_cast<const char*>(m.data());
    bytes_.insert(bytes_.end(), p, p + m.size() * sizeof(double));
  }
  const std::vector<char>& bytes() const { return bytes_; }

 private:
  std::vector<char> bytes_;
};

class BinaryReader {
 public:
  explicit BinaryReader(const std::vector<char>& bytes) : bytes_(bytes) {}

  template <typename T>
    requires std::is_trivially_copyable_v<T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  template <typename T>
    requires std::is_trivially_copyable_v<T>
  std::vector<T> get_vector() {
    auto n = get<std::uint64_t>();
    need(n * sizeof(T));
    std::vector<T> v(n);
    std::memcpy(v.data(), bytes_.data() + pos_, n * sizeof(T));
    pos_ += n * sizeof(T);
    return v;
  }
  std::string get_string() {
    auto n = get<std::uint64_t>();
    need(n);
    std::string s(bytes_.data() + pos_, n);
    pos_ += n;
    return s;
  }
  Eigen::MatrixXd get_matrix() {
    auto r = get<std::int64_t>();
    auto c = get<std::int64_t>();
    if (r < 0 || c < 0) throw Error("corrupt checkpoint: negative matrix shape");
    Eigen::MatrixXd m(r, c);
    need(static_cast<std::size_t>(r * c) * sizeof(double));
    std::memcpy(m.data(), bytes_.data() + pos_, static_cast<std::size_t>(r * c) * sizeof(double));
    pos_ += static_cast<std::size_t>(r * c) * sizeof(double);
    return m;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw Error("corrupt checkpoint: payload truncated");
  }
  const std::vector<char>& bytes_;
  std::size_t pos_ = 0;
};

// File layout: 8-byte magic "MHFCKPT1", u64 header length, JSON header,
// u64 payload length, payload bytes.
struct Checkpoint {
  nlohmann::json header;
  std::vector<char> payload;
};

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

}  // namespace mhf
