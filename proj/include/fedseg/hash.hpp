#pragma once

#include <cstdint>
#include <cstring>
#include <string>
#include <type_traits>
#include <vector>

namespace fedseg {

// FNV-1a 64-bit, used for dataset/report digests.
class Fnv1a {
 public:
  void update(const void* ptr, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(ptr);
    for (std::size_t i = 0; i < n; ++i) {
      state_ ^= p[i];
      state_ *= 0x100000001b3ULL;
    }
  }

  template <typename T>
  void update_value(const T& v) {
    static_assert(std::is_trivially_copyable_v<T>);
    update(&v, sizeof(T));
  }

  template <typename T>
  void update_vector(const std::vector<T>& v) {
    static_assert(std::is_trivially_copyable_v<T>);
    update_value<std::uint64_t>(v.size());
    if (!v.empty()) update(v.data(), v.size() * sizeof(T));
  }

  void update_string(const std::string& s) {
    update_value<std::uint64_t>(s.size());
    update(s.data(), s.size());
  }

  std::uint64_t digest() const { return state_; }

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

inline std::uint64_t fnv1a64(const std::string& s) {
  Fnv1a h;
  h.update(s.data(), s.size());
  return h.digest();
}

}  // namespace fedseg
