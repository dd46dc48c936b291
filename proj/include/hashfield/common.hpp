#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace hashfield {

/// Violated precondition on an operation's inputs (shape mismatch, stale cache, ...).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Query point outside the field's domain.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Malformed file or text input.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Dataset ingestion failure (missing image, bad pose, empty scene).
class LoadError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Training produced a non-finite loss or gradient.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <typename Scalar>
struct Vec3 {
  Scalar x{0}, y{0}, z{0};

  constexpr Scalar& operator[](int i) { return i == 0 ? x : (i == 1 ? y : z); }
  constexpr const Scalar& operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }

  friend constexpr Vec3 operator+(const Vec3& a, const Vec3& b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
  friend constexpr Vec3 operator-(const Vec3& a, const Vec3& b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
  friend constexpr Vec3 operator*(const Vec3& a, Scalar s) { return {a.x * s, a.y * s, a.z * s}; }
  friend constexpr Vec3 operator*(Scalar s, const Vec3& a) { return a * s; }
  friend constexpr bool operator==(const Vec3&, const Vec3&) = default;
  Vec3& operator+=(const Vec3& o) {
    x += o.x;
    y += o.y;
    z += o.z;
    return *this;
  }
};

template <typename Scalar>
constexpr Scalar dot(const Vec3<Scalar>& a, const Vec3<Scalar>& b) {
  return a.x * b.x + a.y * b.y + a.z * b.z;
}

template <typename Scalar>
Scalar norm(const Vec3<Scalar>& a) {
  return std::sqrt(dot(a, a));
}

template <typename Scalar>
Vec3<Scalar> normalized(const Vec3<Scalar>& a) {
  const Scalar n = norm(a);
  return {a.x / n, a.y / n, a.z / n};
}

template <typename Scalar>
constexpr Vec3<Scalar> cross(const Vec3<Scalar>& a, const Vec3<Scalar>& b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}

template <typename To, typename From>
Vec3<To> vec_cast(const Vec3<From>& v) {
  return {static_cast<To>(v.x), static_cast<To>(v.y), static_cast<To>(v.z)};
}

template <typename Scalar>
bool all_finite(const Vec3<Scalar>& v) {
  return std::isfinite(v.x) && std::isfinite(v.y) && std::isfinite(v.z);
}

inline void require(bool cond, const std::string& what) {
  if (!cond) throw ContractError(what);
}

/// Uniform double in [0,1) from the top 53 bits; keeps streams identical across standard libraries.
template <typename Engine>
double uniform01(Engine& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Unbiased integer in [0, n).
template <typename Engine>
std::uint64_t uniform_index(Engine& rng, std::uint64_t n) {
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t v;
  do {
    v = rng();
  } while (v >= limit);
  return v % n;
}

}  // namespace hashfield
