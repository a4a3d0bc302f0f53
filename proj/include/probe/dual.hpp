#pragma once

#include <cmath>

namespace probe {

// Stable scalar forms shared by duals and the hand-written backprop kernels.
inline double sigmoid(double x) {
  if (x >= 0.0) {
    const double e = std::exp(-x);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

/// Forward-mode dual number: value plus derivative with respect to one
/// seeded input. Nest (Dual<Dual<double>>) for second-order mixed partials.
template <typename T>
struct Dual {
  T v{};  // value
  T d{};  // d(value)/d(seed)

  Dual() = default;
  Dual(T value) : v(value), d(T{}) {}  // NOLINT(google-explicit-constructor)
  Dual(T value, T deriv) : v(value), d(deriv) {}
};

/// Seeds an independent variable: derivative one with respect to itself.
template <typename T>
Dual<T> dual_seed(T value) {
  return Dual<T>(value, T{1.0});
}

template <typename T>
Dual<T> operator+(const Dual<T>& a, const Dual<T>& b) {
  return {a.v + b.v, a.d + b.d};
}
template <typename T>
Dual<T> operator-(const Dual<T>& a, const Dual<T>& b) {
  return {a.v - b.v, a.d - b.d};
}
template <typename T>
Dual<T> operator-(const Dual<T>& a) {
  return {-a.v, -a.d};
}
template <typename T>
Dual<T> operator*(const Dual<T>& a, const Dual<T>& b) {
  return {a.v * b.v, a.d * b.v + a.v * b.d};
}
template <typename T>
Dual<T> operator/(const Dual<T>& a, const Dual<T>& b) {
  return {a.v / b.v, (a.d * b.v - a.v * b.d) / (b.v * b.v)};
}

template <typename T>
Dual<T> operator+(double a, const Dual<T>& b) {
  return {T(a) + b.v, b.d};
}
template <typename T>
Dual<T> operator+(const Dual<T>& a, double b) {
  return {a.v + T(b), a.d};
}
template <typename T>
Dual<T> operator-(double a, const Dual<T>& b) {
  return {T(a) - b.v, -b.d};
}
template <typename T>
Dual<T> operator-(const Dual<T>& a, double b) {
  return {a.v - T(b), a.d};
}
template <typename T>
Dual<T> operator*(double a, const Dual<T>& b) {
  return {T(a) * b.v, T(a) * b.d};
}
template <typename T>
Dual<T> operator*(const Dual<T>& a, double b) {
  return {a.v * T(b), a.d * T(b)};
}
template <typename T>
Dual<T> operator/(const Dual<T>& a, double b) {
  return {a.v / T(b), a.d / T(b)};
}
template <typename T>
Dual<T> operator/(double a, const Dual<T>& b) {
  return Dual<T>(T(a), T{}) / b;
}

template <typename T>
Dual<T> exp(const Dual<T>& a) {
  using std::exp;
  const T e = exp(a.v);
  return {e, a.d * e};
}

template <typename T>
Dual<T> log(const Dual<T>& a) {
  using std::log;
  return {log(a.v), a.d / a.v};
}

template <typename T>
Dual<T> sqrt(const Dual<T>& a) {
  using std::sqrt;
  const T s = sqrt(a.v);
  return {s, a.d / (2.0 * s)};
}

template <typename T>
Dual<T> sigmoid(const Dual<T>& a) {
  const T s = sigmoid(a.v);
  return {s, a.d * s * (1.0 - s)};
}

template <typename T>
Dual<T> softplus(const Dual<T>& a) {
  return {softplus(a.v), a.d * sigmoid(a.v)};
}

template <typename T>
Dual<T> tanh(const Dual<T>& a) {
  using std::tanh;
  const T t = tanh(a.v);
  return {t, a.d * (1.0 - t * t)};
}

}  // namespace probe
