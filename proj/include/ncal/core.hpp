#pragma once
// Shared vocabulary types and small numeric helpers.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace ncal {

using Point = std::vector<double>;

// Regression function X -> R and classifier X -> {+1, -1}.
using RealFn = std::function<double(const Point&)>;
using Classifier = std::function<int(const Point&)>;

enum class Decision : int { negative = -1, abstain = 0, positive = 1 };

struct AbstainClassifier {
  std::function<Decision(const Point&)> decide;
  double gamma = 0.0;
  std::size_t provenance = 0;  // epoch that built it

  Decision operator()(const Point& x) const { return decide(x); }
};

inline double relu(double v) noexcept { return v > 0.0 ? v : 0.0; }

// Sign with the tie mapped to +1.
inline int sign_pm(double v) noexcept { return v >= 0.0 ? 1 : -1; }

inline double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("dot: dimension mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("distance: dimension mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

// Ceiling that ignores relative rounding noise below 1e-9, so that e.g.
// pow(0.1, -1) = 10.000000000000002 rounds to 10 rather than 11.
inline std::uint64_t ceil_tol(double v) {
  if (!std::isfinite(v)) throw std::domain_error("ceil_tol: non-finite value");
  if (v <= 0.0) return 0;
  const double slack = 1e-9 * std::max(1.0, std::abs(v));
  const double c = std::ceil(v - slack);
  return static_cast<std::uint64_t>(std::max(0.0, c));
}

// log2 with the argument floored at 2, so the result is never below 1.
inline double log2_floor2(double v) { return std::log2(std::max(2.0, v)); }

// Decimal text with 17 significant digits; round-trips every double.
inline std::string fmt17(double v) {
  std::array<char, 40> buf{};
  std::snprintf(buf.data(), buf.size(), "%.17g", v);
  return std::string(buf.data());
}

// Radical-inverse Halton point in [0,1)^d; index starts at 1.
inline Point halton_point(std::uint64_t index, std::size_t dim) {
  static constexpr std::array<std::uint64_t, 16> primes{2,  3,  5,  7,  11, 13, 17, 19,
                                                        23, 29, 31, 37, 41, 43, 47, 53};
  if (dim > primes.size()) throw std::invalid_argument("halton_point: dim > 16");
  Point p(dim);
  for (std::size_t k = 0; k < dim; ++k) {
    const std::uint64_t base = primes[k];
    double f = 1.0, r = 0.0;
    std::uint64_t i = index;
    while (i > 0) {
      f /= static_cast<double>(base);
      r += f * static_cast<double>(i % base);
      i /= base;
    }
    p[k] = r;
  }
  return p;
}

// Quasi-uniform probe points on [0,1]^d: cell midpoints in 1-d, Halton otherwise.
inline std::vector<Point> cube_probe_grid(std::size_t dim, std::size_t n) {
  std::vector<Point> pts;
  pts.reserve(n);
  if (dim == 1) {
    for (std::size_t i = 0; i < n; ++i)
      pts.push_back({(static_cast<double>(i) + 0.5) / static_cast<double>(n)});
  } else {
    for (std::size_t i = 0; i < n; ++i) pts.push_back(halton_point(i + 1, dim));
  }
  return pts;
}

struct MeanStderr {
  double mean = 0.0;
  double stderr_ = 0.0;
};

inline MeanStderr mean_stderr(std::span<const double> xs) {
  MeanStderr r;
  if (xs.empty()) return r;
  double s = 0.0;
  for (double v : xs) s += v;
  r.mean = s / static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double v : xs) ss += (v - r.mean) * (v - r.mean);
    r.stderr_ = std::sqrt(ss / static_cast<double>(xs.size() - 1) / static_cast<double>(xs.size()));
  }
  return r;
}

}  // namespace ncal
