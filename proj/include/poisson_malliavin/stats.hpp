#ifndef POISSON_MALLIAVIN_STATS_HPP
#define POISSON_MALLIAVIN_STATS_HPP

#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <vector>

namespace pm {

/// Compensated (Kahan-Babuska / Neumaier) accumulator.
class KahanSum {
public:
  void add(double v) {
    const double t = sum_ + v;
    if (std::abs(sum_) >= std::abs(v)) {
      comp_ += (sum_ - t) + v;
    } else {
      comp_ += (v - t) + sum_;
    }
    sum_ = t;
  }
  KahanSum& operator+=(double v) {
    add(v);
    return *this;
  }
  [[nodiscard]] double value() const { return sum_ + comp_; }

private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

/// Fixed-order pairwise sum; the reduction tree depends only on the length.
inline double pairwise_sum(std::span<const double> v) {
  if (v.size() <= 16) {
    double s = 0.0;
    for (double x : v) {
      s += x;
    }
    return s;
  }
  const std::size_t half = v.size() / 2;
  return pairwise_sum(v.first(half)) + pairwise_sum(v.subspan(half));
}

struct MeanSe {
  double mean = 0.0;
  double std_error = 0.0;
  double variance = 0.0; // unbiased sample variance
  std::size_t n = 0;
};

/// Sample mean with its standard error; requires n >= 2 for a finite SE.
inline MeanSe mean_se(std::span<const double> v) {
  MeanSe r;
  r.n = v.size();
  if (v.empty()) {
    return r;
  }
  r.mean = pairwise_sum(v) / static_cast<double>(v.size());
  if (v.size() < 2) {
    return r;
  }
  std::vector<double> sq(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double d = v[i] - r.mean;
    sq[i] = d * d;
  }
  r.variance = pairwise_sum(sq) / static_cast<double>(v.size() - 1);
  r.std_error = std::sqrt(r.variance / static_cast<double>(v.size()));
  return r;
}

/// Second moment E[X^2] around a known mean `center`, with SE from the
/// fourth moment. Used for variances of centred quantities.
inline MeanSe second_moment(std::span<const double> v, double center = 0.0) {
  std::vector<double> sq(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double d = v[i] - center;
    sq[i] = d * d;
  }
  return mean_se(sq);
}

/// Sample variance with its standard error sqrt((m4 - s^4) / n).
inline MeanSe sample_variance(std::span<const double> v) {
  const MeanSe m = mean_se(v);
  MeanSe r;
  r.n = v.size();
  if (v.size() < 2) {
    return r;
  }
  std::vector<double> d2(v.size());
  std::vector<double> d4(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double d = v[i] - m.mean;
    d2[i] = d * d;
    d4[i] = d2[i] * d2[i];
  }
  const double n = static_cast<double>(v.size());
  const double m2 = pairwise_sum(d2) / n;
  const double m4 = pairwise_sum(d4) / n;
  r.mean = m.variance;
  r.variance = m4 - m2 * m2;
  r.std_error = std::sqrt(std::max(r.variance, 0.0) / n);
  return r;
}

inline double normal_pdf(double x) {
  return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

/// Upper tail 1 - Phi(x) without cancellation.
inline double normal_sf(double x) { return 0.5 * std::erfc(x / std::numbers::sqrt2); }

} // namespace pm

#endif
