#include "slmvc/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace slmvc {
namespace dsp {

namespace {

constexpr double kPi = 3.14159265358979323846;

double sinc(double v) {
  if (v == 0.0) return 1.0;
  const double pv = kPi * v;
  return std::sin(pv) / pv;
}

struct KernelSpec {
  double cutoff;     // relative to source Nyquist
  double half_width; // taps per side
};

KernelSpec kernel_for(int src_rate, int dst_rate) {
  const double fc = std::min(1.0, static_cast<double>(dst_rate) / src_rate);
  return {fc, std::ceil(32.0 / fc)};
}

// Visits every (input j, output i, weight) triple of the resampling map.
template <typename F>
void for_each_tap(int64_t nx, int64_t ny, int src_rate, int dst_rate, F&& visit) {
  const KernelSpec ks = kernel_for(src_rate, dst_rate);
  for (int64_t i = 0; i < ny; ++i) {
    const double t = static_cast<double>(i) * src_rate / dst_rate;
    const int64_t j0 = std::max<int64_t>(0, static_cast<int64_t>(std::ceil(t - ks.half_width)));
    const int64_t j1 = std::min(nx - 1, static_cast<int64_t>(std::floor(t + ks.half_width)));
    double wsum = 0.0;
    for (int64_t j = j0; j <= j1; ++j) {
      const double u = static_cast<double>(j) - t;
      const double r = u / ks.half_width;
      const double taper = 0.5 + 0.5 * std::cos(kPi * r);
      wsum += ks.cutoff * sinc(ks.cutoff * u) * taper;
    }
    if (wsum == 0.0) continue;
    for (int64_t j = j0; j <= j1; ++j) {
      const double u = static_cast<double>(j) - t;
      const double r = u / ks.half_width;
      const double taper = 0.5 + 0.5 * std::cos(kPi * r);
      const double w = ks.cutoff * sinc(ks.cutoff * u) * taper / wsum;
      visit(j, i, w);
    }
  }
}

}  // namespace

int64_t resample_length(int64_t n, int src_rate, int dst_rate) {
  return static_cast<int64_t>(
      std::llround(static_cast<double>(n) * dst_rate / static_cast<double>(src_rate)));
}

std::vector<double> resample_sinc(const double* x, int64_t n, int src_rate, int dst_rate) {
  if (src_rate <= 0 || dst_rate <= 0) throw std::invalid_argument("resample: rates must be positive");
  if (n <= 0) throw std::invalid_argument("resample: empty input");
  if (src_rate == dst_rate) return std::vector<double>(x, x + n);
  const int64_t ny = resample_length(n, src_rate, dst_rate);
  std::vector<double> y(static_cast<size_t>(ny), 0.0);
  for_each_tap(n, ny, src_rate, dst_rate,
               [&](int64_t j, int64_t i, double w) { y[static_cast<size_t>(i)] += w * x[j]; });
  return y;
}

void resample_sinc_backward(const double* grad_y, int64_t ny, double* grad_x, int64_t nx,
                            int src_rate, int dst_rate) {
  if (src_rate == dst_rate) {
    for (int64_t i = 0; i < ny; ++i) grad_x[i] += grad_y[i];
    return;
  }
  for_each_tap(nx, ny, src_rate, dst_rate,
               [&](int64_t j, int64_t i, double w) { grad_x[j] += w * grad_y[i]; });
}

}  // namespace dsp
}  // namespace slmvc
