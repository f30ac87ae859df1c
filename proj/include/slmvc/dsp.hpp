#pragma once

#include <cstdint>
#include <vector>

namespace slmvc {
namespace dsp {

/// Output length of windowed-sinc resampling: round(n * dst / src).
int64_t resample_length(int64_t n, int src_rate, int dst_rate);

/// Band-limited windowed-sinc resampling, deterministic. src==dst copies.
std::vector<double> resample_sinc(const double* x, int64_t n, int src_rate, int dst_rate);

/// Transpose of the linear map above: scatter grad_y back onto grad_x.
void resample_sinc_backward(const double* grad_y, int64_t ny, double* grad_x, int64_t nx,
                            int src_rate, int dst_rate);

}  // namespace dsp
}  // namespace slmvc
