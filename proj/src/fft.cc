// Copyright 2026 mcse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "fft.h"

#include <fftw3.h>

#include <cstring>
#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>

namespace mcse::detail {
namespace {

// FFTW planning is not thread safe; execution with new-array functions is.
struct PlanPair {
  fftw_plan forward = nullptr;
  fftw_plan inverse = nullptr;
  ~PlanPair() {
    if (forward) fftw_destroy_plan(forward);
    if (inverse) fftw_destroy_plan(inverse);
  }
};

std::mutex plan_mutex;

const PlanPair& plans_for(std::size_t n) {
  static std::map<std::size_t, std::unique_ptr<PlanPair>> cache;
  std::lock_guard<std::mutex> lock(plan_mutex);
  auto it = cache.find(n);
  if (it != cache.end()) return *it->second;
  auto pair = std::make_unique<PlanPair>();
  double* real = fftw_alloc_real(n);
  fftw_complex* spec = fftw_alloc_complex(n / 2 + 1);
  int len = static_cast<int>(n);
  pair->forward = fftw_plan_dft_r2c_1d(len, real, spec, FFTW_ESTIMATE);
  pair->inverse = fftw_plan_dft_c2r_1d(len, spec, real, FFTW_ESTIMATE);
  fftw_free(real);
  fftw_free(spec);
  if (!pair->forward || !pair->inverse) throw std::runtime_error("fftw planning failed");
  return *cache.emplace(n, std::move(pair)).first->second;
}

}  // namespace

void real_fft(std::span<const double> in, std::span<std::complex<double>> out) {
  const std::size_t n = in.size();
  if (out.size() != n / 2 + 1) throw std::invalid_argument("real_fft: bad output size");
  const PlanPair& p = plans_for(n);
  double* buf = fftw_alloc_real(n);
  fftw_complex* spec = fftw_alloc_complex(n / 2 + 1);
  std::memcpy(buf, in.data(), n * sizeof(double));
  fftw_execute_dft_r2c(p.forward, buf, spec);
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = {spec[k][0], spec[k][1]};
  fftw_free(buf);
  fftw_free(spec);
}

void inverse_real_fft(std::span<const std::complex<double>> in, std::span<double> out) {
  const std::size_t n = out.size();
  if (in.size() != n / 2 + 1) throw std::invalid_argument("inverse_real_fft: bad input size");
  const PlanPair& p = plans_for(n);
  double* buf = fftw_alloc_real(n);
  fftw_complex* spec = fftw_alloc_complex(n / 2 + 1);
  for (std::size_t k = 0; k < in.size(); ++k) {
    spec[k][0] = in[k].real();
    spec[k][1] = in[k].imag();
  }
  // c2r destroys its input, which is our scratch copy.
  fftw_execute_dft_c2r(p.inverse, spec, buf);
  const double scale = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = buf[i] * scale;
  fftw_free(buf);
  fftw_free(spec);
}

std::size_t fast_fft_size(std::size_t min_size) {
  std::size_t n = std::max<std::size_t>(min_size, 1);
  for (;; ++n) {
    std::size_t m = n;
    for (std::size_t f : {2, 3, 5})
      while (m % f == 0) m /= f;
    if (m == 1) return n;
  }
}

}  // namespace mcse::detail
