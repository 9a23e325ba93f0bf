#include "fft.hpp"

#include <fftw3.h>

#include <map>
#include <mutex>
#include <stdexcept>

namespace snse::detail {
namespace {

enum class Kind { R2C, C2R, C2C };

struct PlanCache {
  std::mutex lock;
  std::map<std::pair<int, Kind>, fftw_plan> plans;

  ~PlanCache() {
    for (auto& [key, plan] : plans) fftw_destroy_plan(plan);
  }

  fftw_plan get(int n, Kind kind) {
    std::lock_guard guard(lock);
    auto it = plans.find({n, kind});
    if (it != plans.end()) return it->second;

    const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
    auto* real = fftw_alloc_real(static_cast<std::size_t>(n) * n);
    auto* cplx_buf = fftw_alloc_complex(static_cast<std::size_t>(n) * n);
    fftw_plan plan = nullptr;
    switch (kind) {
      case Kind::R2C: plan = fftw_plan_dft_r2c_2d(n, n, real, cplx_buf, flags); break;
      case Kind::C2R: plan = fftw_plan_dft_c2r_2d(n, n, cplx_buf, real, flags); break;
      case Kind::C2C:
        plan = fftw_plan_dft_2d(n, n, cplx_buf, cplx_buf, FFTW_BACKWARD, flags);
        break;
    }
    fftw_free(real);
    fftw_free(cplx_buf);
    if (plan == nullptr) throw std::runtime_error("FFTW plan creation failed");
    plans.emplace(std::pair{n, kind}, plan);
    return plan;
  }
};

PlanCache& cache() {
  static PlanCache instance;
  return instance;
}

fftw_complex* as_fftw(std::vector<std::complex<double>>& v) {
  return reinterpret_cast<fftw_complex*>(v.data());
}

}  // namespace

void fft_r2c(int n, std::vector<double>& in, std::vector<std::complex<double>>& out) {
  out.resize(static_cast<std::size_t>(n) * (n / 2 + 1));
  fftw_execute_dft_r2c(cache().get(n, Kind::R2C), in.data(), as_fftw(out));
}

void fft_c2r(int n, std::vector<std::complex<double>>& in, std::vector<double>& out) {
  out.resize(static_cast<std::size_t>(n) * n);
  fftw_execute_dft_c2r(cache().get(n, Kind::C2R), as_fftw(in), out.data());
}

void fft_c2c_backward(int n, std::vector<std::complex<double>>& data) {
  fftw_execute_dft(cache().get(n, Kind::C2C), as_fftw(data), as_fftw(data));
}

}  // namespace snse::detail
