#include "mmsd/fft2.hpp"

#include <fftw3.h>

#include <map>
#include <mutex>

namespace mmsd {

namespace {

// FFTW planning is not thread-safe; execution on distinct buffers is.
// FFTW_ESTIMATE keeps plans deterministic across runs.
std::mutex g_plan_mutex;

struct PlanPair {
  fftw_plan fwd = nullptr;
  fftw_plan bwd = nullptr;
};

fftw_plan get_plan(int w, int h, int sign) {
  static std::map<std::pair<int, int>, PlanPair> cache;
  std::lock_guard<std::mutex> lock(g_plan_mutex);
  PlanPair& p = cache[{w, h}];
  fftw_plan& slot = sign == FFTW_FORWARD ? p.fwd : p.bwd;
  if (!slot) {
    fftw_complex* buf = fftw_alloc_complex(static_cast<size_t>(w) * h);
    slot = fftw_plan_dft_2d(h, w, buf, buf, sign,
                            FFTW_ESTIMATE | FFTW_UNALIGNED);
    fftw_free(buf);
  }
  return slot;
}

ComplexGrid run(const ComplexGrid& in, int sign) {
  ComplexGrid out = in;
  fftw_plan plan = get_plan(in.w, in.h, sign);
  fftw_execute_dft(plan, reinterpret_cast<fftw_complex*>(out.v.data()),
                   reinterpret_cast<fftw_complex*>(out.v.data()));
  return out;
}

}  // namespace

ComplexGrid fft2(const ComplexGrid& in) { return run(in, FFTW_FORWARD); }

ComplexGrid ifft2(const ComplexGrid& in) { return run(in, FFTW_BACKWARD); }

ComplexGrid fft2(const RealGrid& in) {
  ComplexGrid c(in.w, in.h);
  for (size_t i = 0; i < in.v.size(); ++i) c.v[i] = in.v[i];
  return fft2(c);
}

}  // namespace mmsd
