#include <cstdlib>
#include <stdexcept>
#include <string>

#include "drx/kernels.hpp"

namespace drx::kern {

bool cpu_has_avx2() {
#if defined(__x86_64__) || defined(__i386__)
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

namespace {

const Kernels* select_initial() {
  if (const char* env = std::getenv("DRX_KERNELS")) {
    const std::string v(env);
    if (v == "scalar") return &scalar_kernels();
    if (v == "avx2") {
      if (!(avx2_compiled() && cpu_has_avx2()))
        throw std::runtime_error("DRX_KERNELS=avx2 requested but unavailable");
      return &avx2_kernels();
    }
    if (!v.empty()) throw std::runtime_error("unknown DRX_KERNELS value: " + v);
  }
  if (avx2_compiled() && cpu_has_avx2()) return &avx2_kernels();
  return &scalar_kernels();
}

const Kernels*& slot() {
  static const Kernels* k = select_initial();
  return k;
}

}  // namespace

const Kernels& active() { return *slot(); }

void force_kernels(const std::string& name) {
  if (name == "scalar") {
    slot() = &scalar_kernels();
  } else if (name == "avx2") {
    if (!(avx2_compiled() && cpu_has_avx2()))
      throw std::runtime_error("avx2 kernels unavailable on this host");
    slot() = &avx2_kernels();
  } else {
    throw std::runtime_error("unknown kernel set: " + name);
  }
}

}  // namespace drx::kern
