#include "bcg/kernels.hpp"

#include <cstdlib>
#include <cstring>

namespace bcg::kernels {
namespace {

const Ops* resolve() {
  const Ops* avx2 = avx2_ops();
  const char* env = std::getenv("BCG_KERNELS");
  if (env != nullptr) {
    if (std::strcmp(env, "scalar") == 0) return &scalar_ops();
    if (std::strcmp(env, "avx2") == 0 && avx2 != nullptr) return avx2;
  }
#if defined(__x86_64__) || defined(_M_X64)
  if (avx2 != nullptr && __builtin_cpu_supports("avx2")) return avx2;
#endif
  return &scalar_ops();
}

}  // namespace

const Ops& active() {
  static const Ops* ops = resolve();
  return *ops;
}

}  // namespace bcg::kernels
