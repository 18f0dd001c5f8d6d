#include <atomic>
#include <cstdlib>
#include <cstring>
#include <string>

#include "gbcc/errors.hpp"
#include "gbcc/kernels.hpp"

namespace gbcc::kernels {
namespace {

bool cpu_has_avx2() {
#if defined(__x86_64__) || defined(__i386__)
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const Ops* select(const char* request) {
  std::string want = request ? request : "auto";
  if (want.empty()) want = "auto";
  if (want == "scalar") return &scalar_ops();
  if (want == "avx2") {
    const Ops* v = avx2_ops();
    if (!v || !cpu_has_avx2())
      throw config_error("GBCC_SIMD=avx2 requested but AVX2+FMA is unavailable");
    return v;
  }
  if (want == "auto") {
    const Ops* v = avx2_ops();
    if (v && cpu_has_avx2()) return v;
    return &scalar_ops();
  }
  throw config_error("unknown GBCC_SIMD value '" + want + "' (scalar|avx2|auto)");
}

std::atomic<const Ops*> g_active{nullptr};

}  // namespace

const Ops& active() {
  const Ops* cur = g_active.load(std::memory_order_acquire);
  if (!cur) {
    cur = select(std::getenv("GBCC_SIMD"));
    g_active.store(cur, std::memory_order_release);
  }
  return *cur;
}

void force_backend(const char* name) {
  g_active.store(select(name), std::memory_order_release);
}

}  // namespace gbcc::kernels
