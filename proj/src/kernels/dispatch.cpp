#include <atomic>
#include <cstdlib>
#include <string>

#include "minima/errors.hpp"
#include "minima/kernels.hpp"

namespace minima::kernels {
namespace {

bool cpu_has_avx2() {
#if defined(__x86_64__) || defined(_M_X64)
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const KernelTable* pick_initial() {
  Isa want = cpu_has_avx2() ? Isa::Avx2 : Isa::Scalar;
  if (const char* env = std::getenv("MINIMA_ISA")) {
    std::string s(env);
    if (s == "scalar") want = Isa::Scalar;
    else if (s == "avx2" && cpu_has_avx2()) want = Isa::Avx2;
  }
  return &table_for(want);
}

std::atomic<const KernelTable*>& slot() {
  static std::atomic<const KernelTable*> current{pick_initial()};
  return current;
}

}  // namespace

bool isa_supported(Isa isa) {
  switch (isa) {
    case Isa::Scalar: return true;
    case Isa::Avx2: return cpu_has_avx2();
  }
  return false;
}

const KernelTable& table_for(Isa isa) {
#if defined(__x86_64__) || defined(_M_X64)
  if (isa == Isa::Avx2) {
    if (!cpu_has_avx2()) throw Error("AVX2 kernels requested on a CPU without AVX2/FMA");
    return avx2::table();
  }
#else
  if (isa == Isa::Avx2) throw Error("AVX2 kernels are not built for this architecture");
#endif
  return scalar::table();
}

const KernelTable& active() { return *slot().load(std::memory_order_relaxed); }

Isa active_isa() { return active().isa; }

std::string_view isa_name(Isa isa) { return isa == Isa::Avx2 ? "avx2" : "scalar"; }

void force_isa(Isa isa) { slot().store(&table_for(isa), std::memory_order_relaxed); }

}  // namespace minima::kernels
