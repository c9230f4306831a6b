#include <atomic>
#include <cstdlib>
#include <string>

#include "evocap/kernels/kernels.hpp"

namespace evocap::kernels {

#ifdef EVOCAP_HAVE_AVX2
namespace avx2 {
const KernelTable& table();
}
#endif
#ifdef EVOCAP_HAVE_NEON
namespace neon {
const KernelTable& table();
}
#endif

const KernelTable* avx2_table() {
#ifdef EVOCAP_HAVE_AVX2
  static const bool supported = __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  return supported ? &avx2::table() : nullptr;
#else
  return nullptr;
#endif
}

const KernelTable* neon_table() {
#ifdef EVOCAP_HAVE_NEON
  return &neon::table();
#else
  return nullptr;
#endif
}

std::vector<const KernelTable*> available() {
  std::vector<const KernelTable*> out{&scalar_table()};
  if (const auto* t = avx2_table()) out.push_back(t);
  if (const auto* t = neon_table()) out.push_back(t);
  return out;
}

namespace {

const KernelTable* widest() {
  if (const auto* t = avx2_table()) return t;
  if (const auto* t = neon_table()) return t;
  return &scalar_table();
}

const KernelTable* by_name(std::string_view name) {
  if (name == "auto") return widest();
  for (const auto* t : available())
    if (name == t->name) return t;
  return nullptr;
}

std::atomic<const KernelTable*>& slot() {
  static std::atomic<const KernelTable*> current = [] {
    const char* env = std::getenv("EVOCAP_KERNELS");
    const KernelTable* t = env ? by_name(env) : nullptr;
    return t ? t : widest();
  }();
  return current;
}

}  // namespace

const KernelTable& active() { return *slot().load(std::memory_order_relaxed); }

bool select(std::string_view name) {
  const KernelTable* t = by_name(name);
  if (!t) return false;
  slot().store(t, std::memory_order_relaxed);
  return true;
}

}  // namespace evocap::kernels
