#include <cstdlib>

#include "dpal/error.hpp"
#include "dpal/kernels.hpp"

namespace dpal::kernels {

#if defined(__x86_64__) || defined(_M_X64)
extern const KernelTable kAvx2Table;
#endif
#if defined(__aarch64__)
extern const KernelTable kNeonTable;
#endif

namespace {

bool cpu_has_avx2() {
#if defined(__x86_64__) || defined(_M_X64)
  return __builtin_cpu_supports("avx2") != 0;
#else
  return false;
#endif
}

const KernelTable* widest_supported() {
#if defined(__x86_64__) || defined(_M_X64)
  if (cpu_has_avx2()) return &kAvx2Table;
#endif
#if defined(__aarch64__)
  return &kNeonTable;  // NEON is mandatory on aarch64
#endif
  return &scalar_table();
}

const KernelTable* resolve(const std::string& name) {
  if (name == "auto") return widest_supported();
  if (name == "scalar") return &scalar_table();
#if defined(__x86_64__) || defined(_M_X64)
  if (name == "avx2") {
    if (!cpu_has_avx2()) throw ParameterError("kernels: CPU lacks AVX2");
    return &kAvx2Table;
  }
#endif
#if defined(__aarch64__)
  if (name == "neon") return &kNeonTable;
#endif
  throw ParameterError("kernels: unknown or unsupported variant '" + name +
                       "'");
}

const KernelTable* initial_table() {
  if (const char* env = std::getenv("DPAL_KERNELS")) {
    return resolve(env);
  }
  return widest_supported();
}

const KernelTable*& active_slot() {
  static const KernelTable* table = initial_table();
  return table;
}

}  // namespace

std::vector<const KernelTable*> available_tables() {
  std::vector<const KernelTable*> tables = {&scalar_table()};
#if defined(__x86_64__) || defined(_M_X64)
  if (cpu_has_avx2()) tables.push_back(&kAvx2Table);
#endif
#if defined(__aarch64__)
  tables.push_back(&kNeonTable);
#endif
  return tables;
}

const KernelTable& active() { return *active_slot(); }

void select(const std::string& name) { active_slot() = resolve(name); }

}  // namespace dpal::kernels
