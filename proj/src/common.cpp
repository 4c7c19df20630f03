#include "nonlocal/common.hpp"

#include <cstdio>
#include <cstdlib>

#include <omp.h>

namespace nonlocal {

real pairwise_sum(const real* x, std::size_t n) {
  if (n <= 16) {
    real s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += x[i];
    return s;
  }
  const std::size_t h = n / 2;
  return pairwise_sum(x, h) + pairwise_sum(x + h, n - h);
}

int resolve_threads() {
  if (const char* env = std::getenv("NONLOCAL_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v >= 1) return static_cast<int>(v);
  }
  return omp_get_max_threads();
}

std::string fmt17(real x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return std::string(buf);
}

std::string csv_join(const std::vector<std::string>& cells) {
  std::string out;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) out += ',';
    out += cells[i];
  }
  return out;
}

}  // namespace nonlocal
