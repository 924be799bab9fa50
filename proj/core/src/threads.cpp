// SPDX-License-Identifier: Apache-2.0
#include "iclmimo/threads.hpp"

#include <cstdlib>
#include <string>

namespace iclmimo {

void configure_threads() {
  const char* req = std::getenv("ICLMIMO_THREADS");
  std::string n = "1";
  if (req != nullptr && *req != '\0') {
    char* end = nullptr;
    const long v = std::strtol(req, &end, 10);
    if (end != req && *end == '\0' && v >= 1) n = std::to_string(v);
  }
  // OpenBLAS and any OpenMP-backed BLAS read these lazily at first call.
  ::setenv("OPENBLAS_NUM_THREADS", n.c_str(), 1);
  ::setenv("OMP_NUM_THREADS", n.c_str(), 1);
}

}  // namespace iclmimo
