#include <string>
#include <vector>

#include "cli.hpp"

#if defined(__GLIBC__)
#include <malloc.h>
#endif

int main(int argc, char** argv) {
#if defined(__GLIBC__)
  // Activation buffers are large and short-lived; keep them on the heap
  // instead of mapping and unmapping them every step.
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
  return skar::cli::run(std::vector<std::string>(argv + 1, argv + argc));
}
