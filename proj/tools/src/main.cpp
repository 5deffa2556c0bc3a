#include <iostream>

#ifdef __GLIBC__
#include <malloc.h>
#endif

#include "commands.hpp"

int main(int argc, char** argv) {
#ifdef __GLIBC__
  // Activations are large and short-lived; keep them off mmap.
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
  return clipc::cli::run(argc, argv, std::cout, std::cerr);
}
