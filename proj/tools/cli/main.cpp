#include <iostream>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "commands.hpp"

int main(int argc, char** argv) {
#if defined(__GLIBC__)
  // Training reallocates the same large activation buffers every step; keep
  // them on the heap instead of round-tripping through mmap.
  mallopt(M_MMAP_THRESHOLD, 256 << 20);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
  std::vector<std::string> args(argv + 1, argv + argc);
  return graphrefine::cli::run(args, std::cout, std::cerr);
}
