#include <iostream>

#include "ctranatd/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return ctranatd::dispatch(args, std::cout, std::cerr);
}
