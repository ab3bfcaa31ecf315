#include <iostream>

#include "srd/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return srd::cli::run(args, std::cout, std::cerr);
}
