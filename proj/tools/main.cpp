#include <iostream>

#include "aipat_tools/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return aipat::tools::cli_dispatch(args, std::cout, std::cerr);
}
