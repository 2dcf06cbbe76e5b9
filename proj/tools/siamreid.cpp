#include <iostream>

#include "siamreid/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return siamreid::run_cli(args, std::cout, std::cerr);
}
