#include <iostream>
#include <string>
#include <vector>

#include "scope3/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return scope3::run_cli(args, std::cout, std::cerr);
}
