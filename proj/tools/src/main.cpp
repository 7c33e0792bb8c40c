#include <iostream>
#include <string>
#include <vector>

#include "hrnet_cli/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return hrnet::cli::run(args, std::cout, std::cerr);
}
