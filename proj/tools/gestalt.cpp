#include <iostream>
#include <string>
#include <vector>

#include "gestalt/commands.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return gestalt::cli::run_cli(args, std::cout, std::cerr);
}
