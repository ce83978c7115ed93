#include <iostream>

#include "guiagent/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return guiagent::run_cli(args, std::cout, std::cerr);
}
