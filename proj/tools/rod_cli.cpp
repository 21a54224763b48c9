#include <iostream>
#include <string>
#include <vector>

#include "rod/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return rod::cli_main(args, std::cout, std::cerr);
}
