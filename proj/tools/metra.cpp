#include <iostream>
#include <string>
#include <vector>

#include "metra/cli.h"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return metra::run_cli(args, std::cout, std::cerr);
}
