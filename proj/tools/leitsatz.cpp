#include <iostream>
#include <string>
#include <vector>

#include "leitsatz/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return leitsatz::cli::run(args, std::cout, std::cerr);
}
