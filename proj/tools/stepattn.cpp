#include <iostream>
#include <string>
#include <vector>

#include "stepattn/commands.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return stepattn::run_cli(args, std::cout, std::cerr);
}
