#include <iostream>
#include <string>
#include <vector>

#include "eqmesh/commands.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return eqmesh::run_cli(args, std::cout, std::cerr);
}
