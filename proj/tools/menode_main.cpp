#include "menode/cli.hpp"

#include <iostream>

int main(int argc, char** argv) {
  return menode::run_cli(argc, argv, std::cout, std::cerr);
}
