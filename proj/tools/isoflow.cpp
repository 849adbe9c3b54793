#include <iostream>

#include "isoflow/cli.hpp"

int main(int argc, char** argv) {
  return isoflow::cli::run(argc, argv, std::cout, std::cerr);
}
