#include <iostream>

#include "transport/cli.hpp"

int main(int argc, char** argv) {
  return transport::cli::run_cli(argc, argv, std::cout, std::cerr);
}
