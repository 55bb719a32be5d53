#include <iostream>

#include "ldct/cli.hpp"

int main(int argc, char** argv) {
  return ldct::cli::run(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
