#include <iostream>
#include <string>
#include <vector>

#include "mdt/cli.hpp"

int main(int argc, char** argv) {
  return mdt::cli::run(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
