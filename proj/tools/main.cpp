#include <iostream>

#include "wdis/cli.hpp"

int main(int argc, char** argv) {
  return wdis::run_cli(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
