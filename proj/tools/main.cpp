#include <iostream>
#include <string>
#include <vector>

#include "tempcog/cli.hpp"

int main(int argc, char** argv) {
  return tempcog::cli::run_cli(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}
