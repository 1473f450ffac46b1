#include <iostream>

#include "langtime/cli/commands.hpp"

int main(int argc, char** argv) {
  return langtime::cli::RunCli({argv + 1, argv + argc}, std::cout, std::cerr);
}
