#include <string>
#include <vector>

#include "ccl/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return ccl::cli::run(args);
}
