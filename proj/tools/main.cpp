#include <string>
#include <vector>

#include "marginlab/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return marginlab::cli_main(args);
}
