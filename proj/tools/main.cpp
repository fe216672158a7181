#include <string>
#include <vector>

#include "gsfda/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return gsfda::run_cli(args);
}
