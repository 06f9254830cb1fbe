#include <string>
#include <vector>

#include "groundrank/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return groundrank::cli::run(std::move(args));
}
