#include <string>
#include <vector>

#include "djet/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return djet::runCli(args);
}
