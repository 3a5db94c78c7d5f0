#include <string>
#include <vector>

#include "tilerecon/cli.hpp"

int main(int argc, char** argv) {
  return tilerecon::RunCli(std::vector<std::string>(argv + 1, argv + argc));
}
