#include <string>
#include <vector>

#include "flowsac/cli.hpp"

int main(int argc, char** argv) {
  return flowsac::run_cli(std::vector<std::string>(argv + 1, argv + argc));
}
