#include <string>
#include <vector>

#include "fedsim/cli.hpp"

int main(int argc, char** argv) {
  return fedsim::cli_main(std::vector<std::string>(argv + 1, argv + argc));
}
