// SPDX-License-Identifier: Apache-2.0
#include <string>
#include <vector>

#include "spreadometer/cli.hpp"

int main(int argc, char** argv) {
  return spreadometer::cli::run_cli(std::vector<std::string>(argv + 1, argv + argc));
}
