// SPDX-License-Identifier: Apache-2.0

#include <iostream>

#include "pcseg/experiment.hpp"

int main(int argc, char** argv) {
  return pcseg::run_cli(argc, argv, std::cout, std::cerr);
}
