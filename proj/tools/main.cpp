// SPDX-License-Identifier: Apache-2.0
#include "cli.hpp"

int main(int argc, char** argv) { return freqvfx::cli::run(std::vector<std::string>(argv, argv + argc)); }
