#include <iostream>

#include "iega/cli.hpp"

int main(int argc, char** argv) { return iega::cli::run(argc, argv, std::cout, std::cerr); }
