#include "crossglg/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return crossglg::run_cli(argc, argv, std::cout, std::cerr); }
