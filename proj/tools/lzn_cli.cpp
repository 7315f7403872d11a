#include <iostream>

#include "lzn/cli.hpp"

int main(int argc, char** argv) { return lzn::run_cli(argc, argv, std::cout, std::cerr); }
