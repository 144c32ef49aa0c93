#include <iostream>

#include "teta/cli.hpp"

int main(int argc, char** argv) { return teta::cli::run_cli(argc, argv, std::cout, std::cerr); }
