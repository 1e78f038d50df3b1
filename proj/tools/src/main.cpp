#include <iostream>

#include "htan_cli/commands.hpp"

int main(int argc, char** argv) { return htan::cli::run_cli(argc, argv, std::cout, std::cerr); }
