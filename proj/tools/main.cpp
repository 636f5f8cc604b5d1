#include <iostream>

#include "mlda/cli/commands.hpp"

int main(int argc, char** argv) { return mlda::cli::run_cli(argc, argv, std::cout, std::cerr); }
