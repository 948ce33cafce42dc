#include <iostream>

#include "moeplan/cli/commands.hpp"

int main(int argc, char** argv) { return moeplan::cli::run_cli(argc, argv, std::cout, std::cerr); }
