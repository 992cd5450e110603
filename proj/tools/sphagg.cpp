#include <iostream>

#include "sphagg/cli.hpp"

int main(int argc, char** argv) { return sphagg::cli::main(argc, argv, std::cout, std::cerr); }
