#include <iostream>

#include "gat/cli.hpp"

int main(int argc, char** argv) { return gat::cli::run(argc, argv, std::cout, std::cerr); }
