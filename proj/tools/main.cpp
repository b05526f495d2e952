#include <iostream>

#include "metabias/cli.hpp"

int main(int argc, char** argv) { return metabias::cli::run(argc, argv, std::cout, std::cerr); }
