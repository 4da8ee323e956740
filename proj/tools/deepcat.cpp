#include "deepcat/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return deepcat::cli::run(argc, argv, std::cout, std::cerr); }
