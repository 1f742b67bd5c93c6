#include <iostream>

#include "topotune/cli.hpp"

int main(int argc, char** argv) { return topotune::cli::dispatch(argc, argv, std::cout, std::cerr); }
