#include <iostream>

#include "tractgrid/cli.hpp"

int main(int argc, char** argv) { return tractgrid::run_cli(argc, argv, std::cout, std::cerr); }
