#include <iostream>

#include "voxdistill/cli.hpp"

int main(int argc, char** argv) { return voxdistill::run_cli(argc, argv, std::cout, std::cerr); }
