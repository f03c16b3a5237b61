#include <iostream>

#include "growthssm/cli.hpp"

int main(int argc, char** argv) { return growthssm::cli::run(argc, argv, std::cout, std::cerr); }
