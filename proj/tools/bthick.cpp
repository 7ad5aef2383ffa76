#include <iostream>

#include "bthick/cli.hpp"

int main(int argc, char** argv) { return bthick::cli::run(argc, argv, std::cout, std::cerr); }
