#include <iostream>

#include "tankxrl/cli.hpp"

int main(int argc, char** argv) { return tankxrl::cli::run(argc, argv, std::cout, std::cerr); }
