#include <iostream>

#include "nl2flow/cli.hpp"

int main(int argc, char** argv) { return nl2flow::run_cli(argc, argv, std::cout, std::cerr, std::cin); }
