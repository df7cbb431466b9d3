#include "jse/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return jse::run_cli(argc, argv, std::cout, std::cerr); }
