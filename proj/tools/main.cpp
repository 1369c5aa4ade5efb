#include <iostream>

#include "agentjoule/cli.hpp"

int main(int argc, char** argv) { return agentjoule::cli::run(argc, argv, std::cout, std::cerr); }
