#include <iostream>

#include "nxnflow/cli.hpp"

int main(int argc, char** argv) { return nxnflow::cli::run(argc, argv, std::cout, std::cerr); }
