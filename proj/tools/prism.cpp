#include "prism/cli.hpp"

#include <iostream>

int main(int argc, char** argv) {
    return prism::cli::run(argc, argv, std::cout, std::cerr);
}
