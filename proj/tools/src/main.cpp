#include <iostream>

#include "uapforge/cli/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return uapforge::cli::run(args, std::cout, std::cerr);
}
