#include <iostream>
#include <string>
#include <vector>

#include "tripletree/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv, argv + argc);
    return tripletree::run_cli(args, std::cout, std::cerr);
}
