#include <iostream>

#include "pibase/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return pibase::cli::run(args, std::cout, std::cerr);
}
