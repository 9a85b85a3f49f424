#include <iostream>
#include <string>
#include <vector>

#include "unite/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv, argv + argc);
    return unite::cli::run(args, std::cout, std::cerr);
}
