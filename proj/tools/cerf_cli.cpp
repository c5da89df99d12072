#include <iostream>
#include <string>
#include <vector>

#include "cerf/io.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return cerf::io::run_cli(args, std::cout, std::cerr);
}
