#include <iostream>

#include "metastab/cli.hpp"

int main(int argc, char** argv) {
    return metastab::cli::run(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
