#include <iostream>

#include "rfio/cli_harness.hpp"

int main(int argc, char** argv) {
    return rfio::cli_main(argc, argv, std::cout, std::cerr, rfio::process_environment());
}
