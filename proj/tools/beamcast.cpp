#include <iostream>

#include "beamcast/cli/cli.hpp"

int main(int argc, char** argv)
{
    return beamcast::cli::run_cli({argv + 1, argv + argc}, std::cout, std::cerr);
}
