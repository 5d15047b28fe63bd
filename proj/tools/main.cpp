#include <string>
#include <vector>

#include "edgeprune/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return edgeprune::run_cli(args);
}
