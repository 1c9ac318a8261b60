#include <vector>
#include <string>

#include "morekit/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv, argv + argc);
    return morekit::cli::run(args);
}
