#include "lbsf/cli.hpp"

int main(int argc, char** argv) {
    return lbsf::cli::run(argc, argv);
}
