#include "ptdp/cli.hpp"

int main(int argc, char** argv) { return ptdp::cli::run(argc, argv, std::cout, std::cerr); }
