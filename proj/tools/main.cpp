#include "dmrl/cli.hpp"

int main(int argc, char** argv) { return dmrl::cli::run(argc, argv); }
