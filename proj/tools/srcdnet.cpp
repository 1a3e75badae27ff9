#include "srcd/cli.hpp"

int main(int argc, char** argv) { return srcd::cli::run(argc, argv); }
