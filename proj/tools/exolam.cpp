#include "exolam/cli.hpp"

int main(int argc, char** argv) { return exolam::cli_main(argc, argv); }
