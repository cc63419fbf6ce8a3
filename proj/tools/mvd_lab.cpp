#include "mvd/cli.hpp"

int main(int argc, char** argv) { return mvd::cli_main(argc, argv); }
