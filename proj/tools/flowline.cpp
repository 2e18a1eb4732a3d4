#include "flowline/cli.hpp"

int main(int argc, char** argv) { return flowline::cli_main(argc, argv); }
