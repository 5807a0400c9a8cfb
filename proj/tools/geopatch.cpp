#include "geopatch/cli.hpp"

int main(int argc, char** argv) { return geopatch::run_cli(argc, argv); }
