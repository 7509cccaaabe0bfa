#include "eviplan/cli.hpp"

int main(int argc, char** argv) { return eviplan::cli::run_cli(argc, argv); }
