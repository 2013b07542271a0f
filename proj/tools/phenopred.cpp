#include "phenopred/cli.hpp"

int main(int argc, char** argv) { return phenopred::cli::run_cli(argc, argv); }
