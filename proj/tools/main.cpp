#include "tod/cli.hpp"

int main(int argc, char** argv) { return tod::cli::run_command(argc, argv); }
