#include "latentwave/cli.hpp"

int main(int argc, char** argv) { return latentwave::run_cli(argc, argv); }
