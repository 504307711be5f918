#include "persmed/cli.hpp"

int main(int argc, char** argv) { return persmed::run_cli(argc, argv); }
