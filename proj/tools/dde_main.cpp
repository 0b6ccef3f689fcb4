#include "dde/cli.hpp"

int main(int argc, char** argv) { return dde::run_cli(argc, argv); }
