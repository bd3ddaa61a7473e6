#include "mspde/cli.hpp"

int main(int argc, char** argv) { return mspde::cli_main(argc, argv); }
