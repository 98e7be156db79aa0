#include "morphofilter/cli.hpp"

int main(int argc, char** argv) { return morphofilter::run_cli(argc, argv); }
