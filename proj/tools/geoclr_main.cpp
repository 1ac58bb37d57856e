#include "geoclr/cli.hpp"

int main(int argc, char** argv) { return geoclr::run_cli(argc, argv); }
