#include "geomat/cli.hpp"

int main(int argc, char** argv) { return geomat::cli::run_main(argc, argv); }
