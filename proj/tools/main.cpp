#include "cli.hpp"

int main(int argc, char** argv) { return debye::cli::run(argc, argv); }
