#include "cli.hpp"

int main(int argc, char** argv) { return spdhash::cli::run(argc, argv); }
