#include "cli.hpp"

int main(int argc, char** argv) { return pfinv::cli::run(argc, argv); }
