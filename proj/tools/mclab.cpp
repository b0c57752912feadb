#include "mclab/cli.hpp"

int main(int argc, char** argv) { return mclab::cli::run(argc, argv); }
