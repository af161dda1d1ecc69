#include "tahdg/cli.hpp"

int main(int argc, char** argv) { return tahdg::cli::run(argc, argv); }
