#include "mmf/cli.hpp"

int main(int argc, char** argv) { return mmf::cli::run(argc, argv); }
