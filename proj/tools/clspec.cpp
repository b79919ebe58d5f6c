#include "clspec/cli.hpp"

int main(int argc, char** argv) { return clspec::cli::run(argc, argv); }
