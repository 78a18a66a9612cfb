#include "kspec/cli.hpp"

int main(int argc, char** argv) { return kspec::cli::run(argc, argv); }
