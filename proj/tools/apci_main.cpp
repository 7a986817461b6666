#include "apci/cli.hpp"

int main(int argc, char** argv) { return apci::cli::run(argc, argv); }
