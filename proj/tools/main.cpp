#include "cli.hpp"

int main(int argc, char** argv) { return resgd::cli::main_entry(argc, argv); }
