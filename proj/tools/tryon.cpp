#include "tryon/cli.hpp"

int main(int argc, char** argv) { return tryon::run_command(argc, argv); }
