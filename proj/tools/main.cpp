#include "cli.hpp"

int main(int argc, char** argv) { return emgsel::cli::run(argc, argv); }
