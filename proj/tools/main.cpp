#include "ddetect_cli.hpp"

int main(int argc, char** argv) { return ddetect::cli::run(argc, argv); }
