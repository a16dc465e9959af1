#include "xspeech/cli.hpp"

int main(int argc, char** argv) { return xspeech::cli::run(argc, argv); }
