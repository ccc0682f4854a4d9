#include "cgt/cli.hpp"

int main(int argc, char** argv) { return cgt::cli::dispatch(argc, argv); }
