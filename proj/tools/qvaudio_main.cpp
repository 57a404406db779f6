#include "qv/cli.hpp"

int main(int argc, char** argv) { return qv::cli::run(argc, argv); }
