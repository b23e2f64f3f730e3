#include "qres/cli.hpp"

int main(int argc, char** argv) { return qres::cli_main(argc, argv); }
