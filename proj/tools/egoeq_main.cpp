#include "egoeq/cli.hpp"

int main(int argc, char** argv) { return egoeq::run_cli(argc, argv); }
