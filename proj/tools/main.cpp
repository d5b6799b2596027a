#include "rootseg/cli.hpp"

int main(int argc, char** argv) { return rootseg::run_cli(argc, argv); }
