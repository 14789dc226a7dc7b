#include "metaforge/cli.hpp"

int main(int argc, char** argv) { return metaforge::run_cli(argc, argv); }
