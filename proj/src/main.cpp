#include "lnas/harness.hpp"

int main(int argc, char** argv) { return lnas::harness::run_cli(argc, argv); }
