#include "sope/experiment.hpp"

int main(int argc, char** argv) { return sope::main_cli(argc, argv); }
