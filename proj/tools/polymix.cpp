#include "polymix/experiment.hpp"

int main(int argc, char** argv) { return polymix::cli::cli_main(argc, argv); }
