#include "risksharing/cli.hpp"

int main(int argc, char** argv) { return risksharing::run_cli(argc, argv); }
