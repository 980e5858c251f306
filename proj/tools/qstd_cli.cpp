#include "qstd/harness/cli.hpp"

int main(int argc, char** argv) { return qstd::harness::run_cli(std::vector<std::string>(argv + 1, argv + argc)); }
