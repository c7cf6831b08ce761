#include "ocn/cli_report.hpp"

#include <iostream>

int main(int argc, char** argv) { return ocn::run_cli(argc, argv, std::cout, std::cerr); }
