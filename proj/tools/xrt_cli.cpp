#include "xrt/harness.hpp"

int main(int argc, char** argv) { return xrt::cli_run(argc, argv); }
