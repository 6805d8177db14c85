#include "ipfp/cli.hpp"

int main(int argc, char** argv) { return ipfp::cli::run(argc, argv); }
