#include "evadmm/harness.hpp"

int main(int argc, char** argv) { return evadmm::cli_main(argc, argv); }
