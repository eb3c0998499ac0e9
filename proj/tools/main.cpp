#include "seq2gmm/cli.hpp"

int main(int argc, char** argv) { return seq2gmm::cli_main(argc, argv); }
