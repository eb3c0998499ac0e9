#pragma once

#include <string>
#include <vector>

namespace seq2gmm {

/// Entry point of the command-line tool. Returns 0 on success, 1 on usage errors, 2 on runtime failures.
int cli_main(int argc, char** argv);
int cli_main(const std::vector<std::string>& args);

}  // namespace seq2gmm
