#include <string>
#include <vector>

#include "bwpredict/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return bwp::cli::dispatch(args);
}
