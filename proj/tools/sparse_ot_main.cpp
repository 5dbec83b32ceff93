#include "sparseot/cli.hpp"

int main(int argc, char** argv) {
  return sparseot::cli::run_cli(
      std::vector<std::string>(argv + 1, argv + argc));
}
