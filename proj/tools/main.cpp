#include "cde_cli.hpp"

int main(int argc, char** argv) {
  return cde::cli::run(std::vector<std::string>(argv + 1, argv + argc));
}
