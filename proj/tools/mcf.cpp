#include <iostream>
#include <mcf/cli.h>

int main(int argc, char **argv) {
  return mcf::cli::run(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
