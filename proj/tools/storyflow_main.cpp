#include <iostream>

#include "storyflow/cli.hpp"

int main(int argc, char** argv) {
  return storyflow::cli_main(argc, argv, std::cin, std::cout, std::cerr);
}
