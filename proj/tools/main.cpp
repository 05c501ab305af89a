#include "commands.hpp"

#include <iostream>

int main(int argc, char** argv) { return mots::cli::run(argc, argv, std::cout, std::cerr); }
