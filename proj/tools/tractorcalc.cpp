#include <iostream>

#include "app.hpp"

int main(int argc, char** argv) { return tractorcalc::run_cli(argc, argv, std::cout, std::cerr); }
