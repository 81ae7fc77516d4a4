#include <iostream>

#include "re3/app.hpp"

int main(int argc, char** argv) { return re3::dispatch(argc, argv, std::cout, std::cerr); }
