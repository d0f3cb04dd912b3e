#include "app.hpp"

int main(int argc, char** argv) { return paintbrush::cli::main(argc, argv); }
