#include "formation/cli.hpp"

int main(int argc, char** argv) { return formation::cli::run(argc, argv); }
