#include "laguna/cli.hpp"

int main(int argc, char** argv) { return laguna::run_cli(argc, argv); }
