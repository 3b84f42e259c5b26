#include "epscpmg/cli.hpp"

int main(int argc, char** argv) { return epscpmg::cli::run(argc, argv); }
