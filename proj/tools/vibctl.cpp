#include "vib/cli/app.hpp"

int main(int argc, char** argv) { return vib::cli::run(argc, argv); }
