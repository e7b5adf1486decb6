#include "tryon/cli/app.hpp"

int main(int argc, char** argv) { return tryon::cli::run(argc, argv); }
