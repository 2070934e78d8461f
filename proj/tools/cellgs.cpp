#include "cellgs/cli/app.hpp"

int main(int argc, char** argv) { return cellgs::cli::run(argc, argv); }
