#include "cli_app.hpp"

int main(int argc, char** argv) { return pigram::cli::run(argc, argv); }
