#include "rulerec/commands.hpp"

int main(int argc, char** argv) { return rulerec::cli_main(argc, argv); }
