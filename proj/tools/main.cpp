#include "cpfs/cli.hpp"

int main(int argc, char** argv) { return cpfs::cli::dispatch(argc, argv); }
