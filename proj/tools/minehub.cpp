#include "minehub/cli.hpp"

int main(int argc, char **argv) { return minehub::dispatch(argc, argv); }
