#include "scalechain/cli.hpp"

int main(int argc, char** argv) { return scalechain::dispatch(argc, argv); }
