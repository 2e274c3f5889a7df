#include "cookielife/cli.hpp"

int main(int argc, char** argv) { return cookielife::run(argc, argv); }
