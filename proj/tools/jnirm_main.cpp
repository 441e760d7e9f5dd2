#include "commands.hpp"

int main(int argc, char** argv) { return jnirm::cli::run(argc, argv); }
