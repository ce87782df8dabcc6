#include "hdrisk/experiments.hpp"

int main(int argc, char** argv) {
    return hdrisk::run_cli(std::vector<std::string>(argv + 1, argv + argc));
}
