#include <cstdio>

int main() {
    std::puts("dave: subcommands not wired up yet");
    return 0;
}
