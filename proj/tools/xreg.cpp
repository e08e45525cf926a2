#include <cstdio>

int main() {
    std::puts("xreg: experiments not wired up yet");
    return 1;
}
