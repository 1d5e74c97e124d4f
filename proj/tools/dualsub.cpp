#include <cstdio>
int main() { std::puts("dualsub: not wired up yet"); return 0; }
