#include <cstdio>
int main() { std::puts("projgp: CLI under construction"); return 0; }
