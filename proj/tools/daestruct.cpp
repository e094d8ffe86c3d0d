#include <cstdio>
int main() { std::puts("daestruct"); return 0; }
