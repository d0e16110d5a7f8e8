#include <cstdio>
int main(){ std::puts("avdepth placeholder"); return 0; }
