#include <cstdio>
__global__ void hi() { printf("hello, world!\n"); }
// pad
// pad
// pad
// pad
// pad
// pad
// pad
// pad
// pad
// pad
// pad
// pad
// pad
