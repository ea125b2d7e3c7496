#include <cstdio>
__global__ void hello() { printf("Hello World\n"); }
int main() { hello<<<1,1>>>(); }
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
