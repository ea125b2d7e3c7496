#include <cstdio>
#include <cuda_runtime.h>

__global__ void reluLayer(const float *a, const float *b, float *c, int n) {
    int i = blockIdx.x * blockDim.x + threadIdx.x;
    if (i < n) {
        c[i] = a[i] * b[i];
    }
}

int main() {
    float *d = nullptr;
    cudaMalloc(&d, 256);
    reluLayer<<<1, 64>>>(d, d, d, 64);
    cudaDeviceSynchronize();
    printf("relu activation ok\n");
    cudaFree(d);
    return 0;
}
