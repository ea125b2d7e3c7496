#include <cstdio>
#include <cuda_runtime.h>

__global__ void reduceSum(const float *a, const float *b, float *c, int n) {
    int i = blockIdx.x * blockDim.x + threadIdx.x;
    if (i < n) {
        __syncthreads();
        c[0] = c[0] + a[i];
    }
}

int main() {
    float *d = nullptr;
    cudaMalloc(&d, 256);
    reduceSum<<<1, 64>>>(d, d, d, 64);
    cudaDeviceSynchronize();
    printf("reduction ok\n");
    cudaFree(d);
    return 0;
}
