__device__ float scale(int dummy, float x) {
  return 2.0f * x;
}
extern "C" __global__ void mix(int *dims, float * a, float * b, const int n) {
  {
    __shared__ float tile[16];
    int flag;
    float acc[2];
    {
      const int g = threadIdx.x + blockIdx.x*blockDim.x;
      tile[threadIdx.x] = a[g];
      acc[0] = 0.5f;
      acc[1] = scale(1, a[g]);
      flag = g % 2;
    }
    __syncthreads();
    {
      if(flag == 0) {
        {
          return;
        }
        ;
      }
      float best = max(acc[0], acc[1]);
      b[threadIdx.x + blockIdx.x*blockDim.x] = best + tile[blockDim.x - 1 - threadIdx.x] + sqrt(1.0f + n);
    }
  }
}
