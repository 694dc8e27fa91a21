#define r 3
#define w 32
#define h 32
#define dx 0.25
#define dt 0.1

extern "C" __global__ void fd2d(int *dims, double * u1, double * u2, double * u3, double * weight, const double currentTime) {
  {
    {
      {
        {
          const int i = threadIdx.x + blockIdx.x*blockDim.x;
          const int j = threadIdx.y + blockIdx.y*blockDim.y;
          const int id = j * 32 + i;
          if((i < 32) && (j < 32)) {
            double lap = 0.0;
            const double r_u1 = u1[id];
            const double r_u2 = u2[id];
            for(int k = - 3; k <= 3; k++) {
              const int nX = (i + k + 32) % 32;
              const int nY = (j + k + 32) % 32;
              lap += weight[3 + k] * u1[j * 32 + nX] + weight[3 + k] * u1[nY * 32 + i];
            }
            u3[id] = (- 2 * r_u1 + r_u2 - 0.1 * 0.1 * lap);
          }
        }
      }
    }
  }
}
