#define r 3
#define w 32
#define h 32
#define dx 0.25
#define dt 0.1

#include <cmath>

static thread_local const int *occaPrivateDims = 0;
static thread_local const int *occaPrivateId0 = 0;
static thread_local const int *occaPrivateId1 = 0;
static thread_local const int *occaPrivateId2 = 0;

template <class T, int SZ>
class occaPrivateClass {
public:
  const int *dims;
  const int *id0;
  const int *id1;
  const int *id2;
  T *data;

  occaPrivateClass() :
    dims(occaPrivateDims), id0(occaPrivateId0), id1(occaPrivateId1), id2(occaPrivateId2) {
    data = new T[SZ * dims[0] * dims[1] * dims[2]]();
  }

  ~occaPrivateClass() { delete [] data; }

  int slot() const { return (*id0) + dims[0] * ((*id1) + dims[1] * (*id2)); }

  T & operator [] (int i) { return data[SZ * slot() + i]; }
  operator T & () { return data[SZ * slot()]; }

  occaPrivateClass & operator =  (const T &v) { data[SZ * slot()]  = v; return *this; }
  occaPrivateClass & operator += (const T &v) { data[SZ * slot()] += v; return *this; }
  occaPrivateClass & operator -= (const T &v) { data[SZ * slot()] -= v; return *this; }
  occaPrivateClass & operator *= (const T &v) { data[SZ * slot()] *= v; return *this; }
  occaPrivateClass & operator /= (const T &v) { data[SZ * slot()] /= v; return *this; }
};

extern "C" void fd2d(const int *occaDims, double * u1, double * u2, double * u3, double * weight, const double currentTime) {
  int occaInnerId0 = 0, occaInnerId1 = 0, occaInnerId2 = 0;
  int occaOuterId0 = 0, occaOuterId1 = 0, occaOuterId2 = 0;
  occaPrivateDims = occaDims;
  occaPrivateId0 = &occaInnerId0;
  occaPrivateId1 = &occaInnerId1;
  occaPrivateId2 = &occaInnerId2;
  for(occaOuterId1 = 0; occaOuterId1 < occaDims[4]; ++occaOuterId1) {
    _Pragma("omp parallel for firstprivate(occaInnerId0, occaInnerId1, occaInnerId2, occaDims0, occaDims1, occaDims2)")
    for(occaOuterId0 = 0; occaOuterId0 < occaDims[3]; ++occaOuterId0) {
      for(occaInnerId1 = 0; occaInnerId1 < occaDims[1]; ++occaInnerId1) {
        for(occaInnerId0 = 0; occaInnerId0 < occaDims[0]; ++occaInnerId0) {
          const int i = occaInnerId0 + occaDims[0] * occaOuterId0;
          const int j = occaInnerId1 + occaDims[1] * occaOuterId1;
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
