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

float scale(const int *occaDims, int occaInnerId0, int occaInnerId1, int occaInnerId2, float x) {
  return 2.0f * x;
}
extern "C" void mix(const int *occaDims, float * a, float * b, const int n) {
  int occaInnerId0 = 0, occaInnerId1 = 0, occaInnerId2 = 0;
  int occaOuterId0 = 0, occaOuterId1 = 0, occaOuterId2 = 0;
  occaPrivateDims = occaDims;
  occaPrivateId0 = &occaInnerId0;
  occaPrivateId1 = &occaInnerId1;
  occaPrivateId2 = &occaInnerId2;
  for(occaOuterId0 = 0; occaOuterId0 < occaDims[3]; ++occaOuterId0) {
    float tile[16];
    occaPrivateClass<int,1> flag;
    occaPrivateClass<float,2> acc;
    for(occaInnerId0 = 0; occaInnerId0 < occaDims[0]; ++occaInnerId0) {
      const int g = occaInnerId0 + occaDims[0] * occaOuterId0;
      tile[occaInnerId0] = a[g];
      acc[0] = 0.5f;
      acc[1] = scale(occaDims, occaInnerId0, occaInnerId1, occaInnerId2, a[g]);
      flag = g % 2;
    }
    for(occaInnerId0 = 0; occaInnerId0 < occaDims[0]; ++occaInnerId0) {
      if(flag == 0) {
        {
          continue;
        }
        ;
      }
      float best = max(acc[0], acc[1]);
      b[occaInnerId0 + occaDims[0] * occaOuterId0] = best + tile[occaDims[0] - 1 - occaInnerId0] + sqrt(1.0f + n);
    }
  }
}
