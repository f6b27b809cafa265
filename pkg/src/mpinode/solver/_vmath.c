#include <math.h>
#include "_vmath.h"

#if defined(__GNUC__) && defined(MPINODE_LIBMVEC)
#pragma omp declare simd notinbranch
double tanh(double);
#endif

void mpinode_vtanh(double *x, int n)
{
#pragma omp simd
    for (int i = 0; i < n; i++)
        x[i] = tanh(x[i]);
}
