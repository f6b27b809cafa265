#ifndef MPINODE_VMATH_H
#define MPINODE_VMATH_H

/* In-place elementwise tanh over a contiguous buffer; vectorized through libmvec
   when the compiler supports OpenMP SIMD declarations. */
void mpinode_vtanh(double *x, int n);

#endif
