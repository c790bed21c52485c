/* Vectorized tanh applied in place to a contiguous double buffer.
 *
 * On x86-64 glibc builds this uses libmvec's vector tanh, which agrees
 * with scalar tanh to within an ulp; everywhere else it falls back to
 * plain libm calls.  Results are deterministic for a given build.
 */
#ifndef DAECF_SIMD_H
#define DAECF_SIMD_H

#include <math.h>

#if !defined(DAECF_SCALAR_TANH) && defined(__GLIBC__) && \
    defined(__x86_64__) && defined(__AVX2__)
#define DAECF_VECTOR_TANH 1
#include <immintrin.h>

__m256d _ZGVdN4v_tanh(__m256d);
#ifdef __AVX512F__
__m512d _ZGVeN8v_tanh(__m512d);
#endif

static void daecf_vtanh(double *x, int n) {
    int i = 0;
#ifdef __AVX512F__
    for (; i + 8 <= n; i += 8)
        _mm512_storeu_pd(x + i, _ZGVeN8v_tanh(_mm512_loadu_pd(x + i)));
#endif
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(x + i, _ZGVdN4v_tanh(_mm256_loadu_pd(x + i)));
    for (; i < n; i++)
        x[i] = tanh(x[i]);
}

#else
#define DAECF_VECTOR_TANH 0

static void daecf_vtanh(double *x, int n) {
    int i;
    for (i = 0; i < n; i++)
        x[i] = tanh(x[i]);
}

#endif

/* Finite check that survives aggressive compiler flags: inspects the
 * exponent bits directly instead of relying on isfinite(). */
static int daecf_is_finite(double x) {
    union { double d; unsigned long long u; } v;
    v.d = x;
    return ((v.u >> 52) & 0x7ffULL) != 0x7ffULL;
}

/* Dense layer y = b + W x with W stored column-major.  The restrict
 * qualifiers let the compiler vectorize the inner loop over outputs.
 * Summation runs over inputs in ascending order for every output
 * element, which keeps results identical across builds. */
static void daecf_dense_cm(const double *restrict w, const double *restrict b,
                           const double *restrict x, double *restrict y,
                           int n_in, int n_out) {
    int i, j;
    for (j = 0; j < n_out; j++)
        y[j] = b[j];
    for (i = 0; i < n_in; i++) {
        const double xi = x[i];
        const double *restrict col = w + (size_t) i * (size_t) n_out;
        for (j = 0; j < n_out; j++)
            y[j] += col[j] * xi;
    }
}

static void daecf_axpy(double a, const double *restrict x,
                       double *restrict y, int n) {
    int i;
    for (i = 0; i < n; i++)
        y[i] += a * x[i];
}

static double daecf_dot(const double *restrict x, const double *restrict y,
                        int n) {
    double acc = 0.0;
    int i;
    for (i = 0; i < n; i++)
        acc += x[i] * y[i];
    return acc;
}

static int daecf_all_finite(const double *x, int n) {
    /* adding one ulp-of-exponent to a saturated exponent field carries
     * into bit 63; any inf/nan in the buffer therefore sets acc's sign bit */
    const unsigned long long mask = 0x7ffULL << 52;
    const unsigned long long one = 1ULL << 52;
    unsigned long long acc = 0;
    int i;
    union { double d; unsigned long long u; } v;
    for (i = 0; i < n; i++) {
        v.d = x[i];
        acc |= (v.u & mask) + one;
    }
    return (acc >> 63) == 0ULL;
}

#endif /* DAECF_SIMD_H */
