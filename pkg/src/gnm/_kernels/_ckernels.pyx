# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels.

Mirrors ``_pykernels`` operation for operation: per output element the
floating-point accumulation order is the same, so results are bit-identical
to the pure-Python backend (the extension is built with -ffp-contract=off to
keep the compiler from fusing multiply-adds).
"""

from libc.math cimport exp, log, sqrt, pow, isfinite

BACKEND_NAME = "c"


def matmul(double[::1] a, double[::1] b, double[::1] out, int m, int k, int n):
    cdef int i, kk, j
    cdef double aik
    with nogil:
        for i in range(m):
            for j in range(n):
                out[i * n + j] = 0.0
            for kk in range(k):
                aik = a[i * k + kk]
                for j in range(n):
                    out[i * n + j] += aik * b[kk * n + j]


def matmul_at_b(double[::1] a, double[::1] b, double[::1] out, int k, int m, int n):
    cdef int i, j, kk
    cdef double s
    with nogil:
        for i in range(m):
            for j in range(n):
                s = 0.0
                for kk in range(k):
                    s += a[kk * m + i] * b[kk * n + j]
                out[i * n + j] = s


def matmul_a_bt(double[::1] a, double[::1] b, double[::1] out, int m, int k, int n):
    cdef int i, j, kk
    cdef double s
    with nogil:
        for i in range(m):
            for j in range(n):
                s = 0.0
                for kk in range(k):
                    s += a[i * k + kk] * b[j * k + kk]
                out[i * n + j] = s


def matvec(double[::1] a, double[::1] x, double[::1] out, int m, int k):
    cdef int i, j
    cdef double s
    with nogil:
        for i in range(m):
            s = 0.0
            for j in range(k):
                s += a[i * k + j] * x[j]
            out[i] = s


def csr_matvec(int[::1] indptr, int[::1] indices, double[::1] values,
               double[::1] x, double[::1] out, int m):
    cdef int i, p
    cdef double s
    with nogil:
        for i in range(m):
            s = 0.0
            for p in range(indptr[i], indptr[i + 1]):
                s += values[p] * x[indices[p]]
            out[i] = s


def step_activate(double[::1] z, double[::1] h, int n, int b,
                  unsigned char[::1] mask, int bias_row):
    cdef int i, j, base
    cdef int ok = 1
    cdef double v
    with nogil:
        for i in range(n):
            base = i * b
            if i == bias_row:
                for j in range(b):
                    h[base + j] = 1.0
            elif mask[i]:
                for j in range(b):
                    v = z[base + j]
                    if not isfinite(v):
                        ok = 0
                    h[base + j] = v if v > 0.0 else 0.0
            else:
                for j in range(b):
                    v = z[base + j]
                    if not isfinite(v):
                        ok = 0
                    h[base + j] = v
    return ok


def backprop_scale(double[::1] delta, double[::1] z, double[::1] s, int n, int b,
                   unsigned char[::1] mask, int bias_row):
    cdef int i, j, base
    with nogil:
        for i in range(n):
            base = i * b
            if i == bias_row:
                for j in range(b):
                    s[base + j] = 0.0
            elif mask[i]:
                for j in range(b):
                    s[base + j] = delta[base + j] if z[base + j] > 0.0 else 0.0
            else:
                for j in range(b):
                    s[base + j] = delta[base + j]


def zero_row(double[::1] a, int row, int width):
    cdef int j
    cdef int base = row * width
    with nogil:
        for j in range(width):
            a[base + j] = 0.0


def add_bias_col(double[::1] z, double[::1] bias, int m, int b):
    cdef int i, j, base
    cdef double bi
    with nogil:
        for i in range(m):
            base = i * b
            bi = bias[i]
            for j in range(b):
                z[base + j] += bi


def row_sums(double[::1] a, int m, int b, double[::1] out):
    cdef int i, j, base
    cdef double s
    with nogil:
        for i in range(m):
            base = i * b
            s = 0.0
            for j in range(b):
                s += a[base + j]
            out[i] = s


def mul_inplace(double[::1] a, double[::1] b, int length):
    cdef int i
    with nogil:
        for i in range(length):
            a[i] *= b[i]


def gather_cols(double[::1] src, int rows, int src_cols, int[::1] idx, int b,
                double[::1] out):
    cdef int i, j, sbase, obase
    with nogil:
        for i in range(rows):
            sbase = i * src_cols
            obase = i * b
            for j in range(b):
                out[obase + j] = src[sbase + idx[j]]


def adam_update(double[::1] p, double[::1] g, double[::1] m1, double[::1] m2,
                int t, double lr, double beta1, double beta2, double eps,
                int length):
    cdef double bc1 = 1.0 - pow(beta1, <double> t)
    cdef double bc2 = 1.0 - pow(beta2, <double> t)
    cdef int i
    cdef double gi, mi, vi
    with nogil:
        for i in range(length):
            gi = g[i]
            mi = beta1 * m1[i] + (1.0 - beta1) * gi
            vi = beta2 * m2[i] + (1.0 - beta2) * (gi * gi)
            m1[i] = mi
            m2[i] = vi
            p[i] -= lr * (mi / bc1) / (sqrt(vi / bc2) + eps)


def l1_sum(double[::1] p, int rows, int cols, int skip_row):
    cdef int i, j, base
    cdef double s = 0.0
    cdef double v
    with nogil:
        for i in range(rows):
            if i == skip_row:
                continue
            base = i * cols
            for j in range(cols):
                v = p[base + j]
                s += v if v >= 0.0 else -v
    return s


def l1_add_subgrad(double[::1] g, double[::1] p, double lam, int rows, int cols,
                   int skip_row):
    cdef int i, j, base
    cdef double v
    with nogil:
        for i in range(rows):
            if i == skip_row:
                continue
            base = i * cols
            for j in range(cols):
                v = p[base + j]
                if v > 0.0:
                    g[base + j] += lam
                elif v < 0.0:
                    g[base + j] -= lam


def ce_loss_grad(double[::1] logits, int[::1] labels, double[::1] grad,
                 int c, int b):
    cdef int i, j, y
    cdef double mx, s, e, inv, v
    cdef double total = 0.0
    with nogil:
        for j in range(b):
            mx = logits[j]
            for i in range(1, c):
                v = logits[i * b + j]
                if v > mx:
                    mx = v
            s = 0.0
            for i in range(c):
                e = exp(logits[i * b + j] - mx)
                grad[i * b + j] = e
                s += e
            y = labels[j]
            total += log(s) - (logits[y * b + j] - mx)
            inv = 1.0 / (s * b)
            for i in range(c):
                grad[i * b + j] *= inv
            grad[y * b + j] -= 1.0 / b
    return total


def mse_loss_grad(double[::1] out, double[::1] tgt, double[::1] grad,
                  int c, int b):
    cdef int i
    cdef double d
    cdef double total = 0.0
    cdef double scale = 2.0 / b
    with nogil:
        for i in range(c * b):
            d = out[i] - tgt[i]
            grad[i] = scale * d
            total += d * d
    return total


cdef inline unsigned long long _rotl64(unsigned long long x, int k) nogil:
    return (x << k) | (x >> (64 - k))


def dropout_fill(unsigned long long[::1] state, double[::1] mask,
                 int n, int b, int m, int bias_row, double p, double keep):
    """Inverted-dropout mask over rows [m, n) except the bias row.

    Advances the xoshiro256** state words in place (same stream as the
    project generator); one uniform draw per maskable entry, row-major.
    """
    cdef unsigned long long s0 = state[0], s1 = state[1]
    cdef unsigned long long s2 = state[2], s3 = state[3]
    cdef unsigned long long r, t
    cdef int i, row, col
    cdef Py_ssize_t base
    with nogil:
        for i in range(n * b):
            mask[i] = 1.0
        for row in range(m, n):
            if row == bias_row:
                continue
            base = <Py_ssize_t> row * b
            for col in range(b):
                r = _rotl64(s1 * 5ULL, 7) * 9ULL
                t = s1 << 17
                s2 ^= s0
                s3 ^= s1
                s1 ^= s2
                s0 ^= s3
                s2 ^= t
                s3 = _rotl64(s3, 45)
                mask[base + col] = 0.0 if (<double> (r >> 11)) / 9007199254740992.0 < p else keep
    state[0] = s0
    state[1] = s1
    state[2] = s2
    state[3] = s3
