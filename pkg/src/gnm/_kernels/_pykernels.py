"""Pure-Python fallback kernels.

Semantics reference for the compiled backend in ``_ckernels.pyx``: every
function here and there must perform the same floating-point operations in
the same per-element order, so the two backends produce bit-identical
results.  All buffers are flat row-major ``array('d')`` (or ``bytearray`` /
``array('i')`` for masks and indices); shapes are passed explicitly.
"""

from math import exp, isfinite, log, sqrt

BACKEND_NAME = "python"


def matmul(a, b, out, m, k, n):
    # out[m x n] = a[m x k] @ b[k x n]; per-element accumulation in ascending k
    for i in range(m):
        abase = i * k
        acc = [0.0] * n
        for kk in range(k):
            aik = a[abase + kk]
            bbase = kk * n
            acc = [s + aik * bv for s, bv in zip(acc, b[bbase:bbase + n])]
        out[i * n:(i + 1) * n] = type(out)(out.typecode, acc)


def matmul_at_b(a, b, out, k, m, n):
    # out[m x n] = a^T @ b with a stored as [k x m]; ascending-k accumulation
    for i in range(m):
        obase = i * n
        for j in range(n):
            s = 0.0
            for kk in range(k):
                s += a[kk * m + i] * b[kk * n + j]
            out[obase + j] = s


def matmul_a_bt(a, b, out, m, k, n):
    # out[m x n] = a[m x k] @ b^T with b stored as [n x k]
    for i in range(m):
        abase = i * k
        obase = i * n
        for j in range(n):
            bbase = j * k
            s = 0.0
            for kk in range(k):
                s += a[abase + kk] * b[bbase + kk]
            out[obase + j] = s


def matvec(a, x, out, m, k):
    for i in range(m):
        base = i * k
        s = 0.0
        for j in range(k):
            s += a[base + j] * x[j]
        out[i] = s


def csr_matvec(indptr, indices, values, x, out, m):
    for i in range(m):
        s = 0.0
        for p in range(indptr[i], indptr[i + 1]):
            s += values[p] * x[indices[p]]
        out[i] = s


def step_activate(z, h, n, b, mask, bias_row):
    """h = per-row activation of z; rows with mask=1 get ReLU, mask=0 copy.

    The bias row is pinned to 1.  Returns 1 if every consumed z entry was
    finite, else 0.
    """
    ok = 1
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


def backprop_scale(delta, z, s, n, b, mask, bias_row):
    # s = delta * act'(z); act' is the ReLU indicator on masked rows, 1 on
    # pass-through rows, and the bias row is pinned (gradient 0).
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


def zero_row(a, row, width):
    base = row * width
    for j in range(width):
        a[base + j] = 0.0


def add_bias_col(z, bias, m, b):
    for i in range(m):
        base = i * b
        bi = bias[i]
        for j in range(b):
            z[base + j] += bi


def row_sums(a, m, b, out):
    for i in range(m):
        base = i * b
        s = 0.0
        for j in range(b):
            s += a[base + j]
        out[i] = s


def mul_inplace(a, b, length):
    for i in range(length):
        a[i] *= b[i]


def gather_cols(src, rows, src_cols, idx, b, out):
    # out[rows x b] = src[:, idx] with src stored as [rows x src_cols]
    for i in range(rows):
        sbase = i * src_cols
        obase = i * b
        for j in range(b):
            out[obase + j] = src[sbase + idx[j]]


def adam_update(p, g, m1, m2, t, lr, beta1, beta2, eps, length):
    bc1 = 1.0 - beta1 ** t
    bc2 = 1.0 - beta2 ** t
    for i in range(length):
        gi = g[i]
        mi = beta1 * m1[i] + (1.0 - beta1) * gi
        vi = beta2 * m2[i] + (1.0 - beta2) * (gi * gi)
        m1[i] = mi
        m2[i] = vi
        p[i] -= lr * (mi / bc1) / (sqrt(vi / bc2) + eps)


def l1_sum(p, rows, cols, skip_row):
    s = 0.0
    for i in range(rows):
        if i == skip_row:
            continue
        base = i * cols
        for j in range(cols):
            v = p[base + j]
            s += v if v >= 0.0 else -v
    return s


def l1_add_subgrad(g, p, lam, rows, cols, skip_row):
    # subgradient of lam*|p|, taken as 0 at p == 0
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


def ce_loss_grad(logits, labels, grad, c, b):
    """Stabilized softmax cross-entropy over column-per-sample logits.

    Fills grad with d(mean loss)/d(logits) and returns the summed loss
    (caller divides by b for the mean).
    """
    total = 0.0
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


def mse_loss_grad(out, tgt, grad, c, b):
    """Squared-error loss summed over coordinates, sample-mean scaling.

    Returns sum of squared differences (caller divides by b); grad gets
    d(loss/b)/d(out) = 2*(out-tgt)/b.
    """
    total = 0.0
    scale = 2.0 / b
    for i in range(c * b):
        d = out[i] - tgt[i]
        grad[i] = scale * d
        total += d * d
    return total


_M64 = (1 << 64) - 1
_TWO53 = float(1 << 53)


def dropout_fill(state, mask, n, b, m, bias_row, p, keep):
    """Inverted-dropout mask over rows [m, n) except the bias row.

    Advances the xoshiro256** state words in place (same stream as the
    project generator); one uniform draw per maskable entry, row-major.
    """
    s0, s1, s2, s3 = state
    for i in range(n * b):
        mask[i] = 1.0
    for row in range(m, n):
        if row == bias_row:
            continue
        base = row * b
        for col in range(b):
            x = (s1 * 5) & _M64
            r = (((x << 7) | (x >> 57)) * 9) & _M64
            t = (s1 << 17) & _M64
            s2 ^= s0
            s3 ^= s1
            s1 ^= s2
            s0 ^= s3
            s2 ^= t
            s3 = ((s3 << 45) | (s3 >> 19)) & _M64
            mask[base + col] = 0.0 if (r >> 11) / _TWO53 < p else keep
    state[0], state[1], state[2], state[3] = s0, s1, s2, s3
