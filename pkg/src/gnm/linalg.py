"""Dense matrices, vectors and deterministic randomness.

Everything downstream works with these two containers; they are thin wrappers
around flat row-major ``array('d')`` buffers so the kernel layer can operate
on them directly.  The random generator is xoshiro256** seeded through
SplitMix64, fixed project-wide so identical seeds give identical streams on
every platform.
"""

from array import array
from math import cos, log, pi, sin, sqrt

from . import _kernels
from .errors import ShapeError

_M64 = (1 << 64) - 1
_TWO53 = float(1 << 53)


class Matrix:
    """Dense rows x cols matrix of 64-bit floats, row-major."""

    __slots__ = ("rows", "cols", "data")

    def __init__(self, rows: int, cols: int, data=None):
        if rows < 0 or cols < 0:
            raise ShapeError(f"negative matrix shape ({rows}, {cols})")
        if data is None:
            data = array("d", bytes(8 * rows * cols))
        elif len(data) != rows * cols:
            raise ShapeError(
                f"matrix data length {len(data)} != {rows}*{cols}"
            )
        self.rows = rows
        self.cols = cols
        self.data = data if isinstance(data, array) else array("d", data)

    @classmethod
    def from_rows(cls, rows):
        rows = [list(r) for r in rows]
        nr = len(rows)
        nc = len(rows[0]) if rows else 0
        flat = array("d")
        for r in rows:
            if len(r) != nc:
                raise ShapeError("ragged rows")
            flat.extend(r)
        return cls(nr, nc, flat)

    def get(self, i: int, j: int) -> float:
        return self.data[i * self.cols + j]

    def set(self, i: int, j: int, v: float) -> None:
        self.data[i * self.cols + j] = v

    def row_list(self, i: int) -> list:
        return list(self.data[i * self.cols:(i + 1) * self.cols])

    def to_lists(self) -> list:
        return [self.row_list(i) for i in range(self.rows)]

    def copy(self) -> "Matrix":
        return Matrix(self.rows, self.cols, array("d", self.data))

    def transpose(self) -> "Matrix":
        out = Matrix(self.cols, self.rows)
        od, sd, nc = out.data, self.data, self.cols
        for i in range(self.rows):
            base = i * nc
            for j in range(nc):
                od[j * self.rows + i] = sd[base + j]
        return out

    def __repr__(self):
        return f"Matrix({self.rows}x{self.cols})"


class Vector:
    """Dense vector of 64-bit floats."""

    __slots__ = ("data",)

    def __init__(self, n_or_data):
        if isinstance(n_or_data, int):
            self.data = array("d", bytes(8 * n_or_data))
        elif isinstance(n_or_data, array) and n_or_data.typecode == "d":
            self.data = n_or_data
        else:
            self.data = array("d", n_or_data)

    @classmethod
    def from_list(cls, values) -> "Vector":
        return cls(array("d", values))

    def __len__(self):
        return len(self.data)

    def __getitem__(self, i):
        return self.data[i]

    def __setitem__(self, i, v):
        self.data[i] = v

    def __iter__(self):
        return iter(self.data)

    def to_list(self) -> list:
        return list(self.data)

    def copy(self) -> "Vector":
        return Vector(array("d", self.data))

    def __repr__(self):
        return f"Vector({self.to_list()!r})"


def matvec(a: Matrix, x: Vector) -> Vector:
    if a.cols != len(x):
        raise ShapeError(f"matvec: {a.rows}x{a.cols} with vector of {len(x)}")
    out = Vector(a.rows)
    _kernels.matvec(a.data, x.data, out.data, a.rows, a.cols)
    return out


def matmul(a: Matrix, b: Matrix) -> Matrix:
    if a.cols != b.rows:
        raise ShapeError(f"matmul: {a.rows}x{a.cols} with {b.rows}x{b.cols}")
    out = Matrix(a.rows, b.cols)
    _kernels.matmul(a.data, b.data, out.data, a.rows, a.cols, b.cols)
    return out


def relu(x: Vector) -> Vector:
    return Vector(array("d", (v if v > 0.0 else 0.0 for v in x.data)))


def relu_grad(pre: Vector) -> Vector:
    # subgradient at 0 is 0
    return Vector(array("d", (1.0 if v > 0.0 else 0.0 for v in pre.data)))


def _splitmix_next(x: int):
    x = (x + 0x9E3779B97F4A7C15) & _M64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _M64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _M64
    return x, z ^ (z >> 31)


def _fnv1a64(data: bytes) -> int:
    h = 0xCBF29CE484222325
    for byte in data:
        h = ((h ^ byte) * 0x100000001B3) & _M64
    return h


def derive_seed(base: int, *tags) -> int:
    """Stable child seed from a base seed and a path of int/str tags."""
    x = base & _M64
    for t in tags:
        if isinstance(t, str):
            t = _fnv1a64(t.encode("utf-8"))
        _, x = _splitmix_next(x ^ (t & _M64))
    return x


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & _M64


class Rng:
    """xoshiro256** generator; one algorithm for the whole project.

    Streams are platform-independent: state transitions are pure 64-bit
    integer arithmetic and floats are built from the top 53 bits.
    """

    __slots__ = ("_s", "_spare")

    def __init__(self, seed: int):
        x = seed & _M64
        s = []
        for _ in range(4):
            x, z = _splitmix_next(x)
            s.append(z)
        if not any(s):
            s[0] = 1  # all-zero state is the one forbidden point
        self._s = s
        self._spare = None

    def next_u64(self) -> int:
        s0, s1, s2, s3 = self._s
        result = (_rotl((s1 * 5) & _M64, 7) * 9) & _M64
        t = (s1 << 17) & _M64
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = _rotl(s3, 45)
        self._s = [s0, s1, s2, s3]
        return result

    def random(self) -> float:
        # uniform in [0, 1), 53 bits
        return (self.next_u64() >> 11) / _TWO53

    def uniform(self, lo: float, hi: float) -> float:
        return lo + (hi - lo) * self.random()

    def normal(self, mu: float = 0.0, sigma: float = 1.0) -> float:
        # Box-Muller with a cached spare; u1 kept away from 0 for the log
        z = self._spare
        if z is not None:
            self._spare = None
            return mu + sigma * z
        u1 = ((self.next_u64() >> 11) + 1) / _TWO53
        u2 = (self.next_u64() >> 11) / _TWO53
        r = sqrt(-2.0 * log(u1))
        theta = 2.0 * pi * u2
        self._spare = r * sin(theta)
        return mu + sigma * (r * cos(theta))

    def randbelow(self, n: int) -> int:
        """Unbiased integer in [0, n) via rejection."""
        if n <= 0:
            raise ValueError("randbelow needs n >= 1")
        limit = ((1 << 64) // n) * n
        while True:
            u = self.next_u64()
            if u < limit:
                return u % n

    def shuffle(self, seq) -> None:
        for i in range(len(seq) - 1, 0, -1):
            j = self.randbelow(i + 1)
            seq[i], seq[j] = seq[j], seq[i]

    def spawn(self, *tags) -> "Rng":
        """Independent child generator keyed by the tag path."""
        base = self.next_u64()
        return Rng(derive_seed(base, *tags) if tags else base)

    def state_words(self):
        """Current 4x64-bit state, for kernels that advance the stream."""
        return tuple(self._s)

    def set_state_words(self, words) -> None:
        self._s = [w & _M64 for w in words]


def rng_uniform(rng: Rng, lo: float, hi: float, shape) -> Matrix:
    if lo > hi:
        raise ValueError(f"rng_uniform: lo {lo} > hi {hi}")
    rows, cols = shape
    out = Matrix(rows, cols)
    d = out.data
    for i in range(rows * cols):
        d[i] = lo + (hi - lo) * rng.random()
    return out
