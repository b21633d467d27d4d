"""Binary model files: magic, header, raw float payload, FNV-1a checksum.

Layout (all little-endian):
  "GNM1" | u16 version | u8 kind | u8 activation | header | payload | u64 checksum
Header for the message-passing model: u32 m, hidden, c, K; payload is the K
step matrices row-major, bias rows included.  For the MLP: u32 m, c, K, then
K-1 u32 widths; payload alternates W_k (row-major) and b_k.  The checksum
covers payload bytes only; loading verifies it and refuses mismatches.
"""

import struct
import sys
from array import array

from .errors import ModelFileError
from .graph import build_gnm_graph
from .linalg import Matrix, Vector, _fnv1a64
from .model import ACTIVATIONS, AdjacencyTensor, GnmModel, MlpModel, MlpSpec

MAGIC = b"GNM1"
VERSION = 1
KIND_GNM = 0
KIND_MLP = 1


def _le_bytes(a: array) -> bytes:
    if sys.byteorder == "big":
        a = array(a.typecode, a)
        a.byteswap()
    return a.tobytes()


def _le_array(buf: bytes) -> array:
    a = array("d")
    a.frombytes(buf)
    if sys.byteorder == "big":
        a.byteswap()
    return a


def save_model(model, path) -> None:
    if isinstance(model, GnmModel):
        p = model.graph.part
        kind = KIND_GNM
        header = struct.pack("<IIII", p.m, p.hidden, p.c, model.tensor.K)
        payload = b"".join(_le_bytes(mat.data) for mat in model.tensor.mats)
    elif isinstance(model, MlpModel):
        s = model.spec
        kind = KIND_MLP
        header = struct.pack("<III", s.m, s.c, s.K)
        header += struct.pack(f"<{len(s.widths)}I", *s.widths)
        chunks = []
        for w, b in zip(s.weights, s.biases):
            chunks.append(_le_bytes(w.data))
            chunks.append(_le_bytes(b.data))
        payload = b"".join(chunks)
    else:
        raise ModelFileError(f"cannot serialize {type(model).__name__}")
    act = ACTIVATIONS.index(model.activation)
    blob = MAGIC + struct.pack("<HBB", VERSION, kind, act) + header + payload
    blob += struct.pack("<Q", _fnv1a64(payload))
    with open(path, "wb") as fh:
        fh.write(blob)


class _Reader:
    def __init__(self, blob, path):
        self.blob = blob
        self.pos = 0
        self.path = path

    def take(self, count) -> bytes:
        if self.pos + count > len(self.blob):
            raise ModelFileError(f"{self.path}: truncated file")
        out = self.blob[self.pos:self.pos + count]
        self.pos += count
        return out

    def unpack(self, fmt):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_model(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    r = _Reader(blob, path)
    if r.take(4) != MAGIC:
        raise ModelFileError(f"{path}: not a model file (bad magic)")
    version, kind, act = r.unpack("<HBB")
    if version != VERSION:
        raise ModelFileError(f"{path}: format version {version}, expected {VERSION}")
    if act >= len(ACTIVATIONS):
        raise ModelFileError(f"{path}: unknown activation id {act}")
    activation = ACTIVATIONS[act]

    if kind == KIND_GNM:
        m, hidden, c, K = r.unpack("<IIII")
        n = m + hidden + 1 + c
        payload = r.take(8 * K * n * n)
        (checksum,) = r.unpack("<Q")
        if r.pos != len(blob):
            raise ModelFileError(f"{path}: trailing data after checksum")
        if _fnv1a64(payload) != checksum:
            raise ModelFileError(f"{path}: checksum mismatch, refusing to load")
        flat = _le_array(payload)
        mats = [Matrix(n, n, flat[k * n * n:(k + 1) * n * n]) for k in range(K)]
        g = build_gnm_graph(m, hidden, c)
        return GnmModel(g, AdjacencyTensor(mats, g.part), activation)

    if kind == KIND_MLP:
        m, c, K = r.unpack("<III")
        widths = r.unpack(f"<{K - 1}I") if K > 1 else ()
        dims = (m,) + widths + (c,)
        count = sum(dims[k] * dims[k + 1] + dims[k + 1] for k in range(K))
        payload = r.take(8 * count)
        (checksum,) = r.unpack("<Q")
        if r.pos != len(blob):
            raise ModelFileError(f"{path}: trailing data after checksum")
        if _fnv1a64(payload) != checksum:
            raise ModelFileError(f"{path}: checksum mismatch, refusing to load")
        flat = _le_array(payload)
        weights, biases = [], []
        pos = 0
        for k in range(K):
            rows, cols = dims[k + 1], dims[k]
            weights.append(Matrix(rows, cols, flat[pos:pos + rows * cols]))
            pos += rows * cols
            biases.append(Vector(flat[pos:pos + rows]))
            pos += rows
        return MlpModel(MlpSpec(m, widths, c, weights, biases), activation)

    raise ModelFileError(f"{path}: unknown model kind {kind}")
