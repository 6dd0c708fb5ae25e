"""Tensor-train and quantized-TT kernels.

A long vector of length M = q_1*...*q_d is folded into a d-way tensor by the
mixed-radix rule i-1 = sum_nu (j_nu - 1) * q_1*...*q_{nu-1} (first index
fastest, i.e. Fortran-order reshape) and then compressed core by core with
sequential SVDs.  Operators carry a row and a column index per core (matrix
product operator form); bundles of m0 vectors carry the enumerator index in
one designated block core, movable between neighbors by an SVD split.

All dense intermediates are guarded to desk scale (2**20 entries).
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

from .lowrank import svd_chop

DENSE_GUARD = 2 ** 20

TT_MAGIC = b"BSETENS1"


class TTGuardError(RuntimeError):
    """Dense intermediate beyond the desk-scale guard."""


def prime_factorize(n) -> "QttShape":
    """Nondecreasing prime factors; 1 factors to the empty shape."""
    if n < 1:
        raise ValueError("n must be >= 1")
    factors = []
    m = int(n)
    p = 2
    while p * p <= m:
        while m % p == 0:
            factors.append(p)
            m //= p
        p += 1 if p == 2 else 2
    if m > 1:
        factors.append(m)
    return QttShape(tuple(factors))


@dataclass(frozen=True)
class QttShape:
    dims: tuple

    def __post_init__(self):
        for q in self.dims:
            if q < 2:
                raise ValueError("factors must be >= 2")

    @property
    def d(self):
        return len(self.dims)

    @property
    def size(self):
        return int(np.prod(self.dims)) if self.dims else 1

    def __iter__(self):
        return iter(self.dims)

    def __add__(self, other):
        return QttShape(self.dims + tuple(other))


def _shape_dims(shape):
    return tuple(shape.dims) if isinstance(shape, QttShape) else tuple(shape)


def fold(v, shape):
    """Mixed-radix folding of a vector into its quantized tensor image."""
    dims = _shape_dims(shape)
    v = np.asarray(v)
    if v.size != (int(np.prod(dims)) if dims else 1):
        raise ValueError("shape does not match vector length")
    if not dims:
        dims = (1,)
    return v.reshape(dims, order="F")


def unfold(t):
    """Inverse of fold: Fortran-order ravel."""
    return np.ravel(t, order="F")


class TTTensor:
    """Chain of 3-way cores (r_{l-1}, q_l, r_l) with boundary ranks 1."""

    def __init__(self, cores):
        cores = [np.asarray(c, dtype=float) for c in cores]
        if not cores:
            raise ValueError("need at least one core")
        if cores[0].shape[0] != 1 or cores[-1].shape[-1] != 1:
            raise ValueError("boundary ranks must be 1")
        for a, b in zip(cores, cores[1:]):
            if a.shape[-1] != b.shape[0]:
                raise ValueError("bond dimension mismatch")
        self.cores = cores

    @property
    def d(self):
        return len(self.cores)

    @property
    def dims(self):
        return tuple(c.shape[1] for c in self.cores)

    @property
    def ranks(self):
        return tuple(c.shape[2] for c in self.cores[:-1])

    @property
    def size(self):
        return int(np.prod(self.dims))

    def copy(self):
        return TTTensor([c.copy() for c in self.cores])

    def to_full(self):
        if self.size > DENSE_GUARD:
            raise TTGuardError("to_full beyond dense guard")
        acc = self.cores[0].reshape(self.dims[0], -1)
        for c in self.cores[1:]:
            r0, q, r1 = c.shape
            acc = acc @ c.reshape(r0, q * r1)
            acc = acc.reshape(-1, r1)
        return acc.reshape(self.dims)

    def unfold(self):
        return unfold(self.to_full())

    def norm(self):
        return float(np.sqrt(max(tt_dot(self, self), 0.0)))


def tt_svd(v, shape=None, eps=0.0, max_rank=None) -> TTTensor:
    """Sequential-SVD compression at relative accuracy eps.

    Each of the d-1 splits gets the budget eps*||v|| / sqrt(d-1), so the
    total reconstruction error obeys ||v - tt|| <= eps*||v||.
    """
    arr = np.asarray(v, dtype=float)
    if shape is not None:
        arr = fold(arr.ravel(order="F") if arr.ndim > 1 else arr, shape)
    if arr.size > DENSE_GUARD:
        raise TTGuardError(f"tt_svd input beyond dense guard ({arr.size} > {DENSE_GUARD})")
    dims = arr.shape if arr.ndim else (1,)
    d = len(dims)
    if d == 1:
        return TTTensor([arr.reshape(1, dims[0], 1)])
    nrm = float(np.linalg.norm(arr))
    delta = eps * nrm / np.sqrt(d - 1)
    cores = []
    c = arr
    r_prev = 1
    for ell in range(d - 1):
        c = c.reshape(r_prev * dims[ell], -1)
        u, s, vt = np.linalg.svd(c, full_matrices=False)
        r = max(svd_chop(s, delta, max_rank), 1)
        cores.append(u[:, :r].reshape(r_prev, dims[ell], r))
        c = s[:r, None] * vt[:r]
        r_prev = r
    cores.append(c.reshape(r_prev, dims[-1], 1))
    return TTTensor(cores)


def tt_dot(x: TTTensor, y: TTTensor) -> float:
    if x.dims != y.dims:
        raise ValueError("dimension mismatch")
    env = np.ones((1, 1))
    for cx, cy in zip(x.cores, y.cores):
        env = np.einsum("ab,aic,bid->cd", env, cx, cy, optimize=True)
    return float(env[0, 0])


def _right_orthogonalize(cores):
    """Make cores 1..d-1 row-orthonormal, absorbing factors leftward."""
    cores = [c.copy() for c in cores]
    for ell in range(len(cores) - 1, 0, -1):
        r0, q, r1 = cores[ell].shape
        mat = cores[ell].reshape(r0, q * r1)
        qmat, rmat = np.linalg.qr(mat.T)
        rnew = qmat.shape[1]
        cores[ell] = qmat.T.reshape(rnew, q, r1)
        cores[ell - 1] = np.einsum(
            "aqb,bc->aqc", cores[ell - 1], rmat.T, optimize=True
        )
    return cores


def tt_round(x: TTTensor, eps, max_rank=None) -> TTTensor:
    """Quasi-optimal recompression; never increases a rank and keeps
    ||x - round(x)|| <= eps*||x||."""
    cores = _right_orthogonalize(x.cores)
    d = len(cores)
    if d == 1:
        return TTTensor(cores)
    nrm = float(np.linalg.norm(cores[0]))
    delta = eps * nrm / np.sqrt(d - 1)
    for ell in range(d - 1):
        r0, q, r1 = cores[ell].shape
        mat = cores[ell].reshape(r0 * q, r1)
        u, s, vt = np.linalg.svd(mat, full_matrices=False)
        r = max(svd_chop(s, delta, max_rank), 1)
        cores[ell] = u[:, :r].reshape(r0, q, r)
        carry = s[:r, None] * vt[:r]
        cores[ell + 1] = np.einsum(
            "ab,bqc->aqc", carry, cores[ell + 1], optimize=True
        )
    return TTTensor(cores)


class TTMatrix:
    """Operator cores (r_{l-1}, q_row, q_col, r_l); matrix product operator."""

    def __init__(self, cores):
        cores = [np.asarray(c, dtype=float) for c in cores]
        if cores[0].shape[0] != 1 or cores[-1].shape[-1] != 1:
            raise ValueError("boundary ranks must be 1")
        self.cores = cores

    @property
    def d(self):
        return len(self.cores)

    @property
    def row_dims(self):
        return tuple(c.shape[1] for c in self.cores)

    @property
    def col_dims(self):
        return tuple(c.shape[2] for c in self.cores)

    @property
    def ranks(self):
        return tuple(c.shape[3] for c in self.cores[:-1])

    @classmethod
    def from_dense(cls, mat, row_shape, col_shape, eps=0.0, max_rank=None):
        rd, cd = _shape_dims(row_shape), _shape_dims(col_shape)
        if not rd:
            rd = (1,)
        if not cd:
            cd = (1,)
        if len(rd) != len(cd):
            raise ValueError("row and column shapes must have equal depth")
        mat = np.asarray(mat, dtype=float)
        if mat.size > DENSE_GUARD:
            raise TTGuardError("from_dense beyond dense guard")
        d = len(rd)
        arr = mat.reshape(rd + cd, order="F")
        perm = [val for pair in zip(range(d), range(d, 2 * d)) for val in pair]
        arr = arr.transpose(perm).reshape([rd[i] * cd[i] for i in range(d)])
        tt = tt_svd(arr, eps=eps, max_rank=max_rank)
        cores = [
            c.reshape(c.shape[0], rd[i], cd[i], c.shape[2])
            for i, c in enumerate(tt.cores)
        ]
        return cls(cores)

    def to_dense(self):
        rd, cd = self.row_dims, self.col_dims
        n, m = int(np.prod(rd)), int(np.prod(cd))
        if n * m > DENSE_GUARD:
            raise TTGuardError("to_dense beyond dense guard")
        merged = TTTensor(
            [c.reshape(c.shape[0], c.shape[1] * c.shape[2], c.shape[3]) for c in self.cores]
        )
        arr = merged.to_full().reshape([d for pair in zip(rd, cd) for d in pair])
        d = len(rd)
        inv = [2 * i for i in range(d)] + [2 * i + 1 for i in range(d)]
        return arr.transpose(inv).reshape(n, m, order="F")

    def matvec(self, x: TTTensor) -> TTTensor:
        if self.col_dims != x.dims:
            raise ValueError("dimension mismatch")
        out = []
        for a, c in zip(self.cores, x.cores):
            ra0, qi, qj, ra1 = a.shape
            rx0, _, rx1 = c.shape
            core = np.einsum("aijb,cjd->acibd", a, c, optimize=True)
            out.append(core.reshape(ra0 * rx0, qi, ra1 * rx1))
        return TTTensor(out)


def tt_matvec(a: TTMatrix, x: TTTensor) -> TTTensor:
    return a.matvec(x)


def diag_mpo(ttvec: TTTensor) -> TTMatrix:
    """Lift a TT vector to the diagonal operator with the same ranks."""
    cores = []
    for c in ttvec.cores:
        r0, q, r1 = c.shape
        eye = np.eye(q)
        cores.append(np.einsum("aib,ij->aijb", c, eye, optimize=True))
    return TTMatrix(cores)


class BlockTT:
    """TT bundle of m0 vectors; one core carries the enumerator index."""

    def __init__(self, cores, block_position):
        self.cores = [np.asarray(c, dtype=float) for c in cores]
        self.block_position = int(block_position)
        bc = self.cores[self.block_position]
        if bc.ndim != 4:
            raise ValueError("block core must be 4-way (r, q, m, r)")
        for i, c in enumerate(self.cores):
            if i != self.block_position and c.ndim != 3:
                raise ValueError("non-block cores must be 3-way")

    @property
    def d(self):
        return len(self.cores)

    @property
    def m0(self):
        return self.cores[self.block_position].shape[2]

    @property
    def dims(self):
        return tuple(c.shape[1] for c in self.cores)

    @property
    def ranks(self):
        return tuple(c.shape[-1] for c in self.cores[:-1])

    @property
    def size(self):
        return int(np.prod(self.dims))

    def copy(self):
        return BlockTT([c.copy() for c in self.cores], self.block_position)

    def extract(self, m) -> TTTensor:
        cores = []
        for i, c in enumerate(self.cores):
            cores.append(c[:, :, m, :].copy() if i == self.block_position else c.copy())
        return TTTensor(cores)

    def to_matrix(self):
        if self.size * self.m0 > DENSE_GUARD * 4:
            raise TTGuardError("to_matrix beyond dense guard")
        return np.column_stack([self.extract(m).unfold() for m in range(self.m0)])

    def entry_count(self):
        return int(sum(c.size for c in self.cores))


def block_move(u: BlockTT, direction, eps=0.0, max_rank=None) -> BlockTT:
    """Transfer the enumerator index to the neighboring core via an SVD
    split; the discarded singular tail obeys the eps threshold (rank
    adaptivity of the alternating solver)."""
    cores = [c.copy() for c in u.cores]
    ell = u.block_position
    bc = cores[ell]
    r0, q, m, r1 = bc.shape
    if direction == "right":
        if ell >= u.d - 1:
            raise ValueError("no core to the right")
        mat = bc.reshape(r0 * q, m * r1)
        uu, s, vt = np.linalg.svd(mat, full_matrices=False)
        r = max(svd_chop(s, eps * float(np.linalg.norm(s)), max_rank), 1)
        cores[ell] = uu[:, :r].reshape(r0, q, r)
        carry = (s[:r, None] * vt[:r]).reshape(r, m, r1)
        nxt = cores[ell + 1]
        cores[ell + 1] = np.einsum("amb,bqc->aqmc", carry, nxt, optimize=True)
        return BlockTT(cores, ell + 1)
    if direction == "left":
        if ell <= 0:
            raise ValueError("no core to the left")
        mat = bc.transpose(0, 2, 1, 3).reshape(r0 * m, q * r1)
        uu, s, vt = np.linalg.svd(mat, full_matrices=False)
        r = max(svd_chop(s, eps * float(np.linalg.norm(s)), max_rank), 1)
        cores[ell] = vt[:r].reshape(r, q, r1)
        carry = (uu[:, :r] * s[:r]).reshape(r0, m, r)
        prv = cores[ell - 1]
        cores[ell - 1] = np.einsum("aqb,bmc->aqmc", prv, carry, optimize=True)
        return BlockTT(cores, ell - 1)
    raise ValueError("direction must be 'left' or 'right'")


def orthonormalize_block_tt(u: BlockTT) -> BlockTT:
    """Left-orthonormalize cores before the block and right-orthonormalize
    cores after it, absorbing all factors into the block core (so the frame
    matrix at the block position has orthonormal columns)."""
    cores = [c.copy() for c in u.cores]
    ell = u.block_position
    for i in range(ell):
        r0, q, r1 = cores[i].shape
        qmat, rmat = np.linalg.qr(cores[i].reshape(r0 * q, r1))
        rnew = qmat.shape[1]
        cores[i] = qmat.reshape(r0, q, rnew)
        nxt = cores[i + 1]
        if i + 1 == ell:
            cores[i + 1] = np.einsum("ab,bqmc->aqmc", rmat, nxt, optimize=True)
        else:
            cores[i + 1] = np.einsum("ab,bqc->aqc", rmat, nxt, optimize=True)
    for i in range(len(cores) - 1, ell, -1):
        r0, q, r1 = cores[i].shape
        qmat, rmat = np.linalg.qr(cores[i].reshape(r0, q * r1).T)
        rnew = qmat.shape[1]
        cores[i] = qmat.T.reshape(rnew, q, r1)
        prv = cores[i - 1]
        if i - 1 == ell:
            cores[i - 1] = np.einsum("aqmb,bc->aqmc", prv, rmat.T, optimize=True)
        else:
            cores[i - 1] = np.einsum("aqb,bc->aqc", prv, rmat.T, optimize=True)
    return BlockTT(cores, ell)


def random_block_tt(dims, m0, rank, rng, block_position=0) -> BlockTT:
    """Random bundle with all bond ranks = rank (capped by the dimension
    products), frame-orthonormalized."""
    dims = _shape_dims(dims)
    d = len(dims)
    ranks = [1]
    for ell in range(d - 1):
        left = int(np.prod(dims[: ell + 1])) * (m0 if block_position <= ell else 1)
        right = int(np.prod(dims[ell + 1 :])) * (m0 if block_position > ell else 1)
        ranks.append(max(1, min(rank, left, right)))
    ranks.append(1)
    cores = []
    for ell in range(d):
        if ell == block_position:
            shape = (ranks[ell], dims[ell], m0, ranks[ell + 1])
        else:
            shape = (ranks[ell], dims[ell], ranks[ell + 1])
        cores.append(rng.standard_normal(shape))
    return orthonormalize_block_tt(BlockTT(cores, block_position))


def effective_rank(ranks, d) -> float:
    """Positive root of the storage-matching quadratic for equal mode sizes."""
    ranks = tuple(int(r) for r in ranks)
    if d < 2 or len(ranks) != d - 1:
        raise ValueError("need d >= 2 and d-1 ranks")
    if d == 2:
        return float(ranks[0])
    storage = ranks[0] + sum(ranks[k - 1] * ranks[k] for k in range(1, d - 1)) + ranks[-1]
    a = d - 2
    return float((-1.0 + np.sqrt(1.0 + a * storage)) / a)


def effective_rank_weighted(ranks, dims) -> float:
    """Mode-size-weighted variant for unequal q (reduces to effective_rank
    when all q agree); used for reporting on mixed-prime shapes."""
    dims = _shape_dims(dims)
    d = len(dims)
    ranks = (1,) + tuple(int(r) for r in ranks) + (1,)
    if len(ranks) != d + 1:
        raise ValueError("rank tuple does not match dims")
    storage = sum(dims[k] * ranks[k] * ranks[k + 1] for k in range(d))
    if d == 1:
        return 1.0
    a = sum(dims[1:-1])
    b = dims[0] + dims[-1]
    if a == 0:
        return storage / b
    return float((-b + np.sqrt(b * b + 4.0 * a * storage)) / (2.0 * a))


def average_column_rank(mat, shape, eps) -> dict:
    """Mean effective quantized-TT rank over the columns of a factor matrix.

    Convention (recorded in the result): each column is compressed
    separately at relative accuracy eps and the per-column effective ranks
    are averaged; this is the mean-of-effective-ranks reading, not the
    effective rank of the stacked bundle.
    """
    mat = np.asarray(mat, dtype=float)
    dims = _shape_dims(shape)
    ranks = []
    for j in range(mat.shape[1]):
        x = tt_svd(mat[:, j], dims, eps=eps)
        ranks.append(effective_rank_weighted(x.ranks, dims))
    return {
        "mean_effective_rank": float(np.mean(ranks)) if ranks else 0.0,
        "per_column": [float(r) for r in ranks],
        "eps": float(eps),
        "convention": "mean of per-column effective ranks",
    }


# ---------------------------------------------------------------------------
# serialization (same framing as the BSEP1 container)
# ---------------------------------------------------------------------------

def save_tt(obj, path):
    if isinstance(obj, TTMatrix):
        kind, cores, extra = "ttm", obj.cores, {}
    elif isinstance(obj, BlockTT):
        kind, cores = "btt", obj.cores
        extra = {"block_position": obj.block_position, "m0": obj.m0}
    elif isinstance(obj, TTTensor):
        kind, cores, extra = "tt", obj.cores, {}
    else:
        raise TypeError("unsupported TT object")
    manifest = {
        "kind": kind,
        "cores": [list(c.shape) for c in cores],
        **extra,
    }
    blob = json.dumps(manifest, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(TT_MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for c in cores:
            fh.write(np.asarray(c, dtype="<f8").tobytes(order="F"))


def load_tt(path):
    with open(path, "rb") as fh:
        magic = fh.read(len(TT_MAGIC))
        if magic != TT_MAGIC:
            raise ValueError(f"unknown magic {magic!r}")
        (mlen,) = struct.unpack("<Q", fh.read(8))
        manifest = json.loads(fh.read(mlen).decode("utf-8"))
        cores = []
        for shape in manifest["cores"]:
            count = int(np.prod(shape))
            buf = fh.read(8 * count)
            if len(buf) != 8 * count:
                raise ValueError("truncated core payload")
            cores.append(
                np.frombuffer(buf, dtype="<f8").reshape(shape, order="F").copy()
            )
    kind = manifest["kind"]
    if kind == "tt":
        return TTTensor(cores)
    if kind == "ttm":
        return TTMatrix(cores)
    if kind == "btt":
        return BlockTT(cores, manifest["block_position"])
    raise ValueError(f"unknown TT kind {kind!r}")
