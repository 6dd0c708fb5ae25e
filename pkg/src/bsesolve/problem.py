"""Problem instances: data model, synthetic generator, and the BSEP1 container.

An instance bundles the orbital energies and the factored/dense interaction
matrices that define one block eigenproblem.  The composite index is fixed
globally as occupied-major: ``k(i, a) = i * n_v + a`` (0-based), so the
energy diagonal is the Kronecker sum ``I_o (x) diag(eps_virt) -
diag(eps_occ) (x) I_v`` without ever being materialized as a matrix.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, replace

import numpy as np

HARTREE_TO_EV = 27.211386245988

BSEP1_MAGIC = b"BSEPROB1"

_ARRAY_ORDER = ("eps_occ", "eps_virt", "l_v", "w_bar", "w_til")


class ConfigurationError(ValueError):
    """Invalid generator or instance configuration."""


class InstanceFormatError(ValueError):
    """Base class for BSEP1 container errors."""


class InvalidHeaderError(InstanceFormatError):
    """Bad magic, malformed manifest, or trailing junk."""


class TruncatedPayloadError(InstanceFormatError):
    """File ends before the declared binary payload."""


class DimensionMismatchError(InstanceFormatError):
    """Manifest dimensions are inconsistent with each other or the payload."""


@dataclass(frozen=True)
class EnergyDiagonal:
    """Orbital energies defining the diagonal part of the A block."""

    eps_occ: np.ndarray
    eps_virt: np.ndarray

    @property
    def n_o(self):
        return self.eps_occ.shape[0]

    @property
    def n_v(self):
        return self.eps_virt.shape[0]

    @property
    def n_ov(self):
        return self.n_o * self.n_v

    def entries(self):
        """Diagonal entries in k(i, a) = i*n_v + a order (virtual fastest)."""
        return np.tile(self.eps_virt, self.n_o) - np.repeat(self.eps_occ, self.n_v)


@dataclass(frozen=True)
class ProblemInstance:
    n_o: int
    n_v: int
    eps_occ: np.ndarray
    eps_virt: np.ndarray
    l_v: np.ndarray
    w_bar: np.ndarray
    w_til: np.ndarray
    units: str = "abstract"

    @property
    def n_b(self):
        return self.n_o + self.n_v

    @property
    def n_ov(self):
        return self.n_o * self.n_v

    @property
    def r_v(self):
        return self.l_v.shape[1]

    def energy_diagonal(self) -> EnergyDiagonal:
        return EnergyDiagonal(self.eps_occ, self.eps_virt)

    def validate(self):
        """Check all structural invariants; raises ConfigurationError."""
        n = self.n_ov
        if self.units not in ("hartree", "abstract"):
            raise ConfigurationError(f"unknown units tag {self.units!r}")
        if self.eps_occ.shape != (self.n_o,) or self.eps_virt.shape != (self.n_v,):
            raise ConfigurationError("energy array lengths do not match n_o/n_v")
        if self.l_v.ndim != 2 or self.l_v.shape[0] != n:
            raise ConfigurationError("l_v must be n_ov x r_v")
        for name, m in (("w_bar", self.w_bar), ("w_til", self.w_til)):
            if m.shape != (n, n):
                raise ConfigurationError(f"{name} must be n_ov x n_ov")
            nrm = np.linalg.norm(m)
            if nrm > 0 and np.linalg.norm(m - m.T) > 1e-12 * nrm:
                raise ConfigurationError(f"{name} is not symmetric to 1e-12")
        if np.any(np.diff(self.eps_occ) < 0) or np.any(np.diff(self.eps_virt) < 0):
            raise ConfigurationError("energy arrays must be sorted ascending")
        if self.n_v and self.n_o and self.eps_virt.min() <= self.eps_occ.max():
            raise ConfigurationError("min(eps_virt) must exceed max(eps_occ)")
        return self


def energy_diagonal(inst: ProblemInstance) -> EnergyDiagonal:
    return inst.energy_diagonal()


def _smooth_monotone(n, coeffs, reverse=False):
    # low-degree polynomial in t on [0, 1]; smoothness keeps the QTT ranks
    # of the energy diagonal small (quadratic -> rank <= 3 per bond)
    t = np.linspace(0.0, 1.0, n) if n > 1 else np.zeros(1)
    s = 1.0 - t if reverse else t
    c1, c2 = coeffs
    return c1 * s + c2 * s * s


def synthesize(
    n_o: int,
    n_v: int,
    r_v: int,
    *,
    gap: float = 1.0,
    seed: int = 0,
    w_rank_profile: tuple[float, float] | None = None,
    units: str = "abstract",
) -> ProblemInstance:
    """Deterministic synthetic instance standing in for quantum-chemistry input.

    The static screened interaction w_bar has two parts: a dense component
    whose entries decay away from the leading n_ov/4 small-energy indices,
    and an exactly low-rank global part proportional to V itself (a crude
    "screening transformation" of V).  ``w_rank_profile = (core_decay,
    v_mix)`` controls the decay rate of the first part and the weight of the
    second.  Interaction norms are kept small against ``gap`` so all blocks
    stay definite and the full block spectrum stays real.
    """
    if n_o < 1 or n_v < 1 or r_v < 1:
        raise ConfigurationError("n_o, n_v and r_v must all be >= 1")
    if gap <= 0:
        raise ConfigurationError("gap must be positive")
    core_decay, v_mix = w_rank_profile if w_rank_profile else (3.0, 0.7)
    if core_decay <= 0 or not 0.0 <= v_mix < 1.0:
        raise ConfigurationError("invalid w_rank_profile")

    rng = np.random.default_rng(np.uint64(seed))
    n = n_o * n_v

    spread_o = gap * rng.uniform(1.5, 2.5)
    spread_v = gap * rng.uniform(2.0, 4.0)
    eps_occ = -0.5 * gap - spread_o * _smooth_monotone(
        n_o, rng.uniform(0.3, 1.0, 2), reverse=True
    )
    eps_virt = 0.5 * gap + spread_v * _smooth_monotone(n_v, rng.uniform(0.3, 1.0, 2))

    # V = l_v l_v^T with geometrically decaying singular values
    q_basis, _ = np.linalg.qr(rng.standard_normal((n, r_v)))
    sv = np.sqrt(0.20 * gap) * 0.6 ** np.arange(r_v)
    l_v = q_basis * sv

    delta = np.tile(eps_virt, n_o) - np.repeat(eps_occ, n_v)
    pos = np.empty(n, dtype=np.int64)
    pos[np.argsort(delta, kind="stable")] = np.arange(n)
    env = np.exp(-core_decay * pos / max(1, n // 4))

    g = rng.standard_normal((n, n))
    core = (g + g.T) * env[:, None] * env[None, :]
    cn = np.linalg.norm(core, 2)
    if cn > 0:
        core *= 0.08 * gap / cn
    w_bar = core + v_mix * (l_v @ l_v.T)
    w_bar = 0.5 * (w_bar + w_bar.T)

    u_t, _ = np.linalg.qr(rng.standard_normal((n, min(r_v, n))))
    st = 0.08 * gap * 0.9 ** np.arange(u_t.shape[1])
    w_til = (u_t * st) @ u_t.T
    w_til = 0.5 * (w_til + w_til.T)

    inst = ProblemInstance(
        n_o=n_o,
        n_v=n_v,
        eps_occ=eps_occ,
        eps_virt=eps_virt,
        l_v=l_v,
        w_bar=w_bar,
        w_til=w_til,
        units=units,
    )
    return inst.validate()


def _instance_arrays(inst):
    return {
        "eps_occ": inst.eps_occ,
        "eps_virt": inst.eps_virt,
        "l_v": inst.l_v,
        "w_bar": inst.w_bar,
        "w_til": inst.w_til,
    }


def save(inst: ProblemInstance, path) -> None:
    """Write the BSEP1 container: magic, length-prefixed JSON manifest, then
    float64 little-endian column-major sections in fixed order."""
    arrays = _instance_arrays(inst)
    manifest = {
        "n_o": inst.n_o,
        "n_v": inst.n_v,
        "r_v": inst.r_v,
        "units": inst.units,
        "arrays": [{"name": k, "shape": list(arrays[k].shape)} for k in _ARRAY_ORDER],
    }
    blob = json.dumps(manifest, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(BSEP1_MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for name in _ARRAY_ORDER:
            fh.write(np.asarray(arrays[name], dtype="<f8").tobytes(order="F"))


def _read_exact(fh, count, what):
    buf = fh.read(count)
    if len(buf) != count:
        raise TruncatedPayloadError(f"file ends inside {what}")
    return buf


def load(path) -> ProblemInstance:
    with open(path, "rb") as fh:
        magic = fh.read(len(BSEP1_MAGIC))
        if magic != BSEP1_MAGIC:
            raise InvalidHeaderError(f"unknown magic {magic!r}, expected {BSEP1_MAGIC!r}")
        (mlen,) = struct.unpack("<Q", _read_exact(fh, 8, "manifest length"))
        try:
            manifest = json.loads(_read_exact(fh, mlen, "manifest").decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise InvalidHeaderError(f"malformed manifest: {exc}") from exc
        for key in ("n_o", "n_v", "r_v", "units", "arrays"):
            if key not in manifest:
                raise InvalidHeaderError(f"manifest missing key {key!r}")
        n_o, n_v, r_v = manifest["n_o"], manifest["n_v"], manifest["r_v"]
        if (
            not all(isinstance(v, int) and v >= 0 for v in (n_o, n_v, r_v))
            or n_o < 1
            or n_v < 1
        ):
            raise InvalidHeaderError("manifest counts must be positive integers")
        n = n_o * n_v
        expected = {
            "eps_occ": (n_o,),
            "eps_virt": (n_v,),
            "l_v": (n, r_v),
            "w_bar": (n, n),
            "w_til": (n, n),
        }
        entries = {e.get("name"): tuple(e.get("shape", ())) for e in manifest["arrays"]}
        if list(entries) != list(_ARRAY_ORDER):
            raise InvalidHeaderError("manifest arrays list malformed or out of order")
        data = {}
        for name in _ARRAY_ORDER:
            shape = entries[name]
            if shape != expected[name]:
                raise DimensionMismatchError(
                    f"{name} declared {shape}, expected {expected[name]} "
                    f"(n_ov = n_o*n_v = {n})"
                )
            count = int(np.prod(shape)) if shape else 1
            buf = _read_exact(fh, 8 * count, f"section {name}")
            arr = np.frombuffer(buf, dtype="<f8")
            data[name] = (
                arr.reshape(shape, order="F").copy() if len(shape) > 1 else arr.copy()
            )
        if fh.read(1):
            raise InvalidHeaderError("trailing bytes after final section")
    return ProblemInstance(n_o=n_o, n_v=n_v, units=manifest["units"], **data)


def with_units(inst: ProblemInstance, units: str) -> ProblemInstance:
    return replace(inst, units=units)
