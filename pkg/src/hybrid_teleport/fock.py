"""Truncated Fock-space engine.

Independent numeric image of the coherent-state algebra: states are dense
tensors over the number basis (CV modes, dimension ``cutoff + 1``) and the
three-level ``{VAC, H, V}`` space of a DV mode. Optical elements are built as
dense matrices, CV elements from matrix exponentials of their generators, and
applied on their own axes only.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Mapping, Sequence

import numpy as np
from scipy.linalg import expm
from scipy.special import gammainc, gammaln

from .coherent import ModeKind, Occ, ParityClass, SuperState, count_cutoff

LEAKAGE_TOL = 1e-10
MAX_OPERATOR_DIM = 6000
MAX_STATE_DIM = 6_000_000
DV_DIM = 3
_DV_INDEX = {Occ.VAC: 0, Occ.H: 1, Occ.V: 2}


class FockError(ValueError):
    pass


class TruncationError(FockError):
    def __init__(self, alpha: complex, cutoff: int, leakage: float):
        self.leakage = leakage
        super().__init__(
            f"cutoff {cutoff} too small for |alpha|^2={abs(alpha) ** 2:.4g}: leakage {leakage:.3e}"
        )


class DimensionError(FockError):
    pass


class Tag(enum.Enum):
    BS = "BS"
    CROSS_KERR = "CrossKerr"
    DISPLACEMENT = "Displacement"
    PHASE_SHIFT = "PhaseShift"
    PROJECTOR = "Projector"
    POLARIZATION = "Polarization"


def cutoff_for(max_abs2: float) -> int:
    """ceil(m + 8 sqrt(m) + 10) for the largest |amplitude|^2 a mode carries."""
    return count_cutoff(max_abs2)


def coherent_leakage(alpha: complex, cutoff: int) -> float:
    """Norm weight of |alpha> above ``cutoff`` photons (Poisson tail)."""
    m = abs(alpha) ** 2
    return 0.0 if m == 0 else float(gammainc(cutoff + 1, m))


@dataclass(frozen=True)
class FockVector:
    modes: tuple[int, ...]
    kinds: tuple[ModeKind, ...]
    data: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.data.ndim != len(self.modes) or len(self.kinds) != len(self.modes):
            raise FockError("data rank does not match the mode list")
        if len(set(self.modes)) != len(self.modes):
            raise FockError(f"duplicate modes {self.modes}")

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(self.data.shape)

    @property
    def cutoffs(self) -> dict[int, int]:
        return {m: d - 1 for m, d, k in zip(self.modes, self.dims, self.kinds) if k is ModeKind.CV}

    def axis(self, mode: int) -> int:
        try:
            return self.modes.index(mode)
        except ValueError:
            raise FockError(f"mode {mode} not in {self.modes}") from None

    def norm_squared(self) -> float:
        return float(np.vdot(self.data, self.data).real)

    def __add__(self, other: FockVector) -> FockVector:
        _check_same(self, other)
        return FockVector(self.modes, self.kinds, self.data + other.data)

    def __mul__(self, scalar: complex) -> FockVector:
        return FockVector(self.modes, self.kinds, scalar * self.data)

    __rmul__ = __mul__


def _check_same(v: FockVector, w: FockVector) -> None:
    if v.modes != w.modes or v.dims != w.dims:
        raise FockError(f"layout mismatch {v.modes}{v.dims} vs {w.modes}{w.dims}")


@dataclass(frozen=True)
class FockOperator:
    tag: Tag
    modes: tuple[int, ...]
    dims: tuple[int, ...]
    matrix: np.ndarray = field(repr=False)


# -- states -------------------------------------------------------------------


def coherent_amplitudes(alpha: complex, cutoff: int) -> np.ndarray:
    n = np.arange(cutoff + 1)
    out = np.zeros(cutoff + 1, dtype=complex)
    if alpha == 0:
        out[0] = 1.0
        return out
    logmag = n * math.log(abs(alpha)) - 0.5 * gammaln(n + 1) - 0.5 * abs(alpha) ** 2
    return np.exp(logmag) * np.exp(1j * n * np.angle(alpha))


def coherent_vector(alpha: complex, cutoff: int, mode: int = 0) -> FockVector:
    leak = coherent_leakage(alpha, cutoff)
    if leak > LEAKAGE_TOL:
        raise TruncationError(alpha, cutoff, leak)
    return FockVector((mode,), (ModeKind.CV,), coherent_amplitudes(alpha, cutoff))


def dv_vector(mode: int, amps: Occ | Mapping[Occ, complex]) -> FockVector:
    amps = {amps: 1.0} if isinstance(amps, Occ) else amps
    data = np.zeros(DV_DIM, dtype=complex)
    for occ, c in amps.items():
        data[_DV_INDEX[occ]] += c
    return FockVector((mode,), (ModeKind.DV,), data)


def tensor(*vecs: FockVector) -> FockVector:
    dim = math.prod(math.prod(v.dims) for v in vecs)
    if dim > MAX_STATE_DIM:
        raise DimensionError(f"state dimension {dim} exceeds {MAX_STATE_DIM}")
    data = vecs[0].data
    for v in vecs[1:]:
        data = np.multiply.outer(data, v.data)
    return FockVector(
        tuple(m for v in vecs for m in v.modes), tuple(k for v in vecs for k in v.kinds), data
    )


def relabel(v: FockVector, mapping: Mapping[int, int]) -> FockVector:
    return FockVector(tuple(mapping.get(m, m) for m in v.modes), v.kinds, v.data)


def reorder(v: FockVector, modes: Sequence[int]) -> FockVector:
    perm = [v.axis(m) for m in modes]
    if len(perm) != len(v.modes):
        raise FockError("reorder must list every mode")
    return FockVector(tuple(modes), tuple(v.kinds[i] for i in perm), np.transpose(v.data, perm))


def embed(s: SuperState, cutoffs: Mapping[int, int]) -> FockVector:
    """Expand an exact SuperState in the truncated number basis."""
    dims = [
        cutoffs[m.mode_id] + 1 if m.kind is ModeKind.CV else DV_DIM for m in s.layout
    ]
    data = np.zeros(dims, dtype=complex)
    for t in s.terms:
        factors = []
        for spec, p in zip(s.layout, t.primitives):
            if spec.kind is ModeKind.CV:
                factors.append(coherent_amplitudes(p, cutoffs[spec.mode_id]))
            else:
                e = np.zeros(DV_DIM, dtype=complex)
                e[_DV_INDEX[p]] = 1.0
                factors.append(e)
        prod = np.asarray(t.coefficient, dtype=complex)
        for f in factors:
            prod = np.multiply.outer(prod, f)
        data += prod
    return FockVector(s.mode_ids, tuple(m.kind for m in s.layout), data)


# -- elements -----------------------------------------------------------------


def _annihilation(cutoff: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, cutoff + 1, dtype=float)), 1).astype(complex)


def _numbers(kind: ModeKind, dim: int) -> np.ndarray:
    if kind is ModeKind.DV:
        return np.array([0.0, 1.0, 1.0])
    return np.arange(dim, dtype=float)


def _beam_splitter_matrix(cu: int, cv: int) -> np.ndarray:
    """exp(i pi n_v) exp(pi/4 (a^dag b - a b^dag)), exponentiated per total-number block."""
    a = np.kron(_annihilation(cu), np.eye(cv + 1))
    b = np.kron(np.eye(cu + 1), _annihilation(cv))
    gen = (math.pi / 4) * (a.conj().T @ b - a @ b.conj().T)
    nu, nv = np.meshgrid(np.arange(cu + 1), np.arange(cv + 1), indexing="ij")
    total = (nu + nv).ravel()
    u = np.zeros_like(gen)
    for n in np.unique(total):
        idx = np.flatnonzero(total == n)
        u[np.ix_(idx, idx)] = expm(gen[np.ix_(idx, idx)])
    return np.exp(1j * math.pi * nv.ravel())[:, None] * u


def build_element(
    tag: Tag | str,
    params: Mapping[str, complex] | None,
    modes: Sequence[int],
    kinds: Sequence[ModeKind],
    dims: Sequence[int],
    max_dim: int = MAX_OPERATOR_DIM,
) -> FockOperator:
    """Dense matrix for one optical element acting on ``modes``.

    ``params``: ``theta`` for CrossKerr, ``phi`` for PhaseShift, ``delta`` for
    Displacement, ``cls`` (ParityClass or DV outcome vector) for Projector,
    ``u`` (2x2) for Polarization. BS is always 50:50.
    """
    tag = Tag(tag)
    params = dict(params or {})
    modes, kinds, dims = tuple(modes), tuple(kinds), tuple(dims)
    local = math.prod(dims)
    if local > max_dim:
        raise DimensionError(f"operator dimension {local} exceeds {max_dim}")
    matrix = _element_matrix(tag, _freeze(params), kinds, dims)
    return FockOperator(tag, modes, dims, matrix)


def _freeze(params: Mapping) -> tuple:
    out = []
    for k, v in sorted(params.items()):
        if isinstance(v, np.ndarray):
            v = tuple(np.asarray(v, dtype=complex).ravel())
        out.append((k, v))
    return tuple(out)


@lru_cache(maxsize=64)
def _element_matrix(tag: Tag, params: tuple, kinds: tuple, dims: tuple) -> np.ndarray:
    p = dict(params)
    if tag is Tag.BS:
        if kinds != (ModeKind.CV, ModeKind.CV):
            raise FockError("beam splitter needs two CV modes")
        m = _beam_splitter_matrix(dims[0] - 1, dims[1] - 1)
    elif tag is Tag.CROSS_KERR:
        n0, n1 = _numbers(kinds[0], dims[0]), _numbers(kinds[1], dims[1])
        m = np.diag(np.exp(-1j * p["theta"] * np.multiply.outer(n0, n1).ravel()))
    elif tag is Tag.DISPLACEMENT:
        _require_cv(kinds)
        a = _annihilation(dims[0] - 1)
        d = complex(p["delta"])
        m = expm(d * a.conj().T - np.conj(d) * a)
    elif tag is Tag.PHASE_SHIFT:
        _require_cv(kinds)
        m = np.diag(np.exp(1j * p["phi"] * np.arange(dims[0])))
    elif tag is Tag.PROJECTOR:
        m = _projector_matrix(p["cls"], kinds[0], dims[0])
    elif tag is Tag.POLARIZATION:
        if kinds != (ModeKind.DV,):
            raise FockError("polarization unitary needs one DV mode")
        m = np.eye(DV_DIM, dtype=complex)
        m[1:, 1:] = np.reshape(p["u"], (2, 2))
    else:  # pragma: no cover
        raise FockError(f"unknown element {tag}")
    m.setflags(write=False)
    return m


def _require_cv(kinds: tuple) -> None:
    if kinds != (ModeKind.CV,):
        raise FockError("element needs one CV mode")


def _projector_matrix(cls, kind: ModeKind, dim: int) -> np.ndarray:
    if kind is ModeKind.CV:
        n = np.arange(dim)
        cls = ParityClass(cls)
        diag = {
            ParityClass.VACUUM: n == 0,
            ParityClass.NONZERO: n != 0,
            ParityClass.EVEN: n % 2 == 0,
            ParityClass.ODD: n % 2 == 1,
        }[cls]
        return np.diag(diag.astype(complex))
    vec = np.zeros(DV_DIM, dtype=complex)
    vec[1:] = np.asarray(cls, dtype=complex)
    vec /= np.linalg.norm(vec)
    return np.outer(vec, vec.conj())


def apply(op: FockOperator, v: FockVector) -> FockVector:
    axes = [v.axis(m) for m in op.modes]
    if tuple(v.dims[i] for i in axes) != op.dims:
        raise FockError(f"operator dims {op.dims} do not match state axes")
    rest = [i for i in range(len(v.modes)) if i not in axes]
    moved = np.transpose(v.data, axes + rest)
    flat = moved.reshape(math.prod(op.dims), -1)
    out = (op.matrix @ flat).reshape(moved.shape)
    inverse = np.argsort(axes + rest)
    return FockVector(v.modes, v.kinds, np.transpose(out, inverse))


def element(v: FockVector, tag: Tag | str, modes: Sequence[int], **params) -> FockVector:
    """Build and apply an element on the given modes of ``v``."""
    idx = [v.axis(m) for m in modes]
    op = build_element(tag, params, modes, [v.kinds[i] for i in idx], [v.dims[i] for i in idx])
    return apply(op, v)


def pbs_split(v: FockVector, in_mode: int, out_t: int, out_r: int) -> FockVector:
    """PBS as an isometry DV -> DV x DV: H -> (H, VAC), V -> (VAC, V)."""
    ax = v.axis(in_mode)
    iso = np.zeros((DV_DIM, DV_DIM, DV_DIM), dtype=complex)
    iso[0, 0, 0] = 1.0
    iso[1, 0, 1] = 1.0
    iso[0, 2, 2] = 1.0
    out = np.tensordot(v.data, iso, axes=([ax], [2]))
    out = np.moveaxis(out, [-2, -1], [ax, ax + 1])
    modes = v.modes[:ax] + (out_t, out_r) + v.modes[ax + 1:]
    kinds = v.kinds[:ax] + (ModeKind.DV, ModeKind.DV) + v.kinds[ax + 1:]
    return FockVector(modes, kinds, out)


def pbs_merge(v: FockVector, arm_t: int, arm_r: int, out_mode: int, tol: float = 1e-12) -> FockVector:
    """Inverse PBS; refuses amplitude that would exit the dropped port."""
    at, ar = v.axis(arm_t), v.axis(arm_r)
    data = np.moveaxis(v.data, [at, ar], [0, 1])
    allowed = np.zeros((DV_DIM, DV_DIM), dtype=bool)
    allowed[0, 0] = allowed[1, 0] = allowed[0, 2] = True
    stray = np.abs(data[~allowed]).max(initial=0.0)
    if stray > tol:
        raise FockError(f"recombination would populate the dropped port (amplitude {stray:.2e})")
    merged = np.stack([data[0, 0], data[1, 0], data[0, 2]])
    rest_modes = tuple(m for m in v.modes if m not in (arm_t, arm_r))
    rest_kinds = tuple(k for m, k in zip(v.modes, v.kinds) if m not in (arm_t, arm_r))
    return reorder(
        FockVector((out_mode,) + rest_modes, (ModeKind.DV,) + rest_kinds, merged),
        _merged_order(v.modes, arm_t, arm_r, out_mode),
    )


def _merged_order(modes, arm_t, arm_r, out_mode):
    first = min(modes.index(arm_t), modes.index(arm_r))
    order = []
    for i, m in enumerate(modes):
        if m in (arm_t, arm_r):
            if i == first:
                order.append(out_mode)
        else:
            order.append(m)
    return order


# -- measurement and comparison -----------------------------------------------


def project(v: FockVector, mode: int, cls) -> tuple[FockVector, float]:
    out = element(v, Tag.PROJECTOR, [mode], cls=cls)
    return out, out.norm_squared()


def contract(v: FockVector, mode: int, ref: FockVector) -> FockVector:
    """(<ref|_mode x 1)|v>; the mode is removed."""
    ax = v.axis(mode)
    data = np.tensordot(ref.data.conj(), v.data, axes=([0], [ax]))
    keep = [i for i in range(len(v.modes)) if i != ax]
    return FockVector(tuple(v.modes[i] for i in keep), tuple(v.kinds[i] for i in keep), data)


def reduced_fidelity(v: FockVector, mode: int, ref: FockVector) -> float:
    r = ref * (1.0 / math.sqrt(ref.norm_squared()))
    return contract(v, mode, r).norm_squared() / v.norm_squared()


def inner(v: FockVector, w: FockVector) -> complex:
    _check_same(v, w)
    return complex(np.vdot(v.data, w.data))


def mean_photon_number(v: FockVector, mode: int) -> float:
    ax = v.axis(mode)
    probs = np.sum(np.abs(np.moveaxis(v.data, ax, 0)) ** 2, axis=tuple(range(1, v.data.ndim)))
    n = _numbers(v.kinds[ax], v.dims[ax])
    return float(np.dot(n, probs) / probs.sum())


def is_unitary(op: FockOperator, tol: float = 1e-10) -> bool:
    m = op.matrix
    return float(np.abs(m @ m.conj().T - np.eye(m.shape[0])).max()) <= tol


@dataclass
class CrosscheckReport:
    tol: float
    deviations: dict[str, float]

    @property
    def max_deviation(self) -> float:
        return max(self.deviations.values(), default=0.0)

    @property
    def passed(self) -> bool:
        return self.max_deviation <= self.tol


def crosscheck(
    exact: SuperState | Mapping[str, SuperState],
    fock: FockVector | Mapping[str, FockVector],
    tol: float = 1e-8,
    scalars: Mapping[str, tuple[float, float]] | None = None,
) -> CrosscheckReport:
    """Compare the two engines on a set of named states.

    Reports the largest deviation between the exact and the truncated Gram
    matrices, between the embedded exact states and the Fock states, and
    between any extra (exact, fock) scalar pairs such as branch probabilities.
    """
    from . import coherent as ca

    if isinstance(exact, SuperState):
        exact, fock = {"state": exact}, {"state": fock}
    names = list(exact)
    devs: dict[str, float] = {}
    embedded = {}
    for k in names:
        f = fock[k]
        e = ca.reorder(exact[k], f.modes)
        embedded[k] = embed(e, f.cutoffs)
        devs[f"vector:{k}"] = float(np.abs(embedded[k].data - f.data).max(initial=0.0))
    for i, k in enumerate(names):
        for l in names[i:]:
            ek, el = ca.reorder(exact[k], fock[k].modes), ca.reorder(exact[l], fock[k].modes)
            if fock[k].modes != fock[l].modes:
                continue
            g_exact = ca.inner_product(ek, el)
            g_fock = inner(fock[k], fock[l])
            devs[f"overlap:{k}|{l}"] = abs(g_exact - g_fock)
    for name, (x, y) in (scalars or {}).items():
        devs[name] = abs(x - y)
    return CrosscheckReport(tol, devs)
