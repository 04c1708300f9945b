"""Exact algebra of finite superpositions of multimode coherent states.

A :class:`SuperState` is a list of terms over a fixed mode layout. CV slots hold
a complex coherent amplitude, DV slots hold one of ``H``, ``V`` or ``VAC``
(at most one photon per DV mode). Every optical element used by the
teleportation circuits maps a term to a (small) sum of terms, so states stay
inside this representation and all overlaps are evaluated in closed form.

All values are immutable; every operation returns a new state.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

MERGE_TOL = 1e-12
PRUNE_TOL = 1e-14
NORM_FLOOR = 1e-28
PROB_FLOOR = 1e-15


class ModeKind(enum.Enum):
    CV = "CV"
    DV = "DV"


class Occ(enum.Enum):
    """Occupancy of a DV mode."""

    VAC = 0
    H = 1
    V = 2

    @property
    def photons(self) -> int:
        return 0 if self is Occ.VAC else 1


class ParityClass(enum.Enum):
    VACUUM = "Vacuum"
    NONZERO = "NonZero"
    EVEN = "Even"
    ODD = "Odd"


class DVBasis(enum.Enum):
    HV = "HV"
    PLUSMINUS = "PlusMinus"


class AlgebraError(ValueError):
    """Contract violation in the coherent-state algebra."""


class LayoutError(AlgebraError):
    pass


class ModeKindError(AlgebraError):
    pass


class DegenerateStateError(AlgebraError):
    pass


class UnsupportedConfigurationError(AlgebraError):
    pass


@dataclass(frozen=True)
class ModeSpec:
    mode_id: int
    kind: ModeKind


@dataclass(frozen=True)
class Term:
    coefficient: complex
    primitives: tuple


def _slot_overlap(p, q) -> complex:
    if isinstance(p, Occ):
        return 1.0 if p is q else 0.0
    return coherent_overlap(p, q)


def coherent_overlap(alpha: complex, beta: complex) -> complex:
    """<alpha|beta> for single-mode coherent states."""
    return complex(
        np.exp(-0.5 * abs(alpha) ** 2 - 0.5 * abs(beta) ** 2 + np.conj(alpha) * beta)
    )


def _same_primitives(p: tuple, q: tuple) -> bool:
    for u, v in zip(p, q):
        if isinstance(u, Occ):
            if u is not v:
                return False
        elif abs(u.real - v.real) > MERGE_TOL or abs(u.imag - v.imag) > MERGE_TOL:
            return False
    return True


class SuperState:
    """Finite superposition of product terms over a mode layout."""

    __slots__ = ("layout", "terms", "_index")

    def __init__(self, layout: Sequence[ModeSpec], terms: Iterable[Term] = (), merge: bool = True):
        layout = tuple(layout)
        ids = [m.mode_id for m in layout]
        if len(set(ids)) != len(ids):
            raise LayoutError(f"duplicate mode ids in layout {ids}")
        terms = tuple(terms)
        for t in terms:
            if len(t.primitives) != len(layout):
                raise LayoutError("term does not match layout length")
            for spec, p in zip(layout, t.primitives):
                if (spec.kind is ModeKind.DV) != isinstance(p, Occ):
                    raise LayoutError(f"primitive {p!r} does not fit mode {spec}")
                if spec.kind is ModeKind.CV and not np.isfinite(p):
                    raise AlgebraError(f"non-finite amplitude in mode {spec.mode_id}")
        self.layout = layout
        self._index = {m.mode_id: i for i, m in enumerate(layout)}
        self.terms = _merge(terms) if merge else terms

    @property
    def mode_ids(self) -> tuple[int, ...]:
        return tuple(m.mode_id for m in self.layout)

    def slot(self, mode_id: int, kind: ModeKind | None = None) -> int:
        try:
            i = self._index[mode_id]
        except KeyError:
            raise LayoutError(f"mode {mode_id} not in layout {self.mode_ids}") from None
        if kind is not None and self.layout[i].kind is not kind:
            raise ModeKindError(f"mode {mode_id} is {self.layout[i].kind.value}, expected {kind.value}")
        return i

    def kind(self, mode_id: int) -> ModeKind:
        return self.layout[self.slot(mode_id)].kind

    def _with_terms(self, terms: Iterable[Term], layout: Sequence[ModeSpec] | None = None) -> SuperState:
        return SuperState(self.layout if layout is None else layout, terms)

    def __add__(self, other: SuperState) -> SuperState:
        _check_layouts(self, other)
        return self._with_terms(self.terms + other.terms)

    def __sub__(self, other: SuperState) -> SuperState:
        return self + (-1.0) * other

    def __mul__(self, scalar: complex) -> SuperState:
        return self._with_terms(Term(scalar * t.coefficient, t.primitives) for t in self.terms)

    __rmul__ = __mul__

    def __len__(self) -> int:
        return len(self.terms)

    def __repr__(self) -> str:
        body = " + ".join(f"({t.coefficient:.4g})|{_fmt(t.primitives)}>" for t in self.terms[:6])
        more = "" if len(self.terms) <= 6 else f" + ... ({len(self.terms)} terms)"
        return f"SuperState[{','.join(map(str, self.mode_ids))}]({body or '0'}{more})"


def _fmt(prims: tuple) -> str:
    return ",".join(p.name if isinstance(p, Occ) else f"{p:.3g}" for p in prims)


def _merge(terms: Sequence[Term]) -> tuple[Term, ...]:
    merged_prims: list[tuple] = []
    merged_coeffs: list[complex] = []
    exact: dict[tuple, int] = {}
    for t in terms:
        idx = exact.get(t.primitives)
        if idx is None:
            for j, prims in enumerate(merged_prims):
                if _same_primitives(prims, t.primitives):
                    idx = j
                    break
        if idx is None:
            exact[t.primitives] = len(merged_prims)
            merged_prims.append(t.primitives)
            merged_coeffs.append(complex(t.coefficient))
        else:
            merged_coeffs[idx] += t.coefficient
    return tuple(
        Term(c, p) for c, p in zip(merged_coeffs, merged_prims) if abs(c) >= PRUNE_TOL
    )


def _check_layouts(s1: SuperState, s2: SuperState) -> None:
    if s1.layout != s2.layout:
        raise LayoutError(f"layout mismatch: {s1.mode_ids} vs {s2.mode_ids}")


# -- constructors -------------------------------------------------------------


def coherent(mode_id: int, alpha: complex, coefficient: complex = 1.0) -> SuperState:
    return SuperState([ModeSpec(mode_id, ModeKind.CV)], [Term(coefficient, (complex(alpha),))])


def cat(mode_id: int, alpha: complex, sign: int = 1) -> SuperState:
    """Unnormalized |alpha> + sign |-alpha>."""
    return SuperState(
        [ModeSpec(mode_id, ModeKind.CV)],
        [Term(1.0, (complex(alpha),)), Term(float(sign), (complex(-alpha),))],
    )


def dv(mode_id: int, occ: Occ | Mapping[Occ, complex]) -> SuperState:
    """Single DV mode, either a basis occupancy or a superposition ``{Occ: coeff}``."""
    amps = {occ: 1.0} if isinstance(occ, Occ) else occ
    return SuperState(
        [ModeSpec(mode_id, ModeKind.DV)], [Term(c, (o,)) for o, c in amps.items()]
    )


def polarization(mode_id: int, a: complex, b: complex) -> SuperState:
    return dv(mode_id, {Occ.H: a, Occ.V: b})


def tensor(*states: SuperState) -> SuperState:
    layout: list[ModeSpec] = []
    terms = [Term(1.0, ())]
    for s in states:
        layout.extend(s.layout)
        terms = [
            Term(t.coefficient * u.coefficient, t.primitives + u.primitives)
            for t in terms
            for u in s.terms
        ]
    return SuperState(layout, terms)


def relabel(s: SuperState, mapping: Mapping[int, int]) -> SuperState:
    layout = [ModeSpec(mapping.get(m.mode_id, m.mode_id), m.kind) for m in s.layout]
    return SuperState(layout, s.terms, merge=False)


def reorder(s: SuperState, mode_ids: Sequence[int]) -> SuperState:
    """Permute the layout into the given mode order."""
    if sorted(mode_ids) != sorted(s.mode_ids):
        raise LayoutError(f"cannot reorder {s.mode_ids} into {tuple(mode_ids)}")
    perm = [s.slot(m) for m in mode_ids]
    layout = [s.layout[i] for i in perm]
    return SuperState(
        layout, (Term(t.coefficient, tuple(t.primitives[i] for i in perm)) for t in s.terms), merge=False
    )


# -- inner products -----------------------------------------------------------


def inner_product(s1: SuperState, s2: SuperState) -> complex:
    """<s1|s2>, summed over all term pairs with closed-form slot overlaps."""
    _check_layouts(s1, s2)
    total = 0j
    for t in s1.terms:
        ct = np.conj(t.coefficient)
        for u in s2.terms:
            ov = ct * u.coefficient
            for p, q in zip(t.primitives, u.primitives):
                ov *= _slot_overlap(p, q)
                if ov == 0:
                    break
            total += ov
    return complex(total)


def norm_squared(s: SuperState) -> float:
    return max(inner_product(s, s).real, 0.0)


def normalize(s: SuperState) -> SuperState:
    n2 = norm_squared(s)
    if n2 <= NORM_FLOOR:
        raise DegenerateStateError("cannot normalize a zero-norm state")
    return s * (1.0 / math.sqrt(n2))


def contract(s: SuperState, mode_id: int, ref: SuperState) -> SuperState:
    """Partial inner product (<ref|_mode x 1)|s>; the mode is removed from the layout."""
    if len(ref.layout) != 1:
        raise LayoutError("reference must be a single-mode state")
    i = s.slot(mode_id, ref.layout[0].kind)
    layout = s.layout[:i] + s.layout[i + 1:]
    terms = []
    for t in s.terms:
        for r in ref.terms:
            ov = np.conj(r.coefficient) * _slot_overlap(r.primitives[0], t.primitives[i])
            if ov != 0:
                terms.append(Term(ov * t.coefficient, t.primitives[:i] + t.primitives[i + 1:]))
    return SuperState(layout, terms)


def reduced_fidelity(s: SuperState, mode_id: int, ref: SuperState) -> float:
    """<ref|rho|ref> for the reduced state of one mode, both sides normalized."""
    r = normalize(ref)
    return norm_squared(contract(s, mode_id, r)) / norm_squared(s)


def fidelity(ref: SuperState, s: SuperState) -> float:
    return abs(inner_product(ref, s)) ** 2 / (norm_squared(ref) * norm_squared(s))


# -- optical elements ---------------------------------------------------------


def _map_slot(s: SuperState, i: int, fn) -> SuperState:
    """Rewrite slot ``i`` of every term; ``fn(prim) -> [(factor, new_prim), ...]``."""
    terms = []
    for t in s.terms:
        for factor, new in fn(t.primitives[i]):
            if factor != 0:
                terms.append(
                    Term(factor * t.coefficient, t.primitives[:i] + (new,) + t.primitives[i + 1:])
                )
    return s._with_terms(terms)


def apply_beam_splitter(s: SuperState, u: int, v: int) -> SuperState:
    """50:50 beam splitter, |a, b> -> |(a+b)/sqrt2, (a-b)/sqrt2> on modes (u, v)."""
    i, j = s.slot(u, ModeKind.CV), s.slot(v, ModeKind.CV)
    r = 1.0 / math.sqrt(2.0)
    terms = []
    for t in s.terms:
        p = list(t.primitives)
        a, b = p[i], p[j]
        p[i], p[j] = r * (a + b), r * (a - b)
        terms.append(Term(t.coefficient, tuple(p)))
    return s._with_terms(terms)


def apply_pbs(s: SuperState, in_mode: int, out_t: int, out_r: int) -> SuperState:
    """Split a polarization mode into a transmitted (H) arm and a reflected (V) arm."""
    i = s.slot(in_mode, ModeKind.DV)
    for m in (out_t, out_r):
        if m in s.mode_ids and m != in_mode:
            raise LayoutError(f"output mode {m} already in layout")
    split = {Occ.H: (Occ.H, Occ.VAC), Occ.V: (Occ.VAC, Occ.V), Occ.VAC: (Occ.VAC, Occ.VAC)}
    layout = s.layout[:i] + (ModeSpec(out_t, ModeKind.DV), ModeSpec(out_r, ModeKind.DV)) + s.layout[i + 1:]
    terms = [
        Term(t.coefficient, t.primitives[:i] + split[t.primitives[i]] + t.primitives[i + 1:])
        for t in s.terms
    ]
    return SuperState(layout, terms)


def recombine_pbs(s: SuperState, arm_t: int, arm_r: int, out_mode: int) -> SuperState:
    """Inverse PBS: merge an H arm and a V arm back into one polarization mode.

    The second output port of the recombining PBS is always empty for the
    inputs accepted here and is dropped.
    """
    i, j = s.slot(arm_t, ModeKind.DV), s.slot(arm_r, ModeKind.DV)
    merge = {
        (Occ.H, Occ.VAC): Occ.H,
        (Occ.VAC, Occ.V): Occ.V,
        (Occ.VAC, Occ.VAC): Occ.VAC,
    }
    lo, hi = sorted((i, j))
    layout = [m for k, m in enumerate(s.layout) if k != hi]
    layout[lo] = ModeSpec(out_mode, ModeKind.DV)
    if out_mode in s.mode_ids and out_mode not in (arm_t, arm_r):
        raise LayoutError(f"output mode {out_mode} already in layout")
    terms = []
    for t in s.terms:
        key = (t.primitives[i], t.primitives[j])
        if key not in merge:
            raise UnsupportedConfigurationError(
                f"arms ({arm_t}, {arm_r}) carry {key[0].name}/{key[1].name}; "
                "recombination would leave a photon in the dropped port or put two photons in one mode"
            )
        p = list(t.primitives)
        p[lo] = merge[key]
        del p[hi]
        terms.append(Term(t.coefficient, tuple(p)))
    return SuperState(layout, terms)


def drop_vacuum_mode(s: SuperState, mode_id: int) -> SuperState:
    i = s.slot(mode_id)
    vac = Occ.VAC if s.layout[i].kind is ModeKind.DV else 0j
    terms = []
    for t in s.terms:
        if t.primitives[i] != vac:
            raise UnsupportedConfigurationError(f"mode {mode_id} is not in vacuum")
        terms.append(Term(t.coefficient, t.primitives[:i] + t.primitives[i + 1:]))
    return SuperState(s.layout[:i] + s.layout[i + 1:], terms)


def apply_cross_kerr(s: SuperState, cv_mode: int, fock_arm: int, theta: float) -> SuperState:
    """exp(-i theta n_cv n_arm): the coherent amplitude picks up exp(-i n theta)."""
    i = s.slot(cv_mode, ModeKind.CV)
    k = s.slot(fock_arm, ModeKind.DV)
    terms = []
    for t in s.terms:
        n = t.primitives[k].photons
        p = list(t.primitives)
        p[i] = p[i] * complex(np.exp(-1j * n * theta)) if n else p[i]
        terms.append(Term(t.coefficient, tuple(p)))
    return s._with_terms(terms)


def displacement_phase(alpha: complex, delta: complex) -> complex:
    """Phase of D(delta)|alpha> = phase * |alpha + delta>.

    Follows D(delta) D(alpha) = exp((delta alpha* - delta* alpha) / 2) D(alpha + delta),
    the sign confirmed against the truncated-Fock matrix exponential.
    """
    return complex(np.exp(0.5 * (delta * np.conj(alpha) - np.conj(delta) * alpha)))


def apply_displacement(s: SuperState, cv_mode: int, delta: complex) -> SuperState:
    i = s.slot(cv_mode, ModeKind.CV)
    return _map_slot(s, i, lambda a: [(displacement_phase(a, delta), a + delta)])


def apply_phase_shift(s: SuperState, cv_mode: int, phi: float) -> SuperState:
    i = s.slot(cv_mode, ModeKind.CV)
    rot = complex(np.exp(1j * phi))
    return _map_slot(s, i, lambda a: [(1.0, a * rot)])


def apply_polarization_unitary(s: SuperState, dv_mode: int, u: np.ndarray) -> SuperState:
    """2x2 unitary on the (H, V) subspace of a DV mode; vacuum is left alone."""
    i = s.slot(dv_mode, ModeKind.DV)
    u = np.asarray(u, dtype=complex)
    basis = (Occ.H, Occ.V)

    def act(p):
        if p is Occ.VAC:
            return [(1.0, p)]
        col = basis.index(p)
        return [(u[row, col], basis[row]) for row in range(2)]

    return _map_slot(s, i, act)


# -- measurements -------------------------------------------------------------


def _project_cv(a: complex, cls: ParityClass):
    vac = coherent_overlap(0j, a)
    if cls is ParityClass.VACUUM:
        return [(vac, 0j)]
    if cls is ParityClass.NONZERO:
        return [(1.0, a), (-vac, 0j)]
    sign = 1.0 if cls is ParityClass.EVEN else -1.0
    return [(0.5, a), (0.5 * sign, -a)]


def project(s: SuperState, cv_mode: int, cls: ParityClass) -> tuple[SuperState, float]:
    """Apply a photon-number class projector to a CV mode.

    Returns the unnormalized projected state and its squared norm (the outcome
    probability when ``s`` is normalized). Probabilities below ``PROB_FLOOR``
    are reported as exactly 0.
    """
    i = s.slot(cv_mode, ModeKind.CV)
    out = _map_slot(s, i, lambda a: _project_cv(a, cls))
    p = norm_squared(out)
    return out, (p if p >= PROB_FLOOR else 0.0)


_PM = {
    "+": {Occ.H: 1 / math.sqrt(2), Occ.V: 1 / math.sqrt(2)},
    "-": {Occ.H: 1 / math.sqrt(2), Occ.V: -1 / math.sqrt(2)},
}


def dv_basis_state(mode_id: int, basis: DVBasis, outcome: str) -> SuperState:
    if basis is DVBasis.HV:
        if outcome not in ("H", "V"):
            raise AlgebraError(f"outcome {outcome!r} not in H/V basis")
        return dv(mode_id, Occ[outcome])
    if outcome not in _PM:
        raise AlgebraError(f"outcome {outcome!r} not in +/- basis")
    return dv(mode_id, _PM[outcome])


def project_dv(
    s: SuperState, dv_mode: int, basis: DVBasis, outcome: str
) -> tuple[SuperState, float]:
    """Project a DV mode onto |H>/|V> or |+>/|->; the mode stays in the layout."""
    i = s.slot(dv_mode, ModeKind.DV)
    ref = dv_basis_state(dv_mode, basis, outcome)
    amps = {t.primitives[0]: t.coefficient for t in ref.terms}

    def act(p):
        if p is Occ.VAC:
            return []
        c = np.conj(amps.get(p, 0.0))
        return [(c * amps[o], o) for o in amps]

    out = _map_slot(s, i, act)
    p = norm_squared(out)
    return out, (p if p >= PROB_FLOOR else 0.0)


# -- photon counting ----------------------------------------------------------


def count_cutoff(m: float) -> int:
    """Photon-number cutoff for a mode whose largest |amplitude|^2 is ``m``."""
    return int(math.ceil(m + 8.0 * math.sqrt(m) + 10.0))


def photon_number_distribution(s: SuperState, cv_mode: int, n_max: int | None = None) -> np.ndarray:
    """Photon-number distribution of one CV mode's reduced state.

    Evaluated from pairwise coherent overlaps of the other modes and the
    closed-form number amplitudes <n|a> = exp(-|a|^2/2) a^n / sqrt(n!).
    """
    i = s.slot(cv_mode, ModeKind.CV)
    amps = [t.primitives[i] for t in s.terms]
    if n_max is None:
        n_max = count_cutoff(max((abs(a) ** 2 for a in amps), default=0.0))
    n = np.arange(n_max + 1)
    log_fact = np.array([math.lgamma(k + 1) for k in n])

    def number_amps(a: complex) -> np.ndarray:
        if a == 0:
            out = np.zeros(n_max + 1, dtype=complex)
            out[0] = 1.0
            return out
        mag = np.exp(n * math.log(abs(a)) - 0.5 * log_fact - 0.5 * abs(a) ** 2)
        return mag * np.exp(1j * n * np.angle(a))

    vecs = [t.coefficient * number_amps(a) for t, a in zip(s.terms, amps)]
    rests = [t.primitives[:i] + t.primitives[i + 1:] for t in s.terms]
    pmf = np.zeros(n_max + 1)
    for k, (vk, rk) in enumerate(zip(vecs, rests)):
        for l, (vl, rl) in enumerate(zip(vecs, rests)):
            ov = 1.0 + 0j
            for p, q in zip(rk, rl):
                ov *= _slot_overlap(p, q)
                if ov == 0:
                    break
            if ov != 0:
                pmf += (ov * np.conj(vk) * vl).real
    pmf = np.clip(pmf, 0.0, None)
    total = pmf.sum()
    if total <= NORM_FLOOR:
        raise DegenerateStateError("zero-norm state has no photon-number distribution")
    return pmf / total


def sample_photon_count(s: SuperState, cv_mode: int, rng: np.random.Generator) -> int:
    pmf = photon_number_distribution(s, cv_mode)
    return int(rng.choice(len(pmf), p=pmf))
