"""States in the joint number basis: coherent states, spectral averaging,
Gram normalization, and exact expectation values.

Time averaging over the period box is implemented as a spectral projection:
averaging multiplies coefficient k by the mean of e^{i tau.(Lambda - spec(k))/hbar}
over the box, which is 1 exactly when every component eigenvalue of k matches
the target (the differences are integer multiples of 2 pi / T_n per axis) and
0 otherwise. So the average keeps one joint eigenspace and kills the rest;
no quadrature is involved (a small-grid quadrature equivalence is exercised
in tests). Membership tests are pure integer arithmetic on the lattice.

Expectations are exact matrix-element sums: polynomial symbols through
Weyl-symmetrized ladder matrices with enough padding that truncation never
touches the retained block, characters through displacement-operator matrix
elements. Product states (coherent) keep per-mode factor vectors and use
factorized fast paths; projected states are sparse coefficient maps.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, replace
from fractions import Fraction
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy.special import eval_genlaguerre, gammaln

from .errors import (
    BelowConductorError,
    DomainError,
    EmptyProjectionError,
    ResourceLimitError,
    ValidationError,
)
from .freqarith import (
    GenCoords,
    HarmonicDecomposition,
    _span_solver,
    conductor,
    semigroup_witness,
)
from .phasespace import PhasePoint
from .spectral import (
    TargetEigenvalue,
    component_eigenvalue,
    component_ratio,
    select_target,
)
from .symbols import Symbol

_MODE_CUTOFF_CAP = 20000
_MATERIALIZE_CAP = 1 << 20
_CHUNK = 1 << 18

FockIndex = tuple[int, ...]


@dataclass(frozen=True)
class FockState:
    """Immutable state; either per-mode factors (product) or a sparse map.

    factors[j] is mode j's coefficient vector for a product state; coeffs
    maps lattice indices to amplitudes otherwise. tail_bound is the mass
    the construction may have discarded.
    """

    hbar: float
    dims: int
    cutoff: tuple[int, ...]
    tail_bound: float
    coeffs: dict[FockIndex, complex] | None = None
    factors: tuple[np.ndarray, ...] | None = None

    def __post_init__(self):
        if self.hbar <= 0:
            raise ValidationError("hbar must be positive")
        if (self.coeffs is None) == (self.factors is None):
            raise ValidationError("exactly one representation must be present")
        if len(self.cutoff) != self.dims:
            raise ValidationError("cutoff needs one entry per mode")

    @property
    def is_product(self) -> bool:
        return self.factors is not None

    def norm(self) -> float:
        if self.is_product:
            return float(
                math.prod(float(np.linalg.norm(f)) for f in self.factors)
            )
        return math.sqrt(sum(abs(c) ** 2 for c in self.coeffs.values()))

    def coefficient(self, k: Sequence[int]) -> complex:
        k = tuple(int(v) for v in k)
        if self.is_product:
            out = 1.0 + 0j
            for j, f in enumerate(self.factors):
                if k[j] >= len(f):
                    return 0j
                out *= complex(f[k[j]])
            return out
        return complex(self.coeffs.get(k, 0j))

    def scaled(self, factor: complex) -> "FockState":
        if self.is_product:
            fs = list(np.array(f) for f in self.factors)
            fs[0] = fs[0] * factor
            return FockState(
                self.hbar, self.dims, self.cutoff, self.tail_bound, None, tuple(fs)
            )
        return FockState(
            self.hbar,
            self.dims,
            self.cutoff,
            self.tail_bound,
            {k: c * factor for k, c in self.coeffs.items()},
            None,
        )


def _sparse_items(state: FockState):
    if not state.is_product:
        return list(state.coeffs.items())
    total = math.prod(len(f) for f in state.factors)
    if total > _MATERIALIZE_CAP:
        raise ResourceLimitError(
            f"refusing to materialize a product state with {total} coefficients"
        )
    items = []
    for k in itertools.product(*(range(len(f)) for f in state.factors)):
        c = 1.0 + 0j
        for j, f in enumerate(state.factors):
            c *= complex(f[k[j]])
        if c != 0:
            items.append((k, c))
    return items


# ---------------------------------------------------------------------------
# coherent states

def coherent(z0: PhasePoint, hbar: float, tail_tol: float = 1e-12) -> FockState:
    """Product coherent state centered at z0.

    Mode j carries alpha_j = (x_j + i xi_j)/sqrt(2 hbar); the per-mode cutoff
    is the smallest K with Poisson(|alpha|^2) tail below tail_tol / d, and
    coefficients are assembled in log space so no factorial ever overflows.
    """
    if not 0 < tail_tol < 1:
        raise ValidationError("tail_tol must lie in (0, 1)")
    if hbar <= 0:
        raise ValidationError("hbar must be positive")
    d = z0.dims
    per_mode = tail_tol / d
    factors = []
    for j in range(d):
        alpha = complex(z0.x[j], z0.xi[j]) / math.sqrt(2.0 * hbar)
        mu = abs(alpha) ** 2
        if mu == 0.0:
            factors.append(np.array([1.0 + 0j]))
            continue
        # Poisson cdf by multiplicative recurrence; K = first index whose
        # remaining tail drops below the budget
        k_max = int(mu + 12.0 * math.sqrt(mu) + 25.0)
        if k_max > _MODE_CUTOFF_CAP:
            raise ResourceLimitError(
                f"mode {j}: |alpha|^2 = {mu:.3g} needs cutoff beyond {_MODE_CUTOFF_CAP}"
            )
        ks = np.arange(k_max + 1)
        logpmf = -mu + ks * math.log(mu) - gammaln(ks + 1)
        pmf = np.exp(logpmf)
        tail = 1.0 - np.cumsum(pmf)
        hit = np.nonzero(tail < per_mode)[0]
        if len(hit) == 0:
            raise ResourceLimitError(
                f"mode {j}: Poisson tail did not reach {per_mode:.3g} by k={k_max}"
            )
        K = int(hit[0])
        amp = np.exp(0.5 * logpmf[: K + 1])
        phase = np.exp(1j * np.angle(alpha) * ks[: K + 1])
        factors.append(amp * phase)
    return FockState(
        hbar=hbar,
        dims=d,
        cutoff=tuple(len(f) - 1 for f in factors),
        tail_bound=tail_tol,
        factors=tuple(factors),
    )


# ---------------------------------------------------------------------------
# inner products

def inner(bra: FockState, ket: FockState) -> complex:
    """<bra, ket> with the physics convention (antilinear in bra)."""
    if bra.hbar != ket.hbar or bra.dims != ket.dims:
        raise ValidationError("states live in different spaces")
    if bra.is_product and ket.is_product:
        out = 1.0 + 0j
        for fa, fb in zip(bra.factors, ket.factors):
            L = min(len(fa), len(fb))
            out *= complex(np.vdot(fa[:L], fb[:L]))
        return out
    if bra.is_product:
        total = 0j
        for k, c in ket.coeffs.items():
            total += np.conjugate(bra.coefficient(k)) * c
        return complex(total)
    if ket.is_product:
        return complex(np.conjugate(inner(ket, bra)))
    if len(bra.coeffs) > len(ket.coeffs):
        return complex(np.conjugate(inner(ket, bra)))
    total = 0j
    for k, c in bra.coeffs.items():
        other = ket.coeffs.get(k)
        if other is not None:
            total += np.conjugate(c) * other
    return complex(total)


def norm(state: FockState) -> float:
    return state.norm()


# ---------------------------------------------------------------------------
# spectral averaging

def _project_conditions(
    state: FockState, conditions: Sequence[tuple[tuple[int, ...], int]]
) -> dict[FockIndex, complex]:
    """Keep coefficients whose index satisfies ivec.k == rhs for all conditions."""
    if state.is_product:
        sizes = [len(f) for f in state.factors]
        total = math.prod(sizes)
        kept: dict[FockIndex, complex] = {}
        for start in range(0, total, _CHUNK):
            idx = np.arange(start, min(start + _CHUNK, total))
            coords = np.unravel_index(idx, sizes)
            ok = np.ones(len(idx), dtype=bool)
            for ivec, rhs in conditions:
                dot = np.zeros(len(idx), dtype=np.int64)
                for j, iv in enumerate(ivec):
                    if iv:
                        dot += iv * coords[j]
                ok &= dot == rhs
            if not ok.any():
                continue
            sel = [c[ok] for c in coords]
            amp = np.ones(int(ok.sum()), dtype=complex)
            for j, f in enumerate(state.factors):
                amp *= f[sel[j]]
            for row, c in zip(zip(*(s.tolist() for s in sel)), amp.tolist()):
                kept[tuple(row)] = c
        return kept
    kept = {}
    for k, c in state.coeffs.items():
        if all(
            sum(iv * kj for iv, kj in zip(ivec, k) if iv) == rhs
            for ivec, rhs in conditions
        ):
            kept[k] = c
    return kept


def _nearest_misses(state: FockState, conditions, count: int = 3):
    """Support points closest to satisfying the conditions, for diagnostics."""
    try:
        items = _sparse_items(state)
    except ResourceLimitError:
        return ()
    scored = []
    for k, c in items:
        miss = sum(
            abs(sum(iv * kj for iv, kj in zip(ivec, k)) - rhs)
            for ivec, rhs in conditions
        )
        scored.append((miss, -abs(c), k))
    scored.sort()
    return tuple(k for _, _, k in scored[:count])


def average_project(state: FockState, target: TargetEigenvalue) -> FockState:
    """Time average over the period box, realized as a spectral projection.

    Keeps exactly the lattice points whose component eigenvalues all equal
    the target's (integer test int_weights_n . k == sign_n N_n); the result
    is an exact joint eigenvector.
    """
    if state.hbar != target.hbar:
        raise ValidationError("state and target disagree on hbar")
    decomp = target.decomposition
    if state.dims != decomp.dims:
        raise ValidationError("state and target disagree on mode count")
    conditions = [
        (comp.int_weights, target.signs[n] * target.N[n])
        for n, comp in enumerate(decomp.components)
    ]
    kept = _project_conditions(state, conditions)
    if not kept:
        nearest = _nearest_misses(state, conditions)
        raise EmptyProjectionError(
            "projection onto the joint eigenspace is zero; nearest lattice "
            f"points in the state support: {list(nearest)}",
            nearest=nearest,
        )
    return FockState(
        hbar=state.hbar,
        dims=state.dims,
        cutoff=state.cutoff,
        tail_bound=state.tail_bound,
        coeffs=kept,
    )


# ---------------------------------------------------------------------------
# Gram data at a point

@dataclass(frozen=True)
class TildeComponent:
    """Effective component l of the reduced system at z0.

    weights are the projection of component l's weights onto the excited
    modes; v is the effective frequency v_l + sum_n b_{n,l} v_n folding in
    the components whose projected weights depend on the retained ones.
    """

    index: int
    v: float
    coords: GenCoords
    weights: tuple[Fraction, ...]
    int_weights: tuple[int, ...]
    period: float
    zero_point: float
    zero_point_q: Fraction


@dataclass(frozen=True)
class GramResult:
    """Gram matrix of the energy gradients at z0 and the reduced system."""

    rank_d0: int
    excited: tuple[bool, ...]
    retained: tuple[int, ...]
    transfer: tuple[tuple[Fraction, ...], ...]  # rows: dropped n -> b_{n,l}
    dropped: tuple[int, ...]
    tilde: tuple[TildeComponent, ...]
    matrix: np.ndarray
    det: float
    volume: float


def _projected_weights(comp, excited) -> tuple[Fraction, ...]:
    return tuple(w if e else Fraction(0) for w, e in zip(comp.weights, excited))


def gram(z0: PhasePoint, decomp: HarmonicDecomposition) -> GramResult:
    """Rank and Gram matrix of {grad Hcal_n(z0)}, plus the reduced system.

    The zero pattern is exact: mode j counts as excited iff x_j or xi_j is
    nonzero. The rank over Q of the projected weight vectors is computed by
    exact row reduction; when it is below d_omega the retained components
    absorb the dropped ones through rational transfer coefficients b, giving
    effective frequencies, periods, and the reduced Gram matrix.
    """
    if z0.dims != decomp.dims:
        raise ValidationError("point dimension does not match the decomposition")
    excited = tuple(xv != 0.0 or pv != 0.0 for xv, pv in zip(z0.x, z0.xi))
    projected = [_projected_weights(c, excited) for c in decomp.components]
    # first maximal independent subset of the projected weights, exact
    echelon: list[tuple[int, list[Fraction]]] = []
    retained: list[int] = []
    for n, row in enumerate(projected):
        vec = list(row)
        for lead, erow in echelon:
            c = vec[lead]
            if c:
                vec = [a - c * b for a, b in zip(vec, erow)]
        lead = next((i for i, v in enumerate(vec) if v), None)
        if lead is None:
            continue
        inv = vec[lead]
        echelon.append((lead, [v / inv for v in vec]))
        echelon.sort(key=lambda e: e[0])
        retained.append(n)
    d0 = len(retained)
    dropped = tuple(n for n in range(decomp.d_omega) if n not in retained)
    transfer = []
    if dropped:
        solve = _span_solver([projected[n] for n in retained])
        for n in dropped:
            b = solve(projected[n])
            if b is None:  # impossible: retained rows span all projections
                raise ValidationError("projected weights escaped the retained span")
            transfer.append(b)
    # effective frequency of retained l folds in every dropped n via b_{n,l}
    tilde = []
    h2 = [x * x + xi * xi for x, xi in zip(z0.x, z0.xi)]  # 2 H_j(z0)
    for pos, l in enumerate(retained):
        comp_l = decomp.components[l]
        coords = list(comp_l.pivot_coords)
        for row, n in zip(transfer, dropped):
            bnl = row[pos]
            if bnl:
                coords = [
                    a + bnl * c
                    for a, c in zip(coords, decomp.components[n].pivot_coords)
                ]
        coords = tuple(coords)
        v = decomp.spec.basis.evaluate_float(coords)
        weights = projected[l]
        nz = [abs(w) for w in weights if w]
        floor = min(nz)
        mult = 1
        for w in weights:
            if w:
                mult = math.lcm(mult, (w / floor).denominator)
        int_weights = tuple(int(mult * w / floor) for w in weights)
        trace = sum(weights, Fraction(0))
        tilde.append(
            TildeComponent(
                index=l,
                v=v,
                coords=coords,
                weights=weights,
                int_weights=int_weights,
                period=2.0 * math.pi * mult / (abs(v) * float(floor)),
                zero_point=v * float(trace),
                zero_point_q=trace,
            )
        )
    matrix = np.zeros((d0, d0))
    for a in range(d0):
        for b_ in range(d0):
            matrix[a, b_] = sum(
                tilde[a].v
                * float(tilde[a].weights[j])
                * tilde[b_].v
                * float(tilde[b_].weights[j])
                * h2[j]
                for j in range(decomp.dims)
            )
    det = float(np.linalg.det(matrix)) if d0 else 1.0
    volume = math.prod(t.period for t in tilde) if d0 else 1.0
    return GramResult(
        rank_d0=d0,
        excited=excited,
        retained=tuple(retained),
        transfer=tuple(transfer),
        dropped=dropped,
        tilde=tuple(tilde),
        matrix=matrix,
        det=det,
        volume=volume,
    )


# ---------------------------------------------------------------------------
# the normalized construction

@dataclass(frozen=True)
class ScarState:
    """Normalized joint eigenstate concentrated on the torus through z0."""

    state: FockState
    target: TargetEigenvalue
    z0: PhasePoint
    c_hbar: float
    rank_d0: int
    gram_det: float
    volume: float
    mass: float


def _retarget(
    decomp: HarmonicDecomposition, target: TargetEigenvalue, k0: FockIndex
) -> TargetEigenvalue:
    """Re-anchor a target at the joint eigenvalue actually hit by k0.

    The reduced ladders fix the component eigenvalues only through the
    excited sublattice, so the value reached can differ from the one
    select_target aimed at; the state itself is the witness.
    """
    d = decomp.d_omega
    ratios = tuple(component_ratio(decomp, k0, n) for n in range(d))
    lam = tuple(component_eigenvalue(decomp, k0, n, target.hbar) for n in range(d))
    dots = [
        sum(iv * kj for iv, kj in zip(comp.int_weights, k0))
        for comp in decomp.components
    ]
    return replace(
        target,
        N=tuple(abs(dt) for dt in dots),
        signs=tuple(1 if dt >= 0 else -1 for dt in dots),
        lam=lam,
        lambda_total=sum(lam),
        ratios_q=ratios,
        witnesses=(k0,) * d,
    )


def _tilde_conditions(g: GramResult, z0: PhasePoint, hbar: float):
    """Ladder targets for the reduced system: one condition per retained l."""
    h = z0.mode_energies()
    conditions = []
    for t in g.tilde:
        e_t = t.v * sum(float(w) * hj for w, hj in zip(t.weights, h))
        if e_t == 0.0:
            sigma, big_n = 1, 0
        else:
            sigma = 1 if e_t > 0 else -1
            scale = t.period / (2.0 * math.pi)
            big_n = math.ceil(sigma * scale * (e_t / hbar - t.zero_point / 2.0))
            cond = conductor(t.int_weights, sigma)
            if big_n < cond:
                raise BelowConductorError(
                    f"reduced component {t.index}: ladder index {big_n} below "
                    f"conductor {cond}; decrease hbar"
                )
        if semigroup_witness(t.int_weights, sigma, big_n) is None:
            raise DomainError(
                f"reduced component {t.index}: no witness for ladder index {big_n}"
            )
        conditions.append((t.int_weights, sigma * big_n))
    return conditions


def normalize_scar(
    decomp: HarmonicDecomposition,
    z0: PhasePoint,
    E: Sequence[float],
    hbar: float,
    tail_tol: float = 1e-12,
) -> ScarState:
    """coherent -> average over the period box -> L2 normalize.

    Reports the diagnostic constant c_hbar = volume * sqrt(det G) * mass /
    (4 pi hbar)^{d0/2}, where mass is the kept squared norm; the reduced
    (tilde) system supplies the projection conditions and normalization
    whenever the gradient rank d0 falls below d_omega, and a point with no
    excited mode at all degenerates to the ground state with c_hbar = 1 by
    convention.
    """
    target = select_target(decomp, E, hbar)
    g = gram(z0, decomp)
    psi = coherent(z0, hbar, tail_tol)
    if g.rank_d0 == 0:
        if not psi.is_product or any(len(f) > 1 for f in psi.factors):
            raise ValidationError("rank 0 requires the unexcited ground state")
        state = FockState(
            hbar=hbar,
            dims=decomp.dims,
            cutoff=psi.cutoff,
            tail_bound=tail_tol,
            coeffs={(0,) * decomp.dims: 1.0 + 0j},
        )
        return ScarState(
            state=state,
            target=_retarget(decomp, target, (0,) * decomp.dims),
            z0=z0,
            c_hbar=1.0,
            rank_d0=0,
            gram_det=g.det,
            volume=g.volume,
            mass=psi.norm() ** 2,
        )
    if g.rank_d0 == decomp.d_omega:
        projected = average_project(psi, target)
        volume = math.prod(c.period for c in decomp.components)
    else:
        conditions = _tilde_conditions(g, z0, hbar)
        kept = _project_conditions(psi, conditions)
        if not kept:
            nearest = _nearest_misses(psi, conditions)
            raise EmptyProjectionError(
                "reduced projection is zero; nearest support points: "
                f"{list(nearest)}",
                nearest=nearest,
            )
        projected = FockState(
            hbar=hbar,
            dims=decomp.dims,
            cutoff=psi.cutoff,
            tail_bound=tail_tol,
            coeffs=kept,
        )
        volume = g.volume
        target = _retarget(decomp, target, min(kept))
    mass = projected.norm() ** 2
    c_hbar = (
        volume
        * math.sqrt(max(g.det, 0.0))
        * mass
        / (4.0 * math.pi * hbar) ** (g.rank_d0 / 2.0)
    )
    state = projected.scaled(1.0 / projected.norm())
    return ScarState(
        state=state,
        target=target,
        z0=z0,
        c_hbar=float(c_hbar),
        rank_d0=g.rank_d0,
        gram_det=g.det,
        volume=volume,
        mass=mass,
    )


# ---------------------------------------------------------------------------
# ladder matrices for expectations

@lru_cache(maxsize=512)
def _ladder(size: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1.0, size)), k=1)


@lru_cache(maxsize=4096)
def _weyl_mode_matrix(a: int, b: int, hbar: float, size: int) -> np.ndarray:
    """Weyl quantization of x^a xi^b on one mode, exact on the size block.

    Built at size + a + b so every product entry within the retained block
    is free of truncation; the McCoy identity gives the symmetrized order:
    Op(x^a xi^b) = 2^{-a} sum_s C(a, s) X^s Xi^b X^{a-s}.
    """
    n = size + a + b
    lower = _ladder(n)
    c = math.sqrt(hbar / 2.0)
    X = c * (lower + lower.T)
    Xi = 1j * c * (lower.T - lower)
    Xi_b = np.linalg.matrix_power(Xi.astype(complex), b)
    out = np.zeros((n, n), dtype=complex)
    for s in range(a + 1):
        left = np.linalg.matrix_power(X.astype(complex), s)
        right = np.linalg.matrix_power(X.astype(complex), a - s)
        out += math.comb(a, s) * (left @ Xi_b @ right)
    out /= 2.0**a
    return out[:size, :size]


def _displacement_matrix(beta: complex, rows: int, cols: int) -> np.ndarray:
    """<m|D(beta)|n> for m < rows, n < cols; exact per element."""
    m = np.arange(rows)[:, None]
    n = np.arange(cols)[None, :]
    p = np.minimum(m, n)
    q = np.abs(m - n)
    mag2 = abs(beta) ** 2
    lag = eval_genlaguerre(p, q, mag2)
    pref = np.exp(0.5 * (gammaln(p + 1) - gammaln(p + q + 1)) - mag2 / 2.0)
    base = np.where(m >= n, beta, -np.conjugate(beta)) ** q
    return pref * lag * base


def _char_betas(w: Sequence[float], hbar: float, d: int) -> list[complex]:
    c = math.sqrt(hbar / 2.0)
    return [-c * complex(w[j], w[d + j]) for j in range(d)]


# ---------------------------------------------------------------------------
# expectation values

def _poly_product(bra: FockState, ket: FockState, poly) -> complex:
    d = bra.dims
    total = 0j
    for mono, coeff in poly.items():
        term = coeff
        for j in range(d):
            a, b = mono[j], mono[d + j]
            fa, fb = bra.factors[j], ket.factors[j]
            if a == 0 and b == 0:
                L = min(len(fa), len(fb))
                term *= complex(np.vdot(fa[:L], fb[:L]))
            else:
                size = max(len(fa), len(fb))
                W = _weyl_mode_matrix(a, b, bra.hbar, size)
                term *= complex(
                    np.conjugate(fa) @ W[: len(fa), : len(fb)] @ fb
                )
            if term == 0:
                break
        total += term
    return total


def _apply_monomial(coeffs: dict, mono, hbar: float, dims: int) -> dict:
    out = coeffs
    for j in range(dims):
        a, b = mono[j], mono[dims + j]
        if a == 0 and b == 0:
            continue
        kmax = max(k[j] for k in out) if out else 0
        size = kmax + a + b + 1
        W = _weyl_mode_matrix(a, b, hbar, size)
        cols: dict[int, list[tuple[int, complex]]] = {}
        nxt: dict[FockIndex, complex] = {}
        for k, c in out.items():
            col = k[j]
            hits = cols.get(col)
            if hits is None:
                column = W[:, col]
                hits = [
                    (int(m), complex(column[m]))
                    for m in np.nonzero(np.abs(column) > 0)[0]
                ]
                cols[col] = hits
            for m, wv in hits:
                key = k[:j] + (m,) + k[j + 1 :]
                nxt[key] = nxt.get(key, 0j) + wv * c
        out = nxt
    return out


def _poly_sparse(bra: FockState, ket_coeffs: dict, poly, hbar: float, dims: int) -> complex:
    total = 0j
    for mono, coeff in poly.items():
        applied = _apply_monomial(ket_coeffs, mono, hbar, dims)
        acc = 0j
        for k, c in applied.items():
            acc += np.conjugate(bra.coefficient(k)) * c
        total += coeff * acc
    return total


def _char_product(bra: FockState, ket: FockState, chars, hbar: float, d: int) -> complex:
    total = 0j
    for coeff, w in chars:
        betas = _char_betas(w, hbar, d)
        term = coeff
        for j in range(d):
            fa, fb = bra.factors[j], ket.factors[j]
            D = _displacement_matrix(betas[j], len(fa), len(fb))
            term *= complex(np.conjugate(fa) @ D @ fb)
        total += term
    return total


def _char_sparse(bra: FockState, ket_coeffs: dict, chars, hbar: float, d: int) -> complex:
    keys = list(ket_coeffs.keys())
    vals = np.array([ket_coeffs[k] for k in keys])
    kk = np.array(keys, dtype=int).reshape(len(keys), d)
    total = 0j
    if bra.is_product:
        for coeff, w in chars:
            betas = _char_betas(w, hbar, d)
            term = np.ones(len(keys), dtype=complex)
            for j in range(d):
                fa = bra.factors[j]
                D = _displacement_matrix(betas[j], len(fa), int(kk[:, j].max()) + 1)
                row = np.conjugate(fa) @ D
                term *= row[kk[:, j]]
            total += coeff * np.sum(term * vals)
        return complex(total)
    bkeys = list(bra.coeffs.keys())
    bvals = np.array([bra.coeffs[k] for k in bkeys])
    mm = np.array(bkeys, dtype=int).reshape(len(bkeys), d)
    if len(bkeys) * len(keys) > 1 << 24:
        raise ResourceLimitError("character expectation between these states is too large")
    for coeff, w in chars:
        betas = _char_betas(w, hbar, d)
        block = np.ones((len(bkeys), len(keys)), dtype=complex)
        for j in range(d):
            D = _displacement_matrix(
                betas[j], int(mm[:, j].max()) + 1, int(kk[:, j].max()) + 1
            )
            block *= D[np.ix_(mm[:, j], kk[:, j])]
        total += coeff * complex(np.conjugate(bvals) @ block @ vals)
    return complex(total)


def expectation(bra: FockState, ket: FockState, a: Symbol) -> complex:
    """<bra, Op_hbar(a) ket>, exact up to the states' tail bounds."""
    if bra.hbar != ket.hbar or bra.dims != ket.dims:
        raise ValidationError("states live in different spaces")
    if a.dims != bra.dims:
        raise ValidationError("symbol mode count does not match the states")
    hbar = bra.hbar
    d = bra.dims
    total = 0j
    if a.poly:
        if bra.is_product and ket.is_product:
            total += _poly_product(bra, ket, a.poly)
        elif not ket.is_product:
            total += _poly_sparse(bra, ket.coeffs, a.poly, hbar, d)
        else:
            # ket is product, bra sparse: flip through Op(conj a) = Op(a)^dagger
            flipped = _poly_sparse(
                ket, bra.coeffs, {m: c.conjugate() for m, c in a.poly.items()}, hbar, d
            )
            total += np.conjugate(flipped)
    if a.chars:
        if bra.is_product and ket.is_product:
            total += _char_product(bra, ket, a.chars, hbar, d)
        elif not ket.is_product:
            total += _char_sparse(bra, ket.coeffs, a.chars, hbar, d)
        else:
            conj_chars = tuple(
                (c.conjugate(), tuple(-v for v in w)) for c, w in a.chars
            )
            flipped = _char_sparse(ket, bra.coeffs, conj_chars, hbar, d)
            total += np.conjugate(flipped)
    return complex(total)


# ---------------------------------------------------------------------------
# evolution (convention pinning) and persistence

def evolve(state: FockState, decomp: HarmonicDecomposition, t: float) -> FockState:
    """e^{-i t Op(H)/hbar} state: phase e^{-i t (omega.k + |omega|_1/2)} per index."""
    omega = decomp.spec.numeric
    half = sum(omega) / 2.0
    if state.is_product:
        fs = []
        for j, f in enumerate(state.factors):
            ks = np.arange(len(f))
            fs.append(f * np.exp(-1j * t * omega[j] * ks))
        fs[0] = fs[0] * np.exp(-1j * t * half)
        return FockState(
            state.hbar, state.dims, state.cutoff, state.tail_bound, None, tuple(fs)
        )
    coeffs = {
        k: c * np.exp(-1j * t * (sum(w * kj for w, kj in zip(omega, k)) + half))
        for k, c in state.coeffs.items()
    }
    return FockState(
        state.hbar, state.dims, state.cutoff, state.tail_bound, coeffs, None
    )


def dump_state(f, state: FockState, config_digest: str = "") -> None:
    from .reporting import write_csv

    items = sorted(_sparse_items(state))
    d = state.dims
    columns = [f"k{j + 1}" for j in range(d)] + ["re", "im"]
    rows = [list(k) + [c.real, c.imag] for k, c in items]
    meta = (f"hbar={state.hbar!r}", f"dims={d}")
    write_csv(f, columns, rows, config_digest, meta=meta)


def load_state(f) -> FockState:
    hbar = None
    dims = None
    coeffs: dict[FockIndex, complex] = {}
    header_seen = False
    for raw in f:
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if body.startswith("hbar="):
                hbar = float(body[5:])
            elif body.startswith("dims="):
                dims = int(body[5:])
            continue
        if not header_seen:
            header_seen = True  # column header
            continue
        parts = line.split(",")
        if dims is None:
            dims = len(parts) - 2
        k = tuple(int(v) for v in parts[:dims])
        coeffs[k] = complex(float(parts[dims]), float(parts[dims + 1]))
    if hbar is None or dims is None or not coeffs:
        raise ValidationError("state file is missing header or data")
    cutoff = tuple(max(k[j] for k in coeffs) for j in range(dims))
    return FockState(
        hbar=hbar, dims=dims, cutoff=cutoff, tail_bound=0.0, coeffs=coeffs
    )
