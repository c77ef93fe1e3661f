"""Scarred eigenstate experiments and convergence diagnostics.

build_scar checks the classical preconditions and delegates to the state
construction; convex_scar forms sqrt-weighted combinations over distinct
invariant tori sharing a level set; residuals quantifies concentration on
the level set and invariance under the component flows; sweep drives the
whole pipeline over a geometric hbar schedule and fits log-log rates.
"""

from __future__ import annotations

import math
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, OverlappingToriError, ValidationError
from .fockstate import (
    FockState,
    ScarState,
    _sparse_items,
    expectation,
    normalize_scar,
)
from .freqarith import HarmonicDecomposition
from .phasespace import (
    PhasePoint,
    component_energies,
    flow_rates,
    orbit_average,
    sigma_membership,
)
from .spectral import component_eigenvalue
from .symbols import Symbol, character, mode_energy, position

LEVEL_SET_TOL = 1e-10
SEPARATION_TOL = 1e-8


def default_probes(decomp: HarmonicDecomposition, seed: int = 0) -> tuple[Symbol, ...]:
    """x1, x1^2, every mode energy, and two seeded random characters."""
    d = decomp.dims
    probes = [position(d, 0), position(d, 0, 2)]
    probes.extend(mode_energy(d, j) for j in range(d))
    rng = random.Random(seed)
    for i in range(2):
        w = tuple(rng.uniform(-1.0, 1.0) for _ in range(2 * d))
        probes.append(character(d, w).with_label(f"char{i + 1}"))
    return tuple(probes)


def _level_set_check(decomp: HarmonicDecomposition, z0: PhasePoint, E) -> None:
    values = component_energies(decomp, z0)
    gap = max(abs(v - e) for v, e in zip(values, E))
    if gap > LEVEL_SET_TOL:
        raise ValidationError(
            f"z0 misses the level set by {gap:.3e}: component energies "
            f"{values} vs target {tuple(E)}"
        )


def build_scar(
    decomp: HarmonicDecomposition,
    z0: PhasePoint,
    E,
    hbar: float,
    tail_tol: float = 1e-12,
) -> ScarState:
    """Normalized joint eigenstate concentrating on the torus through z0.

    Requires E in the joint spectrum simplex and z0 on the corresponding
    level set to within 1e-10.
    """
    E = tuple(float(v) for v in E)
    sigma_membership(decomp, E)
    _level_set_check(decomp, z0, E)
    return normalize_scar(decomp, z0, E, hbar, tail_tol)


def _tori_distinct(decomp, za: PhasePoint, zb: PhasePoint, seed: int) -> bool:
    """Orbit-average separation test with a small separating probe set.

    Mode energies distinguish tori of different radii; characters pick up
    relative phases on resonant components.
    """
    d = decomp.dims
    candidates: list[Symbol] = [mode_energy(d, j) for j in range(d)]
    rng = random.Random(seed)
    for _ in range(4):
        w = tuple(rng.uniform(-1.0, 1.0) for _ in range(2 * d))
        candidates.append(character(d, w))
    for a in candidates:
        va = orbit_average(decomp, a, za)
        vb = orbit_average(decomp, a, zb)
        if abs(va - vb) > SEPARATION_TOL * (1.0 + abs(va) + abs(vb)):
            return True
    return False


def _convex_parts(
    decomp: HarmonicDecomposition,
    points,
    E,
    hbar: float,
    tail_tol: float,
    seed: int = 0,
) -> tuple[tuple[ScarState, ...], tuple[float, ...], FockState]:
    E = tuple(float(v) for v in E)
    pts = [(z, float(a)) for z, a in points]
    if not pts:
        raise ValidationError("need at least one (point, weight) pair")
    alphas = tuple(a for _, a in pts)
    if any(not 0.0 < a <= 1.0 for a in alphas):
        raise ValidationError("weights must lie in (0, 1]")
    if abs(sum(alphas) - 1.0) > 1e-12:
        raise ValidationError("weights must sum to 1")
    for z, _ in pts:
        _level_set_check(decomp, z, E)
    for i in range(len(pts)):
        for j in range(i + 1, len(pts)):
            if not _tori_distinct(decomp, pts[i][0], pts[j][0], seed):
                raise OverlappingToriError(
                    f"points {i + 1} and {j + 1} lie on the same invariant torus"
                )
    parts = tuple(build_scar(decomp, z, E, hbar, tail_tol) for z, _ in pts)
    ratios = parts[0].target.ratios_q
    for p in parts[1:]:
        if p.target.ratios_q != ratios:
            raise DomainError(
                "the tori project onto different joint eigenvalues at this "
                "hbar; the combination would not be an eigenvector"
            )
    coeffs: dict[tuple[int, ...], complex] = {}
    for (_, alpha), part in zip(pts, parts):
        root = math.sqrt(alpha)
        for k, c in part.state.coeffs.items():
            coeffs[k] = coeffs.get(k, 0j) + root * c
    cutoff = tuple(
        max(p.state.cutoff[j] for p in parts) for j in range(decomp.dims)
    )
    combined = FockState(
        hbar=hbar,
        dims=decomp.dims,
        cutoff=cutoff,
        tail_bound=sum(p.state.tail_bound for p in parts),
        coeffs=coeffs,
    )
    return parts, alphas, combined


def convex_scar(
    decomp: HarmonicDecomposition,
    points,
    E,
    hbar: float,
    tail_tol: float = 1e-12,
    seed: int = 0,
) -> FockState:
    """sum_j sqrt(alpha_j) psi_j over pairwise distinct tori in one level set.

    Every part targets the same joint eigenvalue, so the sum is again an
    eigenvector; its norm tends to 1 as the cross terms die off.
    """
    _, _, combined = _convex_parts(decomp, points, E, hbar, tail_tol, seed)
    return combined


def residuals(
    decomp: HarmonicDecomposition,
    state: FockState,
    E,
    probes=None,
    t_points: int = 16,
) -> tuple[tuple[float, ...], tuple[float, ...]]:
    """(concentration, invariance), one entry per periodic component.

    concentration_n = <(Op(Hcal_n) - E_n)^2> via the diagonal ladder action;
    invariance_n = max over probes and a t-grid of one component period of
    |<Op(a o flow_n(t))> - <Op(a)>|, exact Egorov making 16 points enough.
    """
    E = tuple(float(v) for v in E)
    if len(E) != decomp.d_omega:
        raise ValidationError("energy vector must have one entry per component")
    items = _sparse_items(state)
    norm2 = sum(abs(c) ** 2 for _, c in items)
    if norm2 == 0.0:
        raise ValidationError("state has no mass")
    hbar = state.hbar
    concentration = []
    for n in range(decomp.d_omega):
        acc = 0.0
        for k, c in items:
            lam = component_eigenvalue(decomp, k, n, hbar)
            acc += abs(c) ** 2 * (lam - E[n]) ** 2
        concentration.append(acc / norm2)
    if probes is None:
        probes = default_probes(decomp)
    rates = flow_rates(decomp)
    invariance = []
    for n, comp in enumerate(decomp.components):
        worst = 0.0
        for a in probes:
            base = expectation(state, state, a)
            for i in range(1, t_points):
                t = comp.period * i / t_points
                thetas = [rates[n][j] * t for j in range(decomp.dims)]
                moved = expectation(state, state, a.rotate(thetas))
                worst = max(worst, abs(moved - base) / norm2)
        invariance.append(worst)
    return tuple(concentration), tuple(invariance)


# ---------------------------------------------------------------------------
# hbar sweeps

@dataclass(frozen=True)
class SweepConfig:
    """One experiment: a decomposition, a level set, and an hbar schedule.

    Leave z0 unset to use the interior witness of sigma_membership; set
    points for a convex combination over several tori instead.
    """

    decomposition: HarmonicDecomposition
    E: tuple[float, ...]
    hbars: tuple[float, ...]
    z0: PhasePoint | None = None
    points: tuple[tuple[PhasePoint, float], ...] = ()
    probes: tuple[Symbol, ...] = ()
    seed: int = 0
    tail_tol: float = 1e-12
    t_points: int = 16
    threads: int = 1

    def __post_init__(self):
        object.__setattr__(self, "E", tuple(float(v) for v in self.E))
        object.__setattr__(self, "hbars", tuple(float(h) for h in self.hbars))
        if len(self.hbars) < 2:
            raise ValidationError("schedule needs at least two hbar values")
        if any(h <= 0 for h in self.hbars):
            raise ValidationError("hbar values must be positive")
        if any(a <= b for a, b in zip(self.hbars, self.hbars[1:])):
            raise ValidationError("hbar schedule must be strictly decreasing")
        if not 0 < self.tail_tol < 1:
            raise ValidationError("tail_tol must lie in (0, 1)")
        if self.threads < 1:
            raise ValidationError("threads must be at least 1")


@dataclass(frozen=True)
class ConvergenceReport:
    """Sweep outcome: per-(hbar, observable) rows plus fitted log-log slopes.

    Row layout is (hbar, name, value, reference, residual) with complex
    values split by the CSV writer; residuals are nonnegative by
    construction. errors lists (hbar, message) for rows that failed.
    """

    hbars: tuple[float, ...]
    rows: tuple[tuple[float, str, complex, complex, float], ...]
    fitted_slopes: dict[str, float]
    metadata: tuple[tuple[str, str], ...]
    errors: tuple[tuple[float, str], ...] = ()

    def residual_series(self, name: str) -> tuple[tuple[float, ...], tuple[float, ...]]:
        pairs = [(h, r) for h, nm, _, _, r in self.rows if nm == name]
        return tuple(h for h, _ in pairs), tuple(r for _, r in pairs)

    def slope(self, name: str) -> float:
        return self.fitted_slopes.get(name, math.nan)

    def to_csv(self, f, config_digest: str = "") -> None:
        from .reporting import write_csv

        columns = ["hbar", "observable", "value_re", "value_im",
                   "reference_re", "reference_im", "residual"]
        rows = [
            [h, name.replace(",", ";"), v.real, v.imag, ref.real, ref.imag, r]
            for h, name, v, ref, r in self.rows
        ]
        meta = tuple(f"{k}={v}" for k, v in self.metadata)
        write_csv(f, columns, rows, config_digest, meta=meta)

    def summary(self, bands: dict[str, tuple[float | None, float | None]] | None = None) -> str:
        lines = ["convergence summary"]
        for k, v in self.metadata:
            lines.append(f"  {k} = {v}")
        for name in sorted(self.fitted_slopes):
            s = self.fitted_slopes[name]
            line = f"slope {name} = {s:.4f}"
            if bands and name in bands:
                lo, hi = bands[name]
                ok = (lo is None or s >= lo) and (hi is None or s <= hi)
                band_txt = f"[{lo if lo is not None else '-inf'}, {hi if hi is not None else 'inf'}]"
                line += f"  band {band_txt}: {'pass' if ok else 'FAIL'}"
            lines.append(line)
        for h, msg in self.errors:
            lines.append(f"error at hbar={h:.6g}: {msg}")
        return "\n".join(lines) + "\n"


def fit_loglog(hbars, values, drop: int = 2, floor: float = 1e-14) -> float:
    """Least-squares slope of log(value) against log(hbar).

    Drops the `drop` largest hbar entries (pre-asymptotic regime) and floors
    values so an exactly vanishing residual cannot produce -inf.
    """
    pairs = sorted(zip(hbars, values), key=lambda p: -p[0])[drop:]
    pairs = [(h, max(abs(v), floor)) for h, v in pairs]
    if len(pairs) < 2:
        return math.nan
    x = np.log([h for h, _ in pairs])
    y = np.log([v for _, v in pairs])
    return float(np.polyfit(x, y, 1)[0])


def _gap_rows(state, z0_refs, probes, hbar):
    rows = []
    for a, ref in zip(probes, z0_refs):
        val = expectation(state, state, a)
        rows.append((hbar, f"gap:{a.label}", val, complex(ref), abs(val - ref)))
    return rows


def _residual_rows(decomp, state, E, probes, t_points, hbar):
    conc, inv = residuals(decomp, state, E, probes=probes, t_points=t_points)
    rows = []
    for n, v in enumerate(conc):
        rows.append((hbar, f"concentration:{n + 1}", complex(v), 0j, v))
    for n, v in enumerate(inv):
        rows.append((hbar, f"invariance:{n + 1}", complex(v), 0j, v))
    return rows


def sweep(config: SweepConfig) -> ConvergenceReport:
    """Run the experiment at every hbar and fit per-observable rates.

    Rows for each hbar are computed independently (optionally in a thread
    pool) and aggregated in schedule order; a failure at one hbar is
    recorded and the sweep continues.
    """
    decomp = config.decomposition
    E = config.E
    probes = config.probes or default_probes(decomp, config.seed)
    if config.points:
        pts = [(z, float(a)) for z, a in config.points]
        averages = [
            [orbit_average(decomp, a, z) for a in probes] for z, _ in pts
        ]
        combined_refs = [
            sum(alpha * averages[i][p] for i, (_, alpha) in enumerate(pts))
            for p in range(len(probes))
        ]
    else:
        z0 = config.z0
        if z0 is None:
            z0 = sigma_membership(decomp, E).torus_point()
        single_refs = [orbit_average(decomp, a, z0) for a in probes]
        z0_desc = f"x={z0.x} xi={z0.xi}"

    def run_one(hbar: float):
        try:
            rows = []
            if config.points:
                parts, alphas, combined = _convex_parts(
                    decomp, pts, E, hbar, config.tail_tol, config.seed
                )
                for j, part in enumerate(parts):
                    rows.append(
                        (
                            hbar,
                            f"c_hbar:{j + 1}",
                            complex(part.c_hbar),
                            1 + 0j,
                            abs(part.c_hbar - 1.0),
                        )
                    )
                nrm = combined.norm()
                rows.append((hbar, "norm", complex(nrm), 1 + 0j, abs(nrm - 1.0)))
                for p, a in enumerate(probes):
                    val = expectation(combined, combined, a) / nrm**2
                    ref = complex(combined_refs[p])
                    rows.append((hbar, f"gap:{a.label}", val, ref, abs(val - ref)))
                for i in range(len(parts)):
                    for j in range(i + 1, len(parts)):
                        for a in probes:
                            val = expectation(parts[i].state, parts[j].state, a)
                            rows.append(
                                (
                                    hbar,
                                    f"cross:{i + 1}-{j + 1}:{a.label}",
                                    val,
                                    0j,
                                    abs(val),
                                )
                            )
                rows.extend(
                    _residual_rows(
                        decomp,
                        combined,
                        E,
                        probes,
                        config.t_points,
                        hbar,
                    )
                )
            else:
                scar = build_scar(decomp, z0, E, hbar, config.tail_tol)
                rows.append(
                    (
                        hbar,
                        "c_hbar",
                        complex(scar.c_hbar),
                        1 + 0j,
                        abs(scar.c_hbar - 1.0),
                    )
                )
                rows.extend(_gap_rows(scar.state, single_refs, probes, hbar))
                rows.extend(
                    _residual_rows(
                        decomp, scar.state, E, probes, config.t_points, hbar
                    )
                )
            return rows, None
        except Exception as exc:  # recorded, sweep continues
            return [], f"{type(exc).__name__}: {exc}"

    if config.threads > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as ex:
            outcomes = list(ex.map(run_one, config.hbars))
    else:
        outcomes = [run_one(h) for h in config.hbars]

    rows: list[tuple[float, str, complex, complex, float]] = []
    errors: list[tuple[float, str]] = []
    for hbar, (chunk, err) in zip(config.hbars, outcomes):
        rows.extend(chunk)
        if err is not None:
            errors.append((hbar, err))

    by_name: dict[str, list[tuple[float, float]]] = {}
    for h, name, _, _, r in rows:
        by_name.setdefault(name, []).append((h, r))
    slopes = {
        name: fit_loglog([h for h, _ in series], [r for _, r in series])
        for name, series in by_name.items()
    }
    metadata = (
        ("omega", " ".join(repr(w) for w in decomp.spec.numeric)),
        ("E", " ".join(repr(v) for v in E)),
        ("z0", f"convex over {len(config.points)} tori" if config.points else z0_desc),
        ("seed", str(config.seed)),
        ("slope_fit", "drops the 2 largest hbar values"),
        ("tail_tol", repr(config.tail_tol)),
    )
    return ConvergenceReport(
        hbars=config.hbars,
        rows=tuple(rows),
        fitted_slopes=slopes,
        metadata=metadata,
        errors=tuple(errors),
    )
