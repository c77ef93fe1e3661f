"""End-to-end checks of the laboratory's central claims.

One test per claim, ordered roughly construction -> arithmetic -> limits:

1. built states satisfy the joint eigenrelation to machine precision;
2. selected targets always land within one ladder rung of the requested
   energy vector;
3. observable gaps against orbit averages shrink at the expected rate;
4. the normalization constant tends to 1, full-rank and rank-deficient;
5. conductors agree with an independent reachability sieve;
6. flow periods agree with an exact lcm-of-rotations oracle;
7. every eigenvector in a spectral window concentrates on its own level
   set and is flow invariant;
8. convex combinations over distinct tori converge to weighted averages
   with dying cross terms;
9. quantization commutes with the component flows exactly.

Rates are fitted on the log-log schedule 0.2 * 2^-m after dropping the two
largest hbar values, where ladder rounding still dominates.
"""

import math
import random
import time
from decimal import Decimal
from fractions import Fraction

import pytest

from scarkit import (
    FockState,
    FrequencySpec,
    GeneratorBasis,
    PhasePoint,
    build_scar,
    character,
    component_eigenvalue,
    conductor,
    convex_scar,
    decompose,
    decompose_eigenvalue,
    default_probes,
    enumerate_window,
    expectation,
    fit_loglog,
    flow_rates,
    mode_energy,
    multi_flow,
    orbit_average,
    parse_symbol,
    period_of,
    residuals,
    select_target,
    sigma_membership,
    sqrt_decimal,
)
from scarkit.fockstate import norm

F = Fraction


def make_dec(coords, gens):
    table = {"one": Decimal(1), "sqrt2": sqrt_decimal(2), "sqrt3": sqrt_decimal(3)}
    basis = GeneratorBasis(tuple(gens), tuple(table[g] for g in gens))
    return decompose(FrequencySpec.build(basis, coords))


@pytest.fixture(scope="module")
def frequency_cases():
    """Resonant, coprime-resonant, and one/two-generator irrational vectors."""
    return {
        "1,1": make_dec([[F(1)], [F(1)]], ("one",)),
        "2,3": make_dec([[F(2)], [F(3)]], ("one",)),
        "1,r2": make_dec([[F(1), F(0)], [F(0), F(1)]], ("one", "sqrt2")),
        "1,r2,r3": make_dec(
            [[F(1), F(0), F(0)], [F(0), F(1), F(0)], [F(0), F(0), F(1)]],
            ("one", "sqrt2", "sqrt3"),
        ),
    }


@pytest.fixture(scope="module")
def dec12():
    return make_dec([[F(1), F(0)], [F(0), F(1)]], ("one", "sqrt2"))


@pytest.fixture(scope="module")
def dec112():
    return make_dec(
        [[F(1), F(0)], [F(1), F(0)], [F(0), F(1)]], ("one", "sqrt2")
    )


def simplex_points(d_omega):
    """Deterministic energy-vector samples, all above the hbar=0.1 ceilings."""
    if d_omega == 1:
        return [(1.0,)]
    if d_omega == 2:
        return [(i / 6.0, 1.0 - i / 6.0) for i in (1, 2, 3, 4, 5)]
    return [
        (1 / 3, 1 / 3, 1 / 3),
        (1 / 2, 1 / 4, 1 / 4),
        (1 / 4, 1 / 2, 1 / 4),
        (1 / 4, 1 / 4, 1 / 2),
        (1 / 6, 1 / 3, 1 / 2),
    ]


def eigen_residual(dec, scar, n):
    """l2 residual of the component-n eigenrelation, via the diagonal action."""
    lam = scar.target.lam[n]
    acc = sum(
        abs(c) ** 2 * (component_eigenvalue(dec, k, n, scar.state.hbar) - lam) ** 2
        for k, c in scar.state.coeffs.items()
    )
    return math.sqrt(acc)


def test_criterion_1_eigenrelation_exactness(frequency_cases):
    start = time.monotonic()
    built = 0
    for dec in frequency_cases.values():
        for E in simplex_points(dec.d_omega):
            z0 = sigma_membership(dec, E).torus_point()
            scar = build_scar(dec, z0, E, 0.1)
            assert abs(norm(scar.state) - 1.0) < 1e-11
            for n in range(dec.d_omega):
                assert eigen_residual(dec, scar, n) <= 1e-10
            built += 1
    assert built == 12
    assert time.monotonic() - start < 60.0


def test_criterion_2_target_window_bound(frequency_cases):
    rng = random.Random(2)
    checked = 0
    for dec in frequency_cases.values():
        dw = dec.d_omega
        for _ in range(12):
            if dw == 1:
                E = (1.0,)
            else:
                # floor 0.15 keeps every component above its hbar ceiling
                raw = [rng.expovariate(1.0) for _ in range(dw)]
                rem = 1.0 - 0.15 * dw
                E = tuple(0.15 + rem * r / sum(raw) for r in raw)
            hbar = rng.uniform(0.02, 0.12)
            target = select_target(dec, E, hbar)
            for n, comp in enumerate(dec.components):
                assert abs(E[n] - target.lam[n]) < 2.0 * math.pi * hbar / comp.period
                checked += 1
    assert checked >= 50


def scar_gaps(dec, z0, E, hbar, probes, refs):
    scar = build_scar(dec, z0, E, hbar)
    n2 = norm(scar.state) ** 2
    gaps = [
        abs(expectation(scar.state, scar.state, a) / n2 - ref)
        for a, ref in zip(probes, refs)
    ]
    return scar, gaps


def test_criterion_3_scarring_rate(dec12):
    start = time.monotonic()
    E = (0.5, 0.5)
    # generic point: flow the membership witness off the coordinate axes
    z0 = multi_flow(dec12, sigma_membership(dec12, E).torus_point(), (0.37, 0.61))
    probes = [
        parse_symbol("x1^2", 2),
        mode_energy(2, 0).with_label("H1"),
        character(2, (0.7, -0.4, 0.3, 0.5)).with_label("char"),
    ]
    refs = [orbit_average(dec12, a, z0) for a in probes]
    hbars = tuple(0.2 * 2.0**-m for m in range(7))
    # the x1^2 and H1 gaps vanish identically whenever the ladder lands on
    # E exactly (it does at hbar = 0.2), so the rate is read off the worst
    # probe at each hbar rather than per probe
    aggregate = []
    for hbar in hbars:
        _, gaps = scar_gaps(dec12, z0, E, hbar, probes, refs)
        aggregate.append(max(gaps))
    slope = fit_loglog(hbars, aggregate, drop=2)
    assert 0.35 <= slope <= 1.1
    assert aggregate[-1] <= 0.25 * aggregate[0]
    assert time.monotonic() - start < 600.0


def test_criterion_4_normalization_asymptotics(dec12):
    hbars = tuple(0.2 * 2.0**-m for m in range(7))

    E = (0.5, 0.5)
    z0 = sigma_membership(dec12, E).torus_point()
    devs = []
    for hbar in hbars:
        scar = build_scar(dec12, z0, E, hbar)
        assert scar.rank_d0 == 2
        devs.append(abs(scar.c_hbar - 1.0))
    assert fit_loglog(hbars, devs, drop=2) >= 0.35
    # ladder rounding makes |c - 1| oscillate, so decrease is endpoint
    # to endpoint rather than step by step
    assert devs[-1] < devs[0]

    E = (1.0, 0.0)
    z0 = sigma_membership(dec12, E).torus_point()
    devs = []
    for hbar in hbars:
        scar = build_scar(dec12, z0, E, hbar)
        assert scar.rank_d0 == 1
        expected = (
            scar.volume
            * math.sqrt(scar.gram_det)
            * scar.mass
            / (4.0 * math.pi * hbar) ** 0.5
        )
        assert scar.c_hbar == pytest.approx(expected, rel=1e-12)
        devs.append(abs(scar.c_hbar - 1.0))
    assert fit_loglog(hbars, devs, drop=2) >= 0.35
    assert devs[-1] < devs[0]


def sieve_conductor(gens):
    """Reachability sieve with an explicit run-length certificate."""
    limit = 2000
    reach = [False] * (limit + 1)
    reach[0] = True
    for i in range(1, limit + 1):
        reach[i] = any(reach[i - g] for g in gens if g <= i)
    last_gap = max((i for i in range(limit + 1) if not reach[i]), default=-1)
    tail = range(last_gap + 1, last_gap + 1 + max(gens))
    assert all(reach[t] for t in tail), "sieve window too small to certify"
    return last_gap + 1


def test_criterion_5_conductor_matches_sieve():
    rng = random.Random(5)
    two_gen = 0
    for _ in range(50):
        d = rng.randint(2, 4)
        while True:
            k = tuple(rng.randint(1, 30) for _ in range(d))
            if math.gcd(*k) == 1:
                break
        assert conductor(k) == sieve_conductor(k)
        if d == 2:
            a, b = k
            assert conductor(k) == max(0, a * b - a - b + 1)
            two_gen += 1
    assert two_gen >= 5


def lcm_period(v, nu):
    """2 pi over the gcd of the rational rotation rates."""
    rates = [abs(F(v) * F(x)) for x in nu if x]
    den = math.lcm(*(r.denominator for r in rates))
    g = F(math.gcd(*(int(r * den) for r in rates)), den)
    return 2.0 * math.pi / float(g)


def test_criterion_6_period_matches_lcm_oracle():
    rng = random.Random(6)
    for _ in range(50):
        d = rng.randint(1, 4)
        nu = tuple(F(rng.randint(1, 12), rng.randint(1, 12)) for _ in range(d))
        v = F(rng.randint(1, 9), rng.randint(1, 9))
        got = period_of(float(v), nu)
        want = lcm_period(v, nu)
        assert abs(got - want) <= 1e-12 * want


def test_criterion_7_window_states_concentrate(dec12):
    hbar = 0.05
    levels = list(enumerate_window(dec12, hbar, 0.9, 1.1))
    assert len(levels) > 20
    rng = random.Random(7)
    for level in levels:
        parts = [decompose_eigenvalue(dec12, k, hbar) for k in level.indices]
        assert all(p == parts[0] for p in parts)  # unique decomposition
        amps = [complex(rng.gauss(0, 1), rng.gauss(0, 1)) for _ in level.indices]
        scale = math.sqrt(sum(abs(a) ** 2 for a in amps))
        state = FockState(
            hbar=hbar,
            dims=dec12.dims,
            cutoff=tuple(
                max(k[j] for k in level.indices) for j in range(dec12.dims)
            ),
            tail_bound=0.0,
            coeffs={k: a / scale for k, a in zip(level.indices, amps)},
        )
        concentration, invariance = residuals(dec12, state, parts[0])
        assert max(math.sqrt(c) for c in concentration) <= 1e-10
        assert max(invariance) <= 1e-10


def test_criterion_8_convex_combination_limits(dec112):
    E = (0.5, 0.5)
    h3 = 1.0 / (2.0 * math.sqrt(2.0))
    za = PhasePoint(
        (math.sqrt(2 * 0.25), math.sqrt(2 * 0.25), math.sqrt(2 * h3)), (0.0,) * 3
    )
    zb = PhasePoint(
        (math.sqrt(2 * 7 / 16), math.sqrt(2 / 16), math.sqrt(2 * h3)), (0.0,) * 3
    )
    alphas = (1 / 3, 2 / 3)
    probe = mode_energy(3, 0).with_label("H1")
    target = alphas[0] * orbit_average(dec112, probe, za) + alphas[1] * orbit_average(
        dec112, probe, zb
    )
    assert target == pytest.approx(0.375)
    hbars = tuple(0.2 * 2.0**-m for m in range(5))
    gaps, crosses = [], []
    for hbar in hbars:
        part_a = build_scar(dec112, za, E, hbar)
        part_b = build_scar(dec112, zb, E, hbar)
        combined = convex_scar(dec112, ((za, alphas[0]), (zb, alphas[1])), E, hbar)
        n2 = norm(combined) ** 2
        gaps.append(abs(expectation(combined, combined, probe) / n2 - target))
        crosses.append(abs(expectation(part_a.state, part_b.state, probe)))
    assert gaps[-1] <= 0.25 * gaps[0]
    assert crosses[-1] <= 0.2 * crosses[0]


def test_criterion_9_exact_egorov_invariance(frequency_cases):
    for dec in frequency_cases.values():
        d = dec.dims
        rates = flow_rates(dec)
        probes = list(default_probes(dec)) + [parse_symbol("x1^2", d)]
        points = simplex_points(dec.d_omega)
        for E in (points[0], points[-1]):
            z0 = sigma_membership(dec, E).torus_point()
            scar = build_scar(dec, z0, E, 0.1)
            n2 = norm(scar.state) ** 2
            for n, comp in enumerate(dec.components):
                for a in probes:
                    base = expectation(scar.state, scar.state, a) / n2
                    for i in range(16):
                        t = comp.period * i / 16.0
                        rotated = a.rotate([rates[n, j] * t for j in range(d)])
                        value = expectation(scar.state, scar.state, rotated) / n2
                        assert abs(value - base) <= 1e-10
