"""End-to-end acceptance checks, one test per criterion.

Each test records its sub-checks; a summary with one PASS/FAIL line per
criterion is printed at the end of the pytest run.
"""

import itertools
import math
import time

import numpy as np
import pytest
from scipy.linalg import expm

from qrestrict import cli, dyson, fcs
from qrestrict.gibbs import classical_restriction, gibbs_state, ground_state
from qrestrict.ising_exact import (
    IsingParams,
    log_toeplitz_generating,
    magnetization,
    rate_function,
    szego_F,
    toeplitz_generating,
)
from qrestrict.locality import ProbeSpec, nonlocality_scan, sector_extremes
from qrestrict.mobius import beta_max, classical_potential, log_trace, mobius_weights
from qrestrict.quadrature import QuadratureRule
from qrestrict.spin_algebra import (
    SIGMA_X,
    SIGMA_Z,
    Lattice,
    build_hamiltonian,
    spectral_projections,
    to_dense,
    transverse_ising,
)

PHI = transverse_ising(1.0, 1.0)
SX = spectral_projections(SIGMA_X)
SZ = spectral_projections(SIGMA_Z)
QUAD = QuadratureRule.trapezoid(4096)


@pytest.mark.criterion(1)
def test_criterion_01_mobius_consistency(criterion):
    start = time.perf_counter()
    sites = range(6)
    worst = 0.0
    for beta in (0.1, 0.5, 2.0):
        w = mobius_weights(PHI, beta, sites)
        for r in range(1, 7):
            for sub in itertools.combinations(sites, r):
                worst = max(worst, abs(w.total(sub) - log_trace(PHI, beta, sub)))
    elapsed = time.perf_counter() - start
    criterion.check(f"max error {worst:.2e} <= 1e-10", worst <= 1e-10)
    criterion.check(f"runtime {elapsed:.2f}s < 10s", elapsed < 10)
    criterion.finish()


@pytest.mark.criterion(2)
def test_criterion_02_gibbs_reconstruction(criterion):
    start = time.perf_counter()
    worst = 0.0
    for N in range(1, 7):
        lat = Lattice.chain(N)
        H = build_hamiltonian(PHI, lat)
        for beta in (0.1, 0.5, 2.0, "ground"):
            state = ground_state(H, lattice=lat) if beta == "ground" else gibbs_state(H, beta, lat)
            for spec in (SX, SZ):
                mu = classical_restriction(state, spec, list(range(N)))
                psi = classical_potential(PHI, spec, beta, range(N))
                worst = max(worst, float(np.abs(psi.reconstruct(range(N)) - mu.probs).max()))
    elapsed = time.perf_counter() - start
    criterion.check(f"max error {worst:.2e} <= 1e-10", worst <= 1e-10)
    criterion.check(f"runtime {elapsed:.2f}s < 30s", elapsed < 30)
    criterion.finish()


@pytest.mark.criterion(3)
def test_criterion_03_high_temperature_bound(criterion):
    ref = math.log(1 + 1 / (math.e + 2 * math.e**2))
    got = beta_max(PHI, 1.0)
    criterion.check(f"beta_max {got:.12f} vs closed form {ref:.12f}", abs(got - ref) <= 1e-9)
    criterion.finish()


@pytest.mark.criterion(4)
def test_criterion_04_parity_nullity(criterion):
    for N in (4, 6):
        odd, _ = sector_extremes(N, 0.2)
        criterion.check(f"N={N} odd-flip max {odd:.1e} <= 1e-12", odd <= 1e-12)
    lat = Lattice.chain(2)
    mu = classical_restriction(ground_state(build_hamiltonian(PHI, lat), lattice=lat), SZ, [0, 1])
    q = (math.sqrt(5) - 2) ** 2
    err = max(abs(mu.prob([1, 1]) - 1 / (1 + q)), abs(mu.prob([-1, -1]) - q / (1 + q)))
    criterion.check(f"N=2 exact values within {err:.1e}", err <= 1e-10)
    criterion.finish()


@pytest.mark.criterion(5)
def test_criterion_05_toeplitz_vs_ed(criterion):
    start = time.perf_counter()
    p = IsingParams(2.0)
    lat = Lattice.chain(14)
    H = build_hamiltonian(transverse_ising(1.0, 2.0), lat)
    state = ground_state(H, "iterative", seed=0, lattice=lat)
    worst = 0.0
    for n in range(1, 5):
        first = (14 - n) // 2
        mu = classical_restriction(state, SZ, list(range(first, first + n)))
        for t in (-0.5, 0.5):
            ed = sum(pr * math.exp(t * sum(x)) for x, pr in mu.items())
            worst = max(worst, abs(toeplitz_generating(n, t, p, QUAD) - ed))
    elapsed = time.perf_counter() - start
    criterion.check(f"max |det - ED| {worst:.2e} <= 1e-3", worst <= 1e-3)
    criterion.check(f"runtime {elapsed:.1f}s < 120s", elapsed < 120)
    criterion.finish()


@pytest.mark.criterion(6)
def test_criterion_06_szego(criterion):
    p = IsingParams(2.0)
    F = szego_F(0.5, p, QUAD)
    ns = (4, 8, 16, 32, 64)
    errs = [abs(log_toeplitz_generating(n, 0.5, p, QUAD) / n - F) for n in ns]
    criterion.check("error decreases with n", all(b < a for a, b in zip(errs, errs[1:])))
    criterion.check(f"error at n=64 {errs[-1]:.4e} <= 1e-4", errs[-1] <= 1e-4)
    criterion.check("F(0) == 0", szego_F(0.0, p, QUAD) == 0.0)
    big = abs(szego_F(0.5, IsingParams(100.0), QUAD) - 0.5)
    criterion.check(f"|F(0.5) - 0.5| at g=100 {big:.1e} <= 1e-3", big <= 1e-3)
    grid = np.round(np.arange(-2.0, 2.0001, 0.1), 10)
    vals = np.array([szego_F(t, p, QUAD) for t in grid])
    second = np.diff(vals, 2)
    criterion.check(f"min second difference {second.min():.2e} >= -1e-9", second.min() >= -1e-9)
    criterion.finish()


@pytest.mark.criterion(7)
def test_criterion_07_rate_function(criterion):
    p = IsingParams(2.0)
    m0 = magnetization(p, QUAD)
    at_mean = rate_function(m0, p, QUAD).value
    criterion.check(f"I(F'(0)) = {at_mean:.1e} <= 1e-8", at_mean <= 1e-8)
    grid = np.round(np.arange(-0.95, 0.9501, 0.05), 10)
    vals = np.array([rate_function(m, p, QUAD).value for m in grid])
    criterion.check(f"min I on grid {vals.min():.2e} >= 0", vals.min() >= 0)
    second = np.diff(vals, 2)
    criterion.check(f"min second difference {second.min():.2e} >= -1e-8", second.min() >= -1e-8)
    criterion.finish()


@pytest.mark.criterion(8)
def test_criterion_08_non_quasi_locality(criterion):
    start = time.perf_counter()
    r1, r2 = nonlocality_scan([ProbeSpec(0.2, 1, 3), ProbeSpec(0.2, 2, 3)])
    elapsed = time.perf_counter() - start
    criterion.check(f"p_zero {r2.p_zero:.2e} < {r1.p_zero:.2e}", r2.p_zero < r1.p_zero)
    criterion.check(f"p_one {r2.p_one:.4f} > {r1.p_one:.4f}", r2.p_one > r1.p_one)
    criterion.check(f"gap {r2.gap:.4f} > {r1.gap:.4f} > 0", r2.gap > r1.gap > 0)
    criterion.check(f"runtime {elapsed:.1f}s < 300s", elapsed < 300)
    criterion.finish()


@pytest.mark.criterion(9)
def test_criterion_09_dyson_truncation(criterion):
    phi0, ups, _ = dyson.ising_polymer_model(0.2)
    lat = Lattice.chain(3)
    H0 = to_dense(build_hamiltonian(phi0, lat))
    V = to_dense(build_hamiltonian(ups, lat))
    exact = expm(-0.5 * (H0 + V))
    errs = []
    for N in range(4):
        err = float(np.linalg.norm(dyson.truncated_dyson(H0, V, 0.5, N) - exact, 2))
        bound = dyson.dyson_remainder_bound(H0, V, 0.5, N)
        criterion.check(f"N={N} error {err:.1e} <= bound {bound:.1e}", err <= bound)
        errs.append(err)
    criterion.check("decreasing in N", all(b < a for a, b in zip(errs, errs[1:])))
    criterion.finish()


@pytest.mark.criterion(10)
def test_criterion_10_factorization(criterion):
    phi0, ups, P = dyson.ising_polymer_model(0.2)
    sites = tuple(range(6))
    rng = np.random.default_rng(2024)
    worst = [0.0, 0.0, 0.0]
    count = 0
    while count < 20:
        d = dyson.random_diagram(rng, sites, 2.0, n_max=4)
        if len(dyson.polymer_decompose(d)) < 2:
            continue
        config = {s: float(rng.choice(SX.eigenvalues)) for s in sites}
        rep = dyson.factorization_residual(d, dyson.DensityContext(phi0, ups, P, SX, config, sites))
        worst = [max(worst[0], rep.residual), max(worst[1], rep.volume_delta), max(worst[2], rep.off_root_delta)]
        count += 1
    criterion.check(f"residual {worst[0]:.1e} <= 1e-10", worst[0] <= 1e-10)
    criterion.check(f"volume delta {worst[1]:.1e} <= 1e-12", worst[1] <= 1e-12)
    criterion.check(f"off-root delta {worst[2]:.1e} <= 1e-12", worst[2] <= 1e-12)
    criterion.finish()


@pytest.mark.criterion(11)
def test_criterion_11_kp_certificate(criterion):
    def cert(kappa, beta):
        p, ups = dyson.ising_kp_params(kappa, beta, SX)
        return dyson.kp_certificate(p, ups, range(12))

    criterion.check("passes at kappa=6, beta=20", cert(6.0, 20.0).passes)
    criterion.check("fails at kappa=0", not cert(0.0, 20.0).passes)
    kappas = [cert(k, 20.0) for k in (3.0, 4.0, 5.0, 6.0)]
    ratios = [c.worst_ratio for c in kappas]
    criterion.check("worst LHS/d decreasing in kappa", all(b < a for a, b in zip(ratios, ratios[1:])))
    raw_ok = all(all(b.lhs[k] < a.lhs[k] for k in a.lhs) for a, b in zip(kappas, kappas[1:]))
    criterion.check("every LHS decreasing in kappa", raw_ok)
    betas = [cert(6.0, b) for b in (10.0, 15.0, 20.0, 25.0)]
    ratios = [c.worst_ratio for c in betas]
    criterion.check("worst LHS/d decreasing in beta", all(b < a for a, b in zip(ratios, ratios[1:])))
    mono = True
    for k in betas[0].lhs:
        seq = np.diff([c.lhs[k] for c in betas])
        mono &= bool(np.all(seq > 0) or np.all(seq < 0))
    criterion.check("every LHS monotone in beta", mono)
    criterion.finish()


@pytest.mark.criterion(12)
def test_criterion_12_fcs(criterion):
    model = fcs.aklt()
    single = fcs.fcs_restriction(model, 1).probs
    criterion.check("single-site marginals 1/3", np.abs(single - 1 / 3).max() <= 1e-12)
    three = fcs.fcs_restriction(model, 3).probs
    criterion.check("3-site restriction uniform", np.abs(three - 1 / 27).max() <= 1e-12)
    best = fcs.mie_scan(model, 5).best.value
    criterion.check(f"conditioned correlation at n=5 {best:.3f} > 0.01", best > 0.01)
    degenerate = fcs.proportional_unitary([1.0, 0.5j, 0.3], np.array([[0, 1], [1, 0]]))
    zero = fcs.mie_scan(degenerate, 5).best.value
    criterion.check(f"degenerate model {zero:.1e} <= 1e-12", zero <= 1e-12)
    criterion.finish()


@pytest.mark.criterion(13)
def test_criterion_13_determinism(criterion, tmp_path):
    runs = [
        ["restrict", "--set", "N=6", "--set", "X=\"sx\""],
        ["dyson-check", "--set", "diagrams=4"],
        ["fcs"],
        ["ising-ldp", "--set", "g=2", "--set", "n=[1,4]"],
    ]
    for i, args in enumerate(runs):
        for fmt in ("json", "csv"):
            outs = []
            for rep in range(2):
                path = tmp_path / f"{i}_{fmt}_{rep}.out"
                assert cli.main([*args, "--seed", "5", "--format", fmt, "--out", str(path)]) == 0
                outs.append(path.read_bytes())
            criterion.check(f"{args[0]} {fmt} identical", outs[0] == outs[1])
    criterion.finish()


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-q"]))
