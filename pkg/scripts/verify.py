"""
Property Sweeps
===============

Randomized and closed-form checks of the symmetric-function layer and the
support-function flow, each returning a :class:`~scripts.monitors.Verdict`:

- inequality suite: derivative bounds, |A|^2_k bounds, Euler relation and
  homogeneity on random admissible curvature vectors for every 1 <= k <= n
- concavity: the second-derivative quadratic form is non-positive
- gradient consistency: D_iQ_k against central differences of Q_k
- subset oracle: elementary symmetric polynomials against enumeration
- ball law: support flow of a ball against the closed-form radius
- mollification: convergence on an ellipse and preservation of the radius
  floor
"""

from __future__ import annotations

import time
from collections.abc import Callable, Sequence

import numpy as np

from config import DEFAULT_SEED
from scripts.flow import StepControl
from scripts.monitors import Verdict
from scripts.oracle import BallSolution, ball_radius
from scripts.supportfn import (
    GridKind,
    Mollifier,
    SupportState,
    curvature_radii,
    mollify,
    run_support_flow,
    support_derivative,
)
from scripts.symfun import a2k, concavity_quadratic_form, elementary_sym, grad_qk, qk
from scripts.utils import logging as log

__all__ = [
    "INEQUALITY_TOL",
    "CONCAVITY_TOL",
    "GRADIENT_TOL",
    "random_admissible",
    "subset_sym",
    "inequality_suite",
    "concavity_sweep",
    "gradient_consistency",
    "subset_oracle_check",
    "ball_law_check",
    "mollification_convergence",
    "run_verification",
]

vlog = log.get_verbose_logger()

INEQUALITY_TOL = 1e-12
CONCAVITY_TOL = 1e-10
GRADIENT_TOL = 1e-7
BALL_LAW_TOL = 1e-3
MOLLIFY_TOL = 1e-3
MOLLIFY_MIN_ORDER = 0.5
SUBSET_ORACLE_NMAX = 20


def random_admissible(
    rng: np.random.Generator, samples: int, n: int, low: float = 1e-2, high: float = 1e2
) -> np.ndarray:
    """Log-uniform strictly positive curvature vectors, shape ``(samples, n)``."""
    return np.exp(rng.uniform(np.log(low), np.log(high), size=(samples, n)))


def subset_sym(lam: np.ndarray, chunk: int = 1 << 16) -> np.ndarray:
    """S_0..S_n of one vector by enumerating all 2^n subsets."""
    lam = np.asarray(lam, dtype=np.float64)
    n = lam.size
    totals = np.zeros(n + 1)
    bits = 1 << np.arange(n)
    for start in range(0, 1 << n, chunk):
        masks = np.arange(start, min(start + chunk, 1 << n))
        chosen = (masks[:, None] & bits) != 0
        products = np.prod(np.where(chosen, lam, 1.0), axis=1)
        totals += np.bincount(chosen.sum(axis=1), weights=products, minlength=n + 1)
    return totals


def _relative(violation: np.ndarray, scale: np.ndarray) -> float:
    return float(np.max(violation / np.maximum(scale, 1e-300), initial=0.0))


def inequality_suite(samples: int, nmax: int, seed: int = DEFAULT_SEED) -> Verdict:
    """
    For every 1 <= k <= n <= nmax on ``samples`` random vectors:

        n^-2 Q^2 lmax^-2 <= D_iQ_k <= 1,   D_iQ_k lambda_i^2 <= Q^2,
        k/(n-k+1) Q^2 <= |A|^2_k <= n Q^2,
        sum_i D_iQ_k lambda_i = Q,          Q(c lambda) = c Q(lambda).

    Violations are measured relative to the size of the compared terms.
    """
    rng = np.random.default_rng(seed)
    worst = 0.0
    where = ""
    for n in range(1, nmax + 1):
        lam = random_admissible(rng, samples, n)
        c = np.exp(rng.uniform(-3.0, 3.0, size=samples))
        lam_max = lam.max(axis=1)
        for k in range(1, n + 1):
            q = np.asarray(qk(lam, k))
            d = grad_qk(lam, k)
            a = np.asarray(a2k(lam, k))
            q2 = q**2
            lower = (q2 / (n**2 * lam_max**2))[:, None]
            checks = {
                "D lower": _relative(lower - d, d),
                "D upper": _relative(d - 1.0, np.ones_like(d)),
                "D lambda^2": _relative(d * lam**2 - q2[:, None], q2[:, None]),
                "A2 lower": _relative(k / (n - k + 1) * q2 - a, q2),
                "A2 upper": _relative(a - n * q2, n * q2),
                "euler": _relative(np.abs(np.sum(d * lam, axis=1) - q), q),
                "homogeneity": _relative(np.abs(np.asarray(qk(c[:, None] * lam, k)) - c * q), c * q),
            }
            name, value = max(checks.items(), key=lambda item: item[1])
            if value > worst:
                worst, where = value, f"{name} at n={n}, k={k}"
    passed = worst <= INEQUALITY_TOL
    return Verdict("inequalities", passed, worst, f"worst {where or 'none'}; {samples} samples per (n, k)")


def concavity_sweep(samples: int, nmax: int, seed: int = DEFAULT_SEED) -> Verdict:
    """Largest value of the concavity quadratic form on random (lambda, V)."""
    rng = np.random.default_rng(seed + 1)
    worst = -np.inf
    where = ""
    for n in range(1, nmax + 1):
        lam = random_admissible(rng, samples, n, 0.1, 10.0)
        G = rng.standard_normal((samples, n, n))
        V = 0.5 * (G + np.swapaxes(G, -1, -2))
        for k in range(1, n + 1):
            value = float(np.max(concavity_quadratic_form(lam, k, V)))
            if value > worst:
                worst, where = value, f"n={n}, k={k}"
    return Verdict(
        "concavity", bool(worst <= CONCAVITY_TOL), worst, f"max quadratic form {worst:.3e} at {where}"
    )


def gradient_consistency(
    samples: int, nmax: int, seed: int = DEFAULT_SEED, h: float = 1e-6
) -> Verdict:
    """Max abs difference between D_iQ_k and central differences on [0.1, 10]^n."""
    rng = np.random.default_rng(seed + 2)
    worst = 0.0
    for n in range(1, nmax + 1):
        lam = rng.uniform(0.1, 10.0, size=(samples, n))
        for k in range(1, n + 1):
            d = grad_qk(lam, k)
            fd = np.empty_like(d)
            for i in range(n):
                step = np.zeros(n)
                step[i] = h
                fd[:, i] = (np.asarray(qk(lam + step, k)) - np.asarray(qk(lam - step, k))) / (2 * h)
            worst = max(worst, float(np.max(np.abs(d - fd))))
    return Verdict("gradient", worst <= GRADIENT_TOL, worst, f"central differences with h={h:g}")


def subset_oracle_check(
    nmax: int = 20, samples: int = 3, seed: int = DEFAULT_SEED
) -> Verdict:
    """elementary_sym against subset enumeration, relative error."""
    rng = np.random.default_rng(seed + 3)
    worst = 0.0
    for n in range(1, nmax + 1):
        for _ in range(samples):
            lam = rng.uniform(0.0, 5.0, size=n)
            fast = elementary_sym(lam)
            slow = subset_sym(lam)
            worst = max(worst, _relative(np.abs(fast - slow), np.abs(slow)))
    return Verdict("subsetOracle", worst <= INEQUALITY_TOL, worst, f"n up to {nmax}")


def ball_law_check(
    grid_kind: GridKind | str,
    k: int,
    R: float = 1.0,
    num_nodes: int = 256,
    fraction: float = 0.9,
    num_checks: int = 10,
) -> Verdict:
    """
    Support flow of a ball against rho(t)^2 = R^2 - (2 (n-k+1)/k) t up to
    ``fraction`` of the extinction time.
    """
    state = SupportState.ball(grid_kind, R, num_nodes if GridKind(grid_kind) is GridKind.CIRCLE else num_nodes + 1)
    sol = BallSolution(center=state.origin, R0=R, n=state.n, k=k)
    horizon = fraction * sol.extinction_time
    times = [horizon * (i + 1) / num_checks for i in range(num_checks)]
    run = run_support_flow(state, k, StepControl(t_end=horizon), monitor_times=times)
    worst = 0.0
    for t, snap in run.snapshots.items():
        exact = ball_radius(sol, t)
        worst = max(worst, float(np.max(np.abs(snap.S - exact))) / exact)
    missing = len(times) - len(run.snapshots)
    passed = worst <= BALL_LAW_TOL and missing == 0
    return Verdict(
        f"ballLaw_{GridKind(grid_kind).value}_k{k}",
        passed,
        worst,
        f"n={state.n}, N={state.num_nodes}, up to t={horizon:.6g}"
        + (f"; {missing} checkpoints missed" if missing else ""),
    )


def _ellipse(a: float, b: float) -> Callable[[np.ndarray], np.ndarray]:
    return lambda theta: np.sqrt((a * np.cos(theta)) ** 2 + (b * np.sin(theta)) ** 2)


def _mollified_errors(
    axes: tuple[float, float], epsilons: Sequence[float], num_nodes: int
) -> tuple[list[float], float]:
    """C^1 error per scale (coarsest first) and the worst radius floor loss."""
    state = SupportState.from_function(GridKind.CIRCLE, _ellipse(*axes), num_nodes)
    dS = support_derivative(state)
    floor = float(np.min(curvature_radii(state)))
    errors: list[float] = []
    floor_loss = 0.0
    for eps in epsilons:
        smooth = mollify(state, Mollifier(eps))
        errors.append(
            max(
                float(np.max(np.abs(smooth.S - state.S))),
                float(np.max(np.abs(support_derivative(smooth) - dS))),
            )
        )
        floor_loss = max(floor_loss, floor - float(np.min(curvature_radii(smooth))))
    return errors, floor_loss


def mollification_convergence(
    epsilons: tuple[float, ...] = (0.3, 0.1, 0.03),
    num_nodes: int = 512,
    axes: tuple[float, float] = (1.5, 1.0),
    tolerance_axes: tuple[float, float] = (1.02, 1.0),
) -> Verdict:
    """
    Mollify ellipse support functions at decreasing scales.

    The discrete C^1 error max(sup|dS|, sup|dS'|) scales like eps times the
    second derivative of S, so two ellipses are used:

    - ``axes`` (clearly eccentric): errors decrease strictly, at an observed
      order of at least MOLLIFY_MIN_ORDER in eps;
    - ``tolerance_axes`` (nearly round): the finest error is at most 1e-3.

    On both the minimum curvature radius may not drop by more than 1e-3.
    """
    scales = sorted(epsilons, reverse=True)
    errors, loss = _mollified_errors(axes, scales, num_nodes)
    near_round, near_loss = _mollified_errors(tolerance_axes, scales, num_nodes)
    orders = [
        float(np.log(a / b) / np.log(ea / eb))
        for a, b, ea, eb in zip(errors, errors[1:], scales, scales[1:])
    ]
    decreasing = all(b < a for a, b in zip(errors, errors[1:]))
    passed = (
        decreasing
        and min(orders, default=np.inf) >= MOLLIFY_MIN_ORDER
        and near_round[-1] <= MOLLIFY_TOL
        and max(loss, near_loss) <= MOLLIFY_TOL
    )
    return Verdict(
        "mollification",
        passed,
        near_round[-1],
        f"C1 errors {['%.3e' % e for e in errors]} on {axes}, orders "
        f"{['%.2f' % p for p in orders]}; finest {near_round[-1]:.3e} on "
        f"{tolerance_axes}; radius floor loss {max(loss, near_loss):.3e}",
    )


def run_verification(
    samples: int = 10_000,
    nmax: int = 6,
    seed: int = DEFAULT_SEED,
    gradient_samples: int = 1_000,
    fd_step: float = 1e-6,
    support_nodes: int = 256,
) -> list[Verdict]:
    """Every sweep with the given sizes, logged as it completes."""
    sweeps: list[tuple[str, Callable[[], Verdict]]] = [
        ("inequalities", lambda: inequality_suite(samples, nmax, seed)),
        ("concavity", lambda: concavity_sweep(samples, nmax, seed)),
        ("gradient", lambda: gradient_consistency(gradient_samples, nmax, seed, fd_step)),
        ("subset oracle", lambda: subset_oracle_check(SUBSET_ORACLE_NMAX, 2, seed)),
        ("ball law k=1", lambda: ball_law_check(GridKind.AXISYMMETRIC_SPHERE, 1, num_nodes=support_nodes)),
        ("ball law k=2", lambda: ball_law_check(GridKind.AXISYMMETRIC_SPHERE, 2, num_nodes=support_nodes)),
        ("mollification", lambda: mollification_convergence()),
    ]
    verdicts = []
    with vlog.run_block("verification", total_steps=len(sweeps)):
        for label, sweep in sweeps:
            start = time.perf_counter()
            with vlog.step(label):
                verdict = sweep()
                vlog.metric("Margin", f"{verdict.margin:.3e}")
                vlog.timing(label, time.perf_counter() - start)
            verdicts.append(verdict)
            log.verdict(verdict.name, verdict.passed, verdict.margin, verdict.detail)
    return verdicts
