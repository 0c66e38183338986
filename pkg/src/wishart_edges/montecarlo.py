"""Monte Carlo sampling of complex correlated Wishart spectra.

Each trial draws its own random stream from ``(seed, trial)`` through a
counter-based generator, so results do not depend on how trials are spread
over threads.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Literal

import numpy as np
from scipy.interpolate import PchipInterpolator

from .errors import (
    DistinctEdgesRequired,
    EigensolverFailure,
    EmptySamples,
    ModeMismatch,
    OutlierPresent,
    ShapeMismatch,
    ValidationError,
)
from .fredholm import bessel_gap_values, tw_cdf_values
from .measure import AtomicMeasure, WishartModel
from .support import EdgeReport, classify_spike, hard_edge_sigma, model_edges

THREADS_ENV = "WISHART_EDGES_THREADS"
TRACE_TOL = 1e-8


@dataclass(frozen=True)
class SimulationSummary:
    experiment: str
    trials: int
    seed: int
    samples: list
    ks_distance: float
    mean: float
    variance: float
    correlation: float | None = None
    details: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not 0.0 <= self.ks_distance <= 1.0:
            raise ValidationError("ks_distance must lie in [0, 1]")
        if self.correlation is not None and abs(self.correlation) > 1.0 + 1e-12:
            raise ValidationError("correlation must lie in [-1, 1]")

    def to_json(self) -> dict:
        return {
            "experiment": self.experiment,
            "trials": self.trials,
            "seed": self.seed,
            "samples": self.samples,
            "ks_distance": self.ks_distance,
            "mean": self.mean,
            "variance": self.variance,
            "correlation": self.correlation,
            "details": self.details,
        }


def default_threads() -> int:
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            value = int(env)
        except ValueError as exc:
            raise ValidationError(f"{THREADS_ENV} must be a positive integer") from exc
        if value < 1:
            raise ValidationError(f"{THREADS_ENV} must be a positive integer")
        return value
    return os.cpu_count() or 1


def _check_seed(seed: int) -> int:
    if int(seed) != seed or not 0 <= seed < 2**64:
        raise ValidationError("seed must be an integer in [0, 2^64)")
    return int(seed)


def _generator(seed: int, trial: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(trial,))))


def _chunk_size(model: WishartModel) -> int:
    # depends only on the model, so the work split never depends on the thread count
    return int(max(1, min(64, 2_000_000 // (model.N * model.n))))


def _spectra_chunk(model: WishartModel, seed: int, trials: range) -> np.ndarray:
    n, N = model.n, model.N
    root = np.sqrt(model.array)
    y = np.empty((len(trials), N, n), dtype=complex)
    for k, trial in enumerate(trials):
        g = _generator(seed, trial).standard_normal((2, N, n))
        y[k] = (g[0] + 1j * g[1]) * (root / math.sqrt(2.0))
    yh = np.conj(np.swapaxes(y, 1, 2))
    # the n x n companion and the N x N matrix share their nonzero spectrum
    gram = (yh @ y if n <= N else y @ yh) / N
    eig = np.linalg.eigvalsh(gram)
    trace = np.sum(np.abs(y) ** 2, axis=(1, 2)) / N
    if np.any(np.abs(eig.sum(axis=1) - trace) > TRACE_TOL * trace):
        raise EigensolverFailure("eigenvalue sum does not reproduce the trace")
    eig = np.maximum(eig, 0.0)  # round-off below zero on a positive semidefinite form
    if n > N:
        eig = np.concatenate([np.zeros((len(trials), n - N)), eig], axis=1)
    return eig


def sample_spectra(model: WishartModel, seed: int, trials: int,
                   threads: int | None = None) -> np.ndarray:
    """Ascending companion spectra, one row per trial."""
    seed = _check_seed(seed)
    if trials < 1:
        raise ValidationError("need at least one trial")
    threads = default_threads() if threads is None else int(threads)
    if threads < 1:
        raise ValidationError("threads must be positive")
    size = _chunk_size(model)
    chunks = [range(s, min(s + size, trials)) for s in range(0, trials, size)]
    if threads == 1 or len(chunks) == 1:
        parts = [_spectra_chunk(model, seed, c) for c in chunks]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda c: _spectra_chunk(model, seed, c), chunks))
    return np.concatenate(parts, axis=0)


def sample_wishart(model: WishartModel, seed: int, trial: int = 0) -> np.ndarray:
    """Ascending eigenvalues of ``Sigma^(1/2) X* X Sigma^(1/2) / N`` for one trial."""
    seed = _check_seed(seed)
    return _spectra_chunk(model, seed, range(trial, trial + 1))[0]


# ---------------------------------------------------------------------------
# reference distributions


def ks_distance(samples, cdf: Callable) -> float:
    """One-sample Kolmogorov-Smirnov distance ``sup |F_m - F|``."""
    xs = np.sort(np.asarray(samples, dtype=float).ravel())
    m = xs.size
    if m == 0:
        raise EmptySamples("ks_distance needs at least one sample")
    try:
        f = np.asarray(cdf(xs), dtype=float)
        if f.shape != xs.shape:
            raise TypeError
    except (TypeError, ValueError):
        f = np.array([float(cdf(v)) for v in xs])
    i = np.arange(1, m + 1)
    return float(max(np.max(np.abs(i / m - f)), np.max(np.abs(f - (i - 1) / m))))


@lru_cache(maxsize=1)
def _tw_table() -> PchipInterpolator:
    grid = np.linspace(-10.0, 8.0, 901)
    values = np.maximum.accumulate(np.clip(tw_cdf_values(grid), 0.0, 1.0))
    return PchipInterpolator(grid, values, extrapolate=False)


def tw_cdf_interpolated(s) -> np.ndarray:
    """Tabulated ``F_2`` (spacing 0.02, monotone cubic interpolation)."""
    s = np.asarray(s, dtype=float)
    table = _tw_table()
    out = table(np.clip(s, -10.0, 8.0))
    out = np.where(s < -10.0, 0.0, out)
    return np.where(s > 8.0, 1.0, out)


def tw_sum_cdf(c1: float, c2: float) -> Callable[[np.ndarray], np.ndarray]:
    """Distribution function of ``c1 X + c2 Y`` for independent ``F_2`` variables."""
    table = _tw_table()
    grid = np.linspace(-10.0, 8.0, 3601)
    dens = np.nan_to_num(table.derivative()(grid))
    step = grid[1] - grid[0]

    def cdf(t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        inner = tw_cdf_interpolated((t[:, None] - c2 * grid[None, :]) / c1)
        return inner @ dens * step

    return cdf


# ---------------------------------------------------------------------------
# experiments


def _check_edge(edge: EdgeReport) -> None:
    if edge.hard:
        raise ValidationError("soft-edge experiments need a soft edge")
    if edge.extremal_index is None or edge.finite_n_position is None:
        raise ValidationError("edge needs finite-N data; build it with attach_model")
    if not edge.regular:
        raise ValidationError("edge is not regular")


def _rescale(edge: EdgeReport, model: WishartModel, x: np.ndarray) -> np.ndarray:
    factor = model.N ** (2.0 / 3.0) * edge.finite_n_scaling
    if edge.side == "right":
        return factor * (x - edge.finite_n_position)
    return factor * (edge.finite_n_position - x)


def _summary(experiment, trials, seed, samples, ks, correlation=None, details=None):
    arr = np.asarray(samples, dtype=float)
    flat = arr if arr.ndim == 1 else arr[:, 0]
    return SimulationSummary(
        experiment=experiment,
        trials=int(trials),
        seed=int(seed),
        samples=arr.tolist(),
        ks_distance=float(ks),
        mean=float(np.mean(flat)),
        variance=float(np.var(flat, ddof=1)) if flat.size > 1 else 0.0,
        correlation=correlation,
        details=details or {},
    )


def run_edge_fluctuations(model: WishartModel, edge: EdgeReport, trials: int, seed: int,
                          threads: int | None = None) -> SimulationSummary:
    """Rescaled extremal eigenvalue at ``edge`` against the Tracy-Widom law.

    Right edges use ``N^(2/3) delta_N (x - b_N)``, left edges the reversed
    ``N^(2/3) sigma_N (a_N - x)``; both should be ``F_2`` distributed.
    """
    _check_edge(edge)
    spectra = sample_spectra(model, seed, trials, threads)
    samples = _rescale(edge, model, spectra[:, edge.extremal_index - 1])
    ks = ks_distance(samples, tw_cdf_interpolated)
    details = {"edge_position": edge.finite_n_position, "side": edge.side,
               "extremal_index": edge.extremal_index,
               "median": float(np.median(samples))}
    return _summary("edge", trials, seed, samples, ks, details=details)


def joint_product_distance(a, b) -> float:
    """``sup |F_joint(s, t) - F_a(s) F_b(t)|`` over the sample grid."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    m = a.size
    if m == 0 or b.size != m:
        raise EmptySamples("need two samples of equal positive length")
    ra = np.argsort(np.argsort(a, kind="stable"), kind="stable")
    rb = np.argsort(np.argsort(b, kind="stable"), kind="stable")
    counts = np.zeros((m, m), dtype=np.int32)
    counts[ra, rb] = 1
    joint = counts.cumsum(axis=0).cumsum(axis=1) / m
    marg = np.arange(1, m + 1) / m
    return float(np.max(np.abs(joint - marg[:, None] * marg[None, :])))


def run_independence(model: WishartModel, edge_a: EdgeReport, edge_b: EdgeReport, trials: int,
                     seed: int, threads: int | None = None) -> SimulationSummary:
    """Joint fluctuations at two distinct edges: correlation and product-ECDF distance."""
    if edge_a.position == edge_b.position and edge_a.side == edge_b.side:
        raise DistinctEdgesRequired("the two edges must differ")
    _check_edge(edge_a)
    _check_edge(edge_b)
    spectra = sample_spectra(model, seed, trials, threads)
    sa = _rescale(edge_a, model, spectra[:, edge_a.extremal_index - 1])
    sb = _rescale(edge_b, model, spectra[:, edge_b.extremal_index - 1])
    corr = float(np.corrcoef(sa, sb)[0, 1])
    dist = joint_product_distance(sa, sb)
    details = {
        "ks_a": ks_distance(sa, tw_cdf_interpolated),
        "ks_b": ks_distance(sb, tw_cdf_interpolated),
        "positions": [edge_a.finite_n_position, edge_b.finite_n_position],
    }
    return _summary("independence", trials, seed, np.column_stack([sa, sb]), dist,
                    correlation=corr, details=details)


def _smallest_index(model: WishartModel) -> int:
    """0-based column of the smallest eigenvalue of the N x N matrix in the companion spectrum."""
    return max(model.n - model.N, 0)


def run_hard_edge(model: WishartModel, alpha: int, trials: int, seed: int,
                  threads: int | None = None) -> SimulationSummary:
    """``N^2 sigma_N x_min`` against the survival function ``s -> bessel_gap(alpha, s)``."""
    if model.n - model.N != alpha:
        raise ShapeMismatch(f"n - N = {model.n - model.N} but alpha = {alpha}")
    if abs(alpha) > 5:
        raise ShapeMismatch("hard-edge experiments support |alpha| <= 5")
    sigma = hard_edge_sigma(model)
    spectra = sample_spectra(model, seed, trials, threads)
    x_min = spectra[:, _smallest_index(model)]
    samples = model.N**2 * sigma * x_min
    ks = ks_distance(samples, lambda s: 1.0 - bessel_gap_values(alpha, s))
    return _summary("hard-edge", trials, seed, samples, ks,
                    details={"sigma_N": sigma, "alpha": alpha})


ConditionMode = Literal["soft", "hard"]
SPIKE_MULTIPLICITY = 10


def outlier_spikes(model: WishartModel) -> list[float]:
    """Population values of multiplicity <= 10 that create outliers.

    Each such value is classified against the measure of the remaining
    population eigenvalues (shape ratio rescaled accordingly).
    """
    values, counts = np.unique(model.array, return_counts=True)
    found = []
    for value, count in zip(values, counts):
        rest = model.n - count
        if count > SPIKE_MULTIPLICITY or 2 * rest < model.n:
            continue
        keep = values != value
        base = AtomicMeasure.from_arrays(values[keep], counts[keep] / rest)
        if classify_spike(base, rest / model.N, float(value)).kind == "outlier":
            found.append(float(value))
    return found


def _condition_mode(model: WishartModel, mode: ConditionMode | None) -> ConditionMode:
    alpha = model.n - model.N
    if mode is None:
        if 0 <= alpha <= 5:
            return "hard"
        if alpha > 0:
            return "soft"
        raise ModeMismatch("condition numbers need n >= N")
    if mode == "soft" and alpha <= 0:
        raise ModeMismatch("the soft-edge condition-number law needs n > N")
    if mode == "hard" and not 0 <= alpha <= 5:
        raise ModeMismatch("the hard-edge condition-number law needs n = N + alpha, 0 <= alpha <= 5")
    if mode not in ("soft", "hard"):
        raise ModeMismatch(f"unknown mode {mode!r}")
    return mode


def run_condition_number(model: WishartModel, trials: int, seed: int,
                         mode: ConditionMode | None = None,
                         threads: int | None = None) -> SimulationSummary:
    """Condition number ``kappa_N = x_max / x_min`` of the N x N matrix.

    ``soft`` (n > N): samples of ``kappa_N``; the KS distance compares
    ``N^(2/3) (kappa_N - b_N/a_N)`` with ``X/(delta a) + b Y/(sigma a^2)``
    for independent Tracy-Widom ``X, Y``.
    ``hard`` (n = N + alpha): samples of ``kappa_N / N^2`` compared with the
    law of ``b sigma / X`` where ``P(X >= s) = bessel_gap(alpha, s)``.
    """
    mode = _condition_mode(model, mode)
    edges = model_edges(model)
    right = edges[-1]
    spikes = outlier_spikes(model)
    if spikes or right.extremal_index != model.n:
        raise OutlierPresent(f"population spikes {spikes} create outliers; the limit law assumes none")
    spectra = sample_spectra(model, seed, trials, threads)
    x_max = spectra[:, -1]
    x_min = spectra[:, _smallest_index(model)]
    kappa = x_max / x_min
    b = right.finite_n_position
    if mode == "soft":
        left = edges[0]
        a = left.finite_n_position
        target = b / a
        fluct = model.N ** (2.0 / 3.0) * (kappa - target)
        delta, sigma = right.finite_n_scaling, left.finite_n_scaling
        law = tw_sum_cdf(1.0 / (delta * a), b / (sigma * a * a))
        ks = ks_distance(fluct, law)
        details = {
            "mode": mode, "limit_ratio": target,
            "relative_mean_error": float(np.mean(kappa) / target - 1.0),
            "fluctuation_mean": float(np.mean(fluct)),
            "scalings": [1.0 / (delta * a), b / (sigma * a * a)],
        }
        return _summary("condition", trials, seed, kappa, ks, details=details)
    alpha = model.n - model.N
    sigma = hard_edge_sigma(model)
    scaled = kappa / model.N**2
    scale = b * sigma

    def law(t):
        t = np.asarray(t, dtype=float)
        return bessel_gap_values(alpha, scale / t)

    ks = ks_distance(scaled, law)
    details = {"mode": mode, "b": b, "sigma_N": sigma, "alpha": alpha}
    return _summary("condition", trials, seed, scaled, ks, details=details)
