"""Support, edges, regularity and spikes of the limiting spectral measure.

On each connected component of ``D = R \\ {0, 1/lambda_j}`` the function ``g``
has at most one maximal interval on which it decreases.  The images of those
intervals are exactly the gaps of the limiting measure, so the support is the
complement of a finite union of intervals, and every soft edge is the value of
``g`` at a critical point: a local maximum gives a left edge and a local
minimum a right edge.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Literal

import numpy as np
from scipy.optimize import brentq

from .errors import (
    EmptyIndexSet,
    NonRegularGeometry,
    RootBracketFailure,
    ValidationError,
)
from .measure import AtomicMeasure, WishartModel, g_deriv, g_eval, validate_gamma

HARD_EDGE_TOL = 1e-12
NEAR_HARD_EDGE = 1e-6
SPIKE_TOL = 1e-10
REGULARITY_THRESHOLD = 1e-6
GRID_POINTS = 4096

Side = Literal["left", "right"]
SpikeKind = Literal["outlier", "no_outlier", "critical"]


@dataclass(frozen=True)
class DomainComponent:
    """One connected component of the domain of ``g`` with its critical points."""

    lo: float
    hi: float
    critical_points: tuple[float, ...]
    decreasing: tuple[tuple[float, float], ...]


@dataclass(frozen=True)
class SupportProfile:
    components: tuple[tuple[float, float], ...]
    zero_mass: float
    hard_edge: bool = False
    near_hard_edge: bool = False

    def __post_init__(self) -> None:
        prev = -math.inf
        for a, b in self.components:
            if not (a < b and a >= 0 and a >= prev):
                raise ValidationError(f"invalid support components {self.components}")
            prev = b

    def contains(self, x: float) -> bool:
        return any(a <= x <= b for a, b in self.components)

    def to_json(self) -> dict:
        return {
            "components": [[a, b] for a, b in self.components],
            "zero_mass": self.zero_mass,
            "hard_edge": self.hard_edge,
            "near_hard_edge": self.near_hard_edge,
        }


@dataclass(frozen=True)
class EdgeReport:
    """A support endpoint together with its local geometry.

    Fields after ``scaling`` are only filled in once a finite model is
    attached with :func:`attach_model`.
    """

    position: float
    preimage: float | None
    side: Side
    hard: bool
    second_deriv: float | None
    scaling: float | None
    regular: bool | None = None
    regularity_margin: float = math.inf
    extremal_index: int | None = None
    finite_n_preimage: float | None = None
    finite_n_position: float | None = None
    finite_n_scaling: float | None = None
    leftmost: bool = field(default=False, compare=False)

    def __post_init__(self) -> None:
        if self.hard:
            if self.position != 0 or self.side != "left":
                raise ValidationError("a hard edge sits at 0 and is a left edge")
        else:
            if self.second_deriv is None or self.scaling is None:
                raise ValidationError("a soft edge needs g'' and a scaling constant")
            if (self.side == "left") != (self.second_deriv < 0):
                raise ValidationError("left edges need g'' < 0, right edges g'' > 0")

    def to_json(self) -> dict:
        def num(v):
            if v is None:
                return None
            if isinstance(v, float) and math.isinf(v):
                return "inf"
            return v

        return {
            "position": self.position,
            "preimage": self.preimage,
            "side": self.side,
            "hard": self.hard,
            "regular": self.regular,
            "regularity_margin": num(self.regularity_margin),
            "second_deriv": self.second_deriv,
            "scaling": self.scaling,
            "extremal_index": self.extremal_index,
            "finite_n_preimage": self.finite_n_preimage,
            "finite_n_position": self.finite_n_position,
            "finite_n_scaling": self.finite_n_scaling,
        }


@dataclass(frozen=True)
class SpikeVerdict:
    kind: SpikeKind
    g_prime_at_inverse: float
    speed_statistic: float | None = None

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "g_prime_at_inverse": self.g_prime_at_inverse,
            "speed_statistic": self.speed_statistic,
        }


def scaling_constant(second_deriv: float) -> float:
    return (2.0 / abs(second_deriv)) ** (1.0 / 3.0)


# ---------------------------------------------------------------------------
# critical-point scan


def _domain_bounds(measure: AtomicMeasure) -> list[tuple[float, float]]:
    poles = list(measure.poles)
    cuts = [-math.inf, 0.0, *poles, math.inf]
    return list(zip(cuts[:-1], cuts[1:]))


def _grid(lo: float, hi: float, scale: float, n: int = GRID_POINTS) -> np.ndarray:
    """Grid on (lo, hi) clustered at finite ends, logarithmic towards infinity."""
    logs = np.logspace(-15, 12, n)
    if math.isinf(lo) and math.isinf(hi):
        raise ValueError("doubly infinite component")
    if math.isinf(hi):
        return lo + scale * logs
    if math.isinf(lo):
        return np.sort(hi - scale * logs)
    width = hi - lo
    n_end = 64
    u = (np.arange(n - 2 * n_end) + 0.5) / (n - 2 * n_end)
    body = lo + width * 0.5 * (1.0 - np.cos(math.pi * u))
    tail = width * np.logspace(-15, -4, n_end)
    pts = np.concatenate([lo + tail, body, hi - tail])
    pts = pts[(pts > lo) & (pts < hi)]
    return np.unique(pts)


def _refine_root(measure: AtomicMeasure, gamma: float, a: float, b: float) -> float:
    def gp(x: float) -> float:
        return g_deriv(measure, gamma, x, 1)

    try:
        x = brentq(gp, a, b, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=400)
    except (ValueError, RuntimeError) as exc:
        raise RootBracketFailure(f"could not refine a root of g' in [{a}, {b}]") from exc
    # one Newton step cleans up the last few ulps when g'' is not tiny
    g2 = g_deriv(measure, gamma, x, 2)
    if g2 != 0:
        y = x - gp(x) / g2
        if a < y < b and abs(gp(y)) < abs(gp(x)):
            x = y
    return x


def _scan_component(measure: AtomicMeasure, gamma: float, lo: float, hi: float) -> DomainComponent:
    scale = 1.0 / float(measure.lambdas[-1])
    if math.isinf(hi) and lo > 0:
        scale = lo
    xs = _grid(lo, hi, scale)
    # stay off the poles themselves
    poles = np.concatenate([[0.0], measure.poles])
    keep = np.min(np.abs(xs[:, None] - poles), axis=1) > 4e-14 * np.maximum(1.0, np.abs(xs))
    xs = xs[keep]
    gp = np.asarray(g_deriv(measure, gamma, xs, 1), dtype=float)
    if not np.all(np.isfinite(gp)):
        raise RootBracketFailure("non-finite g' on the scan grid")
    sgn = np.sign(gp)
    nz = sgn != 0
    xs, sgn = xs[nz], sgn[nz]
    roots = []
    for i in np.nonzero(sgn[:-1] != sgn[1:])[0]:
        roots.append(_refine_root(measure, gamma, float(xs[i]), float(xs[i + 1])))
    # sign of g' on each sub-interval between consecutive roots
    bounds = [lo, *roots, hi]
    decreasing = []
    current = sgn[0]
    for k in range(len(bounds) - 1):
        if current < 0:
            if decreasing and decreasing[-1][1] == bounds[k]:
                decreasing[-1] = (decreasing[-1][0], bounds[k + 1])
            else:
                decreasing.append((bounds[k], bounds[k + 1]))
        current = -current
    if len(decreasing) > 1:
        raise RootBracketFailure(
            f"found {len(decreasing)} decreasing intervals on ({lo}, {hi}); at most one is possible"
        )
    return DomainComponent(lo, hi, tuple(roots), tuple(decreasing))


def scan_domain(measure: AtomicMeasure, gamma: float) -> list[DomainComponent]:
    """Critical points of ``g`` and its decreasing interval on each component of D."""
    gamma = validate_gamma(gamma)
    return [_scan_component(measure, gamma, lo, hi) for lo, hi in _domain_bounds(measure)]


def _limit_from_right(x: float) -> float:
    # decreasing interval starting at x: only -inf (g -> 0) or 0 (g -> +inf) are possible
    if x == -math.inf:
        return 0.0
    if x == 0.0:
        return math.inf
    raise NonRegularGeometry(f"decreasing interval starts at the pole {x}")


def _limit_from_left(x: float) -> float:
    if x == math.inf:
        return 0.0
    if x == 0.0:
        return -math.inf
    raise NonRegularGeometry(f"decreasing interval ends at the pole {x}")


@dataclass(frozen=True)
class _Gap:
    lo: float
    lo_pre: float | None
    hi: float
    hi_pre: float | None


def _gaps(measure: AtomicMeasure, gamma: float, comps: list[DomainComponent]) -> list[_Gap]:
    gaps = []
    for comp in comps:
        for left, right in comp.decreasing:
            crit = set(comp.critical_points)
            top_pre = left if left in crit else None
            bot_pre = right if right in crit else None
            top = g_eval(measure, gamma, left) if top_pre is not None else _limit_from_right(left)
            bot = g_eval(measure, gamma, right) if bot_pre is not None else _limit_from_left(right)
            gaps.append(_Gap(bot, bot_pre, top, top_pre))
    gaps.sort(key=lambda gp: gp.lo)
    return gaps


def _profile_and_gaps(measure: AtomicMeasure, gamma: float):
    gamma = validate_gamma(gamma)
    hard = abs(gamma - 1.0) <= HARD_EDGE_TOL
    if hard:
        gamma = 1.0
    comps = scan_domain(measure, gamma)
    gaps = _gaps(measure, gamma, comps)
    pieces: list[tuple[float, float, float | None, float | None]] = []
    cursor, cursor_pre = 0.0, None
    for gap in gaps:
        if gap.hi <= cursor:
            continue
        if gap.lo > cursor:
            pieces.append((cursor, gap.lo, cursor_pre, gap.lo_pre))
        if gap.hi > cursor:
            cursor, cursor_pre = gap.hi, gap.hi_pre
    if not math.isinf(cursor):
        raise NonRegularGeometry("support is unbounded; the scan missed the rightmost gap")
    near = (not hard) and abs(gamma - 1.0) < NEAR_HARD_EDGE
    profile = SupportProfile(
        tuple((a, b) for a, b, _, _ in pieces),
        max(1.0 - gamma, 0.0),
        hard_edge=hard,
        near_hard_edge=near,
    )
    return profile, pieces, gamma


def compute_support(measure: AtomicMeasure, gamma: float) -> SupportProfile:
    """Support of the limiting measure on (0, inf) as a list of closed intervals."""
    return _profile_and_gaps(measure, gamma)[0]


def _soft_edge(measure, gamma, position, preimage, leftmost=False) -> EdgeReport:
    g2 = float(g_deriv(measure, gamma, preimage, 2))
    side: Side = "left" if g2 < 0 else "right"
    return EdgeReport(
        position=float(position),
        preimage=float(preimage),
        side=side,
        hard=False,
        second_deriv=g2,
        scaling=scaling_constant(g2),
        leftmost=leftmost,
    )


def find_edges(measure: AtomicMeasure, gamma: float) -> list[EdgeReport]:
    """All edges of the support sorted by position."""
    profile, pieces, gamma = _profile_and_gaps(measure, gamma)
    edges = []
    for k, (a, b, a_pre, b_pre) in enumerate(pieces):
        if a == 0.0 and a_pre is None:
            if not profile.hard_edge:
                raise NonRegularGeometry("support reaches 0 although gamma != 1")
            edges.append(
                EdgeReport(0.0, None, "left", True, None, None, regular=True, leftmost=True)
            )
        elif a_pre is None:
            raise NonRegularGeometry(f"left endpoint {a} has no critical preimage")
        else:
            edges.append(_soft_edge(measure, gamma, a, a_pre, leftmost=(k == 0)))
        if b_pre is None:
            raise NonRegularGeometry(f"right endpoint {b} has no critical preimage")
        edges.append(_soft_edge(measure, gamma, b, b_pre))
    return edges


def edge_adjacent(profile: SupportProfile, x: float, tol: float = 1e-3) -> bool:
    """True when ``x`` is within ``tol`` of an endpoint, where density values lose accuracy."""
    return any(min(abs(x - a), abs(x - b)) < tol for a, b in profile.components)


# ---------------------------------------------------------------------------
# finite-N quantities


def check_regularity(
    edge: EdgeReport, model: WishartModel, threshold: float = REGULARITY_THRESHOLD
) -> tuple[bool, float]:
    """Distance from the preimage to the model's poles, and whether it exceeds ``threshold``."""
    if edge.hard or edge.preimage is None:
        raise ValidationError("regularity is defined for soft edges only")
    margin = float(np.min(np.abs(edge.preimage - 1.0 / model.array)))
    if edge.preimage < 0:
        return True, margin
    return margin > threshold, margin


def _component_of(model_measure: AtomicMeasure, c: float) -> tuple[float, float]:
    for lo, hi in _domain_bounds(model_measure):
        if lo < c < hi:
            return lo, hi
    raise RootBracketFailure(f"preimage {c} sits on a pole of the finite-N g-function")


def finite_n_edge(edge: EdgeReport, model: WishartModel) -> tuple[float, float, float]:
    """Finite-N preimage, edge position and scaling constant for ``edge``.

    Returns
    -------
    (c_N, position_N, scaling_N)
    """
    if edge.hard or edge.preimage is None:
        raise ValidationError("finite-N edges are defined for soft edges only")
    nu_n, gamma_n = model.measure(), model.gamma
    lo, hi = _component_of(nu_n, edge.preimage)
    comp = _scan_component(nu_n, gamma_n, lo, hi)
    want_left = edge.side == "left"
    candidates = [
        c for c in comp.critical_points if (g_deriv(nu_n, gamma_n, c, 2) < 0) == want_left
    ]
    if not candidates:
        raise RootBracketFailure("no critical point of the finite-N g-function near the edge")
    c_n = min(candidates, key=lambda c: abs(c - edge.preimage))
    g2 = float(g_deriv(nu_n, gamma_n, c_n, 2))
    return c_n, float(g_eval(nu_n, gamma_n, c_n)), scaling_constant(g2)


def extremal_index(edge: EdgeReport, model: WishartModel) -> int:
    """1-based index into the ascending companion eigenvalues that tracks ``edge``."""
    if edge.hard or edge.preimage is None:
        raise ValidationError("extremal indices are defined for soft edges only")
    inv = 1.0 / model.array  # descending because lambdas ascend
    c = edge.preimage
    if edge.side == "left":
        if c < 0:
            return model.n - model.N + 1
        hits = np.nonzero(inv < c)[0]
        if hits.size == 0:
            raise EmptyIndexSet(f"no 1/lambda_j below the preimage {c}")
        return int(hits[0]) + 1
    hits = np.nonzero(inv > c)[0]
    if hits.size == 0:
        raise EmptyIndexSet(f"no 1/lambda_j above the preimage {c}")
    return int(hits[-1]) + 1


def attach_model(
    edge: EdgeReport, model: WishartModel, threshold: float = REGULARITY_THRESHOLD
) -> EdgeReport:
    """Fill in regularity, extremal index and finite-N data for ``edge``."""
    if edge.hard:
        return edge
    regular, margin = check_regularity(edge, model, threshold)
    updates: dict = {"regular": regular, "regularity_margin": margin}
    if regular:
        c_n, pos_n, sc_n = finite_n_edge(edge, model)
        updates.update(
            finite_n_preimage=c_n,
            finite_n_position=pos_n,
            finite_n_scaling=sc_n,
            extremal_index=extremal_index(edge, model),
        )
    return replace(edge, **updates)


def model_edges(
    model: WishartModel,
    measure: AtomicMeasure | None = None,
    gamma: float | None = None,
    threshold: float = REGULARITY_THRESHOLD,
) -> list[EdgeReport]:
    """Edges of the limit (defaults to the model's own measure) with finite-N data attached."""
    if measure is None:
        measure = model.measure()
    if gamma is None:
        gamma = model.gamma
    return [attach_model(e, model, threshold) for e in find_edges(measure, gamma)]


def classify_spike(measure_base: AtomicMeasure, gamma: float, zeta: float,
                   *, N: int | None = None, d_n: float | None = None) -> SpikeVerdict:
    """Does a population spike ``zeta`` on top of the base measure create an outlier?

    When ``N`` and the finite-N right preimage ``d_n`` are given, the verdict
    also carries ``N^(1/3) |1/zeta - d_n|``, which must vanish for the spike to
    sit in the critical (deformed Tracy-Widom) regime.
    """
    if not zeta > 0:
        raise ValidationError("spike must be positive")
    gp = float(g_deriv(measure_base, gamma, 1.0 / zeta, 1))
    if gp < -SPIKE_TOL:
        kind: SpikeKind = "outlier"
    elif gp > SPIKE_TOL:
        kind = "no_outlier"
    else:
        kind = "critical"
    speed = None
    if N is not None and d_n is not None:
        speed = N ** (1.0 / 3.0) * abs(1.0 / zeta - d_n)
    return SpikeVerdict(kind, gp, speed)


def hard_edge_sigma(model: WishartModel) -> float:
    return 4.0 / model.N * float(np.sum(1.0 / model.array))
