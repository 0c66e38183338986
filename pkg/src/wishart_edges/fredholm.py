"""Fredholm determinants by Nystrom discretization.

``det(I - K)`` on an interval is approximated by ``det(I - A)`` with
``A_ij = sqrt(w_i) K(x_i, x_j) sqrt(w_j)`` on Gauss-Legendre nodes.  For
analytic kernels this converges exponentially in the number of nodes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Protocol

import numpy as np

from .errors import (
    ContourPoleCollision,
    NumericalError,
    NumericalOverflow,
    QuadratureDivergence,
    ValidationError,
)
from .measure import WishartModel
from .specfun import (
    AIRY_LIMIT,
    airy_kernel_matrix,
    bessel_kernel_matrix,
    deformed_airy_kernel_matrix,
)

MAX_ORDER = 2048
MIN_ORDER = 8
MAX_SPREAD = 1e3
LOG_OVERFLOW = 700.0


class ImaginaryResidual(NumericalError):
    """A quantity that must be real came out with a significant imaginary part."""


@dataclass(frozen=True)
class FredholmResult:
    value: float
    order: int
    error_estimate: float
    imag_residual: float = 0.0

    def to_json(self) -> dict:
        return {
            "value": self.value,
            "order": self.order,
            "error_estimate": self.error_estimate,
            "imag_residual": self.imag_residual,
        }


class KernelSpec(Protocol):
    def nystrom(self, nodes: np.ndarray, weights: np.ndarray) -> np.ndarray:
        """Matrix ``A`` with ``det(I - A)`` approximating the Fredholm determinant."""


def _symmetric_nystrom(kmat: np.ndarray, weights: np.ndarray) -> np.ndarray:
    sw = np.sqrt(weights)
    return sw[:, None] * kmat * sw[None, :]


@dataclass(frozen=True)
class AiryKernel:
    def nystrom(self, nodes, weights):
        return _symmetric_nystrom(airy_kernel_matrix(nodes, nodes), weights)


@dataclass(frozen=True)
class DeformedAiryKernel:
    k: int
    nodes_per_ray: int = 128
    anchor: float = 0.5

    def __post_init__(self) -> None:
        if int(self.k) != self.k or self.k < 0:
            raise ValidationError("deformation rank k must be a nonnegative integer")

    def nystrom(self, nodes, weights):
        kmat = deformed_airy_kernel_matrix(self.k, nodes, nodes, self.nodes_per_ray, self.anchor)
        return _symmetric_nystrom(kmat, weights)


@dataclass(frozen=True)
class BesselKernel:
    alpha: int

    def nystrom(self, nodes, weights):
        kmat = bessel_kernel_matrix(self.alpha, nodes, nodes)
        if abs(int(self.alpha)) % 2:
            # K is sqrt(xy) times an analytic function for odd order; conjugating
            # by sqrt(x) leaves the determinant alone and restores analyticity
            root = np.sqrt(nodes)
            kmat = kmat * root[:, None] / root[None, :]
        return _symmetric_nystrom(kmat, weights)


@dataclass(frozen=True)
class CallableKernel:
    """Wrap ``f(x, y)`` broadcasting over ``x[:, None], y[None, :]``."""

    func: Callable[[np.ndarray, np.ndarray], np.ndarray]

    def nystrom(self, nodes, weights):
        kmat = np.asarray(self.func(nodes[:, None], nodes[None, :]))
        kmat = np.broadcast_to(kmat, (nodes.size, nodes.size))
        return _symmetric_nystrom(kmat, weights)


def _as_kernel(kernel) -> KernelSpec:
    if hasattr(kernel, "nystrom"):
        return kernel
    if callable(kernel):
        return CallableKernel(kernel)
    raise ValidationError("kernel must be a KernelSpec or a callable f(x, y)")


def _det_at(kernel: KernelSpec, lo: float, hi: float, order: int) -> complex:
    t, w = np.polynomial.legendre.leggauss(order)
    nodes = 0.5 * (hi - lo) * t + 0.5 * (hi + lo)
    weights = 0.5 * (hi - lo) * w
    a = kernel.nystrom(nodes, weights)
    # numpy's det is an LU factorization with partial pivoting
    return complex(np.linalg.det(np.eye(order) - a))


def fredholm_det(kernel, interval: tuple[float, float], order: int = 64,
                 *, adaptive: bool = False, tol: float = 1e-12) -> FredholmResult:
    """Fredholm determinant ``det(I - K)`` on ``interval``.

    Parameters
    ----------
    kernel : KernelSpec or callable
    interval : (lo, hi)
    order : int
        Number of Gauss-Legendre nodes; the error estimate comes from a rerun
        at half the order.
    adaptive : bool
        Double the order until the error estimate drops below ``tol``.
    """
    lo, hi = float(interval[0]), float(interval[1])
    if not lo <= hi:
        raise ValidationError(f"interval must satisfy lo <= hi, got ({lo}, {hi})")
    if not MIN_ORDER <= order <= MAX_ORDER:
        raise ValidationError(f"order must lie in [{MIN_ORDER}, {MAX_ORDER}]")
    if lo == hi:
        return FredholmResult(1.0, order, 0.0, 0.0)
    kern = _as_kernel(kernel)
    while True:
        full = _det_at(kern, lo, hi, order)
        half = _det_at(kern, lo, hi, max(order // 2, 4))
        err = abs(full - half)
        if not adaptive or err <= tol or order >= MAX_ORDER:
            break
        order = min(2 * order, MAX_ORDER)
    if err > 1e-4 and order >= MAX_ORDER:
        raise QuadratureDivergence(f"Nystrom error estimate {err:.3g} at the maximal order")
    return FredholmResult(full.real, order, err, abs(full.imag))


# ---------------------------------------------------------------------------
# limiting laws


def _airy_tail(u: float) -> float:
    """Bound on the trace of the Airy kernel beyond ``u``."""
    if u <= 0:
        return math.inf
    kuu = float(airy_kernel_matrix([u], [u])[0, 0])
    return kuu / (2.0 * math.sqrt(u))


def _airy_upper(s: float, T: float) -> float:
    upper = s + T
    while _airy_tail(upper) > 1e-12:
        upper += 1.0
    if upper > AIRY_LIMIT:
        raise ValidationError("Airy truncation exceeds the supported argument range")
    return upper


def tw_cdf(s: float, order: int = 96, T: float = 16.0, *, full: bool = False):
    """Tracy-Widom GUE distribution function ``F_2(s) = det(I - K_Ai)`` on (s, inf)."""
    if s < -12:
        raise ValidationError("tw_cdf is supported for s >= -12")
    res = fredholm_det(AiryKernel(), (s, _airy_upper(s, T)), order)
    return res if full else res.value


def deformed_tw_cdf(k: int, s: float, order: int = 96, T: float = 16.0,
                    *, nodes_per_ray: int = 128, full: bool = False):
    """Distribution function of the rank-k deformed Airy kernel on (s, inf)."""
    if not 0 <= k <= 10:
        raise ValidationError("deformation rank must satisfy 0 <= k <= 10")
    if s < -12:
        raise ValidationError("deformed_tw_cdf is supported for s >= -12")
    res = fredholm_det(DeformedAiryKernel(k, nodes_per_ray), (s, _airy_upper(s, T)), order)
    return res if full else res.value


def bessel_gap(alpha: int, s: float, order: int = 64, *, full: bool = False):
    """Hard-edge gap probability ``det(I - K_Be,alpha)`` on (0, s)."""
    if not 0 < s <= 500:
        raise ValidationError("bessel_gap is supported for s in (0, 500]")
    if int(alpha) != alpha or abs(alpha) > 50:
        raise ValidationError("alpha must be an integer with |alpha| <= 50")
    res = fredholm_det(BesselKernel(int(alpha)), (0.0, s), order)
    return res if full else res.value


# ---------------------------------------------------------------------------
# finite-N kernel


@dataclass(frozen=True)
class ContourSpec:
    """Circles for the finite-N double contour integral.

    ``Theta`` is centred at 0 with radius ``theta_radius``; ``Gamma`` is centred
    at ``gamma_center`` on the real axis.  The conjugation parameter ``q``
    separates them: Theta lies left of Re z = q and Gamma to its right.
    """

    q: float
    theta_radius: float
    gamma_center: float
    gamma_radius: float
    nodes_per_contour: int = 256

    def __post_init__(self) -> None:
        if not (self.theta_radius > 0 and self.gamma_radius > 0):
            raise ValidationError("contour radii must be positive")
        if not self.theta_radius < self.q:
            raise ValidationError("Theta must lie in Re z < q (theta_radius < q)")
        if not self.gamma_center - self.gamma_radius > self.q:
            raise ValidationError("Gamma must lie in Re z > q")
        if self.nodes_per_contour < 8:
            raise ValidationError("need at least 8 nodes per contour")

    def check(self, model: WishartModel) -> None:
        inv = 1.0 / model.array
        if np.any(np.abs(inv - self.gamma_center) >= self.gamma_radius):
            raise ValidationError("Gamma must enclose every 1/lambda_j")

    def shifted(self, dq: float) -> "ContourSpec":
        return ContourSpec(self.q + dq, self.theta_radius, self.gamma_center,
                           self.gamma_radius, self.nodes_per_contour)

    def to_json(self) -> dict:
        return {
            "q": self.q,
            "theta_radius": self.theta_radius,
            "gamma_center": self.gamma_center,
            "gamma_radius": self.gamma_radius,
            "nodes_per_contour": self.nodes_per_contour,
        }


def _check_spread(model: WishartModel) -> None:
    spread = model.lambdas[-1] / model.lambdas[0]
    if spread > MAX_SPREAD:
        raise ValidationError(f"eigenvalue spread {spread:.3g} exceeds the supported 1e3")


def default_contour(model: WishartModel, x_max: float | None = None) -> ContourSpec:
    """Contours satisfying the half-plane constraints, with enough nodes for ``x <= x_max``."""
    _check_spread(model)
    inv_max = 1.0 / model.lambdas[-1]
    inv_min = 1.0 / model.lambdas[0]
    q = inv_max / 2.0
    half_width = (inv_min - inv_max) / 2.0
    radius = half_width + 0.4 * (inv_max - q)
    nodes = 256
    # trapezoid nodes must resolve exp(N x z) on Gamma, the w^-N Laurent tail on Theta
    # and, when the poles are spread out, their distance to the circle
    need = math.e * model.N * (x_max or 0.0) * radius + 64
    need = max(need, model.N + model.n + 64)
    if half_width > 0:
        need = max(need, 40.0 / math.log(radius / half_width) + 2 * model.n)
    while nodes < need:
        nodes += 64
    return ContourSpec(q, q / 2.0, (inv_max + inv_min) / 2.0, radius, nodes)


@dataclass(frozen=True)
class _FiniteFactors:
    z: np.ndarray
    w: np.ndarray
    log_a: np.ndarray  # (len(x), M) log of the z-side factor
    log_b: np.ndarray  # (len(y), M) log of the w-side factor


def _finite_factors(model: WishartModel, contour: ContourSpec, xs, ys) -> _FiniteFactors:
    _check_spread(model)
    contour.check(model)
    m = contour.nodes_per_contour
    theta = 2 * math.pi * np.arange(m) / m
    rot = np.exp(1j * theta)
    z = contour.gamma_center + contour.gamma_radius * rot
    w = contour.theta_radius * rot
    values, mult = np.unique(model.array, return_counts=True)
    poles = 1.0 / values
    every_pole = np.concatenate([[0.0], poles])
    for nodes in (z, w):
        if np.min(np.abs(nodes[:, None] - every_pole[None, :])) <= 1e-10:
            raise ContourPoleCollision("a quadrature node is within 1e-10 of a pole")
    N, q = model.N, contour.q
    lz = (np.log(z - contour.gamma_center) + N * np.log(z)
          - np.log(z[:, None] - poles[None, :]) @ mult)
    lw = np.log(w) - N * np.log(w) + np.log(w[:, None] - poles[None, :]) @ mult
    log_a = lz[None, :] - N * np.asarray(xs)[:, None] * (z[None, :] - q)
    log_b = lw[None, :] + N * np.asarray(ys)[:, None] * (w[None, :] - q)
    return _FiniteFactors(z, w, log_a, log_b)


def _balanced(f: _FiniteFactors, N: int):
    """Kernel ``K_ij = exp(r_i + c_j) * Kt_ij`` with ``Kt`` of moderate size."""
    m = f.z.size
    r = f.log_a.real.max(axis=1)
    c = f.log_b.real.max(axis=1)
    a = np.exp(f.log_a - r[:, None])
    b = np.exp(f.log_b - c[:, None])
    cauchy = 1.0 / (f.w[None, :] - f.z[:, None])
    kt = (a @ cauchy @ b.T) * (N / m**2)
    return kt, r, c


def finite_kernel_matrix(model: WishartModel, contour: ContourSpec, x, y) -> np.ndarray:
    """Complex finite-N kernel on a tensor grid (imaginary part kept)."""
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    ys = np.atleast_1d(np.asarray(y, dtype=float))
    f = _finite_factors(model, contour, xs, ys)
    kt, r, c = _balanced(f, model.N)
    scale = r[:, None] + c[None, :]
    if np.any(scale > LOG_OVERFLOW):
        raise NumericalOverflow("finite-N kernel magnitude exceeds the double range")
    return kt * np.exp(scale)


def finite_kernel(model: WishartModel, contour: ContourSpec, x: float, y: float) -> float:
    """Correlation kernel of the finite-N eigenvalue process at ``(x, y)``.

    The value depends on ``q`` through the harmless conjugation factor
    ``exp(N q (x - y))``; determinants do not.
    """
    if not (x > 0 and y > 0):
        raise ValidationError("finite_kernel needs x, y > 0")
    val = complex(finite_kernel_matrix(model, contour, [x], [y])[0, 0])
    if abs(val.imag) >= 1e-8 * abs(val) + 1e-300:
        raise ImaginaryResidual(f"kernel imaginary part {val.imag:.3g} too large")
    return val.real


def finite_kernel_integrable(model: WishartModel, contour: ContourSpec, x: float, y: float) -> float:
    """Same kernel from its integrable form, valid for ``x != y``.

    Integration by parts trades the Cauchy factor ``1/(w - z)`` for
    ``C(z, w) / (x - y)`` with ``C(z, w) = 1/(zw) - (1/N) sum_j lambda_j^2 /
    ((1 - lambda_j z)(1 - lambda_j w))``, which separates in ``z`` and ``w``.
    """
    if x == y:
        raise ValidationError("the integrable form needs x != y")
    f = _finite_factors(model, contour, [x], [y])
    m, N = f.z.size, model.N
    # drop the Cauchy-structure 1/(w - z): rebuild the z and w integrals separately
    a = np.exp(f.log_a[0])
    b = np.exp(f.log_b[0])
    values, mult = np.unique(model.array, return_counts=True)
    total = np.sum(a / f.z) * np.sum(b / f.w)
    for lam, k in zip(values, mult):
        total -= (k / N) * lam**2 * np.sum(a / (1 - lam * f.z)) * np.sum(b / (1 - lam * f.w))
    val = complex(total) * N / m**2 / (x - y)
    return val.real


def finite_gap_probability(model: WishartModel, contour: ContourSpec | None,
                           interval: tuple[float, float], order: int = 64) -> FredholmResult:
    """Probability that no eigenvalue of ``M`` falls in ``interval``."""
    lo, hi = float(interval[0]), float(interval[1])
    if not 0 <= lo <= hi:
        raise ValidationError("finite_gap_probability needs 0 <= lo <= hi")
    if order > 256:
        raise ValidationError("finite-N order is capped at 256")
    if contour is None:
        contour = default_contour(model, hi)
    if lo == hi:
        return FredholmResult(1.0, order, 0.0, 0.0)

    def det_at(n: int) -> complex:
        t, wts = np.polynomial.legendre.leggauss(n)
        nodes = 0.5 * (hi - lo) * t + 0.5 * (hi + lo)
        weights = 0.5 * (hi - lo) * wts
        f = _finite_factors(model, contour, nodes, nodes)
        kt, r, c = _balanced(f, model.N)
        # det(I - W K) = det(I - diag(w e^{r+c}) Kt) after a diagonal similarity
        log_d = np.log(weights) + r + c
        if np.any(log_d > LOG_OVERFLOW):
            raise NumericalOverflow("finite-N kernel magnitude exceeds the double range")
        a = np.exp(log_d)[:, None] * kt
        return complex(np.linalg.det(np.eye(n) - a))

    full = det_at(order)
    half = det_at(max(order // 2, 4))
    return FredholmResult(full.real, order, abs(full - half), abs(full.imag))


def tw_cdf_values(s_values, order: int = 96, T: float = 16.0) -> np.ndarray:
    """``F_2`` on many points without the half-order error estimate."""
    kern = AiryKernel()
    out = []
    for s in np.asarray(s_values, dtype=float).ravel():
        if s < -12:
            out.append(0.0)
            continue
        out.append(_det_at(kern, s, _airy_upper(s, T), order).real)
    return np.asarray(out)


def bessel_gap_values(alpha: int, s_values, order: int = 64) -> np.ndarray:
    """Hard-edge gap probabilities on many points; 0 beyond s = 500, 1 at s <= 0."""
    kern = BesselKernel(int(alpha))
    out = []
    for s in np.asarray(s_values, dtype=float).ravel():
        if s <= 0:
            out.append(1.0)
        elif s > 500:
            out.append(0.0)
        else:
            out.append(_det_at(kern, 0.0, s, order).real)
    return np.asarray(out)
