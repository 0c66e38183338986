"""Airy and Bessel functions and the limiting correlation kernels.

Pointwise functions accept scalars; the ``*_matrix`` variants evaluate a
kernel on the tensor grid ``x[:, None], y[None, :]`` and are what the
Fredholm code uses.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .errors import ContourOrder, ContourOverlap, DomainOverflow, ValidationError

AIRY_LIMIT = 200.0
BESSEL_X_LIMIT = 1e4
BESSEL_ORDER_LIMIT = 50
KERNEL_DIAG_GAP = 1e-6


def _check_airy(x) -> np.ndarray:
    xs = np.asarray(x, dtype=float)
    if np.any(~np.isfinite(xs)) or np.any(np.abs(xs) > AIRY_LIMIT):
        raise DomainOverflow(f"Airy arguments must satisfy |x| <= {AIRY_LIMIT:g}")
    return xs


def airy_ai(x):
    """Ai(x) for |x| <= 200.

    Values below the smallest subnormal double (x beyond about 104) are
    returned as 0; use :func:`airy_ai_scaled` when the decay factor matters.
    """
    xs = _check_airy(x)
    val = special.airy(xs)[0]
    return float(val) if np.ndim(x) == 0 else val


def airy_ai_prime(x):
    """Ai'(x) for |x| <= 200."""
    xs = _check_airy(x)
    val = special.airy(xs)[1]
    return float(val) if np.ndim(x) == 0 else val


def airy_ai_scaled(x):
    """Ai(x) * exp(2/3 x^(3/2)) for x >= 0, Ai(x) for x < 0."""
    xs = _check_airy(x)
    val = special.airye(xs)[0]
    return float(val) if np.ndim(x) == 0 else val


def bessel_j(alpha: int, x):
    """Bessel function of the first kind of integer order ``alpha``."""
    if int(alpha) != alpha or abs(alpha) > BESSEL_ORDER_LIMIT:
        raise DomainOverflow(f"order must be an integer with |alpha| <= {BESSEL_ORDER_LIMIT}")
    xs = np.asarray(x, dtype=float)
    if np.any(~(xs > 0)) or np.any(xs > BESSEL_X_LIMIT):
        raise DomainOverflow(f"Bessel argument must lie in (0, {BESSEL_X_LIMIT:g}]")
    val = special.jv(int(alpha), xs)
    return float(val) if np.ndim(x) == 0 else val


def bessel_j_series(alpha: int, x: float, tol: float = 1e-17) -> float:
    """Power series of J_alpha summed until the terms drop below ``tol``.

    Cancellation limits this to moderate ``x`` (a few tens at most); it serves as
    an independent check on :func:`bessel_j` for small arguments.
    """
    sign = 1.0
    if alpha < 0:
        alpha = -alpha
        sign = -1.0 if alpha % 2 else 1.0
    half = x / 2.0
    term = half**alpha / math.factorial(alpha)
    total = term
    n = 0
    while True:
        n += 1
        term *= -half * half / (n * (n + alpha))
        total += term
        if abs(term) < tol * max(abs(total), 1e-300) and n > half:
            break
    return sign * total


# ---------------------------------------------------------------------------
# Airy kernel


def airy_kernel_matrix(x, y) -> np.ndarray:
    """``K_Ai(x_i, y_j)`` on a tensor grid."""
    xs = _check_airy(x).reshape(-1)
    ys = _check_airy(y).reshape(-1)
    ax, apx, _, _ = special.airy(xs)
    ay, apy, _, _ = special.airy(ys)
    diff = xs[:, None] - ys[None, :]
    near = np.abs(diff) <= KERNEL_DIAG_GAP
    with np.errstate(divide="ignore", invalid="ignore"):
        out = (ax[:, None] * apy[None, :] - ay[None, :] * apx[:, None]) / diff
    if np.any(near):
        diag = apx**2 - xs * ax**2
        # first-order expansion in y about the diagonal: d/dy K(x, y)|_{y=x} = -Ai(x)^2 / 2
        corr = diag[:, None] - 0.5 * ax[:, None] ** 2 * (ys[None, :] - xs[:, None])
        out = np.where(near, corr, out)
    return out


def airy_kernel(x: float, y: float) -> float:
    """Airy kernel ``(Ai(x)Ai'(y) - Ai(y)Ai'(x)) / (x - y)``."""
    return float(airy_kernel_matrix([x], [y])[0, 0])


# ---------------------------------------------------------------------------
# deformed Airy kernel by double contour quadrature


@dataclass(frozen=True)
class AiryContour:
    """Quadrature rule for a contour running from e^{i pi/3} inf to e^{-i pi/3} inf.

    The contour crosses the real axis at ``p > 0``: a vertical segment from
    ``p + ih`` down to ``p - ih`` joined to two rays of angle ``+-pi/3``.  Its
    mirror image ``-contour`` runs from e^{-2i pi/3} inf to e^{2i pi/3} inf.
    """

    nodes: np.ndarray
    weights: np.ndarray
    p: float
    h: float
    length: float


def _gauss_legendre(n: int, a: float, b: float) -> tuple[np.ndarray, np.ndarray]:
    t, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (b - a) * t + 0.5 * (b + a), 0.5 * (b - a) * w


def _ray_length(x_lo: float, x_hi: float, k: int, p: float, h: float) -> float:
    """Ray length beyond which the integrand is below 1e-18 of its peak."""
    t = np.linspace(0.0, 60.0, 6001)
    ray = p + 1j * h + t * np.exp(1j * math.pi / 3)
    tau = np.linspace(-h, h, 201)
    seg = p + 1j * tau
    length = 0.0
    for x in (x_lo, x_hi):
        log_ray = (-x * ray + ray**3 / 3).real - k * np.log(np.abs(ray))
        log_seg = (-x * seg + seg**3 / 3).real - k * np.log(np.abs(seg))
        peak = max(log_ray.max(), log_seg.max())
        alive = np.nonzero(log_ray >= peak - math.log(1e18))[0]
        length = max(length, float(t[alive[-1]]) if alive.size else 0.0)
    return length + 0.5


def airy_contour(x_lo: float, x_hi: float, k: int = 0, n: int = 128, p: float = 0.5) -> AiryContour:
    """Build the right-hand contour adapted to arguments in ``[x_lo, x_hi]``.

    For negative arguments the saddle points of ``exp(-xz + z^3/3)`` sit at
    ``+-i sqrt(-x)``; the vertical segment reaches them so the rays start where
    the integrand is already decaying.
    """
    if p <= 0:
        raise ValidationError("contour anchor p must be positive")
    h = math.sqrt(max(-x_lo, 0.0)) + 1.0
    length = _ray_length(x_lo, x_hi, k, p, h)
    up = np.exp(1j * math.pi / 3)
    down = np.exp(-1j * math.pi / 3)
    t, wt = _gauss_legendre(n, 0.0, length)
    s_top, ws_top = _gauss_legendre(n, 0.0, h)
    nodes = np.concatenate(
        [
            p + 1j * h + t[::-1] * up,  # incoming ray, traversed towards the anchor
            p + 1j * s_top[::-1],  # upper half of the segment, downwards
            p - 1j * s_top,  # lower half of the segment
            p - 1j * h + t * down,  # outgoing ray
        ]
    )
    weights = np.concatenate([-up * wt[::-1], -1j * ws_top[::-1], -1j * ws_top, down * wt])
    return AiryContour(nodes, weights, p, h, length)


def _deformed_factors(k: int, xs: np.ndarray, ys: np.ndarray, contour: AiryContour):
    z, cz = contour.nodes, contour.weights
    w, cw = -z, -cz
    a = cz[None, :] * np.exp(-xs[:, None] * z[None, :] + z[None, :] ** 3 / 3) * z[None, :] ** (-k)
    b = cw[None, :] * np.exp(ys[:, None] * w[None, :] - w[None, :] ** 3 / 3) * w[None, :] ** k
    c = 1.0 / (w[None, :] - z[:, None])
    return a, c, b


def _taylor_exp_cubic(j: int, x: np.ndarray) -> np.ndarray:
    """Coefficient of z^j in exp(-x z + z^3 / 3)."""
    total = np.zeros_like(x, dtype=float)
    for a in range(j // 3 + 1):
        b = j - 3 * a
        total = total + (1.0 / 3.0) ** a / math.factorial(a) * (-x) ** b / math.factorial(b)
    return total


def deformed_airy_kernel_matrix(k: int, x, y, n: int = 128, p: float = 0.5,
                                 return_imag: bool = False):
    """Rank-k deformed Airy kernel on a tensor grid by double contour quadrature.

    In the defining double integral the pole of ``(w/z)^k`` at ``z = 0`` lies to
    the right of the z-contour.  Quadrature runs along a contour through
    ``p > 0``, where the integrand stays well scaled, and the residue picked
    up by moving across the origin is added back:
    ``sum_{j<k} e_j(x) (1/2 pi i) int w^j exp(yw - w^3/3) dw``, with ``e_j``
    the Taylor coefficients of ``exp(-xz + z^3/3)``.
    """
    if int(k) != k or k < 0:
        raise ValidationError("deformation rank k must be a nonnegative integer")
    k = int(k)
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    ys = np.atleast_1d(np.asarray(y, dtype=float))
    if 2 * p < 1e-3:
        raise ContourOverlap("contours through +-p are closer than 1e-3")
    lo = float(min(xs.min(), ys.min()))
    hi = float(max(xs.max(), ys.max()))
    contour = airy_contour(lo, hi, k, n, p)
    a, c, b = _deformed_factors(k, xs, ys, contour)
    full = (a @ c @ b.T) / (2j * math.pi) ** 2
    if k:
        w, cw = -contour.nodes, -contour.weights
        base = cw[None, :] * np.exp(ys[:, None] * w[None, :] - w[None, :] ** 3 / 3)
        for j in range(k):
            moment = base @ w**j / (2j * math.pi)
            full = full + _taylor_exp_cubic(j, xs)[:, None] * moment[None, :]
    if return_imag:
        return full.real, full.imag
    return full.real


def deformed_airy_kernel(k: int, x: float, y: float, n: int = 128, p: float = 0.5) -> float:
    """Deformed Airy kernel ``K^(k)(x, y)``; ``k = 0`` gives the Airy kernel."""
    re, im = deformed_airy_kernel_matrix(k, [x], [y], n, p, return_imag=True)
    if abs(im[0, 0]) >= 1e-9:
        raise ValidationError(f"contour quadrature left an imaginary part {im[0, 0]:.3g}")
    return float(re[0, 0])


def deformed_airy_kernel_closed(k: int, x: float, y: float) -> float:
    """Rank-k expansion of the deformed kernel, used as an independent check.

    Expanding ``(w/z)^k / (w - z)`` separates the double integral into the
    Airy kernel plus ``sum_{j<k} c_j(x) Ai^(j)(y)`` where
    ``c_j(x) = e_j(x) - (1/j!) int_x^inf (u - x)^j Ai(u) du``.
    """
    from scipy.integrate import quad

    total = airy_kernel(x, y)
    # derivatives of Ai from Ai'' = y Ai
    derivs = [airy_ai(y), airy_ai_prime(y)]
    while len(derivs) < k:
        j = len(derivs)  # Ai^(j) = y Ai^(j-2) + (j-2) Ai^(j-3)
        derivs.append(y * derivs[j - 2] + (j - 2) * derivs[j - 3])
    for j in range(k):
        moment = quad(lambda u: (u - x) ** j * airy_ai(u), x, x + 60.0,
                      epsabs=1e-15, epsrel=1e-13, limit=400)[0]
        coef = float(_taylor_exp_cubic(j, np.array(x))) - moment / math.factorial(j)
        total += coef * derivs[j]
    return total


# ---------------------------------------------------------------------------
# Bessel kernel


def _check_bessel_args(alpha: int, *arrays: np.ndarray) -> None:
    if int(alpha) != alpha or abs(alpha) > BESSEL_ORDER_LIMIT:
        raise DomainOverflow(f"order must be an integer with |alpha| <= {BESSEL_ORDER_LIMIT}")
    for arr in arrays:
        if np.any(~(arr > 0)) or np.any(arr > BESSEL_X_LIMIT):
            raise DomainOverflow(f"Bessel kernel arguments must lie in (0, {BESSEL_X_LIMIT:g}]")


def _bessel_diag_block(alpha: int, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """(1/4) int_0^1 J(sqrt(xu)) J(sqrt(yu)) du, substituting u = t^2."""
    top = math.sqrt(max(xs.max(), ys.max()))
    t, w = _gauss_legendre(64 + 2 * int(top), 0.0, 1.0)
    jx = special.jv(alpha, np.sqrt(xs)[:, None] * t[None, :])
    jy = special.jv(alpha, np.sqrt(ys)[:, None] * t[None, :])
    return 0.5 * (jx * (w * t)[None, :]) @ jy.T


def bessel_kernel_matrix(alpha: int, x, y) -> np.ndarray:
    """Bessel kernel ``K_Be,alpha(x_i, y_j)`` on a tensor grid."""
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    ys = np.atleast_1d(np.asarray(y, dtype=float))
    _check_bessel_args(alpha, xs, ys)
    alpha = int(alpha)
    rx, ry = np.sqrt(xs), np.sqrt(ys)
    jx, jy = special.jv(alpha, rx), special.jv(alpha, ry)
    # x J'_a(x) = a J_a(x) - x J_{a+1}(x)
    dx = (alpha * jx - rx * special.jv(alpha + 1, rx)) / rx
    dy = (alpha * jy - ry * special.jv(alpha + 1, ry)) / ry
    diff = xs[:, None] - ys[None, :]
    near = np.abs(diff) <= 1e-3 * np.maximum(1.0, np.maximum(xs[:, None], ys[None, :]))
    with np.errstate(divide="ignore", invalid="ignore"):
        out = (ry[None, :] * jx[:, None] * dy[None, :] - rx[:, None] * dx[:, None] * jy[None, :]) / (
            2.0 * diff
        )
    if np.any(near):
        rows = np.nonzero(near.any(axis=1))[0]
        cols = np.nonzero(near.any(axis=0))[0]
        block = _bessel_diag_block(alpha, xs[rows], ys[cols])
        sub = out[np.ix_(rows, cols)]
        out[np.ix_(rows, cols)] = np.where(near[np.ix_(rows, cols)], block, sub)
    return out


def bessel_kernel(alpha: int, x: float, y: float) -> float:
    """Bessel kernel with J' from the three-term recurrence."""
    return float(bessel_kernel_matrix(alpha, [x], [y])[0, 0])


def bessel_kernel_contour(alpha: int, x: float, y: float, r: float, R: float,
                          nodes: int | None = None) -> float:
    """Double contour integral over ``|z| = r`` and ``|w| = R`` (trapezoidal rule).

    Returns the conjugated kernel ``(x/y)^(alpha/2) K_Be,alpha(x, y)``.
    """
    if not (0 < r < R):
        raise ContourOrder(f"need 0 < r < R, got r={r}, R={R}")
    alpha = int(alpha)
    if nodes is None:
        band = math.e * max(x / r + r / 4, y / R + R / 4)
        nodes = int(max(128, band + 64 + abs(alpha), 40 / math.log(R / r)))
    theta = 2 * math.pi * np.arange(nodes) / nodes
    z = r * np.exp(1j * theta)
    w = R * np.exp(1j * theta)
    pz = z**alpha * np.exp(-x / z + z / 4)
    qw = w ** (-alpha) * np.exp(y / w - w / 4)
    val = pz @ (1.0 / (z[:, None] - w[None, :])) @ qw / nodes**2
    return float(val.real)
