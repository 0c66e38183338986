"""Population spectral measures, the g-function and the Stieltjes transform.

The limiting eigenvalue distribution mu of ``M = X Sigma X* / N`` is encoded by
its Cauchy-Stieltjes transform ``m(z) = int mu(dx) / (z - x)``.  The rational
function

    g(z) = 1/z + gamma * sum_j w_j lambda_j / (1 - z lambda_j)

is the functional inverse of ``m`` away from the support, and everything in
:mod:`wishart_edges.support` is read off from it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import NoConvergence, PoleProximity, UnsupportedOrder, ValidationError

POLE_TOL = 1e-14
WEIGHT_TOL = 1e-12


@dataclass(frozen=True)
class AtomicMeasure:
    """Finitely supported probability measure on (0, inf).

    Atoms are sorted by location and duplicates are merged at construction.

    Parameters
    ----------
    atoms : sequence of (lambda, weight) pairs
        Locations must be positive and weights positive with unit sum.
    """

    atoms: tuple[tuple[float, float], ...]
    lambdas: np.ndarray = field(init=False, repr=False, compare=False)
    weights: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        merged: dict[float, float] = {}
        for pair in self.atoms:
            if len(pair) != 2:
                raise ValidationError("each atom must be a (lambda, weight) pair")
            lam, wt = float(pair[0]), float(pair[1])
            if not (math.isfinite(lam) and lam > 0):
                raise ValidationError(f"atom location must be finite and > 0, got {lam}")
            if not (math.isfinite(wt) and wt > 0):
                raise ValidationError(f"atom weight must be finite and > 0, got {wt}")
            merged[lam] = merged.get(lam, 0.0) + wt
        if not merged:
            raise ValidationError("a measure needs at least one atom")
        total = math.fsum(merged.values())
        if abs(total - 1.0) > WEIGHT_TOL:
            raise ValidationError(f"weights must sum to 1 within {WEIGHT_TOL:g}, got {total!r}")
        atoms = tuple(sorted(merged.items()))
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "lambdas", np.array([a[0] for a in atoms]))
        object.__setattr__(self, "weights", np.array([a[1] for a in atoms]))
        self.lambdas.setflags(write=False)
        self.weights.setflags(write=False)

    @classmethod
    def from_arrays(cls, lambdas: Sequence[float], weights: Sequence[float]) -> "AtomicMeasure":
        return cls(tuple(zip(lambdas, weights)))

    @classmethod
    def point_mass(cls, lam: float = 1.0) -> "AtomicMeasure":
        return cls(((lam, 1.0),))

    @property
    def poles(self) -> np.ndarray:
        """Poles 1/lambda of g on the positive axis, ascending."""
        return 1.0 / self.lambdas[::-1]

    def mean_inverse(self) -> float:
        return float(np.dot(self.weights, 1.0 / self.lambdas))

    def to_json(self) -> dict:
        return {"atoms": [{"lambda": lam, "weight": wt} for lam, wt in self.atoms]}


def validate_gamma(gamma: float) -> float:
    gamma = float(gamma)
    if not (math.isfinite(gamma) and gamma > 0):
        raise ValidationError(f"shape ratio gamma must be finite and > 0, got {gamma}")
    return gamma


@dataclass(frozen=True)
class WishartModel:
    """Finite model: ``n`` population eigenvalues and ``N`` samples.

    ``lambdas`` holds the spectrum of the diagonal population covariance,
    sorted ascending.  The induced measure puts mass 1/n on each eigenvalue
    and the finite shape ratio is n/N.
    """

    n: int
    N: int
    lambdas: tuple[float, ...]

    def __post_init__(self) -> None:
        if int(self.n) != self.n or self.n < 1:
            raise ValidationError(f"n must be a positive integer, got {self.n}")
        if int(self.N) != self.N or self.N < 1:
            raise ValidationError(f"N must be a positive integer, got {self.N}")
        lams = tuple(sorted(float(v) for v in self.lambdas))
        if len(lams) != self.n:
            raise ValidationError(f"expected {self.n} population eigenvalues, got {len(lams)}")
        if not all(math.isfinite(v) and v > 0 for v in lams):
            raise ValidationError("population eigenvalues must be finite and > 0")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "N", int(self.N))
        object.__setattr__(self, "lambdas", lams)

    @classmethod
    def from_multiplicities(cls, N: int, pairs: Iterable[tuple[float, int]]) -> "WishartModel":
        lams: list[float] = []
        for value, mult in pairs:
            lams.extend([float(value)] * int(mult))
        return cls(len(lams), N, tuple(lams))

    @classmethod
    def identity(cls, n: int, N: int) -> "WishartModel":
        return cls(n, N, (1.0,) * n)

    @property
    def gamma(self) -> float:
        return self.n / self.N

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.lambdas)

    def measure(self) -> AtomicMeasure:
        values, counts = np.unique(self.array, return_counts=True)
        return AtomicMeasure.from_arrays(values, counts / self.n)

    def to_json(self) -> dict:
        values, counts = np.unique(self.array, return_counts=True)
        runs = [{"value": float(v), "multiplicity": int(c)} for v, c in zip(values, counts)]
        return {"n": self.n, "N": self.N, "lambdas": runs}


def _check_poles(measure: AtomicMeasure, z: np.ndarray) -> None:
    if np.any(np.abs(z) <= POLE_TOL):
        raise PoleProximity("argument within 1e-14 of the pole at 0")
    dist = np.abs(z[..., None] - 1.0 / measure.lambdas)
    if np.any(dist <= POLE_TOL):
        raise PoleProximity("argument within 1e-14 of a pole 1/lambda_j")


def _scalarize(value: np.ndarray, like) -> object:
    if np.ndim(like) == 0:
        value = value[()]
        if np.iscomplexobj(value):
            return complex(value)
        return float(value)
    return value


def g_eval(measure: AtomicMeasure, gamma: float, z):
    """Evaluate ``g(z)``; ``z`` may be a scalar or an array, real or complex."""
    zz = np.asarray(z)
    _check_poles(measure, zz)
    lam, w = measure.lambdas, measure.weights
    val = 1.0 / zz + gamma * np.sum(w * lam / (1.0 - zz[..., None] * lam), axis=-1)
    return _scalarize(val, z)


def g_deriv(measure: AtomicMeasure, gamma: float, z, order: int = 1):
    """Exact derivative of ``g`` of order 1, 2 or 3 (termwise differentiation)."""
    if order not in (1, 2, 3):
        raise UnsupportedOrder(f"derivative order must be 1, 2 or 3, got {order}")
    zz = np.asarray(z)
    _check_poles(measure, zz)
    lam, w = measure.lambdas, measure.weights
    fact = math.factorial(order)
    head = (-1) ** order * fact / zz ** (order + 1)
    tail = np.sum(w * lam ** (order + 1) / (1.0 - zz[..., None] * lam) ** (order + 1), axis=-1)
    return _scalarize(head + gamma * fact * tail, z)


def _g_pair(lam: np.ndarray, w: np.ndarray, gamma: float, m: complex) -> tuple[complex, complex]:
    d = 1.0 - m * lam
    g = 1.0 / m + gamma * np.dot(w, lam / d)
    dg = -1.0 / m**2 + gamma * np.dot(w, lam**2 / d**2)
    return complex(g), complex(dg)


def _newton(lam, w, gamma, z, m, tol, max_iter=200):
    """Newton on g(m) = z restricted to the lower half plane; None on failure."""
    for _ in range(max_iter):
        g, dg = _g_pair(lam, w, gamma, m)
        if dg == 0 or not np.isfinite(dg):
            return None
        step = (g - z) / dg
        t = 1.0
        while (m - t * step).imag >= 0 and t > 1e-12:
            t *= 0.5
        new = m - t * step
        if not np.isfinite(new) or new.imag >= 0:
            return None
        if abs(new - m) < tol:
            return new
        m = new
    return None


def stieltjes_solve(
    measure: AtomicMeasure,
    gamma: float,
    z: complex,
    m0: complex | None = None,
    *,
    theta: float = 0.5,
    tol: float = 1e-12,
    max_iter: int = 100_000,
) -> complex:
    """Solve ``m = 1 / (z - gamma * int lambda/(1 - m lambda) dnu)`` for Im z > 0.

    The damped fixed-point iteration is run from ``1/z``; once it stalls a
    Newton polish on ``g(m) = z`` (kept in the lower half plane, where the
    root is unique) takes over.  A warm start ``m0`` skips straight to Newton.

    Returns
    -------
    complex
        The root with ``Im m < 0``.
    """
    z = complex(z)
    if not z.imag > 0:
        raise ValidationError("stieltjes_solve needs Im z > 0")
    lam, w = measure.lambdas, measure.weights

    def residual_ok(m: complex) -> bool:
        return m.imag < 0 and abs(_g_pair(lam, w, gamma, m)[0] - z) <= 1e-9 * max(1.0, abs(z))

    if m0 is not None and complex(m0).imag < 0:
        m = _newton(lam, w, gamma, z, complex(m0), tol)
        if m is not None and residual_ok(m):
            return m

    m = 1.0 / z
    newton_tried = False
    for it in range(max_iter):
        new = (1 - theta) * m + theta / (z - gamma * np.dot(w, lam / (1.0 - m * lam)))
        new = complex(new)
        if abs(new - m) < tol:
            if residual_ok(new):
                return new
            m = new
            break
        m = new
        if it == 500 and not newton_tried:
            newton_tried = True
            polished = _newton(lam, w, gamma, z, m, tol)
            if polished is not None and residual_ok(polished):
                return polished
    polished = _newton(lam, w, gamma, z, m, tol)
    if polished is not None and residual_ok(polished):
        return polished
    raise NoConvergence(f"fixed-point iteration did not converge at z={z}")


RICHARDSON_EPS = (1e-5, 5e-6)


def _density_point(measure: AtomicMeasure, gamma: float, x: float) -> float:
    scale = max(abs(x), 1.0)
    m = None
    eps = scale
    while eps > RICHARDSON_EPS[0]:
        m = stieltjes_solve(measure, gamma, complex(x, eps), m0=m)
        eps /= 10.0
    # the atom of mass (1 - gamma)^+ at 0 is known exactly; remove its smeared tail
    atom = max(1.0 - gamma, 0.0)
    vals = []
    for eps in RICHARDSON_EPS:
        m = stieltjes_solve(measure, gamma, complex(x, eps), m0=m)
        smeared = atom * eps / (x * x + eps * eps)
        vals.append((-m.imag - smeared) / math.pi)
    rho = 2.0 * vals[1] - vals[0]
    return max(rho, 0.0)


def density(measure: AtomicMeasure, gamma: float, x):
    """Limiting density at ``x > 0`` by two-step Richardson extrapolation in eps.

    Accuracy degrades within about 1e-3 of a soft edge, where the density has
    a square-root profile; see :func:`wishart_edges.support.edge_adjacent`.
    """
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    if np.any(xs <= 0):
        raise ValidationError("density is defined for x > 0")
    out = np.array([_density_point(measure, gamma, float(v)) for v in xs])
    return float(out[0]) if np.ndim(x) == 0 else out
