"""Prequantum line bundle on the model torus and its Bohr-Sommerfeld points.

In the chart ``x in [0, 1)^n`` the connection on ``L^k`` is

    nabla_k = d - i k (x_i + a_i / 2pi) dtheta^i,

where ``a`` are the holonomy offsets.  Crossing ``x_i -> x_i + 1`` is
absorbed by the transition ``psi(x + e_i) = exp(i k theta_i) psi(x)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import reduce

import numpy as np

from .errors import DomainError

TWO_PI = 2.0 * np.pi
SNAP = 1e-12


@dataclass(frozen=True)
class PrequantumBundle:
    n: int
    k: int
    offsets: tuple[float, ...] = ()

    def __post_init__(self):
        if self.n < 1:
            raise DomainError("n must be >= 1")
        if self.k < 0:
            raise DomainError(f"level k must be nonnegative, got {self.k}")
        offs = tuple(self.offsets) or (0.0,) * self.n
        if len(offs) != self.n:
            raise DomainError(f"need {self.n} holonomy offsets, got {len(offs)}")
        object.__setattr__(self, "offsets", tuple(float(np.mod(a, TWO_PI)) for a in offs))

    @property
    def shift(self) -> np.ndarray:
        """``a / 2pi``: the constant added to ``x`` in the connection coefficient."""
        return np.asarray(self.offsets) / TWO_PI

    def with_level(self, k: int) -> "PrequantumBundle":
        return PrequantumBundle(self.n, k, self.offsets)

    def connection_coefficient(self, x: np.ndarray) -> np.ndarray:
        """Coefficient ``c_i(x)`` of ``-i k c_i dtheta^i`` (without the factor k)."""
        return np.asarray(x) + self.shift


@dataclass(frozen=True)
class BSPointSet:
    k: int
    points: np.ndarray
    strict_levels: np.ndarray

    def __len__(self) -> int:
        return len(self.points)

    def rows(self):
        for b, lvl in zip(self.points, self.strict_levels):
            yield tuple(float(v) for v in b), int(lvl)


def _snap(v: np.ndarray) -> np.ndarray:
    v = np.mod(v, 1.0)
    v[np.abs(v - 1.0) < SNAP] = 0.0
    v[np.abs(v) < SNAP] = 0.0
    return v


def bs_points(bundle: PrequantumBundle) -> BSPointSet:
    """Enumerate the ``k^n`` Bohr-Sommerfeld points of level k in ``[0, 1)^n``.

    Each point carries its strict level, the least ``k'`` (dividing k) for
    which it is already Bohr-Sommerfeld.
    """
    k, n = bundle.k, bundle.n
    if k < 1:
        raise DomainError("Bohr-Sommerfeld points need k >= 1")
    idx = np.stack(np.meshgrid(*[np.arange(k)] * n, indexing="ij"), axis=-1).reshape(-1, n)
    pts = _snap(idx / k - bundle.shift)
    # m/k in lowest terms has denominator k / gcd(k, m); strict level is the lcm
    strict = np.array([
        reduce(math.lcm, (k // math.gcd(k, int(m)) for m in row), 1) for row in idx
    ])
    order = np.lexsort(pts.T[::-1])
    return BSPointSet(k, pts[order], strict[order])


def fiber_holonomy(bundle: PrequantumBundle, b) -> np.ndarray:
    """Phases ``exp(-2 pi i k (b_i + a_i / 2pi))`` of ``L^k`` around the fiber cycles over ``b``.

    All phases equal 1 exactly when ``b`` is a Bohr-Sommerfeld point of level k.
    """
    b = np.atleast_1d(np.asarray(b, dtype=float))
    return np.exp(-2j * np.pi * bundle.k * (b + bundle.shift))


def is_bs_point(bundle: PrequantumBundle, b, tol: float = 1e-9) -> bool:
    return bool(np.all(np.abs(fiber_holonomy(bundle, b) - 1.0) <= tol))


def circle_distance(a, b) -> np.ndarray:
    """Distance on R/Z between ``a`` and ``b`` (elementwise)."""
    d = np.mod(np.asarray(a) - np.asarray(b), 1.0)
    return np.minimum(d, 1.0 - d)
