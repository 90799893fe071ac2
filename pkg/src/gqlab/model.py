"""Model torus T^{2n} with action-angle coordinates and compatible complex structures.

Coordinates are ``x`` in R^n/Z^n (base, action) and ``theta`` in R^n/2piZ^n
(fiber, angle) with symplectic form ``dx_i ^ dtheta^i``.  A compatible
(almost) complex structure is encoded by a complex symmetric matrix field
``A = P + iQ`` with ``Q > 0``; the associated metric is

    g = (Q + P Q^{-1} P) dtheta^2 - 2 P Q^{-1} dtheta dx + Q^{-1} dx^2.

All 2n x 2n matrices use block order (theta-block, x-block).
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import ConfigError, DomainError, InvalidStructureError, ResolutionError

TWO_PI = 2.0 * np.pi
PD_FLOOR = 1e-12
SYM_TOL = 1e-12
DET_TOL = 1e-10


@dataclass(frozen=True)
class TorusModel:
    """The model symplectic torus of half-dimension ``n``."""

    n: int
    x_period: float = 1.0
    theta_period: float = TWO_PI

    def __post_init__(self):
        if self.n < 1:
            raise DomainError(f"half-dimension must be >= 1, got {self.n}")

    @property
    def symplectic_volume(self) -> float:
        return (self.x_period * self.theta_period) ** self.n


@dataclass(frozen=True)
class Grid:
    """Uniform periodic tensor grid on T^{2n}.

    Axes ``0..n-1`` are the angle directions, ``n..2n-1`` the action
    directions; sites are flattened in C order over ``shape``.
    """

    n: int
    n_theta: int
    n_x: int

    def __post_init__(self):
        if self.n < 1:
            raise DomainError("n must be >= 1")
        if self.n_theta < 4 or self.n_x < 4:
            raise ResolutionError(
                f"grid needs >= 4 points per axis, got {self.n_theta}x{self.n_x}")

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n_theta,) * self.n + (self.n_x,) * self.n

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def h_theta(self) -> float:
        return TWO_PI / self.n_theta

    @property
    def h_x(self) -> float:
        return 1.0 / self.n_x

    @property
    def spacings(self) -> tuple[float, ...]:
        return (self.h_theta,) * self.n + (self.h_x,) * self.n

    @property
    def cell_volume(self) -> float:
        return (self.h_theta * self.h_x) ** self.n

    @property
    def base_shape(self) -> tuple[int, ...]:
        return (self.n_x,) * self.n

    def coordinates(self) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(x, theta)`` sampled at every site, each of shape ``shape + (n,)``."""
        axes = [np.arange(self.n_theta) * self.h_theta] * self.n
        axes += [np.arange(self.n_x) * self.h_x] * self.n
        mesh = np.meshgrid(*axes, indexing="ij")
        theta = np.stack(mesh[: self.n], axis=-1)
        x = np.stack(mesh[self.n:], axis=-1)
        return x, theta

    def base_points(self) -> np.ndarray:
        """Base grid nodes, shape ``base_shape + (n,)``."""
        axes = [np.arange(self.n_x) * self.h_x] * self.n
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    def label(self) -> str:
        return f"{self.n_theta}x{self.n_x}"

    @classmethod
    def parse(cls, text: str, n: int) -> "Grid":
        """Parse ``"NthetaxNx"`` (or a single integer for both)."""
        parts = text.lower().split("x")
        try:
            if len(parts) == 1:
                nt = nx = int(parts[0])
            elif len(parts) == 2:
                nt, nx = int(parts[0]), int(parts[1])
            else:
                raise ValueError(text)
        except ValueError as exc:
            raise ConfigError(f"cannot parse grid {text!r}; expected NthetaxNx") from exc
        return cls(n, nt, nx)


Evaluator = Callable[[float, np.ndarray, np.ndarray], np.ndarray]
LeadingTerm = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class ComplexStructureFamily:
    """A one-parameter family ``s -> A(s, x, theta)`` of compatible structures.

    ``evaluator(s, x, theta)`` and ``leading_term(x, theta)`` take arrays of
    shape ``(..., n)`` and return complex arrays of shape ``(..., n, n)``.
    For ``family_kind == "linear"`` the evaluator is ``s * leading_term``.
    """

    name: str
    n: int
    leading_term: LeadingTerm
    evaluator: Evaluator | None = None
    family_kind: str = "linear"
    claims_integrable: bool = False
    claims_semiflat: bool = False
    claims_heart: bool = False

    def __post_init__(self):
        if self.family_kind not in ("linear", "general"):
            raise ConfigError(f"unknown family kind {self.family_kind!r}")
        if self.family_kind == "general" and self.evaluator is None:
            raise ConfigError("general families need an explicit evaluator")

    def __call__(self, s: float, x: np.ndarray, theta: np.ndarray) -> np.ndarray:
        if self.family_kind == "linear":
            return s * np.asarray(self.leading_term(x, theta), dtype=complex)
        return np.asarray(self.evaluator(s, x, theta), dtype=complex)

    def theta_block_structure(self, s: float, x: np.ndarray, theta: np.ndarray) -> np.ndarray:
        """``Theta = Q + P Q^{-1} P`` for ``A(s, x, theta)``."""
        A = self(s, x, theta)
        P, Q = A.real, A.imag
        return Q + P @ np.linalg.solve(Q, P)

    def leading_theta_block(self, x: np.ndarray, theta: np.ndarray) -> np.ndarray:
        """``Theta^0 = Q^0 + P^0 (Q^0)^{-1} P^0``, the s-normalised angle block."""
        A0 = np.asarray(self.leading_term(x, theta), dtype=complex)
        P, Q = A0.real, A0.imag
        return Q + P @ np.linalg.solve(Q, P)


@dataclass(frozen=True, eq=False)
class MetricField:
    """Metric ``g_{J_s}`` sampled on every site of ``grid``.

    ``g`` has shape ``grid.shape + (2n, 2n)``.
    """

    grid: Grid
    g: np.ndarray
    s: float | None = None
    family: str = ""

    def __post_init__(self):
        d = 2 * self.grid.n
        if self.g.shape != self.grid.shape + (d, d):
            raise ConfigError(
                f"metric samples have shape {self.g.shape}, grid expects "
                f"{self.grid.shape + (d, d)}")

    @cached_property
    def inverse(self) -> np.ndarray:
        return np.linalg.inv(self.g)

    @cached_property
    def sqrt_det(self) -> np.ndarray:
        return np.sqrt(np.linalg.det(self.g))

    def theta_block(self) -> np.ndarray:
        n = self.grid.n
        return self.g[..., :n, :n]

    def x_block(self) -> np.ndarray:
        n = self.grid.n
        return self.g[..., n:, n:]

    def with_grid_check(self, grid: Grid) -> "MetricField":
        if grid != self.grid:
            raise ConfigError(f"metric sampled on {self.grid}, operator requested on {grid}")
        return self


def _check_structure(A: np.ndarray, where: str = "") -> None:
    asym = np.abs(A - np.swapaxes(A, -1, -2))
    scale = max(1.0, float(np.abs(A).max(initial=0.0)))
    if asym.max(initial=0.0) > SYM_TOL * scale:
        site = np.unravel_index(int(np.argmax(asym.reshape(asym.shape[:-2] + (-1,)).max(-1))),
                                asym.shape[:-2]) if asym.ndim > 2 else ()
        raise InvalidStructureError(
            f"A is not symmetric{where} at site {tuple(int(i) for i in site)}: "
            f"max |A - A^T| = {asym.max():.3e}")
    lam = np.linalg.eigvalsh(A.imag)[..., 0]
    if np.min(lam) <= PD_FLOOR:
        site = np.unravel_index(int(np.argmin(lam)), lam.shape) if lam.ndim else ()
        raise InvalidStructureError(
            f"Im A is not positive definite{where} at site {tuple(int(i) for i in site)}: "
            f"smallest eigenvalue {np.min(lam):.3e}")


def metric_from_A(A: np.ndarray) -> np.ndarray:
    """Metric matrix of the structure ``A`` (broadcasts over leading axes).

    Raises
    ------
    InvalidStructureError
        If ``A`` is not symmetric or ``Im A`` is not positive definite.
    """
    A = np.asarray(A, dtype=complex)
    if A.ndim < 2 or A.shape[-1] != A.shape[-2]:
        raise InvalidStructureError(f"A must be square, got shape {A.shape}")
    _check_structure(A)
    P, Q = A.real, A.imag
    Qinv = np.linalg.inv(Q)
    PQinv = P @ Qinv
    n = A.shape[-1]
    g = np.empty(A.shape[:-2] + (2 * n, 2 * n))
    g[..., :n, :n] = Q + PQinv @ P
    g[..., :n, n:] = -PQinv
    g[..., n:, :n] = -np.swapaxes(PQinv, -1, -2)
    g[..., n:, n:] = Qinv
    # symmetrise away rounding in the theta-block product
    return 0.5 * (g + np.swapaxes(g, -1, -2))


def inverse_metric_from_A(A: np.ndarray) -> np.ndarray:
    """Closed-form inverse ``[[Q^{-1}, Q^{-1}P], [P Q^{-1}, Q + P Q^{-1} P]]``."""
    A = np.asarray(A, dtype=complex)
    P, Q = A.real, A.imag
    Qinv = np.linalg.inv(Q)
    n = A.shape[-1]
    gi = np.empty(A.shape[:-2] + (2 * n, 2 * n))
    gi[..., :n, :n] = Qinv
    gi[..., :n, n:] = Qinv @ P
    gi[..., n:, :n] = P @ Qinv
    gi[..., n:, n:] = Q + P @ Qinv @ P
    return 0.5 * (gi + np.swapaxes(gi, -1, -2))


def sample_A(family: ComplexStructureFamily, s: float, grid: Grid) -> np.ndarray:
    x, theta = grid.coordinates()
    return family(s, x, theta)


def family_at(family: ComplexStructureFamily, s: float, grid: Grid) -> tuple[np.ndarray, MetricField]:
    """Sample ``A(s, .)`` on ``grid`` and build the metric field.

    Returns the complex field of shape ``grid.shape + (n, n)`` and the
    corresponding :class:`MetricField`.
    """
    if not s > 0:
        raise DomainError(f"s must be positive, got {s}")
    if grid.n != family.n:
        raise ConfigError(f"family has n={family.n}, grid has n={grid.n}")
    A = sample_A(family, s, grid)
    try:
        _check_structure(A)
    except InvalidStructureError as exc:
        raise InvalidStructureError(f"{family.name} at s={s}: {exc}") from None
    g = metric_from_A(A)
    det = np.linalg.det(g)
    if np.max(np.abs(det - 1.0)) > DET_TOL:
        raise InvalidStructureError(
            f"{family.name} at s={s}: metric volume form deviates from dx dtheta "
            f"by {np.max(np.abs(det - 1.0)):.3e}")
    if np.min(np.linalg.eigvalsh(g)[..., 0]) <= PD_FLOOR:
        raise InvalidStructureError(f"{family.name} at s={s}: metric is not positive definite")
    return A, MetricField(grid, g, s=s, family=family.name)


def _periodic_central(f: np.ndarray, axis: int, h: float) -> np.ndarray:
    return (np.roll(f, -1, axis=axis) - np.roll(f, 1, axis=axis)) / (2.0 * h)


def integrability_residual(family: ComplexStructureFamily, s: float, grid: Grid) -> float:
    """Max violation of the Newlander-Nirenberg condition in (x, theta) form.

    Evaluates ``d_{theta^i} A_jk - d_{theta^j} A_ik + A_il d_{x_l} A_jk
    - A_jl d_{x_l} A_ik`` with periodic second-order central differences.
    """
    if grid.n_theta < 8 or grid.n_x < 8:
        raise ResolutionError("integrability residual needs >= 8 points per axis")
    A, _ = family_at(family, s, grid)
    n = grid.n
    # dA[..., a, j, k] = derivative along grid axis a
    dA = np.stack([_periodic_central(A, a, h) for a, h in enumerate(grid.spacings)], axis=-3)
    dth = dA[..., :n, :, :]  # [..., i, j, k] = d_{theta^i} A_jk
    dx = dA[..., n:, :, :]   # [..., l, j, k] = d_{x_l} A_jk
    term = dth - np.swapaxes(dth, -3, -2)
    # A_il d_{x_l} A_jk  -> [..., i, j, k]
    T = np.einsum("...il,...ljk->...ijk", A, dx)
    term = term + T - np.swapaxes(T, -3, -2)
    return float(np.abs(term).max())


@dataclass(frozen=True)
class SemiflatnessReport:
    is_semiflat: bool
    deviation: float


def semiflatness_check(family: ComplexStructureFamily, grid: Grid, tol: float = 1e-10) -> SemiflatnessReport:
    """Test whether ``Im A^0`` is independent of the angle coordinates."""
    x, theta = grid.coordinates()
    Q0 = np.asarray(family.leading_term(x, theta), dtype=complex).imag
    n = grid.n
    mean = Q0.mean(axis=tuple(range(n)), keepdims=True)
    dev = np.linalg.norm(Q0 - mean, ord=2, axis=(-2, -1)) if n > 1 else np.abs(Q0 - mean)[..., 0, 0]
    deviation = float(dev.max())
    return SemiflatnessReport(deviation <= tol, deviation)


# -- presets ---------------------------------------------------------------

def _diag(values: np.ndarray) -> np.ndarray:
    n = values.shape[-1]
    out = np.zeros(values.shape + (n,), dtype=complex)
    idx = np.arange(n)
    out[..., idx, idx] = values
    return out


def flat_family(n: int = 1) -> ComplexStructureFamily:
    """``A^0 = i I``: the flat Kaehler torus, rescaled anisotropically by s."""
    def A0(x, theta):
        return _diag(1j * np.ones(np.shape(x)))
    return ComplexStructureFamily("flat", n, A0, claims_integrable=True, claims_semiflat=True,
                                  claims_heart=True)


def semiflat_family(n: int = 1, amplitude: float = 0.5) -> ComplexStructureFamily:
    """``Q^0 = diag(1 + amplitude cos 2pi x_i)``, ``P^0 = 0``."""
    def A0(x, theta):
        return _diag(1j * (1.0 + amplitude * np.cos(TWO_PI * np.asarray(x))))
    return ComplexStructureFamily("semiflat", n, A0, claims_integrable=True, claims_semiflat=True,
                                  claims_heart=True)


def nonsemiflat_family(n: int = 1, amplitude: float = 0.5) -> ComplexStructureFamily:
    """``Q^0 = diag(1 + amplitude cos theta^i)``: Im A^0 depends on the fiber."""
    def A0(x, theta):
        return _diag(1j * (1.0 + amplitude * np.cos(np.asarray(theta))))
    # for n >= 2 the diagonal theta-dependence keeps the integrability condition
    # only because each entry depends on its own angle
    return ComplexStructureFamily("nonsemiflat", n, A0, claims_integrable=True,
                                  claims_semiflat=False)


def heart_family(n: int = 1, p_amp: float = 0.3, q_amp: float = 0.3) -> ComplexStructureFamily:
    """Fiber-independent ``A(s, x) = s A(x)`` with a nonzero real part."""
    def A0(x, theta):
        x = np.asarray(x)
        out = _diag(p_amp * np.sin(TWO_PI * x) + 1j * (1.0 + q_amp * np.cos(TWO_PI * x)))
        if n >= 2:
            off = 0.1 * p_amp * np.sin(TWO_PI * x.sum(axis=-1))
            for i in range(n):
                for j in range(i + 1, n):
                    out[..., i, j] += off
                    out[..., j, i] += off
        return out
    return ComplexStructureFamily("heart", n, A0, claims_integrable=(n == 1),
                                  claims_semiflat=True, claims_heart=True)


def theta_hessian_family(n: int = 2, eps: float = 0.1) -> ComplexStructureFamily:
    """``A^0 = i (I + eps Hess_theta phi)`` with ``phi = cos(sum_i i theta^i)``.

    Integrable (the theta-derivative of a Hessian is totally symmetric) but
    with a nonzero finite-difference integrability residual that shrinks as
    O(h^2).  Used to test the residual's convergence rate.
    """
    w = np.arange(1, n + 1, dtype=float)
    if eps * float(w @ w) >= 1.0:
        raise DomainError("eps too large: Im A^0 would lose positivity")

    def A0(x, theta):
        phase = np.asarray(theta) @ w
        hess = -np.cos(phase)[..., None, None] * np.outer(w, w)
        return 1j * (np.eye(n) + eps * hess)
    return ComplexStructureFamily("theta_hessian", n, A0, claims_integrable=True,
                                  claims_semiflat=False)


PRESETS: dict[str, Callable[[int], ComplexStructureFamily]] = {
    "flat": flat_family,
    "semiflat": semiflat_family,
    "nonsemiflat": nonsemiflat_family,
    "heart": heart_family,
}


def preset(name: str, n: int = 1) -> ComplexStructureFamily:
    try:
        factory = PRESETS[name]
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
    return factory(n)


# -- tabulated families ----------------------------------------------------

def save_tabulated(path: str | Path, A0: np.ndarray, grid: Grid) -> None:
    """Write leading-term samples in the whitespace-separated table format."""
    n = grid.n
    A0 = np.asarray(A0, dtype=complex).reshape(grid.size, n * n)
    with open(path, "w") as fh:
        fh.write(f"{n} {grid.n_theta} {grid.n_x}\n")
        for site in range(grid.size):
            vals = np.concatenate([A0[site].real, A0[site].imag])
            fh.write(f"{site} " + " ".join(f"{v:.17g}" for v in vals) + "\n")


def load_tabulated(path: str | Path, name: str | None = None) -> ComplexStructureFamily:
    """Load a tabulated leading term ``A^0``; the family is ``A(s) = s A^0``.

    Between table nodes the field is interpolated multilinearly with
    periodic wraparound.
    """
    from scipy.interpolate import RegularGridInterpolator

    path = Path(path)
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 3:
            raise ConfigError(f"{path}: header must be 'n N_theta N_x'")
        n, nt, nx = (int(v) for v in header)
        grid = Grid(n, nt, nx)
        rows = np.loadtxt(fh, ndmin=2)
    if rows.shape != (grid.size, 1 + 2 * n * n):
        raise ConfigError(f"{path}: expected {grid.size} rows of {1 + 2 * n * n} numbers, "
                          f"got {rows.shape}")
    order = np.argsort(rows[:, 0])
    if not np.array_equal(rows[order, 0], np.arange(grid.size)):
        raise ConfigError(f"{path}: site indices must cover 0..{grid.size - 1}")
    rows = rows[order]
    table = (rows[:, 1:1 + n * n] + 1j * rows[:, 1 + n * n:]).reshape(grid.shape + (n, n))
    _check_structure(table, where=f" in {path}")

    # pad by one node per axis so the interpolant wraps around
    padded = table
    for axis in range(2 * n):
        padded = np.concatenate([padded, np.take(padded, [0], axis=axis)], axis=axis)
    axes = [np.arange(nt + 1) * grid.h_theta] * n + [np.arange(nx + 1) * grid.h_x] * n
    flat = padded.reshape(padded.shape[: 2 * n] + (n * n,))
    interp_re = RegularGridInterpolator(axes, flat.real)
    interp_im = RegularGridInterpolator(axes, flat.imag)

    def A0(x, theta):
        x = np.asarray(x, dtype=float)
        theta = np.asarray(theta, dtype=float)
        pts = np.concatenate([np.mod(theta, TWO_PI), np.mod(x, 1.0)], axis=-1)
        lead = pts.shape[:-1]
        pts = pts.reshape(-1, 2 * n)
        vals = interp_re(pts) + 1j * interp_im(pts)
        return vals.reshape(lead + (n, n))

    return ComplexStructureFamily(name or path.stem, n, A0)
