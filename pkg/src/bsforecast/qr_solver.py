"""Regularized least-squares solve of the Black-Scholes equation forward in time.

The unknown is the grid field ``u[i, j] ~ u(s_i, t_j)`` on ``[s_b, s_a] x [0, 2tau]``.
The functional is

    J(u) = sum (L u)^2 ds dt + alpha * |u - F|^2_{H2}

with ``L u = u_t + sigma(t)^2 / 2 * s^2 * u_ss``. The row ``j = 0`` and the columns
``i = 0, N_s - 1`` are pinned to the data; every other node is free. ``J`` is a
strictly convex quadratic in the free nodes and is minimized by conjugate
gradients on its least-squares form.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.linalg import solve_banded

from .interp import SIGMA_FLOOR, ForecastInputs, QuadPoly, reference_function

__all__ = [
    "SolverConfig",
    "Grid",
    "SolveResult",
    "SolverError",
    "build_grid",
    "sample_reference",
    "apply_L",
    "functional",
    "gradient",
    "h2_norm",
    "minimize",
    "solve_wellposed_downward",
    "reversed_heat_norm",
]

log = logging.getLogger(__name__)


class SolverError(RuntimeError):
    """Numerical failure inside a solve (non-finite values, singular systems)."""


@dataclass(frozen=True)
class SolverConfig:
    alpha: float = 0.01
    n_s: int = 21
    n_t: int = 21
    cg_rel_tol: float = 1e-9
    cg_max_iters: int | None = None  # None -> 10 * number of free nodes

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha!r}")
        if not self.cg_rel_tol > 0:
            raise ValueError(f"cg_rel_tol must be positive, got {self.cg_rel_tol!r}")
        for name in ("n_s", "n_t"):
            n = getattr(self, name)
            if n < 5 or n % 2 == 0:
                raise ValueError(f"{name} must be odd and >= 5, got {n!r}")
        if self.cg_max_iters is not None and self.cg_max_iters < 1:
            raise ValueError("cg_max_iters must be >= 1")


@dataclass(frozen=True)
class Grid:
    s_nodes: np.ndarray
    t_nodes: np.ndarray
    ds: float
    dt: float

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.s_nodes), len(self.t_nodes)

    @property
    def mid_s(self) -> int:
        return (len(self.s_nodes) - 1) // 2

    @property
    def mid_t(self) -> int:
        """Column index of ``t = tau``."""
        return (len(self.t_nodes) - 1) // 2

    def free_mask(self) -> np.ndarray:
        mask = np.ones(self.shape, dtype=bool)
        mask[:, 0] = False
        mask[0, :] = False
        mask[-1, :] = False
        return mask


def _grid(s_b: float, s_a: float, t_end: float, n_s: int, n_t: int) -> Grid:
    for name, n in (("n_s", n_s), ("n_t", n_t)):
        if n < 5 or n % 2 == 0:
            raise ValueError(f"{name} must be odd and >= 5, got {n!r}")
    s = np.linspace(s_b, s_a, n_s)
    t = np.linspace(0.0, t_end, n_t)
    return Grid(s, t, (s_a - s_b) / (n_s - 1), t_end / (n_t - 1))


def build_grid(inputs: ForecastInputs, config: SolverConfig) -> Grid:
    return _grid(inputs.s_b, inputs.s_a, 2.0 * inputs.tau, config.n_s, config.n_t)


def sample_reference(inputs: ForecastInputs, grid: Grid) -> np.ndarray:
    """``F`` sampled on the grid, shape ``(N_s, N_t)``."""
    return reference_function(inputs, grid.s_nodes[:, None], grid.t_nodes[None, :])


# -- sparse difference operators ------------------------------------------
# Fields are flattened C-order, index i * N_t + j, so kron(A_s, B_t) acts as
# U -> A_s @ U @ B_t.T.


def _fwd(n: int, h: float) -> sp.csr_matrix:
    return sp.diags([-np.ones(n - 1), np.ones(n - 1)], [0, 1], shape=(n - 1, n)) / h


def _second(n: int, h: float) -> sp.csr_matrix:
    ones = np.ones(n - 2)
    return sp.diags([ones, -2 * ones, ones], [0, 1, 2], shape=(n - 2, n)) / (h * h)


def _drop_last(n: int) -> sp.csr_matrix:
    return sp.eye(n - 1, n)


def _interior(n: int) -> sp.csr_matrix:
    return sp.eye(n - 2, n, k=1)


def _sigma_on_grid(sigma, t_nodes: np.ndarray) -> np.ndarray:
    if isinstance(sigma, QuadPoly):
        return np.maximum(sigma(t_nodes), SIGMA_FLOOR)
    if isinstance(sigma, ForecastInputs):
        return np.asarray(sigma.sigma(t_nodes), dtype=float)
    sig = np.broadcast_to(np.asarray(sigma, dtype=float), t_nodes.shape)
    return np.maximum(sig, SIGMA_FLOOR)


def _residual_operator(grid: Grid, sigma) -> sp.csr_matrix:
    """Sparse ``L`` restricted to rows (interior i, j <= N_t - 2)."""
    n_s, n_t = grid.shape
    sig = _sigma_on_grid(sigma, grid.t_nodes)
    time_part = sp.kron(_interior(n_s), _fwd(n_t, grid.dt))
    space_part = sp.kron(_second(n_s, grid.ds), _drop_last(n_t))
    coef = 0.5 * np.outer(grid.s_nodes[1:-1] ** 2, sig[:-1] ** 2).ravel()
    return (time_part + sp.diags(coef) @ space_part).tocsr()


def _h2_operator(grid: Grid) -> sp.csr_matrix:
    """Stack of value, first- and second-difference operators for the H2 norm."""
    n_s, n_t = grid.shape
    i_s, i_t = sp.eye(n_s), sp.eye(n_t)
    blocks = [
        sp.eye(n_s * n_t),
        sp.kron(_fwd(n_s, grid.ds), i_t),
        sp.kron(i_s, _fwd(n_t, grid.dt)),
        sp.kron(_second(n_s, grid.ds), i_t),
        sp.kron(i_s, _second(n_t, grid.dt)),
        sp.kron(_fwd(n_s, grid.ds), _fwd(n_t, grid.dt)),
    ]
    return sp.vstack(blocks).tocsr()


def _check_shape(grid: Grid, *fields):
    for u in fields:
        if np.shape(u) != grid.shape:
            raise ValueError(f"field shape {np.shape(u)} does not match grid {grid.shape}")


def apply_L(u: np.ndarray, grid: Grid, sigma) -> np.ndarray:
    """Discrete Black-Scholes residual on the grid, zero where undefined.

    ``sigma`` may be a ``QuadPoly``, ``ForecastInputs`` or an array of values
    at ``grid.t_nodes``; it is floored at ``SIGMA_FLOOR``.
    """
    _check_shape(grid, u)
    n_s, n_t = grid.shape
    out = np.zeros(grid.shape)
    vals = _residual_operator(grid, sigma) @ np.asarray(u, dtype=float).ravel()
    out[1:-1, :-1] = vals.reshape(n_s - 2, n_t - 1)
    return out


def h2_norm(w: np.ndarray, grid: Grid) -> float:
    """Discrete H2 norm of a grid field (uniform ``ds * dt`` weights)."""
    _check_shape(grid, w)
    v = _h2_operator(grid) @ np.asarray(w, dtype=float).ravel()
    return math.sqrt(grid.ds * grid.dt * float(v @ v))


class _LeastSquares:
    """``J(u) = |A (u - F) + c|^2`` with the cell weight folded into ``A`` and ``c``.

    Working in the deviation ``w = u - F`` keeps the large anchor out of the
    residual, which lowers the rounding floor of the gradient.
    """

    def __init__(self, grid: Grid, sigma, F_field: np.ndarray, alpha: float):
        _check_shape(grid, F_field)
        self.grid = grid
        self.F = np.asarray(F_field, dtype=float)
        w = math.sqrt(grid.ds * grid.dt)
        pen = _h2_operator(grid)
        res = _residual_operator(grid, sigma)
        self.A = sp.vstack([res, math.sqrt(alpha) * pen]).tocsr() * w
        self.c = np.concatenate([w * (res @ self.F.ravel()), np.zeros(pen.shape[0])])

    def residual(self, u: np.ndarray) -> np.ndarray:
        return self.A @ (u - self.F).ravel() + self.c

    def value(self, u: np.ndarray) -> float:
        r = self.residual(u)
        return float(r @ r)

    def gradient(self, u: np.ndarray) -> np.ndarray:
        g = 2.0 * (self.A.T @ self.residual(u))
        g = g.reshape(self.grid.shape)
        g[~self.grid.free_mask()] = 0.0
        return g


def functional(u, F_field, grid: Grid, sigma, alpha: float) -> float:
    """Tikhonov-like functional value ``J_alpha(u)``."""
    _check_shape(grid, u)
    return _LeastSquares(grid, sigma, np.asarray(F_field, float), alpha).value(np.asarray(u, float))


def gradient(u, F_field, grid: Grid, sigma, alpha: float) -> np.ndarray:
    """``dJ/du`` at every node; exactly zero on the pinned row and columns."""
    _check_shape(grid, u)
    return _LeastSquares(grid, sigma, np.asarray(F_field, float), alpha).gradient(np.asarray(u, float))


@dataclass
class SolveResult:
    u: np.ndarray
    grid: Grid
    F: np.ndarray
    iterations: int
    converged: bool
    rel_grad: float
    value: float
    history: list[float] = field(default_factory=list, repr=False)


def _pinned_field(grid: Grid, F_field: np.ndarray, initial: np.ndarray | None) -> np.ndarray:
    u = np.zeros(grid.shape)
    u[:, 0] = F_field[:, 0] if initial is None else initial
    u[0, :] = F_field[0, :]
    u[-1, :] = F_field[-1, :]
    return u


_EPS = np.finfo(float).eps
# safety multiple on the rounding bound; CG stalls within a few times of it
_FLOOR_FACTOR = 4.0
# recompute the residual from scratch this often to stop recursive drift
_REPLACE_EVERY = 50


def _rounding_floor(absM, absMT, d, x) -> float:
    """Componentwise bound on the rounding error of evaluating ``M^T (d - M x)``."""
    return _FLOOR_FACTOR * _EPS * float(np.linalg.norm(absMT @ (np.abs(d) + absM @ np.abs(x))))


def _cgls(M, MT, d, x, tol, max_iters, g_anchor):
    """CGLS for ``min |M x - d|`` (conjugate gradients on the normal equations).

    The target is ``tol * g_ref`` with ``g_ref`` the smaller of the starting
    gradient and ``g_anchor``, so it does not depend on how far the start is
    from the minimizer. When that target lies below the rounding floor of
    the gradient evaluation, the floor takes its place. Convergence is
    confirmed on a freshly computed gradient, never on the recursive one.

    Returns ``x, iterations, converged, g / g_ref, history``.
    """
    absM, absMT = abs(M), abs(MT)
    r = d - M @ x
    s = MT @ r
    g = float(np.linalg.norm(s))
    g_ref = min(g, g_anchor) if g_anchor > 0.0 else g
    history = [g]
    if g == 0.0:
        return x, 0, True, 0.0, history
    target = tol * g_ref
    # the floor costs two sparse products; refresh it only near the target
    near = 1e3 * target
    p = s.copy()
    gamma = g * g
    it = 0
    while it < max_iters:
        q = M @ p
        qq = float(q @ q)
        if qq == 0.0:
            break
        step = gamma / qq
        x += step * p
        r -= step * q
        it += 1
        if it % _REPLACE_EVERY == 0:
            r = d - M @ x
        s = MT @ r
        gamma_new = float(s @ s)
        if not math.isfinite(gamma_new):
            raise SolverError("non-finite gradient during conjugate gradient iteration")
        history.append(math.sqrt(gamma_new))
        stop = target
        if gamma_new <= near * near or it % 100 == 0:
            stop = max(target, _rounding_floor(absM, absMT, d, x))
        if gamma_new <= stop * stop:
            g = float(np.linalg.norm(MT @ (d - M @ x)))
            if g <= stop:
                return x, it, True, g / g_ref, history
        p = s + (gamma_new / gamma) * p
        gamma = gamma_new
    g = float(np.linalg.norm(MT @ (d - M @ x)))
    stop = max(target, _rounding_floor(absM, absMT, d, x))
    return x, it, g <= stop, g / g_ref, history


def minimize(
    inputs: ForecastInputs,
    config: SolverConfig = SolverConfig(),
    *,
    start: np.ndarray | None = None,
    initial: np.ndarray | None = None,
    F_field: np.ndarray | None = None,
) -> SolveResult:
    """Minimize ``J_alpha`` over the free nodes by conjugate gradients.

    Parameters
    ----------
    inputs : ForecastInputs
        Extrapolated quotes, volatility and stock interval.
    config : SolverConfig
    start : ndarray, optional
        Starting values for the free nodes; the default is ``u = 0`` there.
    initial : ndarray, optional
        Values for the pinned ``t = 0`` row. Defaults to the linear initial
        condition. Its endpoints must equal the bid/ask at ``t = 0``.
    F_field : ndarray, optional
        Penalty anchor. Defaults to the reference function on the grid.

    Returns
    -------
    SolveResult
        ``converged`` is False when the iteration cap was hit first.
    """
    grid = build_grid(inputs, config)
    if F_field is None:
        F_field = sample_reference(inputs, grid)
    _check_shape(grid, F_field)
    if initial is not None:
        initial = np.asarray(initial, dtype=float)
        if initial.shape != (grid.shape[0],):
            raise ValueError("initial row must have one value per s node")

    problem = _LeastSquares(grid, inputs, F_field, config.alpha)
    u = _pinned_field(grid, F_field, initial)
    free = grid.free_mask()
    if start is not None:
        _check_shape(grid, start)
        u[free] = np.asarray(start, dtype=float)[free]

    cols = np.flatnonzero(free.ravel())
    M = problem.A[:, cols].tocsc()
    MT = M.T.tocsr()
    dev = u - F_field
    pinned_dev = dev.copy()
    pinned_dev[free] = 0.0
    # minimize |M x - d| over the free deviations x
    d = -(problem.c + problem.A @ pinned_dev.ravel())

    max_iters = config.cg_max_iters or 10 * len(cols)
    x0 = dev.ravel()[cols].copy()
    # the gradient at u = F on the free nodes sets a start-independent scale
    g_anchor = float(np.linalg.norm(MT @ d))
    x, it, converged, rel, history = _cgls(M, MT, d, x0, config.cg_rel_tol, max_iters, g_anchor)
    if not converged:
        log.warning("conjugate gradient hit the cap of %d iterations (rel grad %.3g)", max_iters, rel)
    u_flat = u.ravel()
    u_flat[cols] = F_field.ravel()[cols] + x
    u = u_flat.reshape(grid.shape)
    value = problem.value(u)
    if not (np.all(np.isfinite(u)) and math.isfinite(value)):
        raise SolverError("non-finite field or functional value after minimization")
    return SolveResult(u, grid, F_field, it, converged, rel, value, history)


def solve_wellposed_downward(
    terminal, inputs: ForecastInputs, grid: Grid
) -> np.ndarray:
    """March ``L u = 0`` from ``t = 2tau`` down to ``t = 0`` with an implicit scheme.

    Each step solves ``u^j - dt * a_j * s^2 * D_ss u^j = u^{j+1}`` on the interior,
    the same stencil ``apply_L`` uses, so the result has zero discrete residual.
    Boundary columns come from ``inputs.ub_poly`` and ``inputs.ua_poly``.
    """
    terminal = np.asarray(terminal, dtype=float)
    n_s, n_t = grid.shape
    if terminal.shape != (n_s,):
        raise ValueError("terminal profile must have one value per s node")
    sig = _sigma_on_grid(inputs, grid.t_nodes)
    u = np.empty(grid.shape)
    u[:, -1] = terminal
    u[0, :] = inputs.ub_poly(grid.t_nodes)
    u[-1, :] = inputs.ua_poly(grid.t_nodes)
    s2 = grid.s_nodes[1:-1] ** 2
    for j in range(n_t - 2, -1, -1):
        lam = grid.dt * 0.5 * sig[j] ** 2 * s2 / grid.ds**2
        ab = np.zeros((3, n_s - 2))
        ab[0, 1:] = -lam[:-1]
        ab[1, :] = 1.0 + 2.0 * lam
        ab[2, :-1] = -lam[1:]
        rhs = u[1:-1, j + 1].copy()
        rhs[0] += lam[0] * u[0, j]
        rhs[-1] += lam[-1] * u[-1, j]
        try:
            u[1:-1, j] = solve_banded((1, 1), ab, rhs)
        except (np.linalg.LinAlgError, ValueError) as exc:
            raise SolverError(f"tridiagonal solve failed at step {j}") from exc
    if not np.all(np.isfinite(u)):
        raise SolverError("non-finite values in downward solve")
    return u


def reversed_heat_norm(fourier_coeffs, t: float) -> float:
    """Squared L2(0, pi) norm of ``sum f_n sin(n x) exp(n^2 t)``."""
    f = np.asarray(fourier_coeffs, dtype=float)
    n = np.arange(1, len(f) + 1, dtype=float)
    return float(math.pi / 2 * np.sum(f**2 * np.exp(2.0 * n**2 * t)))
