"""Least-absolute-deviations and least-squares estimation of the Markov matrix.

The LAD problem ``min_G sum_t ||y_t - G U_t||_1`` separates over output rows.
Each row is solved by iteratively reweighted least squares on a Huber
smoothing of ``|.|`` whose threshold is driven from ``1e-1`` to ``1e-10``
(relative to the data scale), followed by an active-set polish that
refits exactly on the near-zero residuals. Convergence is certified by the
gap to a feasible point of the LP dual

    max_z  y . z   s.t.  U z = 0,  |z_t| <= 1,

built from the Huber derivative at the last iterate.
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, optimize

from .model import MarkovMatrix
from .sim import RegressionData


class LADConvergenceError(RuntimeError):
    """The gap certificate did not reach tolerance within the iteration budget.

    ``result`` holds the best iterate found; ``gap`` the remaining primal-dual gap.
    """

    def __init__(self, message, result: "EstimatorResult", gap: float):
        super().__init__(message)
        self.result = result
        self.gap = gap


@dataclass
class LADOptions:
    delta_schedule: tuple = tuple(10.0 ** -j for j in range(1, 11))
    inner_max_iter: int = 60
    inner_tol: float = 1e-13
    tol_obj: float = 1e-9      # allowed gap per sample, relative to the data scale
    zero_tol: float = 1e-9     # residual counted as zero below zero_tol * scale
    max_pivots: int = 2000
    raise_on_failure: bool = True


@dataclass
class EstimatorResult:
    G_hat: np.ndarray
    objective: float
    diagnostics: dict = field(default_factory=dict)

    def markov(self, k: int) -> MarkovMatrix:
        return MarkovMatrix.from_array(self.G_hat, k)


def l1_objective(Y: np.ndarray, U: np.ndarray, G: np.ndarray) -> float:
    return float(np.abs(np.atleast_2d(Y) - np.atleast_2d(G) @ U).sum())


def _weighted_solve(U: np.ndarray, y: np.ndarray, wts: np.ndarray) -> np.ndarray:
    Uw = U * wts
    try:
        with warnings.catch_warnings():
            # ill-conditioned normal equations fall through to lstsq
            warnings.simplefilter("error", linalg.LinAlgWarning)
            return linalg.solve(Uw @ U.T, Uw @ y, assume_a="pos", check_finite=False)
    except (linalg.LinAlgError, linalg.LinAlgWarning, ValueError):
        sw = np.sqrt(wts)
        return np.linalg.lstsq((U * sw).T, y * sw, rcond=None)[0]


def _dual_gap(U: np.ndarray, y: np.ndarray, g: np.ndarray, z: np.ndarray, zero_tol: float) -> float:
    """Primal objective at ``g`` minus the value of a feasible dual point.

    The dual candidate takes ``sign(r_t)`` on nonzero residuals and a
    minimum-norm correction of ``z`` on the (near-)zero ones, which is exact
    at an optimal vertex; any leftover infeasibility is projected out and
    the box restored by rescaling.
    """
    r = y - g @ U
    zero = np.abs(r) <= zero_tol
    z = np.where(zero, np.clip(z, -1.0, 1.0), np.sign(r))
    if zero.any():
        Uz = U[:, zero]
        target = -U[:, ~zero] @ z[~zero]
        z[zero] += np.linalg.lstsq(Uz, target - Uz @ z[zero], rcond=None)[0]
    return _gap_at(U, y, g, z)


def _gap_at(U: np.ndarray, y: np.ndarray, g: np.ndarray, z: np.ndarray) -> float:
    primal = float(np.abs(y - g @ U).sum())
    coef = np.linalg.lstsq(U.T, z, rcond=None)[0]
    z = z - U.T @ coef
    zmax = np.max(np.abs(z)) if z.size else 0.0
    if zmax > 1.0:
        z = z / zmax
    return primal - float(y @ z)


def _exact_refit(U: np.ndarray, y: np.ndarray, idx: np.ndarray) -> np.ndarray | None:
    if idx.size < U.shape[0]:
        return None
    Us = U[:, idx]
    if np.linalg.matrix_rank(Us) < U.shape[0]:
        return None
    return np.linalg.lstsq(Us.T, y[idx], rcond=None)[0]


def _independent_subset(U: np.ndarray, order: np.ndarray, tol: float = 1e-9) -> np.ndarray | None:
    """First ``p`` columns of ``U`` (in ``order``) that are linearly independent."""
    p = U.shape[0]
    Q = np.zeros((p, 0))
    chosen = []
    for t in order:
        col = U[:, t]
        res = col - Q @ (Q.T @ col)
        res -= Q @ (Q.T @ res)
        nrm = np.linalg.norm(res)
        if nrm > tol * max(np.linalg.norm(col), 1.0):
            Q = np.column_stack([Q, res / nrm])
            chosen.append(t)
            if len(chosen) == p:
                return np.asarray(chosen)
    return None


def _vertex_descent(U: np.ndarray, y: np.ndarray, g: np.ndarray, max_steps: int):
    """Simplex pivots on the LAD linear program, started from the basis of
    smallest residuals at ``g``.

    A basic sample whose dual multiplier exceeds one in magnitude leaves the
    basis; the step length is the exact minimizer of the piecewise-linear
    objective along the edge, and the sample at that breakpoint enters.
    Returns ``(g, steps, z)`` where ``z`` is the dual point of the final
    basis (``None`` if no basis could be formed).
    """
    p, T = U.shape
    basis = _independent_subset(U, np.argsort(np.abs(y - g @ U), kind="stable"))
    if basis is None:
        return g, 0, None
    in_basis = np.zeros(T, dtype=bool)
    for steps in range(max_steps + 1):
        UB = U[:, basis]
        try:
            g = np.linalg.solve(UB.T, y[basis])
        except np.linalg.LinAlgError:
            return g, steps, None
        r = y - g @ U
        in_basis[:] = False
        in_basis[basis] = True
        r[in_basis] = 0.0
        s = np.sign(r)
        zB = np.linalg.solve(UB, -(U[:, ~in_basis] @ s[~in_basis]))
        z = s.copy()
        z[basis] = zB
        j = int(np.argmax(np.abs(zB)))
        if abs(zB[j]) <= 1.0 + 1e-10 or steps == max_steps:
            return g, steps, z
        e = np.zeros(p)
        e[j] = -np.sign(zB[j])
        d = np.linalg.solve(UB.T, e)
        a = d @ U
        a[in_basis] = 0.0
        a[basis[j]] = e[j]
        # slope of sum |r_t - alpha a_t| at alpha = 0+ is 1 - |zB[j]| < 0
        mask = (a != 0.0) & ~in_basis
        bp = r[mask] / a[mask]
        keep = bp >= 0
        idx = np.flatnonzero(mask)[keep]
        if idx.size == 0:
            return g, steps, z
        order = np.argsort(bp[keep], kind="stable")
        slope = 1.0 - abs(zB[j])
        enter = idx[order[-1]]
        for o in order:
            t = idx[o]
            # a zero residual contributes |a_t| only after the step starts
            slope += (1.0 if r[t] == 0.0 else 2.0) * abs(a[t])
            if slope >= 0.0:
                enter = idx[o]
                break
        basis = basis.copy()
        basis[j] = enter
    return g, max_steps, None


def _lad_row(U: np.ndarray, y: np.ndarray, opts: LADOptions):
    p, T = U.shape
    g = np.linalg.lstsq(U.T, y, rcond=None)[0]
    scale = float(np.mean(np.abs(y)))
    if scale == 0.0:
        g = np.zeros(p)
        return g, 0.0, {"iterations": 0, "gap": 0.0, "converged": True, "zero_residuals": T}
    iterations = 0
    z = np.zeros(T)
    for delta_rel in opts.delta_schedule:
        delta = delta_rel * scale
        prev = np.inf
        for _ in range(opts.inner_max_iter):
            r = y - g @ U
            a = np.abs(r)
            smooth = float(np.where(a < delta, 0.5 * (r * r / delta + delta), a).sum())
            wts = 1.0 / np.maximum(a, delta)
            z = r * wts
            if prev - smooth <= opts.inner_tol * max(smooth, scale):
                break
            prev = smooth
            g = _weighted_solve(U, y, wts)
            iterations += 1

    best = g
    best_obj = float(np.abs(y - g @ U).sum())
    r = y - g @ U
    a = np.abs(r)
    candidates = [np.flatnonzero(a <= 10.0 * opts.delta_schedule[-1] * scale),
                  np.argsort(a, kind="stable")[:p]]
    for idx in candidates:
        g_try = _exact_refit(U, y, idx)
        if g_try is None:
            continue
        obj = float(np.abs(y - g_try @ U).sum())
        if obj < best_obj:
            best, best_obj = g_try, obj

    zero_tol = opts.zero_tol * max(scale, 1.0)
    gap = max(_dual_gap(U, y, best, z, zero_tol), 0.0)
    pivots = 0
    if gap > opts.tol_obj * T * max(scale, 1.0) and np.linalg.matrix_rank(U) == p:
        g_v, pivots, z_v = _vertex_descent(U, y, best, opts.max_pivots)
        obj = float(np.abs(y - g_v @ U).sum())
        if obj <= best_obj:
            best, best_obj = g_v, obj
            gap = max(_dual_gap(U, y, best, z, zero_tol), 0.0)
            if z_v is not None:
                gap = min(gap, max(_gap_at(U, y, best, z_v), 0.0))
    resid = np.abs(y - best @ U)
    info = {
        "iterations": iterations,
        "pivots": pivots,
        "gap": gap,
        "converged": gap <= opts.tol_obj * T * max(scale, 1.0),
        "zero_residuals": int(np.sum(resid <= zero_tol)),
    }
    return best, best_obj, info


def lad_fit(data: RegressionData, options: LADOptions | None = None) -> EstimatorResult:
    """Row-wise LAD fit of ``Y ~ G U``.

    Any minimizer is returned when the solution set is a face; rows with
    fewer than ``2km`` zero residuals are flagged as possibly non-unique.
    """
    opts = options or LADOptions()
    Y, U = np.atleast_2d(data.Y), data.U
    if Y.shape[1] < 1 or not np.all(np.isfinite(U)):
        raise ValueError("LAD needs at least one finite sample")
    p = U.shape[0]
    G = np.zeros((Y.shape[0], p))
    rows = []
    total = 0.0
    for i in range(Y.shape[0]):
        G[i], obj, info = _lad_row(U, Y[i], opts)
        info["objective"] = obj
        info["maybe_nonunique"] = info["zero_residuals"] < p
        rows.append(info)
        total += obj
    diagnostics = {
        "iterations": sum(row["iterations"] for row in rows),
        "converged": all(row["converged"] for row in rows),
        "gap": sum(row["gap"] for row in rows),
        "rows": rows,
    }
    result = EstimatorResult(G, total, diagnostics)
    if opts.raise_on_failure and not diagnostics["converged"]:
        bad = [i for i, row in enumerate(rows) if not row["converged"]]
        raise LADConvergenceError(
            f"LAD gap above tolerance on rows {bad} (gap {diagnostics['gap']:.3g})",
            result, diagnostics["gap"])
    return result


def ls_fit(data: RegressionData) -> EstimatorResult:
    """Minimum-norm least squares ``G = Y U^T (U U^T)^+``."""
    Y, U = np.atleast_2d(data.Y), data.U
    G = Y @ U.T @ np.linalg.pinv(U @ U.T)
    resid = Y - G @ U
    return EstimatorResult(G, float(np.sum(resid * resid)), {"rank": int(np.linalg.matrix_rank(U))})


def frobenius_error(G_true, G_hat) -> float:
    A = G_true.G if isinstance(G_true, MarkovMatrix) else np.atleast_2d(np.asarray(G_true, dtype=float))
    B = G_hat.G if isinstance(G_hat, MarkovMatrix) else np.atleast_2d(np.asarray(G_hat, dtype=float))
    if A.shape != B.shape:
        raise ValueError(f"shape mismatch: {A.shape} vs {B.shape}")
    return float(np.linalg.norm(A - B, "fro"))


def lad_vertex_oracle(U: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, float]:
    """Exact single-row LAD by enumerating basic solutions.

    Some minimizer interpolates ``rank(U)`` samples, so trying every
    sample subset of that size finds the optimum. Only for tiny problems.
    """
    U = np.atleast_2d(U)
    y = np.asarray(y, dtype=float)
    p, T = U.shape
    rank = np.linalg.matrix_rank(U)
    best, best_obj = np.zeros(p), float(np.abs(y).sum())
    for idx in itertools.combinations(range(T), rank):
        Us = U[:, idx]
        if np.linalg.matrix_rank(Us) < rank:
            continue
        g = np.linalg.lstsq(Us.T, y[list(idx)], rcond=None)[0]
        obj = float(np.abs(y - g @ U).sum())
        if obj < best_obj:
            best, best_obj = g, obj
    return best, best_obj


def lad_lp_oracle(U: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, float]:
    """Single-row LAD as the linear program ``min 1.e s.t. -e <= y - U^T g <= e``."""
    U = np.atleast_2d(U)
    y = np.asarray(y, dtype=float)
    p, T = U.shape
    c = np.concatenate([np.zeros(p), np.ones(T)])
    eye = np.eye(T)
    A_ub = np.block([[-U.T, -eye], [U.T, -eye]])
    b_ub = np.concatenate([-y, y])
    res = optimize.linprog(c, A_ub=A_ub, b_ub=b_ub, bounds=[(None, None)] * p + [(0, None)] * T,
                           method="highs")
    if not res.success:
        raise RuntimeError(res.message)
    g = res.x[:p]
    return g, float(np.abs(y - g @ U).sum())
