"""Balanced-truncation models from Markov parameters (padded Ho-Kalman)."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .model import (
    MarkovMatrix,
    SystemRealization,
    hankel_from_markov,
    hankel_of_system,
    spectral_norm,
    zero_pad_truncate,
)

RANK_TOL = 1e-12
PINV_RTOL = 1e-12


class DegenerateOrderWarning(UserWarning):
    pass


@dataclass
class TruncatedModel:
    """Order-``d`` model with the singular values that produced it.

    ``obs`` and ``ctrb`` are the balanced factors ``U S^{1/2}`` and
    ``S^{1/2} V^T`` restricted to the leading ``d`` directions.
    """

    d: int
    A_hat: np.ndarray
    B_hat: np.ndarray
    C_hat: np.ndarray
    D_hat: np.ndarray
    sigma: np.ndarray
    obs: np.ndarray | None = None
    ctrb: np.ndarray | None = None
    diagnostics: dict = field(default_factory=dict)

    def markov_product(self, i: int) -> np.ndarray:
        return self.C_hat @ np.linalg.matrix_power(self.A_hat, i) @ self.B_hat

    def to_dict(self) -> dict:
        return {
            "d": self.d,
            "A_hat": self.A_hat.tolist(),
            "B_hat": self.B_hat.tolist(),
            "C_hat": self.C_hat.tolist(),
            "D_hat": self.D_hat.tolist(),
            "sigma": self.sigma.tolist(),
            "diagnostics": self.diagnostics,
        }


def _oriented_svd(H: np.ndarray):
    """SVD with each left singular vector's largest-magnitude entry made positive."""
    U, s, Vt = np.linalg.svd(H, full_matrices=False)
    idx = np.argmax(np.abs(U), axis=0)
    signs = np.sign(U[idx, np.arange(U.shape[1])])
    signs[signs == 0] = 1.0
    return U * signs, s, Vt * signs[:, None]


def _balanced_factors(H: np.ndarray, d: int, r: int, m: int, shift_rows: int):
    """Truncated balanced factors of ``H`` and the shift-invariance solve for A."""
    U, s, Vt = _oriented_svd(H)
    if d > s.size:
        raise ValueError(f"order d={d} exceeds the Hankel dimension {s.size}")
    sigma = s[:d].copy()
    root = np.sqrt(sigma)
    obs = U[:, :d] * root
    ctrb = root[:, None] * Vt[:d]
    C_hat = obs[:r]
    B_hat = ctrb[:, :m]
    A_hat = np.linalg.pinv(obs[:shift_rows - r], rcond=PINV_RTOL) @ obs[r:shift_rows]
    diagnostics = {}
    if s[0] == 0.0 or sigma[-1] < RANK_TOL * s[0]:
        rank = int(np.sum(s > RANK_TOL * s[0])) if s[0] > 0 else 0
        diagnostics["effective_order"] = rank
        warnings.warn(f"order {d} exceeds numerical Hankel rank {rank}", DegenerateOrderWarning,
                      stacklevel=3)
    return A_hat, B_hat, C_hat, sigma, obs, ctrb, diagnostics


def ho_kalman(G: MarkovMatrix, d: int, rows: int | None = None, cols: int | None = None,
              hankel_blocks: int | None = None) -> TruncatedModel:
    """Order-``d`` model from a zero-padded Hankel of ``G``.

    The ``beta``-block Hankel built from G (``beta = hankel_blocks``, default
    ``k``) is padded/truncated to ``rows x cols`` (default
    ``(r beta + r) x m beta``) and its leading ``d`` singular triples are kept.
    With ``hankel_blocks=d`` only ``CB, ..., C A^{2d-2} B`` enter the model.
    """
    k, r, m = G.k, G.r, G.m
    if not 1 <= d <= k:
        raise ValueError(f"model order d={d} outside 1..k={k}")
    beta = k if hankel_blocks is None else hankel_blocks
    if not d <= beta <= k:
        raise ValueError(f"hankel_blocks={beta} outside d..k={d}..{k}")
    rows = r * beta + r if rows is None else rows
    cols = m * beta if cols is None else cols
    if rows < 2 * r or cols < m:
        raise ValueError("padded Hankel needs at least two block rows and one block column")
    H = zero_pad_truncate(hankel_from_markov(G, beta), rows, cols).matrix
    A_hat, B_hat, C_hat, sigma, obs, ctrb, diag = _balanced_factors(H, d, r, m, rows)
    diag["hankel_blocks"] = beta
    return TruncatedModel(d, A_hat, B_hat, C_hat, G.D.copy(), sigma, obs, ctrb, diag)


def tail_length(sys: SystemRealization, tail_tol: float = 1e-12) -> int:
    """Smallest ``L`` with ``||C|| ||A||^L ||B|| / (1 - ||A||) < tail_tol``."""
    a = spectral_norm(sys.A)
    if a >= 1.0:
        raise ValueError(f"Assumption 1 violated: ||A||_2 = {a} >= 1")
    cb = spectral_norm(sys.C) * spectral_norm(sys.B)
    if a == 0.0 or cb == 0.0:
        return 2
    target = tail_tol * (1.0 - a) / cb
    if target >= 1.0:
        return 2
    return max(2, math.ceil(math.log(target) / math.log(a)) + 1)


def true_balanced_truncation(sys: SystemRealization, d: int, tail_tol: float = 1e-12) -> TruncatedModel:
    """Order-``d`` balanced truncation from a finite section of ``H_{0,inf}``."""
    if d < 1:
        raise ValueError(f"model order must be >= 1, got {d}")
    if d > sys.n:
        raise ValueError(f"model order d={d} exceeds state dimension n={sys.n}")
    L = tail_length(sys, tail_tol)
    H = hankel_of_system(sys, 0, L).matrix
    A_hat, B_hat, C_hat, sigma, obs, ctrb, diag = _balanced_factors(H, d, sys.r, sys.m, H.shape[0])
    diag["L"] = L
    return TruncatedModel(d, A_hat, B_hat, C_hat, sys.D.copy(), sigma, obs, ctrb, diag)


def markov_product_error(model1, model2, i: int) -> float:
    """``|| C1 A1^i B1 - C2 A2^i B2 ||_2``; accepts models or realizations."""
    def product(mdl):
        if isinstance(mdl, SystemRealization):
            return mdl.C @ np.linalg.matrix_power(mdl.A, i) @ mdl.B
        return mdl.markov_product(i)

    P1, P2 = product(model1), product(model2)
    if P1.shape != P2.shape:
        raise ValueError(f"incompatible models: {P1.shape} vs {P2.shape}")
    return spectral_norm(P1 - P2)


def procrustes_align(M_true: np.ndarray, M_est: np.ndarray) -> np.ndarray:
    """Orthogonal ``Q`` minimizing ``||M_true - M_est Q||_F``."""
    M_true, M_est = np.atleast_2d(M_true), np.atleast_2d(M_est)
    if M_true.shape != M_est.shape:
        raise ValueError(f"shape mismatch: {M_true.shape} vs {M_est.shape}")
    W, _, Vt = np.linalg.svd(M_est.T @ M_true)
    return W @ Vt


def hankel_gap(sys: SystemRealization, G_hat: MarkovMatrix, d: int, tail_tol: float = 1e-12) -> float:
    """``|| H_{0,L} - pad(Hhat_{0,d}) ||_2`` in a common ``rL x mL`` frame."""
    L = max(tail_length(sys, tail_tol), d)
    H = hankel_of_system(sys, 0, L).matrix
    Hhat = zero_pad_truncate(hankel_from_markov(G_hat, d), *H.shape).matrix
    return spectral_norm(H - Hhat)
