"""Ground-truth LTI systems, Markov parameters and block-Hankel matrices."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class ConfigurationError(ValueError):
    """Raised when a generator is asked for a system it cannot build."""


@dataclass(frozen=True)
class SystemRealization:
    """State-space matrices of ``x+ = A x + B u + w``, ``y = C x + D u``."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray

    def __post_init__(self):
        A, B, C, D = (np.atleast_2d(np.asarray(M, dtype=float)) for M in (self.A, self.B, self.C, self.D))
        n = A.shape[0]
        if A.shape != (n, n):
            raise ValueError(f"A must be square, got {A.shape}")
        if B.shape[0] != n:
            raise ValueError(f"B must have {n} rows, got {B.shape}")
        if C.shape[1] != n:
            raise ValueError(f"C must have {n} columns, got {C.shape}")
        if D.shape != (C.shape[0], B.shape[1]):
            raise ValueError(f"D must be {(C.shape[0], B.shape[1])}, got {D.shape}")
        for name, M in zip("ABCD", (A, B, C, D)):
            object.__setattr__(self, name, M)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def r(self) -> int:
        return self.C.shape[0]

    def to_dict(self) -> dict:
        return {name: getattr(self, name).tolist() for name in "ABCD"}

    @classmethod
    def from_dict(cls, data: dict) -> "SystemRealization":
        return cls(*(np.asarray(data[name], dtype=float) for name in "ABCD"))


@dataclass(frozen=True)
class MarkovMatrix:
    """``G = [D, CB, CAB, ..., C A^{2k-2} B]`` stored as an ``r x 2km`` array."""

    G: np.ndarray
    k: int
    m: int
    r: int

    def __post_init__(self):
        G = np.atleast_2d(np.asarray(self.G, dtype=float))
        if G.shape != (self.r, 2 * self.k * self.m):
            raise ValueError(f"G must be {(self.r, 2 * self.k * self.m)}, got {G.shape}")
        object.__setattr__(self, "G", G)

    @classmethod
    def from_array(cls, G, k: int) -> "MarkovMatrix":
        G = np.atleast_2d(np.asarray(G, dtype=float))
        if G.shape[1] % (2 * k):
            raise ValueError(f"width {G.shape[1]} is not a multiple of 2k={2 * k}")
        return cls(G, k, G.shape[1] // (2 * k), G.shape[0])

    def block(self, j: int) -> np.ndarray:
        """Block ``j`` of G: ``j = 0`` is D, ``j >= 1`` is ``C A^{j-1} B``."""
        return self.G[:, j * self.m:(j + 1) * self.m]

    @property
    def D(self) -> np.ndarray:
        return self.block(0)


@dataclass(frozen=True)
class HankelBlock:
    """Block-Hankel matrix ``H_{alpha,beta}``, possibly zero-padded or truncated.

    ``beta`` counts the block rows/columns of the unpadded Hankel; the
    stored ``matrix`` can have a different shape after :func:`zero_pad_truncate`.
    """

    matrix: np.ndarray
    alpha: int
    beta: int
    r: int
    m: int

    @property
    def shape(self) -> tuple[int, int]:
        return self.matrix.shape


def spectral_norm(M, tol: float = 1e-12, max_iter: int = 1000) -> float:
    """Largest singular value of ``M``.

    Power iteration on ``M^T M``; stops once the eigen-residual is below
    ``tol`` relative to the Rayleigh quotient, otherwise falls back to a
    dense SVD.
    """
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if not np.all(np.isfinite(M)):
        raise ValueError("spectral_norm: matrix has non-finite entries")
    if M.size == 0 or not np.any(M):
        return 0.0
    MtM = M.T @ M
    # deterministic start with a nonzero component along every coordinate
    v = 1.0 + np.arange(MtM.shape[0]) / MtM.shape[0]
    v /= np.linalg.norm(v)
    for _ in range(max_iter):
        w = MtM @ v
        lam = float(v @ w)
        if lam <= 0.0:
            break
        if np.linalg.norm(w - lam * v) <= tol * lam:
            return float(np.sqrt(lam))
        v = w / np.linalg.norm(w)
    return float(np.linalg.svd(M, compute_uv=False)[0])


def _draw(rng: np.random.Generator, shape, dist: str) -> np.ndarray:
    if dist == "uniform":
        return rng.uniform(-1.0, 1.0, size=shape)
    if dist == "gaussian":
        return rng.standard_normal(size=shape)
    raise ConfigurationError(f"unknown entry distribution {dist!r}")


def _check_target(target_norm: float) -> None:
    if not 0.0 < target_norm < 1.0:
        raise ConfigurationError(
            f"Assumption 1: target spectral norm must lie in (0, 1), got {target_norm}"
        )


def nilpotent_shift(n: int, k: int) -> np.ndarray:
    """Unscaled weighted shift with ``(i, i+1) = i``, zeroed where ``(2k-1) | i``."""
    A = np.zeros((n, n))
    period = 2 * k - 1
    for i in range(1, n):
        if i % period:
            A[i - 1, i] = float(i)
    return A


def gen_nilpotent_system(n: int, m: int, r: int, k: int, target_norm: float,
                         rng: np.random.Generator, dist: str = "uniform") -> SystemRealization:
    """Nilpotent system with ``A^{2k-1} = 0`` and ``||A||_2 = target_norm``.

    When every superdiagonal link is cut (``k = 1``) A is the zero matrix and
    no scaling is possible.
    """
    _check_target(target_norm)
    if n <= 2 * k - 1:
        raise ConfigurationError(f"nilpotent generator needs n > 2k-1, got n={n}, k={k}")
    A = nilpotent_shift(n, k)
    norm = spectral_norm(A)
    if norm > 0:
        A *= target_norm / norm
    B = _draw(rng, (n, m), dist)
    C = _draw(rng, (r, n), dist)
    D = _draw(rng, (r, m), dist)
    return SystemRealization(A, B, C, D)


def gen_general_system(n: int, m: int, r: int, target_norm: float,
                       rng: np.random.Generator, dist: str = "uniform") -> SystemRealization:
    """Dense A with iid Uniform[-1, 1] entries scaled to ``||A||_2 = target_norm``."""
    _check_target(target_norm)
    if min(n, m, r) < 1:
        raise ConfigurationError("dimensions must be positive")
    while True:
        A = rng.uniform(-1.0, 1.0, size=(n, n))
        norm = spectral_norm(A)
        if norm > 0:
            break
    A *= target_norm / norm
    B = _draw(rng, (n, m), dist)
    C = _draw(rng, (r, n), dist)
    D = _draw(rng, (r, m), dist)
    return SystemRealization(A, B, C, D)


def impulse_blocks(sys: SystemRealization, count: int, start: int = 0) -> list[np.ndarray]:
    """``[C A^start B, C A^{start+1} B, ...]`` with ``count`` entries."""
    AjB = np.linalg.matrix_power(sys.A, start) @ sys.B
    out = []
    for _ in range(count):
        out.append(sys.C @ AjB)
        AjB = sys.A @ AjB
    return out


def markov_parameters(sys: SystemRealization, k: int) -> MarkovMatrix:
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    G = np.hstack([sys.D] + impulse_blocks(sys, 2 * k - 1))
    return MarkovMatrix(G, k, sys.m, sys.r)


def _assemble_hankel(blocks: list[np.ndarray], beta: int) -> np.ndarray:
    return np.block([[blocks[i + j] for j in range(beta)] for i in range(beta)])


def hankel_of_system(sys: SystemRealization, alpha: int, beta: int) -> HankelBlock:
    """``H_{alpha,beta}`` with block ``(i, j) = C A^{alpha+i+j} B`` (0-based)."""
    if alpha < 0 or beta < 1:
        raise ValueError(f"need alpha >= 0 and beta >= 1, got {alpha}, {beta}")
    blocks = impulse_blocks(sys, 2 * beta - 1, start=alpha)
    return HankelBlock(_assemble_hankel(blocks, beta), alpha, beta, sys.r, sys.m)


def hankel_from_markov(G: MarkovMatrix, d: int) -> HankelBlock:
    """``H_{0,d}`` assembled from the impulse blocks of G (the D block is skipped)."""
    if not 1 <= d <= G.k:
        raise ValueError(f"Hankel order d={d} outside 1..k={G.k}")
    blocks = [G.block(j) for j in range(1, 2 * d)]
    return HankelBlock(_assemble_hankel(blocks, d), 0, d, G.r, G.m)


def zero_pad_truncate(H: HankelBlock, rows: int, cols: int) -> HankelBlock:
    """Leading ``rows x cols`` region of the infinite zero-padding of ``H``."""
    if rows < 1 or cols < 1:
        raise ValueError("rows and cols must be positive")
    out = np.zeros((rows, cols))
    rr, cc = min(rows, H.shape[0]), min(cols, H.shape[1])
    out[:rr, :cc] = H.matrix[:rr, :cc]
    return HankelBlock(out, H.alpha, H.beta, H.r, H.m)
