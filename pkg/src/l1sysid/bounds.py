"""Order values of the recovery guarantees and an empirical uniqueness check.

Every bound carries an explicit constant ``c`` in place of the unspecified
Theta-constants, so only scaling behaviour is meaningful. Logarithms are
natural.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .model import SystemRealization, spectral_norm
from .sim import RegressionData


class AssumptionError(ValueError):
    pass


@dataclass
class BoundReport:
    q: float
    T_star: float
    markov_bound: float
    retrieval_bounds: tuple
    nu: float
    assumptions_ok: dict

    def to_dict(self) -> dict:
        out = asdict(self)
        out["retrieval_bounds"] = list(self.retrieval_bounds)
        return out


def attack_mass_q(p: float, k: int) -> float:
    """Probability that a window of ``2k - 1`` steps contains an attack."""
    if not 0.0 <= p < 1.0:
        raise AssumptionError(f"attack probability must lie in [0, 1), got {p}")
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    return 1.0 - (1.0 - p) ** (2 * k - 1)


def attack_probability_limit(k: int) -> float:
    """Largest admissible attack probability (exclusive): ``1 / (4k - 2)``."""
    return 1.0 / (4 * k - 2)


def _check_q(q: float) -> None:
    if not q < 0.5:
        raise AssumptionError(f"Assumption 3: window attack mass q={q} must be < 0.5")


def sample_complexity(k: int, m: int, r: int, q: float, delta: float, c: float = 1.0) -> float:
    _check_q(q)
    if not 0.0 < delta <= 1.0:
        raise ValueError(f"delta must lie in (0, 1], got {delta}")
    if c <= 0:
        raise ValueError("c must be positive")
    margin = 1.0 - 2.0 * q
    return c * k / margin ** 2 * (k * m * math.log(k * m / margin) + math.log(r / delta))


def _stable_norms(sys: SystemRealization):
    a = spectral_norm(sys.A)
    if not a < 1.0:
        raise AssumptionError(f"Assumption 1: ||A||_2 = {a} must be < 1")
    return a, spectral_norm(sys.B), spectral_norm(sys.C)


def nu_constant(sys: SystemRealization, q: float, eta: float, gamma: float) -> float:
    _check_q(q)
    _, b, c_norm = _stable_norms(sys)
    return c_norm / (1.0 - 2.0 * q) * (eta / gamma + math.sqrt(sys.m) * b)


def markov_error_bound(sys: SystemRealization, k: int, q: float, eta: float, gamma: float,
                       c: float = 1.0) -> float:
    """``c ||A^{2k-1}|| ||C|| sqrt(r) / ((1-||A||)(1-2q)) * (eta/gamma + sqrt(m) ||B||)``."""
    _check_q(q)
    a, b, c_norm = _stable_norms(sys)
    tail = spectral_norm(np.linalg.matrix_power(sys.A, 2 * k - 1))
    return (c * tail * c_norm * math.sqrt(sys.r) / ((1.0 - a) * (1.0 - 2.0 * q))
            * (eta / gamma + math.sqrt(sys.m) * b))


def retrieval_error_bounds(sys: SystemRealization, k: int, q: float, eta: float, gamma: float,
                           sigma_hat_k: float, c: float = 1.0) -> tuple[float, float, float]:
    """Order values for the ``D``, ``B``/``C`` and ``A`` estimates of the k-order model."""
    if not sigma_hat_k > 0:
        raise ValueError(f"degenerate order: sigma_hat_k = {sigma_hat_k}")
    a, _, _ = _stable_norms(sys)
    nu = nu_constant(sys, q, eta, gamma)
    Ak = spectral_norm(np.linalg.matrix_power(sys.A, k))
    A2k = spectral_norm(np.linalg.matrix_power(sys.A, 2 * k - 1))
    d_bound = c * math.sqrt(sys.r) * A2k * nu / (1.0 - a)
    numer = c * max(Ak, math.sqrt(k * sys.r) * A2k) * k * nu
    bc_bound = numer / (math.sqrt(sigma_hat_k) * (1.0 - a))
    a_bound = numer * a / (sigma_hat_k * (1.0 - a))
    return d_bound, bc_bound, a_bound


def uniqueness_certificate(data: RegressionData, v_zero_mask: np.ndarray, n_directions: int,
                           rng: np.random.Generator) -> np.ndarray:
    """Per-row ``min_s sum_t 1{v_t^i = 0} |s^T U_t| / T`` over random unit ``s``.

    Positive values are Monte-Carlo evidence that the attack-free samples pin
    down every direction; zero is a definite failure at a sampled direction.
    """
    if n_directions < 1:
        raise ValueError("n_directions must be >= 1")
    mask = np.atleast_2d(np.asarray(v_zero_mask, dtype=bool))
    if mask.shape != data.Y.shape:
        raise ValueError(f"mask shape {mask.shape} != {data.Y.shape}")
    S = rng.standard_normal((n_directions, data.U.shape[0]))
    S /= np.linalg.norm(S, axis=1, keepdims=True)
    proj = np.abs(S @ data.U)              # (directions, T)
    sums = proj @ mask.T.astype(float)     # (directions, r)
    return sums.min(axis=0) / data.T


def bound_report(sys: SystemRealization, k: int, p: float, eta: float, gamma: float,
                 delta: float = 0.05, c: float = 1.0, sigma_hat_k: float | None = None) -> BoundReport:
    """Evaluate every order value that is defined; undefined ones become NaN."""
    q = attack_mass_q(p, k)
    a = spectral_norm(sys.A)
    ok = {
        "A1_spectral_norm": bool(a < 1.0),
        "A2_subgaussian": bool(eta > 0 and math.isfinite(eta)),
        "A3_attack_probability": bool(p < attack_probability_limit(k)),
    }
    nan = float("nan")
    T_star = markov = nu = nan
    retrieval = (nan, nan, nan)
    if q < 0.5:
        T_star = sample_complexity(k, sys.m, sys.r, q, delta, c)
        if ok["A1_spectral_norm"]:
            markov = markov_error_bound(sys, k, q, eta, gamma, c)
            nu = nu_constant(sys, q, eta, gamma)
            if sigma_hat_k is not None and sigma_hat_k > 0:
                retrieval = retrieval_error_bounds(sys, k, q, eta, gamma, sigma_hat_k, c)
    return BoundReport(q, T_star, markov, retrieval, nu, ok)
