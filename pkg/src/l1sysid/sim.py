"""Trajectory simulation under probabilistic adversarial attacks.

Dynamics::

    x[t+1] = A x[t] + B u[t] + w[t]
    y[t]   = C x[t] + D u[t]

Attack times are iid Bernoulli(p); ``w[t]`` is zero whenever ``xi[t]`` is
false. Arrays in :class:`Trajectory` are time-major (``u[t]`` is a row).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .model import SystemRealization, markov_parameters

OVERFLOW_LIMIT = 1e12

STRATEGIES = ("none", "iid_gaussian", "state_adaptive")
SIGN_RULES = ("positive_high", "positive_low")


class SimulationError(RuntimeError):
    def __init__(self, message: str, index: int | None = None):
        super().__init__(message)
        self.index = index


@dataclass(frozen=True)
class InputModel:
    """Isotropic Gaussian inputs ``u[t] ~ N(0, gamma^2 I_m)``.

    ``sequence`` (shape ``(L, m)``) replaces the random draws when given.
    """

    gamma: float
    m: int
    sequence: np.ndarray | None = None

    def __post_init__(self):
        if self.sequence is None and not self.gamma > 0:
            raise ValueError(f"input gamma must be positive, got {self.gamma}")


@dataclass(frozen=True)
class AttackModel:
    """Attack process: Bernoulli(p) times and a value strategy.

    ``mean`` is the fixed mean for ``iid_gaussian``; ``mean_low``/``mean_high``
    are the per-coordinate means of ``state_adaptive``, chosen by the sign of
    the state coordinate according to ``sign_rule``. ``cov_scale`` is the
    variance of the isotropic Gaussian perturbation. ``eta`` is only carried
    for reporting.
    """

    p: float = 0.0
    strategy: str = "none"
    mean: float = 0.0
    mean_low: float = 300.0
    mean_high: float = 1000.0
    cov_scale: float = 0.0
    sign_rule: str = "positive_high"
    eta: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.p < 1.0:
            raise ValueError(f"attack probability must lie in [0, 1), got {self.p}")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown attack strategy {self.strategy!r}")
        if self.sign_rule not in SIGN_RULES:
            raise ValueError(f"unknown sign rule {self.sign_rule!r}")
        if self.cov_scale < 0:
            raise ValueError("cov_scale must be nonnegative")

    @property
    def active(self) -> bool:
        return self.strategy != "none" and self.p > 0


@dataclass
class Trajectory:
    u: np.ndarray      # (L, m)
    x: np.ndarray      # (L + 1, n)
    y: np.ndarray      # (L, r)
    xi: np.ndarray     # (L,) bool
    w: np.ndarray      # (L, n)

    @property
    def horizon(self) -> int:
        return self.u.shape[0]

    def to_csv(self, path, debug: bool = False) -> None:
        L = self.horizon
        m, r, n = self.u.shape[1], self.y.shape[1], self.x.shape[1]
        header = ["t"] + [f"u_{i + 1}" for i in range(m)] + [f"y_{i + 1}" for i in range(r)] + ["xi"]
        if debug:
            header += [f"x_{i + 1}" for i in range(n)] + [f"w_{i + 1}" for i in range(n)]
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for t in range(L):
                row = [t, *(_fmt(v) for v in self.u[t]), *(_fmt(v) for v in self.y[t]), int(self.xi[t])]
                if debug:
                    row += [_fmt(v) for v in self.x[t]] + [_fmt(v) for v in self.w[t]]
                writer.writerow(row)

    @classmethod
    def from_csv(cls, path) -> "Trajectory":
        """Load a trajectory written by :meth:`to_csv`.

        Without the debug columns, states and attack values come back as NaN
        (attack values are zero at unflagged times).
        """
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        header, body = rows[0], np.array(rows[1:], dtype=float)
        cols = {name: i for i, name in enumerate(header)}
        u = body[:, [cols[h] for h in header if h.startswith("u_")]]
        y = body[:, [cols[h] for h in header if h.startswith("y_")]]
        xi = body[:, cols["xi"]].astype(bool)
        xs = [cols[h] for h in header if h.startswith("x_")]
        ws = [cols[h] for h in header if h.startswith("w_")]
        L = body.shape[0]
        if xs:
            x = np.vstack([body[:, xs], np.full((1, len(xs)), np.nan)])
            w = body[:, ws]
        else:
            x = np.full((L + 1, 0), np.nan)
            w = np.zeros((L, 0))
        return cls(u=u, x=x, y=y, xi=xi, w=w)


@dataclass
class RegressionData:
    """Regression form of the identification problem.

    ``Y[:, j] = y[2k-1+j]`` and ``U[:, j]`` stacks ``u[t], u[t-1], ..., u[t-2k+1]``
    for ``t = 2k-1+j``.
    """

    k: int
    Y: np.ndarray      # (r, T)
    U: np.ndarray      # (2km, T)
    meta: dict = field(default_factory=dict)

    @property
    def T(self) -> int:
        return self.Y.shape[1]

    def head(self, T: int) -> "RegressionData":
        """First ``T`` samples."""
        if not 1 <= T <= self.T:
            raise ValueError(f"cannot take {T} of {self.T} samples")
        return RegressionData(self.k, self.Y[:, :T], self.U[:, :T], dict(self.meta))


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def sample_attack_mask(p: float, L: int, rng: np.random.Generator) -> np.ndarray:
    if not 0.0 <= p < 1.0:
        raise ValueError(f"attack probability must lie in [0, 1), got {p}")
    return rng.random(L) < p


def attack_value(model: AttackModel, x_t: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    n = x_t.shape[0]
    if model.strategy == "none":
        raise SimulationError("attack requested under strategy 'none'")
    if model.strategy == "iid_gaussian":
        mu = np.full(n, float(model.mean))
    else:
        high = x_t > 0
        if model.sign_rule == "positive_low":
            high = ~high
        mu = np.where(high, model.mean_high, model.mean_low).astype(float)
    if model.cov_scale > 0:
        mu = mu + np.sqrt(model.cov_scale) * rng.standard_normal(n)
    return mu


def simulate(sys: SystemRealization, input_model: InputModel, attack_model: AttackModel,
             L: int, x0, rng_inputs: np.random.Generator,
             rng_attacks: np.random.Generator | None = None) -> Trajectory:
    """Simulate ``L`` steps.

    ``x0`` is either a fixed vector or a callable ``rng -> vector`` (drawn from
    the input stream). Inputs and attacks use separate streams when
    ``rng_attacks`` is given so that changing the attack process leaves the
    input sequence untouched.
    """
    if L < 1:
        raise ValueError(f"horizon must be >= 1, got {L}")
    if input_model.m != sys.m:
        raise ValueError(f"input dimension {input_model.m} != system m {sys.m}")
    rng_attacks = rng_inputs if rng_attacks is None else rng_attacks
    n = sys.n
    x0 = np.asarray(x0(rng_inputs) if callable(x0) else x0, dtype=float).reshape(n)

    if input_model.sequence is not None:
        u = np.asarray(input_model.sequence, dtype=float).reshape(-1, sys.m)
        if u.shape[0] < L:
            raise ValueError(f"input sequence has {u.shape[0]} steps, need {L}")
        u = u[:L].copy()
    else:
        u = input_model.gamma * rng_inputs.standard_normal((L, sys.m))

    if attack_model.active:
        xi = sample_attack_mask(attack_model.p, L, rng_attacks)
    else:
        xi = np.zeros(L, dtype=bool)

    x = np.empty((L + 1, n))
    w = np.zeros((L, n))
    x[0] = x0
    Bu = u @ sys.B.T
    A = sys.A
    for t in range(L):
        if xi[t]:
            w[t] = attack_value(attack_model, x[t], rng_attacks)
        x[t + 1] = A @ x[t] + Bu[t] + w[t]
        if not np.all(np.abs(x[t + 1]) <= OVERFLOW_LIMIT):
            raise SimulationError(f"state left the admissible range at t={t + 1}", index=t + 1)
    y = x[:L] @ sys.C.T + u @ sys.D.T
    return Trajectory(u=u, x=x, y=y, xi=xi, w=w)


def regressor_stack(traj: Trajectory, t: int, k: int) -> np.ndarray:
    if t < 2 * k - 1 or t >= traj.horizon:
        raise IndexError(f"regressor at t={t} needs 2k-1={2 * k - 1} <= t < {traj.horizon}")
    return traj.u[t - 2 * k + 1:t + 1][::-1].reshape(-1)


def assemble_regression(traj: Trajectory, k: int) -> RegressionData:
    L = traj.horizon
    if L < 2 * k:
        raise IndexError(f"horizon {L} too short for k={k} (need >= {2 * k})")
    T = L - (2 * k - 1)
    m = traj.u.shape[1]
    U = np.empty((2 * k * m, T))
    for lag in range(2 * k):
        # block `lag` of column j holds u[2k-1+j-lag]
        U[lag * m:(lag + 1) * m] = traj.u[2 * k - 1 - lag:2 * k - 1 - lag + T].T
    Y = traj.y[2 * k - 1:].T.copy()
    return RegressionData(k, Y, U)


def observation_decomposition(sys: SystemRealization, traj: Trajectory, t: int, k: int):
    """Split ``y[t]`` into the input, attack and initial-state contributions.

    Returns ``(G U_t, v_t, C A^{2k-1} x[t-2k+1])``.
    """
    U_t = regressor_stack(traj, t, k)
    input_term = markov_parameters(sys, k).G @ U_t
    v = np.zeros(sys.r)
    CA = sys.C.copy()
    for j in range(1, 2 * k):
        v += CA @ traj.w[t - j]
        CA = CA @ sys.A
    tail = CA @ traj.x[t - 2 * k + 1]
    return input_term, v, tail


def attack_free_mask(sys: SystemRealization, traj: Trajectory, k: int) -> np.ndarray:
    """Boolean ``(r, T)`` array marking samples whose attack term ``v_t^i`` is zero."""
    T = traj.horizon - (2 * k - 1)
    V = np.zeros((sys.r, T))
    CA = sys.C.copy()
    for j in range(1, 2 * k):
        # column idx corresponds to t = 2k-1+idx, so w[t-j] = w[2k-1-j+idx]
        V += CA @ traj.w[2 * k - 1 - j:2 * k - 1 - j + T].T
        CA = CA @ sys.A
    return V == 0.0
