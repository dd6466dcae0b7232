"""Seeded LTI systems, noisy trajectories and the near-degenerate stress problem.

All randomness comes from ``numpy.random.Generator(Philox(seed))``. Philox is
counter based, so a given seed yields the same stream on every platform.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DimensionMismatch
from .filter import StateEstimate, SystemModel
from .linalg import cholesky


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed))


@dataclass(frozen=True)
class Trajectory:
    """Ground truth run of a system.

    ``states`` has ``T + 1`` rows ``x_0 .. x_T``. ``controls[t]`` is the input
    applied at time ``t`` and ``measurements[t]`` observes ``states[t + 1]``,
    i.e. it is the ``y`` consumed together with ``controls[t]`` by one filter step.
    """

    states: np.ndarray
    controls: np.ndarray
    measurements: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        states = np.asarray(self.states, dtype=float)
        steps = states.shape[0] - 1
        controls = np.asarray(self.controls, dtype=float).reshape(steps, -1)
        measurements = np.asarray(self.measurements, dtype=float).reshape(steps, -1)
        if states.ndim != 2 or steps < 1:
            raise DimensionMismatch("states must be a (T + 1, n) array with T >= 1")
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "controls", controls)
        object.__setattr__(self, "measurements", measurements)

    @property
    def steps(self) -> int:
        return self.measurements.shape[0]

    def header(self) -> list[str]:
        n, p, m = self.states.shape[1], self.controls.shape[1], self.measurements.shape[1]
        return (
            ["t"]
            + [f"x_{i}" for i in range(n)]
            + [f"u_{i}" for i in range(p)]
            + [f"y_{i}" for i in range(m)]
        )

    def to_csv(self, path) -> None:
        """Write one row per time ``t = 0 .. T``.

        Row ``t`` holds ``x_t``, the input ``u_t`` applied at ``t`` (blank at
        ``t = T``) and the measurement ``y_t`` of ``x_t`` (blank at ``t = 0``).
        """
        p, m = self.controls.shape[1], self.measurements.shape[1]
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(self.header())
            for t in range(self.steps + 1):
                u = self.controls[t] if t < self.steps else [None] * p
                y = self.measurements[t - 1] if t > 0 else [None] * m
                writer.writerow([t] + [_fmt(v) for v in (*self.states[t], *u, *y)])

    @classmethod
    def from_csv(cls, path, seed: int | None = None) -> "Trajectory":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows:
            raise ValueError(f"{path}: empty trajectory file")
        header, body = rows[0], rows[1:]
        n = sum(h.startswith("x_") for h in header)
        p = sum(h.startswith("u_") for h in header)
        m = sum(h.startswith("y_") for h in header)
        expected = ["t"] + [f"x_{i}" for i in range(n)] + [f"u_{i}" for i in range(p)] + [f"y_{i}" for i in range(m)]
        if header != expected:
            raise ValueError(f"{path}: unexpected columns {header}")
        if len(body) < 2:
            raise ValueError(f"{path}: need at least two time rows")
        vals = [[float(c) if c != "" else np.nan for c in row[1:]] for row in body]
        data = np.array(vals, dtype=float).reshape(len(body), n + p + m)
        return cls(
            states=data[:, :n],
            controls=data[:-1, n : n + p],
            measurements=data[1:, n + p :],
            seed=seed,
        )


def _fmt(v) -> str:
    return "" if v is None else repr(float(v))


def simulate(model: SystemModel, x0, controls=None, steps: int | None = None, seed: int = 0) -> Trajectory:
    """Simulate ``steps`` transitions of ``model`` from ``x0``.

    Process and measurement noise are drawn as ``noise_w.T @ xi`` and
    ``noise_v.T @ eta`` with standard normal ``xi``, ``eta``, which have
    covariances ``W`` and ``V``. ``controls`` defaults to zeros.
    """
    n, m, p = model.n, model.m, model.p
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if x0.size != n:
        raise DimensionMismatch(f"x0 has length {x0.size}, model has n={n}")
    if controls is None:
        if steps is None:
            raise ValueError("either controls or steps is required")
        controls = np.zeros((steps, p))
    controls = np.asarray(controls, dtype=float)
    if steps is None:
        steps = controls.shape[0]
    if steps < 1:
        raise ValueError("steps must be >= 1")
    controls = controls.reshape(controls.shape[0], -1) if controls.size else np.zeros((steps, p))
    if controls.shape != (steps, p):
        raise DimensionMismatch(f"controls must have shape {(steps, p)}, got {controls.shape}")

    A, B, C = (np.asarray(M, dtype=float) for M in (model.A, model.B, model.C))
    gw, gv = np.asarray(model.noise_w, dtype=float), np.asarray(model.noise_v, dtype=float)
    rng = make_rng(seed)
    xi = rng.standard_normal((steps, n))
    eta = rng.standard_normal((steps, m))

    states = np.empty((steps + 1, n))
    measurements = np.empty((steps, m))
    states[0] = x0
    for t in range(steps):
        states[t + 1] = A @ states[t] + B @ controls[t] + gw.T @ xi[t]
        measurements[t] = C @ states[t + 1] + gv.T @ eta[t]
    return Trajectory(states, controls, measurements, seed)


def _random_spd(rng: np.random.Generator, dim: int, cond: float, scale: float) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((dim, dim)))
    q = q * np.sign(np.diag(r))
    eig = scale * np.exp(rng.uniform(-np.log(cond), 0.0, size=dim))
    spd = (q * eig) @ q.T
    return (spd + spd.T) / 2


def random_system(n: int, m: int, p: int = 0, spectral_radius: float = 0.9, seed: int = 0) -> SystemModel:
    """Random stable system with well-conditioned noise.

    ``A`` is rescaled to the requested spectral radius, ``C`` has full row
    rank, and ``W``, ``V`` are SPD with condition number at most 100.
    """
    if n < 1 or m < 1 or p < 0:
        raise ValueError("need n >= 1, m >= 1, p >= 0")
    if m > n:
        raise ValueError("C cannot have full row rank when m > n")
    if not 0 < spectral_radius <= 1:
        raise ValueError("spectral_radius must lie in (0, 1]")
    rng = make_rng(seed)
    A = rng.standard_normal((n, n))
    A *= spectral_radius / np.max(np.abs(np.linalg.eigvals(A)))
    B = rng.standard_normal((n, p))
    while True:
        C = rng.standard_normal((m, n))
        if np.linalg.matrix_rank(C) == m and np.linalg.cond(C) < 1e3:
            break
    W = _random_spd(rng, n, 100.0, 0.1)
    V = _random_spd(rng, m, 100.0, 0.1)
    return SystemModel(A, B, C, cholesky(W), cholesky(V))


def ill_conditioned_problem(epsilon: float) -> tuple[SystemModel, StateEstimate]:
    """Near-degenerate two-sensor problem that breaks the conventional filter.

    ``C = [[1, 1], [1, 1 + eps]]``, ``V = eps**2 I``, no process noise, identity
    dynamics and prior ``N(0, I)``. Once ``eps**2`` drops below the working
    machine epsilon, ``C Sigma C^T + V`` rounds to a (nearly) singular matrix.
    """
    if not 0 < epsilon < 1:
        raise ValueError("epsilon must lie in (0, 1)")
    model = SystemModel(
        A=np.eye(2),
        B=np.zeros((2, 0)),
        C=np.array([[1.0, 1.0], [1.0, 1.0 + epsilon]]),
        noise_w=np.zeros((2, 2)),
        noise_v=epsilon * np.eye(2),
    )
    return model, StateEstimate(np.zeros(2), np.eye(2))
