"""Discrete-time LTI plants: simulation and L2 gain (H-infinity norm).

The plant is x(k+1) = A x(k) + B u(k) with the full state fed back to the
controller (output map C = I, D = 0). The L2 gain is computed on a dense
frequency grid followed by golden-section refinement around the grid maximum,
which is accurate and self-contained for the small state dimensions used here.
"""

import json
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, NumericError

DIVERGENCE_LIMIT = 1e9


@dataclass(frozen=True)
class DiscreteLtiPlant:
    A: np.ndarray
    B: np.ndarray
    ts: float

    def __post_init__(self):
        A = np.atleast_2d(np.array(self.A, dtype=float))
        B = np.atleast_2d(np.array(self.B, dtype=float))
        if A.shape[0] != A.shape[1]:
            raise ContractError(f"A must be square, got {A.shape}")
        if B.shape[0] != A.shape[0]:
            raise ContractError(
                f"B must have the same row count as A: {B.shape[0]} != {A.shape[0]}"
            )
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(B))):
            raise ContractError("plant matrices must be finite")
        if not self.ts > 0:
            raise ContractError("sampling period must be positive")
        A.setflags(write=False)
        B.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)

    @property
    def n_states(self):
        return self.A.shape[0]

    @property
    def n_inputs(self):
        return self.B.shape[1]


@dataclass(frozen=True)
class L2GainResult:
    kind: str  # "finite" | "unbounded"
    gain: float
    peak_frequency: float | None = None

    @property
    def finite(self):
        return self.kind == "finite"

    def to_dict(self):
        if self.finite:
            return {"kind": "finite", "gain": self.gain,
                    "peak_frequency": self.peak_frequency}
        return {"kind": "unbounded"}


@dataclass
class TrajectoryRecord:
    states: np.ndarray          # (K+1, n_G), includes x(0)
    inputs: np.ndarray          # (K, n_u)
    rewards: np.ndarray | None  # (K,) when a reward function was supplied
    diverged: bool
    terminated: bool

    @property
    def steps(self):
        return self.inputs.shape[0]

    def total_reward(self):
        return 0.0 if self.rewards is None else float(np.sum(self.rewards))


def step(plant, x, u):
    """One step of x(k+1) = A x(k) + B u(k)."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    if x.shape != (plant.n_states,):
        raise ContractError(f"state has shape {x.shape}, expected ({plant.n_states},)")
    if u.shape != (plant.n_inputs,):
        raise ContractError(f"input has shape {u.shape}, expected ({plant.n_inputs},)")
    return plant.A @ x + plant.B @ u


def spectral_radius(plant):
    """Largest eigenvalue modulus of A."""
    try:
        eigs = np.linalg.eigvals(plant.A)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK breakdown
        raise NumericError(f"eigenvalue iteration failed: {exc}") from exc
    return float(np.max(np.abs(eigs)))


def _grid_gains(plant, freqs):
    """sigma_max((e^{jw} I - A)^{-1} B) for an array of frequencies."""
    n = plant.n_states
    z = np.exp(1j * freqs)
    M = z[:, None, None] * np.eye(n) - plant.A[None, :, :]
    H = np.linalg.solve(M, np.broadcast_to(plant.B, (len(freqs), *plant.B.shape)))
    return np.linalg.svd(H, compute_uv=False)[:, 0]


def _gain_at(plant, w):
    n = plant.n_states
    M = np.exp(1j * w) * np.eye(n) - plant.A
    sol = np.linalg.solve(M, plant.B)
    return np.linalg.svd(sol, compute_uv=False)[0]


def l2_gain(plant, tol=1e-4, n_grid=2048):
    """Worst-case output/input energy ratio of the plant with y = x.

    Unbounded whenever the spectral radius of A reaches 1. Otherwise the
    frequency response peak is located on a dense grid over [0, pi] and then
    sharpened by golden-section search until the relative change drops
    below ``tol``.
    """
    if not tol > 0:
        raise ContractError("tol must be positive")
    if n_grid < 2048:
        raise ContractError("frequency grid must have at least 2048 points")
    if spectral_radius(plant) >= 1.0:
        return L2GainResult(kind="unbounded", gain=float("inf"))

    freqs = np.linspace(0.0, np.pi, n_grid)
    try:
        gains = _grid_gains(plant, freqs)
    except np.linalg.LinAlgError:
        # (e^{jw} I - A) singular despite rho < 1: numerically on the unit circle.
        return L2GainResult(kind="unbounded", gain=float("inf"))
    if not np.all(np.isfinite(gains)):
        return L2GainResult(kind="unbounded", gain=float("inf"))

    i = int(np.argmax(gains))
    a = freqs[max(i - 1, 0)]
    b = freqs[min(i + 1, n_grid - 1)]
    best_w = freqs[i]
    best = gains[i]

    invphi = (np.sqrt(5.0) - 1.0) / 2.0
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc = _gain_at(plant, c)
    fd = _gain_at(plant, d)
    min_iters = 8  # let the bracket shrink below the grid spacing first
    for it in range(200):
        prev = best
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = _gain_at(plant, c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = _gain_at(plant, d)
        if fc > best:
            best, best_w = fc, c
        if fd > best:
            best, best_w = fd, d
        if it >= min_iters and abs(best - prev) < tol * best:
            break
    return L2GainResult(kind="finite", gain=float(best), peak_frequency=float(best_w))


def simulate(plant, controller, x0, horizon, termination=None, reward=None):
    """Closed-loop rollout u(k) = controller(x(k)) for up to ``horizon`` steps.

    Stops early when ``termination`` fires on the current state, or truncates
    with the ``diverged`` flag at the first non-finite or > 1e9 magnitude
    state. ``reward`` is an optional (x, u) -> float stage function.
    """
    if horizon < 1:
        raise ContractError("horizon must be >= 1")
    x = np.asarray(x0, dtype=float)
    if x.shape != (plant.n_states,):
        raise ContractError(f"x0 has shape {x.shape}, expected ({plant.n_states},)")

    states = [x]
    inputs = []
    rewards = [] if reward is not None else None
    diverged = False
    terminated = False
    for _ in range(horizon):
        if termination is not None and termination(x):
            terminated = True
            break
        u = np.asarray(controller(x), dtype=float).reshape(plant.n_inputs)
        if reward is not None:
            rewards.append(float(reward(x, u)))
        x = plant.A @ x + plant.B @ u
        states.append(x)
        inputs.append(u)
        if not np.all(np.isfinite(x)) or np.max(np.abs(x)) > DIVERGENCE_LIMIT:
            diverged = True
            break
    return TrajectoryRecord(
        states=np.array(states),
        inputs=np.array(inputs).reshape(len(inputs), plant.n_inputs),
        rewards=None if rewards is None else np.array(rewards),
        diverged=diverged,
        terminated=terminated,
    )


def plant_to_dict(plant):
    return {"A": plant.A.tolist(), "B": plant.B.tolist(), "ts": plant.ts}


def plant_from_dict(data):
    try:
        return DiscreteLtiPlant(
            A=np.array(data["A"], dtype=float),
            B=np.array(data["B"], dtype=float),
            ts=float(data["ts"]),
        )
    except (KeyError, TypeError) as exc:
        raise ContractError(f"malformed plant data: {exc}") from exc


def save_plant(plant, path):
    with open(path, "w") as fh:
        json.dump(plant_to_dict(plant), fh, indent=2)
        fh.write("\n")


def load_plant(path):
    with open(path) as fh:
        return plant_from_dict(json.load(fh))
