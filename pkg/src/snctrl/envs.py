"""The two benchmark environments: inverted pendulum and GTM aircraft.

Both are discrete-time LTI plants with quadratic stage rewards
r(k) = -(x'Qx + u'Ru) and box-style termination rules. The pendulum entries
are derived from its physical parameters; the aircraft matrices are stored
as literal decimals.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ContractError
from .plant import DiscreteLtiPlant


@dataclass(frozen=True)
class RewardSpec:
    Q: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        Q = np.atleast_2d(np.array(self.Q, dtype=float))
        R = np.atleast_2d(np.array(self.R, dtype=float))
        for name, M in (("Q", Q), ("R", R)):
            if M.shape[0] != M.shape[1]:
                raise ContractError(f"{name} must be square")
            if np.any(M != np.diag(np.diag(M))) or np.any(np.diag(M) < 0):
                raise ContractError(f"{name} must be diagonal nonnegative")
        Q.setflags(write=False)
        R.setflags(write=False)
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "R", R)


@dataclass(frozen=True)
class EnvSpec:
    name: str
    plant: DiscreteLtiPlant
    reward_spec: RewardSpec
    termination: object          # state -> bool
    max_episode_steps: int
    reset_lo: np.ndarray         # uniform reset box, per-axis bounds
    reset_hi: np.ndarray
    eval_x0s: np.ndarray         # deterministic evaluation starts, (k, n_G)

    def __post_init__(self):
        if self.max_episode_steps < 1:
            raise ContractError("max_episode_steps must be >= 1")
        for attr in ("reset_lo", "reset_hi", "eval_x0s"):
            arr = np.array(getattr(self, attr), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, attr, arr)

    def reward(self, x, u):
        return reward(self.reward_spec, x, u)


def reward(spec, x, u):
    """Quadratic stage reward -(x'Qx + u'Ru); always <= 0."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    if x.shape != (spec.Q.shape[0],) or u.shape != (spec.R.shape[0],):
        raise ContractError(
            f"reward dims mismatch: x {x.shape} vs Q {spec.Q.shape}, "
            f"u {u.shape} vs R {spec.R.shape}"
        )
    return float(-(x @ spec.Q @ x + u @ spec.R @ u))


def make_pendulum():
    """Linearized inverted pendulum (unstable; no finite L2 gain).

    l = 0.5 m, M = 0.15 kg, g = 9.8 m/s^2, eta = 0.05 Pa s, Ts = 0.1 s.
    """
    l, M, g, eta, ts = 0.5, 0.15, 9.8, 0.05, 0.1
    A = np.eye(2) + ts * np.array([[0.0, 1.0], [g / l, -eta / (M * l**2)]])
    B = ts * np.array([[0.0], [1.0 / (M * l**2)]])
    plant = DiscreteLtiPlant(A=A, B=B, ts=ts)
    return EnvSpec(
        name="pendulum",
        plant=plant,
        reward_spec=RewardSpec(Q=np.diag([2.0, 2.0]), R=np.array([[0.001]])),
        termination=lambda x: abs(x[0]) > 4 * np.pi,
        max_episode_steps=200,
        reset_lo=np.array([-np.pi, -1.0]),
        reset_hi=np.array([np.pi, 1.0]),
        eval_x0s=np.array([[np.pi, 0.0]]),
    )


# Longitudinal GTM state: [u_vel, w_vel, pitch_rate, pitch_angle].
_GTM_A = np.array([
    [9.968e-1, 1.530e-2, -1.079e-1, -4.891e-1],
    [-8.300e-3, 7.932e-1, 1.938, -2.090e-2],
    [1.900e-3, -5.050e-2, 7.436e-1, 2.405e-4],
    [4.681e-5, -1.362e-3, 4.386e-2, 1.000],
])
_GTM_B = np.array([[3.145e-3], [-7.140e-2], [-4.969e-2], [-1.306e-3]])


def make_gtm():
    """Linearized NASA generic transport model, zero-order hold at 0.05 s."""
    plant = DiscreteLtiPlant(A=_GTM_A, B=_GTM_B, ts=0.05)
    return EnvSpec(
        name="gtm",
        plant=plant,
        reward_spec=RewardSpec(Q=np.diag([2.0, 2.0, 2.0, 2.0]), R=np.array([[10.0]])),
        termination=lambda x: (
            abs(x[3]) > np.pi / 2 or abs(x[0]) > 5.0 or abs(x[1]) > 5.0
        ),
        max_episode_steps=200,
        reset_lo=np.array([-1.0, -1.0, -1.0, -1.0]),
        reset_hi=np.array([1.0, 1.0, 1.0, 1.0]),
        eval_x0s=np.array([[1.0, 1.0, 0.0, 0.1]]),
    )


ENV_MAKERS = {"pendulum": make_pendulum, "gtm": make_gtm}


def get_env(name):
    try:
        return ENV_MAKERS[name]()
    except KeyError:
        raise ContractError(
            f"unknown environment '{name}'; valid names: {sorted(ENV_MAKERS)}"
        ) from None
