"""Desk-scale PPO for spectrally constrained tanh policies.

Clipped-surrogate PPO with a Gaussian action head (state-independent
learnable log-std), generalized advantage estimation and a separate tanh
value MLP that is never normalized. The stability constraint is enforced by
projection: after every optimizer step the normalized layers are rescaled
back to their target spectral norms, so the certificate always talks about
the weights that were actually trained.

Everything runs on numpy arrays with hand-derived layer backprop; a single
seeded generator drives rollouts, minibatching and initialization, which
makes runs bit-reproducible. Rollouts are collected serially so results do
not depend on any worker count.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ContractError, NumericError
from .plant import simulate
from .policy import MlpPolicy, normalize

LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class PpoConfig:
    total_steps: int = 200_000
    rollout_length: int = 2048
    minibatch_size: int = 64
    epochs_per_update: int = 10
    clip_ratio: float = 0.2
    discount: float = 0.99
    gae_lambda: float = 0.95
    learning_rate: float = 3e-4
    value_coeff: float = 0.5
    entropy_coeff: float = 0.0
    initial_log_std: float = 0.0
    seed: int = 0
    eval_interval: int | None = None   # env steps between eval rollouts
    value_hidden: tuple = (64, 64)
    normalize_returns: bool = True     # scale rewards by running return std

    def __post_init__(self):
        if not 0 < self.clip_ratio < 1:
            raise ContractError("clip_ratio must be in (0, 1)")
        if not 0 < self.discount <= 1 or not 0 < self.gae_lambda <= 1:
            raise ContractError("discount and gae_lambda must be in (0, 1]")
        if self.total_steps < self.rollout_length:
            raise ContractError("total_steps must be >= rollout_length")
        if self.rollout_length < 1 or self.minibatch_size < 1:
            raise ContractError("rollout_length and minibatch_size must be >= 1")


@dataclass(frozen=True)
class LearningCurve:
    """Evaluation returns over training: rows of (env_steps, mean, min, max)."""
    rows: tuple

    def __post_init__(self):
        steps = [r[0] for r in self.rows]
        if any(b <= a for a, b in zip(steps, steps[1:])):
            raise ContractError("env_steps must be strictly increasing")

    def final_mean(self):
        return self.rows[-1][1] if self.rows else float("nan")


@dataclass
class EvalRollout:
    x0: np.ndarray
    total_reward: float
    trajectory: object


def evaluate(env, policy, x0_set=None, horizon=None):
    """Noise-free rollouts of the mean action from each start."""
    x0s = env.eval_x0s if x0_set is None else np.atleast_2d(x0_set)
    horizon = env.max_episode_steps if horizon is None else horizon
    out = []
    for x0 in x0s:
        traj = simulate(env.plant, policy, x0, horizon,
                        termination=env.termination, reward=env.reward)
        out.append(EvalRollout(x0=np.asarray(x0, float),
                               total_reward=traj.total_reward(),
                               trajectory=traj))
    return out


# --- raw MLP forward/backward on weight lists -------------------------------

def _mean_forward(weights, X):
    acts = [X]
    h = X
    for W in weights[:-1]:
        h = np.tanh(h @ W.T)
        acts.append(h)
    return h @ weights[-1].T, acts


def _mean_backward(weights, acts, d_out):
    grads = [None] * len(weights)
    grads[-1] = d_out.T @ acts[-1]
    dh = d_out @ weights[-1]
    for i in range(len(weights) - 2, -1, -1):
        da = dh * (1.0 - acts[i + 1] ** 2)
        grads[i] = da.T @ acts[i]
        dh = da @ weights[i]
    return grads


def _value_forward(weights, biases, X):
    acts = [X]
    h = X
    for W, b in zip(weights[:-1], biases[:-1]):
        h = np.tanh(h @ W.T + b)
        acts.append(h)
    return (h @ weights[-1].T + biases[-1])[:, 0], acts


def _value_backward(weights, acts, d_out):
    gW = [None] * len(weights)
    gb = [None] * len(weights)
    d = d_out[:, None]
    gW[-1] = d.T @ acts[-1]
    gb[-1] = d.sum(axis=0)
    dh = d @ weights[-1]
    for i in range(len(weights) - 2, -1, -1):
        da = dh * (1.0 - acts[i + 1] ** 2)
        gW[i] = da.T @ acts[i]
        gb[i] = da.sum(axis=0)
        dh = da @ weights[i]
    return gW, gb


def loss_and_grads(weights, log_std, value_weights, value_biases, batch,
                   clip_ratio, value_coeff, entropy_coeff):
    """PPO loss on one minibatch and its analytic gradients.

    ``batch`` holds obs, actions, old_logp, advantages, returns. Returns
    (loss, mean-net grads, log_std grad, value-net weight grads, value-net
    bias grads); gradients match the ordering of the inputs.
    """
    obs = batch["obs"]
    act = batch["actions"]
    adv = batch["advantages"]
    ret = batch["returns"]
    old_logp = batch["old_logp"]
    n = obs.shape[0]
    n_act = act.shape[1]

    mean, acts = _mean_forward(weights, obs)
    std = np.exp(log_std)
    z = (act - mean) / std
    logp = (-0.5 * np.sum(z ** 2, axis=1) - np.sum(log_std)
            - 0.5 * n_act * LOG_2PI)
    ratio = np.exp(logp - old_logp)
    unclipped = ratio * adv
    clipped = np.clip(ratio, 1.0 - clip_ratio, 1.0 + clip_ratio) * adv
    objective = np.minimum(unclipped, clipped)
    policy_loss = -np.mean(objective)

    v, vacts = _value_forward(value_weights, value_biases, obs)
    value_loss = 0.5 * np.mean((v - ret) ** 2)
    entropy = float(np.sum(log_std) + 0.5 * n_act * (1.0 + LOG_2PI))
    loss = policy_loss + value_coeff * value_loss - entropy_coeff * entropy

    # d policy_loss / d logp, zero where the clipped branch is active
    mask = (unclipped <= clipped).astype(float)
    d_logp = -(mask * adv * ratio) / n
    d_mean = d_logp[:, None] * (z / std)
    d_log_std = np.sum(d_logp[:, None] * (z ** 2 - 1.0), axis=0)
    d_log_std -= entropy_coeff * np.ones(n_act)
    g_mean = _mean_backward(weights, acts, d_mean)

    d_v = value_coeff * (v - ret) / n
    g_vw, g_vb = _value_backward(value_weights, vacts, d_v)
    return loss, g_mean, d_log_std, g_vw, g_vb


class _Adam:
    def __init__(self, params, lr):
        self.lr = lr
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        b1, b2, eps = 0.9, 0.999, 1e-8
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + eps)


class _ReturnScaler:
    """Running std of the discounted return, for value-loss conditioning.

    Scaling rewards leaves the normalized advantages (and hence the policy
    objective) unchanged while keeping value regression well-scaled across
    tasks with very different reward magnitudes.
    """

    def __init__(self, discount):
        self.discount = discount
        self.acc = 0.0
        self.count = 1e-4
        self.mean = 0.0
        self.m2 = 1.0

    def update(self, r):
        self.acc = self.discount * self.acc + r
        self.count += 1.0
        d = self.acc - self.mean
        self.mean += d / self.count
        self.m2 += d * (self.acc - self.mean)

    def reset_episode(self):
        self.acc = 0.0

    @property
    def scale(self):
        return float(np.sqrt(self.m2 / self.count) + 1e-8)


def _init_weights(rng, dims, out_scale):
    weights = []
    for i in range(len(dims) - 1):
        weights.append(rng.normal(size=(dims[i + 1], dims[i]))
                       / np.sqrt(dims[i]))
    weights[-1] = weights[-1] * out_scale
    return weights


def _broadcast_deltas(deltas, mode, n_layers):
    n_norm = MlpPolicy.n_normalized_layers(mode, n_layers)
    if np.isscalar(deltas):
        return (float(deltas),) * n_norm
    deltas = tuple(float(d) for d in deltas)
    if len(deltas) != n_norm:
        raise ContractError(
            f"mode '{mode}' with {n_layers} layers needs {n_norm} deltas")
    return deltas


def _project(weights, deltas, mode, warm):
    """Rescale the normalized layers back onto their spectral-norm targets."""
    n_norm = MlpPolicy.n_normalized_layers(mode, len(weights))
    if n_norm == 0:
        return
    pol = MlpPolicy(weights=tuple(W.copy() for W in weights),
                    deltas=deltas, mode=mode)
    pol = normalize(pol, _warm_vectors=warm)
    for i in range(n_norm):
        weights[i][...] = pol.weights[i]


def _as_policy(weights, deltas, mode):
    return MlpPolicy(weights=tuple(W.copy() for W in weights),
                     deltas=deltas, mode=mode)


def train(env, arch, mode, deltas, config):
    """Train a policy on the environment; returns (policy, learning curve).

    ``arch`` lists hidden layer sizes; ``deltas`` is a scalar or one target
    norm per normalized layer. The returned policy is the deterministic mean
    head with the projection already applied.
    """
    arch = [int(a) for a in arch]
    n_in = env.plant.n_states
    n_out = env.plant.n_inputs
    n_layers = len(arch) + 1
    deltas = _broadcast_deltas(deltas, mode, n_layers)

    rng = np.random.default_rng(config.seed)
    weights = _init_weights(rng, [n_in] + arch + [n_out], out_scale=0.01)
    log_std = np.full(n_out, float(config.initial_log_std))
    value_weights = _init_weights(
        rng, [n_in] + list(config.value_hidden) + [1], out_scale=1.0)
    value_biases = [np.zeros(W.shape[0]) for W in value_weights]
    warm = [None] * MlpPolicy.n_normalized_layers(mode, n_layers)
    _project(weights, deltas, mode, warm)

    params = weights + [log_std] + value_weights + value_biases
    opt = _Adam(params, config.learning_rate)
    scaler = _ReturnScaler(config.discount)
    eval_interval = (config.eval_interval if config.eval_interval
                     else config.rollout_length)

    T = config.rollout_length
    x = rng.uniform(env.reset_lo, env.reset_hi)
    ep_len = 0
    steps_done = 0
    last_eval = 0
    curve_rows = []
    n_updates = config.total_steps // T

    for update in range(n_updates):
        obs = np.empty((T, n_in))
        next_obs = np.empty((T, n_in))
        actions = np.empty((T, n_out))
        raw_rewards = np.empty(T)
        old_logp = np.empty(T)
        terminated = np.zeros(T, dtype=bool)
        done = np.zeros(T, dtype=bool)

        for t in range(T):
            obs[t] = x
            mean, _ = _mean_forward(weights, x[None, :])
            std = np.exp(log_std)
            u = mean[0] + std * rng.standard_normal(n_out)
            zc = (u - mean[0]) / std
            old_logp[t] = (-0.5 * np.sum(zc ** 2) - np.sum(log_std)
                           - 0.5 * n_out * LOG_2PI)
            actions[t] = u
            raw_rewards[t] = env.reward(x, u)
            scaler.update(raw_rewards[t])
            x = env.plant.A @ x + env.plant.B @ u
            next_obs[t] = x
            ep_len += 1
            term = (env.termination(x) or not np.all(np.isfinite(x))
                    or np.max(np.abs(x)) > 1e9)
            trunc = ep_len >= env.max_episode_steps
            terminated[t] = term
            done[t] = term or trunc
            if done[t]:
                x = rng.uniform(env.reset_lo, env.reset_hi)
                ep_len = 0
                scaler.reset_episode()
        steps_done += T

        rewards = raw_rewards / scaler.scale if config.normalize_returns \
            else raw_rewards
        V, _ = _value_forward(value_weights, value_biases, obs)
        V_next, _ = _value_forward(value_weights, value_biases, next_obs)
        delta = rewards + config.discount * V_next * (~terminated) - V
        adv = np.empty(T)
        acc = 0.0
        for t in range(T - 1, -1, -1):
            acc = delta[t] + (config.discount * config.gae_lambda
                              * (0.0 if done[t] else acc))
            adv[t] = acc
        returns = adv + V

        idx = np.arange(T)
        for _ in range(config.epochs_per_update):
            rng.shuffle(idx)
            for s in range(0, T, config.minibatch_size):
                b = idx[s: s + config.minibatch_size]
                badv = adv[b]
                badv = (badv - badv.mean()) / (badv.std() + 1e-8)
                batch = {
                    "obs": obs[b], "actions": actions[b],
                    "advantages": badv, "returns": returns[b],
                    "old_logp": old_logp[b],
                }
                loss, g_mean, g_ls, g_vw, g_vb = loss_and_grads(
                    weights, log_std, value_weights, value_biases, batch,
                    config.clip_ratio, config.value_coeff,
                    config.entropy_coeff)
                if not np.isfinite(loss):
                    raise NumericError(
                        f"non-finite PPO loss at update {update}",
                        detail={"update": update, "env_steps": steps_done})
                opt.step(params, g_mean + [g_ls] + g_vw + g_vb)
                _project(weights, deltas, mode, warm)

        if steps_done - last_eval >= eval_interval:
            last_eval = steps_done
            rollouts = evaluate(env, _as_policy(weights, deltas, mode))
            rets = [r.total_reward for r in rollouts]
            curve_rows.append((steps_done, float(np.mean(rets)),
                               float(np.min(rets)), float(np.max(rets))))

    return (_as_policy(weights, deltas, mode),
            LearningCurve(rows=tuple(curve_rows)))
