"""tanh MLP controllers with spectral weight normalization.

A policy is a bias-free stack u = W[l+1] tanh(W[l] ... tanh(W[1] x)). Three
normalization modes are supported:

* ``none`` - weights used as-is,
* ``pre``  - every layer rescaled to a prescribed spectral norm delta_i,
* ``post`` - hidden layers rescaled, output layer left free.

``deltas`` lists the target norms of exactly the normalized layers, so it has
l+1 entries in pre mode, l in post mode and none in none mode. Zero biases
make x = 0 a fixed point and keep the controller odd.
"""

import json
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, NormalizationError, NumericError

MODES = ("none", "pre", "post")
_POWER_SEED = 20240611


@dataclass(frozen=True)
class MlpPolicy:
    weights: tuple
    deltas: tuple
    mode: str = "none"
    activation: str = "tanh"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ContractError(f"mode must be one of {MODES}, got '{self.mode}'")
        if self.activation != "tanh":
            raise ContractError("only tanh activations are supported")
        weights = tuple(np.array(W, dtype=float) for W in self.weights)
        if len(weights) < 1:
            raise ContractError("policy needs at least one layer")
        for i, W in enumerate(weights):
            if W.ndim != 2:
                raise ContractError(f"weight {i} must be a matrix")
            if not np.all(np.isfinite(W)):
                raise ContractError(f"weight {i} has non-finite entries")
            if i > 0 and W.shape[1] != weights[i - 1].shape[0]:
                raise ContractError(
                    f"layer dims do not chain at layer {i}: "
                    f"{weights[i - 1].shape} -> {W.shape}"
                )
        for W in weights:
            W.setflags(write=False)
        deltas = tuple(float(d) for d in self.deltas)
        expected = self.n_normalized_layers(self.mode, len(weights))
        if len(deltas) != expected:
            raise ContractError(
                f"mode '{self.mode}' with {len(weights)} layers needs "
                f"{expected} deltas, got {len(deltas)}"
            )
        if any(d <= 0 for d in deltas):
            raise ContractError("deltas must be positive")
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "deltas", deltas)

    @staticmethod
    def n_normalized_layers(mode, n_layers):
        if mode == "pre":
            return n_layers
        if mode == "post":
            return n_layers - 1
        return 0

    @property
    def n_in(self):
        return self.weights[0].shape[1]

    @property
    def n_out(self):
        return self.weights[-1].shape[0]

    @property
    def n_hidden_layers(self):
        return len(self.weights) - 1

    @property
    def hidden_sizes(self):
        return tuple(W.shape[0] for W in self.weights[:-1])

    @property
    def n_phi(self):
        return sum(self.hidden_sizes)

    def __call__(self, x):
        return forward(self, x)[0]


@dataclass(frozen=True)
class NMatrix:
    """Layer weights collected into the linear part of the loop.

    With w the stacked hidden activations: u = N_ux x + N_uw w and
    v = N_vx x + N_vw w, where w = tanh(v). Bias columns are dropped
    because policies are bias-free.
    """

    N_ux: np.ndarray
    N_uw: np.ndarray
    N_vx: np.ndarray
    N_vw: np.ndarray


def _power_iteration(W, tol, max_iter, v0):
    """Top singular value of W by power iteration on W'W.

    Stopping combines an Aitken-style error estimate (sound once the delta
    sequence decays geometrically) with a confirmation window that catches
    two-timescale spectra: a proposed stop is only accepted if the estimate
    stays put for five further iterations. Raises NumericError (carrying the
    last estimate) when the iteration cannot certify ``tol`` within
    ``max_iter``; near-degenerate top singular pairs end up there.
    """
    v = v0 / np.linalg.norm(v0)
    WT = W.T
    sigma = 0.0
    delta_prev = None
    settled = 0  # consecutive non-increasing deltas; guards the Aitken bound
    pending = None  # (iteration, estimate) awaiting confirmation
    for it in range(1, max_iter + 1):
        w = WT @ (W @ v)
        norm_w = np.linalg.norm(w)
        if norm_w == 0.0:
            return 0.0, v, it
        v = w / norm_w
        new = float(np.sqrt(norm_w))
        delta = abs(new - sigma)
        if pending is not None:
            it0, candidate = pending
            if it - it0 >= 5:
                if abs(new - candidate) <= tol * new:
                    return new, v, it
                pending = None
        if delta_prev is not None and delta <= delta_prev:
            settled += 1
            ratio = delta / delta_prev if delta_prev > 0 else 0.0
            ratio = min(ratio, 0.999)
            err_est = delta * ratio / (1.0 - ratio) if delta > 0 else 0.0
            if settled >= 3 and err_est <= tol * new and pending is None:
                pending = (it, new)
        else:
            settled = 0
        delta_prev = delta
        sigma = new
    raise NumericError(
        f"power iteration did not converge in {max_iter} iterations",
        detail={"last_estimate": sigma, "iterations": max_iter},
    )


def spectral_norm(W, tol=1e-9, max_iter=2000):
    """Largest singular value of W via seeded power iteration."""
    W = np.asarray(W, dtype=float)
    if not tol > 0:
        raise ContractError("tol must be positive")
    if not np.any(W):
        raise ContractError("spectral_norm requires a nonzero matrix")
    rng = np.random.default_rng(_POWER_SEED)
    v0 = rng.standard_normal(W.shape[1])
    sigma, _, _ = _power_iteration(W, tol, max_iter, v0)
    return sigma


def normalize(policy, _warm_vectors=None):
    """Rescale layers to their target spectral norms: W <- (delta/sigma(W)) W.

    Pre mode scales every layer, post mode the hidden layers only, none mode
    is the identity. ``_warm_vectors`` is an optional mutable list of start
    vectors reused across repeated projections of slowly-changing weights
    (the trainer's hot loop); it is updated in place.
    """
    n_norm = MlpPolicy.n_normalized_layers(policy.mode, len(policy.weights))
    if n_norm == 0:
        return policy
    new_weights = list(policy.weights)
    for i in range(n_norm):
        W = policy.weights[i]
        if not np.any(W):
            raise NormalizationError(f"layer {i} weight matrix is zero")
        if _warm_vectors is not None and _warm_vectors[i] is not None:
            v0 = _warm_vectors[i]
        else:
            rng = np.random.default_rng(_POWER_SEED)
            v0 = rng.standard_normal(W.shape[1])
        try:
            sigma, v, _ = _power_iteration(W, 1e-9, 2000, v0)
        except NumericError:
            # Nearly-degenerate top singular pair: fall back to a full SVD,
            # which is equally deterministic.
            sigma = float(np.linalg.svd(W, compute_uv=False)[0])
            v = v0
        if sigma == 0.0:
            raise NormalizationError(f"layer {i} weight matrix is zero")
        new_weights[i] = (policy.deltas[i] / sigma) * W
        if _warm_vectors is not None:
            _warm_vectors[i] = v
    return MlpPolicy(
        weights=tuple(new_weights),
        deltas=policy.deltas,
        mode=policy.mode,
        activation=policy.activation,
    )


def is_normalized(policy, tol=1e-6):
    """True when every layer that the mode normalizes sits at its delta."""
    n_norm = MlpPolicy.n_normalized_layers(policy.mode, len(policy.weights))
    for i in range(n_norm):
        if abs(spectral_norm(policy.weights[i]) - policy.deltas[i]) > tol:
            return False
    return True


def forward(policy, x):
    """Evaluate the controller; also returns hidden pre/post activations.

    ``x`` may be a single state (n_in,) or a batch (k, n_in). Returns
    (u, [v1..vl], [w1..wl]) with matching leading dimensions.
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = x[None, :] if single else x
    if X.ndim != 2 or X.shape[1] != policy.n_in:
        raise ContractError(f"input has shape {x.shape}, expected (..., {policy.n_in})")
    if not np.all(np.isfinite(X)):
        raise ContractError("policy input must be finite")
    vs, ws = [], []
    h = X
    for W in policy.weights[:-1]:
        v = h @ W.T
        h = np.tanh(v)
        vs.append(v)
        ws.append(h)
    u = h @ policy.weights[-1].T
    if single:
        return u[0], [v[0] for v in vs], [w[0] for w in ws]
    return u, vs, ws


def gain_upper_bound(policy):
    """Upper bound on the controller's input-output gain.

    In pre mode this is the product of the prescribed deltas; in post/none
    modes the product of the actual spectral norms (valid because tanh is
    1-Lipschitz through the origin).
    """
    if policy.mode == "pre":
        if not is_normalized(policy):
            raise ContractError("gain bound requires a normalized policy")
        return float(np.prod(policy.deltas))
    return float(np.prod([spectral_norm(W) for W in policy.weights]))


def assemble_n_matrix(policy):
    """Stack the layer weights into the N blocks used by the LMI certifier."""
    if not is_normalized(policy):
        raise ContractError(
            "N matrix must be assembled from the deployed (normalized) weights"
        )
    sizes = policy.hidden_sizes
    n_phi = policy.n_phi
    n_in, n_out = policy.n_in, policy.n_out
    N_ux = np.zeros((n_out, n_in))
    N_uw = np.zeros((n_out, n_phi))
    N_vx = np.zeros((n_phi, n_in))
    N_vw = np.zeros((n_phi, n_phi))
    if sizes:
        N_uw[:, n_phi - sizes[-1]:] = policy.weights[-1]
        N_vx[: sizes[0], :] = policy.weights[0]
        row = sizes[0]
        col = 0
        for i in range(1, len(sizes)):
            N_vw[row: row + sizes[i], col: col + sizes[i - 1]] = policy.weights[i]
            row += sizes[i]
            col += sizes[i - 1]
    else:
        # Degenerate single linear layer: u = W1 x directly.
        N_ux = policy.weights[0].copy()
    return NMatrix(N_ux=N_ux, N_uw=N_uw, N_vx=N_vx, N_vw=N_vw)


def policy_to_dict(policy):
    return {
        "mode": policy.mode,
        "activation": policy.activation,
        "deltas": list(policy.deltas),
        "weights": [W.tolist() for W in policy.weights],
    }


def policy_from_dict(data):
    known = {"mode", "activation", "deltas", "weights"}
    extra = set(data) - known
    if extra:
        # No bias fields by design: analysis assumes bias-free networks.
        raise ContractError(f"unsupported policy fields: {sorted(extra)}")
    try:
        return MlpPolicy(
            weights=tuple(np.array(W, dtype=float) for W in data["weights"]),
            deltas=tuple(data["deltas"]),
            mode=data["mode"],
            activation=data.get("activation", "tanh"),
        )
    except (KeyError, TypeError) as exc:
        raise ContractError(f"malformed policy data: {exc}") from exc


def save_policy(policy, path):
    with open(path, "w") as fh:
        json.dump(policy_to_dict(policy), fh)
        fh.write("\n")


def load_policy(path):
    try:
        with open(path) as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ContractError(f"policy file {path} is not valid JSON: {exc}") from exc
    return policy_from_dict(data)
