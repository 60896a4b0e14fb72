"""A-priori global certificate from the small-gain theorem.

A fully normalized controller has L2 gain at most the product of its layer
norms, so the loop with a finite-gain plant is stable whenever
sigma_bar_pi * gamma_G < 1. The reported product is an upper bound on the
true loop gain, not the gain itself.
"""

from dataclasses import dataclass


from .errors import ContractError
from .plant import l2_gain
from .policy import gain_upper_bound, is_normalized


@dataclass(frozen=True)
class SmallGainReport:
    gamma_plant: float
    sigma_bar_pi: float
    product: float
    certified: bool
    reason: str

    def to_dict(self):
        return {
            "gamma_plant": self.gamma_plant,
            "sigma_bar_pi": self.sigma_bar_pi,
            "product": self.product,
            "certified": self.certified,
            "reason": self.reason,
        }


def check_small_gain(plant, policy, gain_tol=1e-4):
    """Certify the loop a priori: finite plant gain and product below 1."""
    if policy.mode != "pre":
        raise ContractError("pre-certificate requires all layers normalized (pre mode)")
    if not is_normalized(policy):
        raise ContractError("pre-certificate requires all layers normalized")
    sigma_bar = gain_upper_bound(policy)
    gain = l2_gain(plant, tol=gain_tol)
    if not gain.finite:
        return SmallGainReport(
            gamma_plant=float("inf"),
            sigma_bar_pi=sigma_bar,
            product=float("inf"),
            certified=False,
            reason="plant lacks finite L2 gain",
        )
    product = sigma_bar * gain.gain
    if product < 1.0:
        reason = (
            f"gain-product upper bound {product:.6g} < 1: loop is finite-gain "
            "L2 stable by the small-gain theorem"
        )
    else:
        reason = f"gain-product upper bound {product:.6g} >= 1: not certified"
    return SmallGainReport(
        gamma_plant=gain.gain,
        sigma_bar_pi=sigma_bar,
        product=product,
        certified=product < 1.0,
        reason=reason,
    )


def max_uniform_delta(plant, n_layers, margin=0.01, gain_tol=1e-4):
    """Largest uniform per-layer norm that passes the small-gain test.

    Inverts the product condition: delta = (1/gamma_G)^(1/n_layers), shrunk
    by ``margin`` to absorb the gain computation tolerance.
    """
    if n_layers < 1:
        raise ContractError("n_layers must be >= 1")
    if not 0 <= margin < 1:
        raise ContractError("margin must be in [0, 1)")
    gain = l2_gain(plant, tol=gain_tol)
    if not gain.finite:
        raise ContractError("max_uniform_delta needs a plant with finite L2 gain")
    return float((1.0 / gain.gain) ** (1.0 / n_layers) * (1.0 - margin))
