"""A-posteriori local certificates: sector bounds, Lyapunov LMIs, ROA ellipsoid.

The closed loop of plant and tanh network is rewritten as a linear
interconnection (the N matrix) with the stacked activations isolated. Every
activation is boxed by interval propagation from a first-layer bound vbar1,
giving per-neuron local sectors [alpha, 1]. Feasibility of the resulting pair
of LMIs in (P, lambda) proves local stability and makes E(P, 0) an inner
approximation of the region of attraction, with E(P, 0) contained in the
polytope |W1 x| <= vbar1 where the sectors are valid.

Solving is delegated to a conic backend through cvxpy; verification never
trusts the solver and re-checks every inequality with a symmetric
eigensolver on matrices rebuilt from the raw weights.
"""

from dataclasses import dataclass, field

import numpy as np
import cvxpy as cp

from .errors import CertificateRejected, ContractError, Infeasible, NumericError
from .policy import MlpPolicy, assemble_n_matrix, is_normalized

SOLVER_ORDER = ("CVXOPT", "CLARABEL", "SCS")
_EPS_PD = 1e-8          # P >= eps I
_EPS_STRICT = 1e-8      # LMI-1 <= -eps * scale * I
_EPS_INCLUSION = 1e-6   # slack on the inclusion blocks vs solver feastol


def _tanhc(v):
    """tanh(v)/v extended continuously with value 1 at v = 0."""
    v = np.asarray(v, dtype=float)
    out = np.ones_like(v)
    big = v > 1e-8
    out[big] = np.tanh(v[big]) / v[big]
    return out


@dataclass(frozen=True)
class SectorBounds:
    alpha: np.ndarray        # per-neuron lower sector slope, length n_phi
    beta: np.ndarray         # per-neuron upper sector slope (1 for tanh)
    vbars: tuple             # per-layer preactivation bound vectors

    @property
    def n_phi(self):
        return self.alpha.shape[0]

    @property
    def vbar1(self):
        return self.vbars[0]


def propagate_bounds(policy, vbar1):
    """Forward interval propagation of symmetric preactivation boxes.

    v1 ranges over [-vbar1, vbar1]; each layer output is bounded by
    tanh(vbar) elementwise and the next preactivation box by |W| tanh(vbar)
    (sound for symmetric boxes). Sector slopes are alpha = tanh(vbar)/vbar
    against beta = 1.
    """
    if not is_normalized(policy):
        raise ContractError("sector propagation requires the deployed "
                            "(normalized) weights")
    sizes = policy.hidden_sizes
    vbar1 = np.asarray(vbar1, dtype=float).reshape(-1)
    if sizes and vbar1.shape != (sizes[0],):
        raise ContractError(
            f"vbar1 must have length {sizes[0]}, got {vbar1.shape}")
    if np.any(vbar1 <= 0):
        raise ContractError("vbar1 entries must be positive")
    vbars = [vbar1]
    for i in range(1, len(sizes)):
        vbars.append(np.abs(policy.weights[i]) @ np.tanh(vbars[-1]))
    alpha = (np.concatenate([_tanhc(v) for v in vbars])
             if sizes else np.zeros(0))
    return SectorBounds(alpha=alpha, beta=np.ones_like(alpha),
                        vbars=tuple(vbars))


@dataclass(frozen=True)
class LmiProblem:
    """Numeric data of the Lyapunov feasibility problem.

    Decision variables are P (symmetric positive definite, n_G x n_G) and
    lambda (nonnegative, length n_phi). The stability LMI is
    R_V' [[A'PA - P, A'PB], [B'PA, B'PB]] R_V + R_phi' Psi' M(lambda) Psi R_phi < 0
    together with one small PSD block [[vbar1_i^2, W1_i], [W1_i', P]] per
    first-layer neuron.
    """

    plant: object
    policy: MlpPolicy
    sectors: SectorBounds
    R_V: np.ndarray
    R_phi: np.ndarray
    Psi_phi: np.ndarray
    A: np.ndarray
    B: np.ndarray
    W1: np.ndarray
    vbar1: np.ndarray
    n_G: int
    n_u: int
    n_phi: int
    eps_pd: float = _EPS_PD
    eps_strict: float = field(default=_EPS_STRICT)
    # Hardening of the inclusion blocks inside the solved problem only, so
    # the solver's feasibility slop cannot push the verified minimum
    # eigenvalue below zero. Verification itself stays at the raw blocks.
    eps_inclusion: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def lmi1_size(self):
        return self.n_G + self.n_phi


def build_lmi(plant, policy, sectors):
    """Assemble the LMI blocks from the deployed weights and sectors."""
    if plant.n_states != policy.n_in or plant.n_inputs != policy.n_out:
        raise ContractError(
            f"plant ({plant.n_states} states, {plant.n_inputs} inputs) does not "
            f"match policy ({policy.n_in} -> {policy.n_out})")
    n_G, n_u = plant.n_states, plant.n_inputs
    n_phi = policy.n_phi
    if sectors.n_phi != n_phi:
        raise ContractError("sector bounds do not match the policy layout")
    N = assemble_n_matrix(policy)
    R_V = np.block([
        [np.eye(n_G), np.zeros((n_G, n_phi))],
        [N.N_ux, N.N_uw],
    ])
    R_phi = np.block([
        [N.N_vx, N.N_vw],
        [np.zeros((n_phi, n_G)), np.eye(n_phi)],
    ])
    Psi_phi = np.block([
        [np.diag(sectors.beta), -np.eye(n_phi)],
        [-np.diag(sectors.alpha), np.eye(n_phi)],
    ])
    W1 = policy.weights[0] if policy.n_hidden_layers else np.zeros((0, n_G))
    vbar1 = (np.asarray(sectors.vbar1, dtype=float)
             if policy.n_hidden_layers else np.zeros(0))
    scale = max(1.0, float(np.linalg.norm(np.hstack([plant.A, plant.B]), 2)))
    return LmiProblem(
        plant=plant, policy=policy, sectors=sectors,
        R_V=R_V, R_phi=R_phi, Psi_phi=Psi_phi,
        A=plant.A, B=plant.B, W1=W1,
        vbar1=vbar1,
        n_G=n_G, n_u=n_u, n_phi=n_phi,
        eps_strict=_EPS_STRICT * scale,
        eps_inclusion=_EPS_INCLUSION * np.maximum(1.0, vbar1 ** 2),
    )


def lmi1_matrix(problem, P, lam):
    """Dense evaluation of the stability LMI at numeric (P, lambda)."""
    n_phi = problem.n_phi
    AB = np.hstack([problem.A, problem.B])
    mid = AB.T @ P @ AB
    mid[: problem.n_G, : problem.n_G] -= P
    M_phi = np.block([
        [np.zeros((n_phi, n_phi)), np.diag(lam)],
        [np.diag(lam), np.zeros((n_phi, n_phi))],
    ])
    return (problem.R_V.T @ mid @ problem.R_V
            + problem.R_phi.T @ problem.Psi_phi.T @ M_phi
            @ problem.Psi_phi @ problem.R_phi)


def lmi2_block(problem, P, i):
    """PSD block enforcing E(P, 0) inside |W1_i x| <= vbar1_i."""
    w = problem.W1[i: i + 1, :]
    return np.block([
        [np.array([[problem.vbar1[i] ** 2]]), w],
        [w.T, P],
    ])


@dataclass(frozen=True)
class Ellipsoid:
    P: np.ndarray
    center: np.ndarray

    def membership(self, x):
        d = np.asarray(x, dtype=float) - self.center
        return float(d @ self.P @ d) <= 1.0

    def contains_points(self, X):
        D = np.asarray(X, dtype=float) - self.center
        return np.einsum("ij,jk,ik->i", D, self.P, D) <= 1.0


@dataclass(frozen=True)
class StabilityCertificate:
    P: np.ndarray
    lam: np.ndarray
    vbar1: np.ndarray
    lmi1_margin: float
    lmi2_min_eig: float
    x_star: np.ndarray
    W1: np.ndarray

    @property
    def ellipsoid(self):
        return Ellipsoid(P=self.P, center=self.x_star)

    def to_dict(self):
        return {
            "P": self.P.tolist(),
            "lambda": self.lam.tolist(),
            "vbar1": self.vbar1.tolist(),
            "lmi1_margin": self.lmi1_margin,
            "lmi2_min_eig": self.lmi2_min_eig,
            "x_star": self.x_star.tolist(),
            "W1": self.W1.tolist(),
        }


def certificate_from_dict(data):
    return StabilityCertificate(
        P=np.array(data["P"], dtype=float),
        lam=np.array(data["lambda"], dtype=float),
        vbar1=np.array(data["vbar1"], dtype=float),
        lmi1_margin=float(data["lmi1_margin"]),
        lmi2_min_eig=float(data["lmi2_min_eig"]),
        x_star=np.array(data["x_star"], dtype=float),
        W1=np.array(data["W1"], dtype=float),
    )


def _lower_to_cvxpy(problem, objective):
    """Translate the block data into a cvxpy conic program.

    The stability LMI is affine in (P, lambda):
    F'PF - E'PE + sum_j lambda_j K_j with F = [A B] R_V, E = [I 0] and
    K_j = t_j' s_j + s_j' t_j built from the rows of Psi R_phi.
    """
    m = problem.lmi1_size
    n_G, n_phi = problem.n_G, problem.n_phi
    F = np.hstack([problem.A, problem.B]) @ problem.R_V
    E = np.hstack([np.eye(n_G), np.zeros((n_G, n_phi))])
    P = cp.Variable((n_G, n_G), symmetric=True)
    constraints = [P >> problem.eps_pd * np.eye(n_G)]
    lam = None
    lmi1 = F.T @ P @ F - E.T @ P @ E
    if n_phi:
        lam = cp.Variable(n_phi, nonneg=True)
        T = problem.Psi_phi @ problem.R_phi
        Kmat = np.empty((n_phi, m * m))
        for j in range(n_phi):
            t = T[j: j + 1, :]
            s = T[n_phi + j: n_phi + j + 1, :]
            Kmat[j] = (t.T @ s + s.T @ t).ravel()
        lmi1 = lmi1 + cp.reshape(lam @ Kmat, (m, m), order="C")
    constraints.append(lmi1 << -problem.eps_strict * np.eye(m))
    for i in range(problem.W1.shape[0]):
        w = problem.W1[i: i + 1, :]
        block = cp.bmat([
            [np.array([[problem.vbar1[i] ** 2]]), w],
            [w.T, P],
        ])
        constraints.append(block >> problem.eps_inclusion[i] * np.eye(n_G + 1))
    if objective == "min_trace_p":
        obj = cp.Minimize(cp.trace(P))
    elif objective == "feasibility":
        obj = cp.Minimize(0)
    else:
        raise ContractError(f"unknown objective '{objective}'")
    return cp.Problem(obj, constraints), P, lam


def solve_certificate(problem, objective="feasibility", solver=None):
    """Solve for (P, lambda); margins are filled by independent verification.

    Raises Infeasible when the backend proves there is no certificate and
    NumericError when every backend fails for numerical reasons.
    """
    prob, P_var, lam_var = _lower_to_cvxpy(problem, objective)
    solvers = (solver,) if solver else SOLVER_ORDER
    failures = []
    for name in solvers:
        try:
            prob.solve(solver=name)
        except cp.error.SolverError as exc:
            failures.append(f"{name}: {exc}")
            continue
        status = prob.status
        if status in ("optimal", "optimal_inaccurate"):
            P = np.array(P_var.value, dtype=float)
            P = 0.5 * (P + P.T)
            lam = (np.maximum(np.asarray(lam_var.value, dtype=float), 0.0)
                   if lam_var is not None else np.zeros(0))
            try:
                margin1, margin2 = verify_certificate(
                    problem.plant, problem.policy, problem.sectors,
                    _bare_certificate(problem, P, lam))
            except CertificateRejected as exc:
                # Solver claimed optimal but its solution does not pass the
                # independent check; try the next backend.
                failures.append(f"{name}: rejected ({exc})")
                continue
            return StabilityCertificate(
                P=P, lam=lam, vbar1=problem.vbar1.copy(),
                lmi1_margin=margin1, lmi2_min_eig=margin2,
                x_star=np.zeros(problem.n_G), W1=problem.W1.copy(),
            )
        if status in ("infeasible", "infeasible_inaccurate"):
            raise Infeasible(
                f"no (P, lambda) satisfies the LMIs (status {status})",
                status=status)
        failures.append(f"{name}: status {status}")
    raise NumericError(
        "all conic backends failed on the LMI problem",
        detail={"failures": failures})


def _bare_certificate(problem, P, lam):
    return StabilityCertificate(
        P=P, lam=lam, vbar1=problem.vbar1.copy(),
        lmi1_margin=np.nan, lmi2_min_eig=np.nan,
        x_star=np.zeros(problem.n_G), W1=problem.W1.copy(),
    )


def verify_certificate(plant, policy, sectors, cert, tol=1e-9):
    """Re-check every certificate inequality from scratch.

    Both LMI matrices are rebuilt from the raw weights and evaluated at the
    numeric (P, lambda) with a symmetric eigensolver; nothing is shared with
    the solver's internal residuals. Returns (lmi1_margin, lmi2_min_eig) and
    raises CertificateRejected naming the violated constraint.
    """
    P = np.asarray(cert.P, dtype=float)
    lam = np.asarray(cert.lam, dtype=float)
    if not np.allclose(P, P.T, atol=1e-12):
        raise CertificateRejected("P is not symmetric", constraint="P_spd")
    p_eigs = np.linalg.eigvalsh(0.5 * (P + P.T))
    if p_eigs[0] <= 0:
        raise CertificateRejected(
            f"P is not positive definite (min eig {p_eigs[0]:.3e})",
            constraint="P_spd", eigenvalue=float(p_eigs[0]))
    if lam.size and np.min(lam) < 0:
        raise CertificateRejected(
            f"lambda has a negative entry ({np.min(lam):.3e})",
            constraint="lambda_nonneg", eigenvalue=float(np.min(lam)))
    problem = build_lmi(plant, policy, sectors)
    M1 = lmi1_matrix(problem, P, lam)
    margin1 = float(np.linalg.eigvalsh(0.5 * (M1 + M1.T))[-1])
    if margin1 >= 0:
        raise CertificateRejected(
            f"stability LMI is not negative definite (max eig {margin1:.3e})",
            constraint="lmi1", eigenvalue=margin1)
    margin2 = np.inf
    for i in range(problem.W1.shape[0]):
        block = lmi2_block(problem, P, i)
        low = float(np.linalg.eigvalsh(0.5 * (block + block.T))[0])
        margin2 = min(margin2, low)
        if low < -tol:
            raise CertificateRejected(
                f"inclusion block {i} is not PSD (min eig {low:.3e})",
                constraint=f"lmi2[{i}]", eigenvalue=low)
    if not np.isfinite(margin2):
        margin2 = 0.0
    return margin1, margin2


def ellipsoid_in_polytope(cert, tol=1e-8):
    """Check E(P, 0) inside |W1 x| <= vbar1 row by row via Schur complements."""
    P = cert.P
    W1 = cert.W1
    if W1.shape[0] == 0:
        return True
    Pinv = np.linalg.inv(P)
    for i in range(W1.shape[0]):
        w = W1[i]
        if w @ Pinv @ w > cert.vbar1[i] ** 2 * (1 + tol) + 1e-12:
            return False
    return True


def search_vbar(plant, policy, mu_lo=0.01, mu_hi=4.0, rel_tol=1e-3,
                solver=None):
    """Largest scalar mu with vbar1 = mu * 1 keeping the LMIs feasible.

    Bisects on mu (feasibility shrinks as the sectors widen), then re-solves
    at the winner with the trace objective to favor a large ellipsoid.
    Returns (certificate, frontier) where frontier lists every probed
    (mu, feasible) pair in order.
    """
    if not (0 < mu_lo < mu_hi):
        raise ContractError("need 0 < mu_lo < mu_hi")
    n1 = policy.hidden_sizes[0] if policy.n_hidden_layers else 0
    if n1 == 0:
        raise ContractError("search_vbar needs at least one hidden layer")
    frontier = []
    last_feasible_cert = None

    def probe(mu):
        nonlocal last_feasible_cert
        sectors = propagate_bounds(policy, mu * np.ones(n1))
        problem = build_lmi(plant, policy, sectors)
        try:
            cert = solve_certificate(problem, objective="feasibility",
                                     solver=solver)
        except Infeasible:
            frontier.append((mu, False))
            return False
        except NumericError:
            # No backend produced a verifiable point; conservatively treat
            # this mu as not certifiable.
            frontier.append((mu, False))
            return False
        frontier.append((mu, True))
        last_feasible_cert = cert
        return True

    if not probe(mu_lo):
        raise Infeasible(
            f"LMIs infeasible at mu_lo={mu_lo}; no certificate in range",
            status="infeasible_at_mu_lo")
    if probe(mu_hi):
        winner = mu_hi
    else:
        lo, hi = mu_lo, mu_hi
        while hi - lo > rel_tol * hi:
            mid = 0.5 * (lo + hi)
            if probe(mid):
                lo = mid
            else:
                hi = mid
        winner = lo
    sectors = propagate_bounds(policy, winner * np.ones(n1))
    problem = build_lmi(plant, policy, sectors)
    try:
        cert = solve_certificate(problem, objective="min_trace_p",
                                 solver=solver)
    except (Infeasible, NumericError):
        # Trace solve wobbled at the frontier; keep the feasibility solution.
        cert = last_feasible_cert
    return cert, frontier
