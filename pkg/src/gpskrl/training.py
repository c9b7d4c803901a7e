"""Batch kernel actor-critic policy iteration with barrier-shaped cost.

The actor and critic are linear in the multikernel feature vector. Each
iteration propagates every sample one step through the learned linear model,
forms target actions and costates from the propagated costate estimate, and
refits both weight matrices by ridge regression. Training stops when the
squared Frobenius change of both weight matrices falls below the configured
thresholds.

Two policies are produced from the same dictionary and model: a pure
tracking policy (barrier weight 0) and a planning policy (barrier weight > 0)
whose cost penalizes small position errors, so it holds a standoff distance
from whatever reference it tracks.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from . import dynamics
from .dynamics import N_CONTROLS, N_STATES, PX, PY
from .gp import GPModel, learned_jacobians
from .kernels import Dictionary, KernelConfig, feature_matrix, multikernel_feature

DEFAULT_SAMPLE_HALF_WIDTHS = np.array([0.8, 0.8, np.pi / 12, 0.8, 2.0, 2.0])


class ShapeMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class CostConfig:
    """Diagonal stage-cost weights, barrier weight and discount."""

    q_diag: tuple = (2.0, 0.0, 5.0, 0.0, 2.0, 2.0)
    r_diag: tuple = (1.0, 1.0)
    mu: float = 6.0
    gamma: float = 0.95

    def __post_init__(self):
        if len(self.q_diag) != N_STATES or any(q < 0 for q in self.q_diag):
            raise ValueError("q_diag must be 6 non-negative entries")
        if len(self.r_diag) != N_CONTROLS or any(r <= 0 for r in self.r_diag):
            raise ValueError("r_diag must be 2 positive entries")
        if self.mu < 0:
            raise ValueError("mu must be non-negative")
        if not 0 < self.gamma <= 1:
            raise ValueError("gamma must lie in (0, 1]")

    @property
    def Q(self) -> np.ndarray:
        return np.diag(self.q_diag)

    @property
    def R(self) -> np.ndarray:
        return np.diag(self.r_diag)


@dataclass(frozen=True)
class TrainingConfig:
    """Ridge coefficients, convergence thresholds and target construction.

    action_target selects how the target action is obtained from the
    propagated costate: 'implicit' solves the stationarity condition using a
    local linearization of the critic (the resulting recursion is plain value
    iteration on the linearized model), 'explicit' plugs the costate estimate
    straight into the first-order condition. The explicit map amplifies
    whenever R^{-1} B^T P B exceeds unity and then fails to converge, so
    implicit is the default; both have the same fixed point.
    """

    rho_actor: float = 1e-4
    rho_critic: float = 1e-4
    sigma_actor: float = 1e-6
    sigma_critic: float = 1e-6
    max_iters: int = 200
    barrier_eps: float = 1e-6
    action_target: str = "implicit"

    def __post_init__(self):
        for name in ("rho_actor", "rho_critic", "sigma_actor", "sigma_critic",
                     "max_iters", "barrier_eps"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.action_target not in ("implicit", "explicit"):
            raise ValueError("action_target must be 'implicit' or 'explicit'")


@dataclass
class ActorCriticWeights:
    actor: np.ndarray   # (n_features, 2)
    critic: np.ndarray  # (n_features, 6)

    def __post_init__(self):
        self.actor = np.asarray(self.actor, dtype=float)
        self.critic = np.asarray(self.critic, dtype=float)
        if self.actor.ndim != 2 or self.actor.shape[1] != N_CONTROLS:
            raise ShapeMismatchError("actor weights must be (n_features, 2)")
        if self.critic.ndim != 2 or self.critic.shape[1] != N_STATES:
            raise ShapeMismatchError("critic weights must be (n_features, 6)")
        if self.actor.shape[0] != self.critic.shape[0]:
            raise ShapeMismatchError("actor/critic feature dimension mismatch")

    @classmethod
    def zeros(cls, n_features: int):
        return cls(np.zeros((n_features, N_CONTROLS)), np.zeros((n_features, N_STATES)))

    def copy(self):
        return ActorCriticWeights(self.actor.copy(), self.critic.copy())


@dataclass
class RLSampleSet:
    """Error-state samples with per-sample linearized model matrices."""

    states: np.ndarray  # (M, 6)
    A: np.ndarray       # (M, 6, 6)
    B: np.ndarray       # (M, 6, 2)

    def __post_init__(self):
        self.states = np.atleast_2d(np.asarray(self.states, dtype=float))
        M = len(self.states)
        self.A = np.broadcast_to(np.asarray(self.A, dtype=float),
                                 (M, N_STATES, N_STATES)).copy()
        self.B = np.broadcast_to(np.asarray(self.B, dtype=float),
                                 (M, N_STATES, N_CONTROLS)).copy()

    def __len__(self):
        return len(self.states)


# ---------------------------------------------------------------------------
# barrier and stage cost

def barrier(x: np.ndarray) -> float:
    """exp(-||(e_X, e_Y)||): 1 at zero position error, decaying with distance."""
    return float(np.exp(-np.hypot(x[PX], x[PY])))


def barrier_gradient(x: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    """Gradient of the (smoothed) barrier w.r.t. the error state.

    The exact gradient is singular at zero position error, so the norm is
    smoothed with a small eps.
    """
    g = np.zeros(N_STATES)
    norm = np.sqrt(x[PX] ** 2 + x[PY] ** 2 + eps ** 2)
    scale = -np.exp(-norm) / norm
    g[PX] = scale * x[PX]
    g[PY] = scale * x[PY]
    return g


def _barrier_gradients(X: np.ndarray, eps: float) -> np.ndarray:
    G = np.zeros_like(X)
    norm = np.sqrt(X[:, PX] ** 2 + X[:, PY] ** 2 + eps ** 2)
    scale = -np.exp(-norm) / norm
    G[:, PX] = scale * X[:, PX]
    G[:, PY] = scale * X[:, PY]
    return G


def stage_cost(x: np.ndarray, u: np.ndarray, cfg: CostConfig) -> float:
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    return float(x @ (np.asarray(cfg.q_diag) * x) + u @ (np.asarray(cfg.r_diag) * u)
                 + cfg.mu * barrier(x))


# ---------------------------------------------------------------------------
# actor / critic evaluation

def actor_eval(x: np.ndarray, weights: ActorCriticWeights, dictionary: Dictionary,
               cfg: KernelConfig, clamp: bool = False) -> np.ndarray:
    feats = multikernel_feature(x, dictionary, cfg)
    if len(feats) != weights.actor.shape[0]:
        raise ShapeMismatchError("feature/weight length mismatch")
    u = weights.actor.T @ feats
    return dynamics.clamp_control(u) if clamp else u


def critic_eval(x: np.ndarray, weights: ActorCriticWeights, dictionary: Dictionary,
                cfg: KernelConfig) -> np.ndarray:
    feats = multikernel_feature(x, dictionary, cfg)
    if len(feats) != weights.critic.shape[0]:
        raise ShapeMismatchError("feature/weight length mismatch")
    return weights.critic.T @ feats


# ---------------------------------------------------------------------------
# targets and ridge updates

def target_action(lambda_next: np.ndarray, B_k: np.ndarray,
                  cfg: CostConfig) -> np.ndarray:
    r_inv = 1.0 / np.asarray(cfg.r_diag)
    return -0.5 * cfg.gamma * r_inv * (B_k.T @ lambda_next)


def target_costate(x: np.ndarray, barrier_grad: np.ndarray, A_k: np.ndarray,
                   lambda_next: np.ndarray, cfg: CostConfig) -> np.ndarray:
    return (2.0 * np.asarray(cfg.q_diag) * x + cfg.mu * barrier_grad
            + cfg.gamma * A_k.T @ lambda_next)


def ridge_weights(Phi: np.ndarray, targets: np.ndarray, rho: float) -> np.ndarray:
    """Solve (Phi Phi^T + rho I) W = Phi targets for W."""
    G = Phi @ Phi.T
    G[np.diag_indices_from(G)] += rho
    return cho_solve(cho_factor(G, lower=True), Phi @ targets)


class _RidgeSolver:
    """Cached Cholesky of (Phi Phi^T + rho I); the factor is reused across
    iterations because the sample features never change."""

    def __init__(self, Phi: np.ndarray, rho: float):
        G = Phi @ Phi.T
        G[np.diag_indices_from(G)] += rho
        self._cf = cho_factor(G, lower=True)

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        return cho_solve(self._cf, rhs)


# ---------------------------------------------------------------------------
# sample construction

def sample_error_states(n: int, rng: np.random.Generator,
                        half_widths: np.ndarray | None = None) -> np.ndarray:
    """Uniform error-state samples in a centered box inside the training bounds."""
    hw = DEFAULT_SAMPLE_HALF_WIDTHS if half_widths is None else np.asarray(half_widths)
    if np.any(hw > dynamics.ERROR_BOUNDS):
        raise ValueError("sampling box exceeds the training bounds")
    return rng.uniform(-hw, hw, size=(n, N_STATES))


def build_sample_set(states: np.ndarray, model: GPModel | None,
                     reference_state: np.ndarray, params: dynamics.VehicleParams,
                     dt: float) -> RLSampleSet:
    """Attach per-sample linearized model matrices to error-state samples.

    Raw states for the linearization are reference + error; the GP query uses
    zero control (the reference control). Jacobians only need recomputing when
    the model changes, so they are built once per training call.
    """
    states = np.atleast_2d(np.asarray(states, dtype=float))
    M = len(states)
    A = np.empty((M, N_STATES, N_STATES))
    B = np.empty((M, N_STATES, N_CONTROLS))
    u0 = np.zeros(N_CONTROLS)
    for k in range(M):
        raw = reference_state + states[k]
        raw[0] = max(raw[0], dynamics.V_MIN)
        A_nom, B_nom = dynamics.nominal_jacobians(raw, u0, params, dt)
        if model is not None and not model.is_empty:
            z = np.concatenate([raw, u0])
            A[k], B[k] = learned_jacobians(z, A_nom, B_nom, model)
        else:
            A[k], B[k] = A_nom, B_nom
    return RLSampleSet(states, A, B)


# ---------------------------------------------------------------------------
# policy iteration

@dataclass
class PolicyIterationResult:
    weights: ActorCriticWeights
    trace: list = field(default_factory=list)
    converged: bool = False
    iterations: int = 0


def batch_update(samples: RLSampleSet, weights: ActorCriticWeights,
                 dictionary: Dictionary, kcfg: KernelConfig,
                 cost_cfg: CostConfig, train_cfg: TrainingConfig) -> ActorCriticWeights:
    """One policy-iteration step: build targets under `weights`, refit both."""
    Phi = feature_matrix(samples.states, dictionary, kcfg)
    U_t, Lam_t = _targets(samples, weights, Phi, dictionary, kcfg, cost_cfg,
                          train_cfg)
    return ActorCriticWeights(
        ridge_weights(Phi, U_t, train_cfg.rho_actor),
        ridge_weights(Phi, Lam_t, train_cfg.rho_critic))


def _critic_with_jacobian(Xq: np.ndarray, dictionary: Dictionary,
                          kcfg: KernelConfig, Wc: np.ndarray):
    """Critic values and their state Jacobians at many query points.

    Returns (lam (M,6), J (M,6,6)) with J[k,a,b] = d lam_a / d x_b.
    """
    C = dictionary.elements
    n_k, d = C.shape
    Xq = np.atleast_2d(Xq)
    sq = (np.sum(Xq * Xq, axis=1)[:, None] + np.sum(C * C, axis=1)[None, :]
          - 2.0 * Xq @ C.T)
    np.maximum(sq, 0.0, out=sq)
    lam = np.zeros((len(Xq), Wc.shape[1]))
    J = np.zeros((len(Xq), Wc.shape[1], d))
    for w_idx, tau in enumerate(kcfg.widths):
        Kw = np.exp(-sq / tau ** 2)                       # (M, n_k)
        Wcw = Wc[w_idx * n_k:(w_idx + 1) * n_k]           # (n_k, 6)
        T = Kw @ Wcw                                      # (M, 6)
        lam += T
        E = (Wcw[:, :, None] * C[:, None, :]).reshape(n_k, -1)
        S = (Kw @ E).reshape(len(Xq), Wc.shape[1], d)
        J += (2.0 / tau ** 2) * (S - T[:, :, None] * Xq[:, None, :])
    return lam, J


def _implicit_actions(samples: RLSampleSet, U_hat: np.ndarray, lam_lin: np.ndarray,
                      J: np.ndarray, cost_cfg: CostConfig) -> np.ndarray:
    """Solve 2Ru + gamma B^T lam(Ax + Bu) = 0 per sample, with lam linearized
    around the propagated point x1 = Ax + B u_hat."""
    gamma = cost_cfg.gamma
    R2 = 2.0 * cost_cfg.R
    BtJB = np.einsum("kri,krs,ksj->kij", samples.B, J, samples.B)
    BtJB = 0.5 * (BtJB + np.transpose(BtJB, (0, 2, 1)))
    M2 = R2[None, :, :] + gamma * BtJB
    # keep the per-sample 2x2 systems positive definite despite feature noise
    tr = M2[:, 0, 0] + M2[:, 1, 1]
    disc = np.sqrt((M2[:, 0, 0] - M2[:, 1, 1]) ** 2 + 4 * M2[:, 0, 1] ** 2)
    lam_min = 0.5 * (tr - disc)
    floor = min(cost_cfg.r_diag)
    shift = np.maximum(floor - lam_min, 0.0)
    M2[:, 0, 0] += shift
    M2[:, 1, 1] += shift
    rhs = (-gamma * np.einsum("kij,ki->kj", samples.B, lam_lin)
           + gamma * np.einsum("kij,kj->ki", BtJB, U_hat))
    return np.linalg.solve(M2, rhs[:, :, None])[:, :, 0]


def _targets(samples: RLSampleSet, weights: ActorCriticWeights, Phi: np.ndarray,
             dictionary: Dictionary, kcfg: KernelConfig, cost_cfg: CostConfig,
             train_cfg: TrainingConfig):
    X = samples.states
    gamma = cost_cfg.gamma
    U_hat = Phi.T @ weights.actor                                    # (M, 2)
    X1 = (np.einsum("kij,kj->ki", samples.A, X)
          + np.einsum("kij,kj->ki", samples.B, U_hat))

    if train_cfg.action_target == "implicit":
        lam1, J = _critic_with_jacobian(X1, dictionary, kcfg, weights.critic)
        U_t = _implicit_actions(samples, U_hat, lam1, J, cost_cfg)
        X_next = (np.einsum("kij,kj->ki", samples.A, X)
                  + np.einsum("kij,kj->ki", samples.B, U_t))
        Lam_next = feature_matrix(X_next, dictionary, kcfg).T @ weights.critic
    else:
        Lam_next = feature_matrix(X1, dictionary, kcfg).T @ weights.critic
        r_inv = 1.0 / np.asarray(cost_cfg.r_diag)
        U_t = -0.5 * gamma * np.einsum("kij,ki->kj", samples.B, Lam_next) * r_inv

    Lam_t = (2.0 * X * np.asarray(cost_cfg.q_diag)
             + cost_cfg.mu * _barrier_gradients(X, train_cfg.barrier_eps)
             + gamma * np.einsum("kji,kj->ki", samples.A, Lam_next))
    return U_t, Lam_t


def policy_iteration(samples: RLSampleSet, dictionary: Dictionary,
                     kcfg: KernelConfig, cost_cfg: CostConfig,
                     train_cfg: TrainingConfig,
                     initial: ActorCriticWeights | None = None) -> PolicyIterationResult:
    """Iterate batch updates until both weight deltas fall below threshold."""
    Phi = feature_matrix(samples.states, dictionary, kcfg)
    n_features = Phi.shape[0]
    if len(samples) < n_features:
        warnings.warn(f"sample count {len(samples)} below feature count {n_features}")

    solver_a = _RidgeSolver(Phi, train_cfg.rho_actor)
    solver_c = (_RidgeSolver(Phi, train_cfg.rho_critic)
                if train_cfg.rho_critic != train_cfg.rho_actor else solver_a)

    weights = initial.copy() if initial is not None else ActorCriticWeights.zeros(n_features)
    result = PolicyIterationResult(weights)

    for it in range(1, train_cfg.max_iters + 1):
        t0 = time.perf_counter()
        U_t, Lam_t = _targets(samples, weights, Phi, dictionary, kcfg, cost_cfg,
                              train_cfg)
        new = ActorCriticWeights(solver_a.solve(Phi @ U_t), solver_c.solve(Phi @ Lam_t))
        delta_a = float(np.sum((new.actor - weights.actor) ** 2))
        delta_c = float(np.sum((new.critic - weights.critic) ** 2))
        residual = float(np.mean(np.sum((Phi.T @ new.critic - Lam_t) ** 2, axis=1)))
        result.trace.append({
            "iteration": it,
            "delta_actor_sq": delta_a,
            "delta_critic_sq": delta_c,
            "target_residual": residual,
            "wall_time": time.perf_counter() - t0,
        })
        weights = new
        result.weights = weights
        result.iterations = it
        if delta_a <= train_cfg.sigma_actor and delta_c <= train_cfg.sigma_critic:
            result.converged = True
            break
    return result


def train_dual_policies(samples: RLSampleSet, dictionary: Dictionary,
                        kcfg: KernelConfig, cost_cfg: CostConfig,
                        train_cfg: TrainingConfig,
                        initial: dict | None = None) -> dict:
    """Train the tracking policy (mu = 0) and planning policy (mu > 0)."""
    if cost_cfg.mu <= 0:
        raise ValueError("cost_cfg.mu must be positive for the planning branch")
    results = {}
    for branch, mu in ((0, 0.0), (1, cost_cfg.mu)):
        cfg = replace(cost_cfg, mu=mu)
        w0 = initial.get(branch) if initial else None
        results[branch] = policy_iteration(samples, dictionary, kcfg, cfg,
                                           train_cfg, initial=w0)
    return results


def trace_to_csv(trace: list) -> str:
    lines = ["iteration,delta_actor_sq,delta_critic_sq,target_residual,wall_time"]
    for row in trace:
        lines.append(f"{row['iteration']},{row['delta_actor_sq']:.17g},"
                     f"{row['delta_critic_sq']:.17g},{row['target_residual']:.17g},"
                     f"{row['wall_time']:.6f}")
    return "\n".join(lines) + "\n"
