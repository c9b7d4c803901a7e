"""Gaussian-process regression over one-step dynamics residuals.

Each output dimension is an independent GP with a squared-exponential kernel

    k(z_i, z_j) = signal_var * exp(-0.5 ||z_i - z_j||^2 / lengthscale^2)

evaluated on a configurable subset of the input coordinates. Prediction uses
the inducing-point approximation with a diagonal correction on the training
covariance, which is exact when the inducing set equals the training set.
All matrices that do not depend on the query are precomputed at fit time, so
a posterior mean costs O(n_inducing) per output dimension.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve, cholesky, solve_triangular

from .kernels import IllConditionedError

_JITTERS = (1e-10, 1e-6)


class RankDeficientError(ValueError):
    """Residual-injection matrix has linearly dependent columns."""


@dataclass(frozen=True)
class GPHyperparams:
    signal_var: float = 25.0     # sigma_f^2 with sigma_f = 5
    lengthscale: float = 2.0
    noise_var: float = 1e-3 / 3

    def __post_init__(self):
        if min(self.signal_var, self.lengthscale, self.noise_var) <= 0:
            raise ValueError("hyperparameters must be strictly positive")


@dataclass
class GPTrainingSet:
    inputs: np.ndarray   # (n, n_z)
    targets: np.ndarray  # (n, n_y)

    def __post_init__(self):
        self.inputs = np.atleast_2d(np.asarray(self.inputs, dtype=float))
        self.targets = np.atleast_2d(np.asarray(self.targets, dtype=float))
        if len(self.inputs) != len(self.targets):
            raise ValueError("inputs/targets row mismatch")
        if not (np.all(np.isfinite(self.inputs)) and np.all(np.isfinite(self.targets))):
            raise ValueError("training data must be finite")

    def __len__(self):
        return len(self.inputs)


def se_kernel(A: np.ndarray, B: np.ndarray, hyp: GPHyperparams) -> np.ndarray:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    sq = (np.sum(A * A, axis=1)[:, None] + np.sum(B * B, axis=1)[None, :]
          - 2.0 * A @ B.T)
    np.maximum(sq, 0.0, out=sq)
    return hyp.signal_var * np.exp(-0.5 * sq / hyp.lengthscale ** 2)


def _chol_with_jitter(K: np.ndarray):
    for jit in _JITTERS:
        try:
            return cholesky(K + jit * np.eye(len(K)), lower=True)
        except np.linalg.LinAlgError:
            continue
    raise IllConditionedError("Cholesky failed after jitter escalation")


def residual_injection(channels: str | np.ndarray = "full",
                       n_states: int = 6) -> np.ndarray:
    """Residual-injection matrix: 'full' -> identity, 'lateral' -> (v_y, omega)."""
    if isinstance(channels, np.ndarray):
        return channels
    if channels == "full":
        return np.eye(n_states)
    if channels == "lateral":
        B = np.zeros((n_states, 2))
        B[1, 0] = 1.0
        B[3, 1] = 1.0
        return B
    raise ValueError(f"unknown channel spec {channels!r}")


def residual_target(x_next: np.ndarray, x_nominal_next: np.ndarray,
                    B_inj: np.ndarray) -> np.ndarray:
    """Least-squares projection of the one-step residual onto span(B_inj)."""
    B_inj = np.atleast_2d(B_inj)
    if np.linalg.matrix_rank(B_inj) < B_inj.shape[1]:
        raise RankDeficientError("injection matrix columns are dependent")
    resid = np.asarray(x_next, dtype=float) - np.asarray(x_nominal_next, dtype=float)
    y, *_ = np.linalg.lstsq(B_inj, resid, rcond=None)
    return y


def full_gp_posterior(z_star: np.ndarray, training: GPTrainingSet,
                      hyperparams: list[GPHyperparams],
                      active_dims: np.ndarray | None = None):
    """Dense posterior mean/variance per output dimension at a single query."""
    if len(training) == 0:
        raise ValueError("training set is empty")
    Z = training.inputs if active_dims is None else training.inputs[:, active_dims]
    z = np.asarray(z_star, dtype=float)
    z = z if active_dims is None else z[active_dims]
    n_y = training.targets.shape[1]
    mean = np.empty(n_y)
    var = np.empty(n_y)
    for a in range(n_y):
        hyp = hyperparams[a]
        K = se_kernel(Z, Z, hyp) + hyp.noise_var * np.eye(len(Z))
        cf = cho_factor(K, lower=True)
        k = se_kernel(z[None, :], Z, hyp)[0]
        alpha = cho_solve(cf, training.targets[:, a])
        mean[a] = k @ alpha
        var[a] = max(hyp.signal_var - k @ cho_solve(cf, k), 0.0)
    return mean, var


class GPModel:
    """Multi-output sparse GP with precomputed prediction matrices.

    active_dims restricts which input coordinates the kernel sees (positions
    and heading carry no information about the dynamics residual, so the
    vehicle pipeline masks them out). B_inj maps the GP output vector into the
    state equation.
    """

    def __init__(self, n_inputs: int, n_outputs: int,
                 hyperparams: GPHyperparams | list[GPHyperparams] | None = None,
                 active_dims=None, B_inj: np.ndarray | None = None):
        self.n_inputs = n_inputs
        self.n_outputs = n_outputs
        if hyperparams is None:
            hyperparams = GPHyperparams()
        if isinstance(hyperparams, GPHyperparams):
            hyperparams = [hyperparams] * n_outputs
        if len(hyperparams) != n_outputs:
            raise ValueError("need one hyperparameter set per output")
        self.hyperparams = list(hyperparams)
        self.active_dims = (np.arange(n_inputs) if active_dims is None
                            else np.asarray(active_dims, dtype=int))
        self.B_inj = np.eye(n_outputs) if B_inj is None else np.asarray(B_inj, dtype=float)
        self.training: GPTrainingSet | None = None
        self.inducing: np.ndarray | None = None
        self._cache = None
        self.stale = False

    # -- data ---------------------------------------------------------------

    @property
    def n_train(self) -> int:
        return 0 if self.training is None else len(self.training)

    @property
    def is_empty(self) -> bool:
        return self._cache is None

    def set_data(self, training: GPTrainingSet, inducing: np.ndarray | None = None):
        """Attach training data and an inducing set (defaults to all inputs)."""
        if training.inputs.shape[1] != self.n_inputs:
            raise ValueError("input dimension mismatch")
        if training.targets.shape[1] != self.n_outputs:
            raise ValueError("output dimension mismatch")
        self.training = training
        self.inducing = (training.inputs.copy() if inducing is None
                         else np.atleast_2d(np.asarray(inducing, dtype=float)))
        self.stale = True

    def _masked(self, Z: np.ndarray) -> np.ndarray:
        return np.atleast_2d(Z)[:, self.active_dims]

    def fit(self):
        """Precompute per-dimension prediction matrices."""
        if self.training is None or len(self.training) == 0:
            raise ValueError("no training data")
        Zm = self._masked(self.training.inputs)
        Um = self._masked(self.inducing)
        cache = []
        for a in range(self.n_outputs):
            hyp = self.hyperparams[a]
            y = self.training.targets[:, a]
            Kuu = se_kernel(Um, Um, hyp)
            Luu = _chol_with_jitter(Kuu)
            Kuz = se_kernel(Um, Zm, hyp)
            V = solve_triangular(Luu, Kuz, lower=True)
            q_diag = np.sum(V * V, axis=0)
            lam = np.maximum(hyp.signal_var - q_diag + hyp.noise_var, 1e-12)
            A = Kuu + (Kuz / lam) @ Kuz.T
            LA = _chol_with_jitter(A)
            w = cho_solve((LA, True), Kuz @ (y / lam))
            cache.append({"Luu": Luu, "LA": LA, "w": w})
        self._cache = cache
        self.stale = False

    # -- prediction ----------------------------------------------------------

    def predict(self, z_star: np.ndarray):
        """Posterior mean and variance per output dimension at one query."""
        means, variances = self.predict_batch(np.asarray(z_star, dtype=float)[None, :])
        return means[0], variances[0]

    def predict_batch(self, Z_star: np.ndarray):
        Z_star = np.atleast_2d(np.asarray(Z_star, dtype=float))
        m = len(Z_star)
        if self.is_empty:
            mean = np.zeros((m, self.n_outputs))
            var = np.tile([h.signal_var for h in self.hyperparams], (m, 1))
            return mean, var
        if self.stale:
            raise RuntimeError("model data changed; call fit() first")
        Qm = self._masked(Z_star)
        Um = self._masked(self.inducing)
        mean = np.empty((m, self.n_outputs))
        var = np.empty((m, self.n_outputs))
        for a in range(self.n_outputs):
            hyp = self.hyperparams[a]
            c = self._cache[a]
            ks = se_kernel(Qm, Um, hyp)           # (m, n_ind)
            mean[:, a] = ks @ c["w"]
            t1 = solve_triangular(c["Luu"], ks.T, lower=True)
            t2 = solve_triangular(c["LA"], ks.T, lower=True)
            var[:, a] = np.maximum(
                hyp.signal_var - np.sum(t1 * t1, axis=0) + np.sum(t2 * t2, axis=0),
                0.0)
        return mean, var

    def mean_jacobian(self, z_star: np.ndarray) -> np.ndarray:
        """Gradient of the posterior mean, shape (n_outputs, n_inputs).

        The mean is a weighted sum of Gaussian kernels, so each row is
        sum_j w_j k(z, u_j) (u_j - z) / lengthscale^2, embedded back into the
        full input coordinates (masked-out columns are zero).
        """
        z_star = np.asarray(z_star, dtype=float)
        J = np.zeros((self.n_outputs, self.n_inputs))
        if self.is_empty:
            return J
        if self.stale:
            raise RuntimeError("model data changed; call fit() first")
        zm = z_star[self.active_dims]
        Um = self._masked(self.inducing)
        diff = Um - zm[None, :]                   # (n_ind, d_active)
        for a in range(self.n_outputs):
            hyp = self.hyperparams[a]
            ks = se_kernel(zm[None, :], Um, hyp)[0]
            grad = (self._cache[a]["w"] * ks) @ diff / hyp.lengthscale ** 2
            J[a, self.active_dims] = grad
        return J


def fitc_posterior(z_star: np.ndarray, model: GPModel):
    return model.predict(z_star)


def learned_jacobians(z_star: np.ndarray, A_nom: np.ndarray, B_nom: np.ndarray,
                      model: GPModel | None, n_states: int = 6):
    """Nominal Jacobians corrected by the GP mean gradient.

    z_star stacks [state, control]; the residual enters through model.B_inj.
    With no trained model this returns the nominal pair unchanged.
    """
    if model is None or model.is_empty:
        return A_nom.copy(), B_nom.copy()
    J = model.mean_jacobian(z_star)
    A = A_nom + model.B_inj @ J[:, :n_states]
    B = B_nom + model.B_inj @ J[:, n_states:]
    return A, B


# ---------------------------------------------------------------------------
# hyperparameter fitting

def log_marginal_likelihood(Z: np.ndarray, y: np.ndarray,
                            hyp: GPHyperparams) -> float:
    K = se_kernel(Z, Z, hyp) + hyp.noise_var * np.eye(len(Z))
    try:
        L = cholesky(K, lower=True)
    except np.linalg.LinAlgError:
        return -np.inf
    alpha = cho_solve((L, True), y)
    return float(-0.5 * y @ alpha - np.sum(np.log(np.diag(L)))
                 - 0.5 * len(y) * np.log(2 * np.pi))


def _golden_section(f, lo: float, hi: float, iters: int = 20):
    phi = (np.sqrt(5) - 1) / 2
    a, b = lo, hi
    c, d = b - phi * (b - a), a + phi * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(iters):
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - phi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + phi * (b - a)
            fd = f(d)
    return (c, fc) if fc > fd else (d, fd)


def fit_hyperparams(training: GPTrainingSet, mode: str = "fixed",
                    initial: GPHyperparams | None = None,
                    output_dim: int = 0, span: float = 3.0,
                    sweeps: int = 2) -> GPHyperparams:
    """Hyperparameters for one output dimension.

    'fixed' returns the initial values unchanged. 'optimize' runs a
    coordinate-wise golden-section search in log space around the initial
    guess, maximizing the marginal log-likelihood; the result never scores
    below the initial point.
    """
    hyp = initial if initial is not None else GPHyperparams()
    if mode == "fixed":
        return hyp
    if mode != "optimize":
        raise ValueError(f"unknown mode {mode!r}")
    if len(training) < 2:
        raise ValueError("optimize mode needs at least two samples")

    Z = training.inputs
    y = training.targets[:, output_dim]

    names = ["lengthscale", "signal_var", "noise_var"]
    values = {n: getattr(hyp, n) for n in names}
    best_ll = log_marginal_likelihood(Z, y, GPHyperparams(**values))
    initial_ll = best_ll
    for _ in range(sweeps):
        for name in names:
            center = np.log(values[name])

            def score(logv, _name=name):
                trial = dict(values)
                trial[_name] = float(np.exp(logv))
                return log_marginal_likelihood(Z, y, GPHyperparams(**trial))

            x, ll = _golden_section(score, center - span, center + span)
            if ll > best_ll:
                best_ll = ll
                values[name] = float(np.exp(x))
    if best_ll < initial_ll + 1e-12 and best_ll <= initial_ll:
        warnings.warn("hyperparameter search did not improve on the initial guess")
    return GPHyperparams(**values)


# ---------------------------------------------------------------------------
# serialization (versioned, bit-exact)

_GP_FORMAT = 1


def gp_model_to_bytes(model: GPModel) -> bytes:
    arrays = {}
    if model.training is not None:
        arrays["train_inputs"] = model.training.inputs
        arrays["train_targets"] = model.training.targets
        arrays["inducing"] = model.inducing
    if model._cache is not None:
        for a, c in enumerate(model._cache):
            arrays[f"w_{a}"] = c["w"]
            arrays[f"Luu_{a}"] = c["Luu"]
            arrays[f"LA_{a}"] = c["LA"]
    arrays["active_dims"] = model.active_dims.astype(float)
    arrays["B_inj"] = model.B_inj

    header = {
        "format": _GP_FORMAT,
        "n_inputs": model.n_inputs,
        "n_outputs": model.n_outputs,
        "fitted": model._cache is not None,
        "has_data": model.training is not None,
        "hyperparams": [[h.signal_var, h.lengthscale, h.noise_var]
                        for h in model.hyperparams],
        "arrays": {k: list(v.shape) for k, v in arrays.items()},
        "order": sorted(arrays),
    }
    head = json.dumps(header, sort_keys=True).encode()
    body = b"".join(np.ascontiguousarray(arrays[k], dtype="<f8").tobytes()
                    for k in header["order"])
    return len(head).to_bytes(4, "little") + head + body


def gp_model_from_bytes(raw: bytes) -> GPModel:
    hlen = int.from_bytes(raw[:4], "little")
    header = json.loads(raw[4:4 + hlen].decode())
    if header["format"] != _GP_FORMAT:
        raise ValueError(f"unsupported GP format {header['format']}")
    offset = 4 + hlen
    arrays = {}
    for k in header["order"]:
        shape = tuple(header["arrays"][k])
        count = int(np.prod(shape)) if shape else 1
        arrays[k] = np.frombuffer(raw, dtype="<f8", count=count,
                                  offset=offset).reshape(shape).copy()
        offset += count * 8
    hyps = [GPHyperparams(*vals) for vals in header["hyperparams"]]
    model = GPModel(header["n_inputs"], header["n_outputs"], hyps,
                    active_dims=arrays["active_dims"].astype(int),
                    B_inj=arrays["B_inj"])
    if header["has_data"]:
        model.set_data(GPTrainingSet(arrays["train_inputs"], arrays["train_targets"]),
                       inducing=arrays["inducing"])
    if header["fitted"]:
        model._cache = [{"w": arrays[f"w_{a}"], "Luu": arrays[f"Luu_{a}"],
                         "LA": arrays[f"LA_{a}"]}
                        for a in range(model.n_outputs)]
        model.stale = False
    return model
