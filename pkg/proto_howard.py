# scratch: Howard-style GPI with direct critic solve (deleted before ship)
import time

import numpy as np
from scipy.linalg import cho_factor, cho_solve, lu_factor, lu_solve, schur

from gpskrl import dynamics
from gpskrl.kernels import KernelConfig, feature_matrix, sparsify
from gpskrl.training import (ActorCriticWeights, CostConfig, RLSampleSet,
                             _critic_with_jacobian, _implicit_actions)


def solve_transport(Tmat, S, D, gamma):
    """Solve Z - gamma * T @ Z @ S = D columnwise via real Schur S (quasi-tri).

    S is upper quasi-triangular (2x2 blocks for complex pairs).
    """
    n, m = D.shape
    Z = np.zeros_like(D)
    j = 0
    while j < m:
        block2 = j + 1 < m and abs(S[j + 1, j]) > 1e-14
        # accumulated coupling from already-solved columns: gamma*T* sum_{i<j} Z_i S_ij
        if block2:
            rhs_a = D[:, j] + gamma * (Tmat @ (Z[:, :j] @ S[:j, j]))
            rhs_b = D[:, j + 1] + gamma * (Tmat @ (Z[:, :j] @ S[:j, j + 1]))
            # coupled 2-column system
            I = np.eye(n)
            M = np.block([
                [I - gamma * S[j, j] * Tmat, -gamma * S[j + 1, j] * Tmat],
                [-gamma * S[j, j + 1] * Tmat, I - gamma * S[j + 1, j + 1] * Tmat],
            ])
            sol = np.linalg.solve(M, np.concatenate([rhs_a, rhs_b]))
            Z[:, j], Z[:, j + 1] = sol[:n], sol[n:]
            j += 2
        else:
            rhs = D[:, j] + gamma * (Tmat @ (Z[:, :j] @ S[:j, j]))
            M = np.eye(n) - gamma * S[j, j] * Tmat
            Z[:, j] = np.linalg.solve(M, rhs)
            j += 1
    return Z


def run(dmax=0.6, M=20000, rho=1e-4, outers=40, seed=0, gamma=1.0,
        ramp=(0.85, 0.95, 0.99)):
    dt = 0.05
    s0 = np.array([10.0, 0, 0, 0, 0, 0])
    params = dynamics.exact_params()
    A, B = dynamics.nominal_jacobians(s0, np.zeros(2), params, dt)
    cost = CostConfig(mu=0.0, gamma=gamma)
    Q, R = cost.Q, cost.R
    hw = np.array([0.8, 0.8, np.pi / 12, 0.8, 0.8, 0.8])
    rng = np.random.default_rng(seed)
    kcfg = KernelConfig(ald_threshold=dmax)
    Xc = rng.uniform(-1.25 * hw, 1.25 * hw, size=(40000, 6))
    dct = sparsify(Xc, kcfg)
    X = rng.uniform(-hw, hw, size=(M, 6))
    samples = RLSampleSet(X, np.broadcast_to(A, (M, 6, 6)),
                          np.broadcast_to(B, (M, 6, 2)))
    Phi = feature_matrix(X, dct, kcfg)
    n_F = Phi.shape[0]
    G = Phi @ Phi.T
    G[np.diag_indices_from(G)] += rho
    cfG = cho_factor(G, lower=True)

    W = ActorCriticWeights.zeros(n_F)
    qd = np.asarray(cost.q_diag)
    C_base = 2.0 * X * qd                     # (M,6) state-term of the costate target

    gammas = list(ramp) + [gamma] * (outers - len(ramp))
    t0 = time.perf_counter()
    for it, g in enumerate(gammas, 1):
        ccfg = CostConfig(q_diag=cost.q_diag, r_diag=cost.r_diag, mu=0.0, gamma=g)
        U_hat = Phi.T @ W.actor
        Xn = (np.einsum("kij,kj->ki", samples.A, X)
              + np.einsum("kij,kj->ki", samples.B, U_hat))
        Phin = feature_matrix(Xn, dct, kcfg)
        # direct critic solve: Wc = G^-1 Phi (C + g*(Phin^T Wc) A)  ->  Sylvester
        S_schur, U_schur = schur(np.asarray(A), output="real")
        Tmat = cho_solve(cfG, Phi @ Phin.T)    # G^-1 Phi Phin^T  (n_F x n_F)
        D = cho_solve(cfG, Phi @ (C_base @ U_schur))
        Z = solve_transport(Tmat, S_schur, D, g)
        Wc = Z @ U_schur.T
        # improvement: implicit stationarity with the evaluated critic
        Wtmp = ActorCriticWeights(W.actor.copy(), Wc)
        lam1, J = _critic_with_jacobian(Xn, dct, kcfg, Wc)
        U_t = _implicit_actions(samples, U_hat, lam1, J, ccfg)
        Wa = cho_solve(cfG, Phi @ U_t)
        dA = float(np.sum((Wa - W.actor) ** 2))
        dC = float(np.sum((Wc - W.critic) ** 2))
        W = ActorCriticWeights(Wa, Wc)
        print(f"  it={it:2d} g={g:.3f} dA={dA:9.2e} dC={dC:9.2e} "
              f"[{time.perf_counter()-t0:.0f}s]", flush=True)
        if not (np.isfinite(dA) and np.isfinite(dC)) or dC > 1e16:
            return "DIVERGED"
        if g == gamma and dA <= 1e-6 and dC <= 1e-6:
            break

    P = np.zeros((6, 6))
    Ag, Bg = np.sqrt(gamma) * A, np.sqrt(gamma) * B
    for _ in range(40000):
        K = np.linalg.solve(R + Bg.T @ P @ Bg, Bg.T @ P @ Ag)
        Pn = Q + Ag.T @ P @ (Ag - Bg @ K)
        if np.max(np.abs(Pn - P)) < 1e-13:
            P = Pn
            break
        P = Pn
    K = gamma * np.linalg.solve(R + gamma * B.T @ P @ B, B.T @ P @ A)
    Xt = rng.uniform(-0.8 * hw, 0.8 * hw, size=(100, 6))
    U_pi = feature_matrix(Xt, dct, kcfg).T @ W.actor
    U_ref = -(K @ Xt.T).T
    rel = (np.linalg.norm(U_pi - U_ref, axis=1)
           / np.maximum(np.linalg.norm(U_ref, axis=1), 1e-9))
    return (f"n_K={len(dct)} rel med={np.median(rel):.4f} mean={np.mean(rel):.4f} "
            f"p90={np.percentile(rel,90):.4f} max={np.max(rel):.4f}")


if __name__ == "__main__":
    import sys
    kw = {}
    for a in sys.argv[1:]:
        k, v = a.split("=")
        kw[k] = float(v) if "." in v else int(v)
    print(run(**kw))
