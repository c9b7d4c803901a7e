# scratch: instrumented policy-iteration loop vs exact VI (deleted before ship)
import numpy as np

from gpskrl import dynamics
from gpskrl.kernels import KernelConfig, feature_matrix, sparsify
from gpskrl.training import (ActorCriticWeights, CostConfig, RLSampleSet,
                             TrainingConfig, _RidgeSolver, _targets)


def main(iters=80, M=3000, grid_pts=3, rho=1e-4, mode="implicit", seed=0):
    dt = 0.05
    s0 = np.array([10.0, 0, 0, 0, 0, 0])
    params = dynamics.exact_params()
    A, B = dynamics.nominal_jacobians(s0, np.zeros(2), params, dt)
    cost = CostConfig(mu=0.0, gamma=1.0)
    Q, R = cost.Q, cost.R

    hw = np.array([0.8, 0.8, np.pi / 12, 0.8, 0.8, 0.8])
    axes = [np.linspace(-h, h, grid_pts) for h in hw]
    grid = np.stack([m.ravel() for m in np.meshgrid(*axes, indexing="ij")], axis=1)
    kcfg = KernelConfig(ald_threshold=1e-9)
    dct = sparsify(grid, kcfg)

    rng = np.random.default_rng(seed)
    X = rng.uniform(-hw, hw, size=(M, 6))
    samples = RLSampleSet(X, np.broadcast_to(A, (M, 6, 6)), np.broadcast_to(B, (M, 6, 2)))
    tcfg = TrainingConfig(rho_actor=rho, rho_critic=rho, action_target=mode)

    Phi = feature_matrix(X, dct, kcfg)
    sol = _RidgeSolver(Phi, rho)
    W = ActorCriticWeights.zeros(Phi.shape[0])

    # exact VI for reference
    P = np.zeros((6, 6))
    K = np.zeros((2, 6))

    lsq = np.linalg.lstsq(np.hstack([X, np.ones((M, 1))]), np.zeros((M, 2)), rcond=None)
    for it in range(1, iters + 1):
        U_t, Lam_t = _targets(samples, W, Phi, dct, kcfg, cost, tcfg)
        Wn = ActorCriticWeights(sol.solve(Phi @ U_t), sol.solve(Phi @ Lam_t))

        # exact VI step
        K = np.linalg.solve(R + B.T @ P @ B, B.T @ P @ A)
        P = Q + A.T @ P @ (A - B @ K)

        if it % 5 == 0 or it <= 3:
            U_hat = Phi.T @ Wn.actor
            # effective linear gain of the kernel actor
            Keff = -np.linalg.lstsq(X, U_hat, rcond=None)[0].T
            lam_hat = Phi.T @ Wn.critic
            lam_exact = 2.0 * X @ P
            lam_err = np.sqrt(np.mean((lam_hat - lam_exact) ** 2))
            print(f"it={it:3d} |Wc|={np.linalg.norm(Wn.critic):9.2e} "
                  f"|Keff-K|={np.max(np.abs(Keff - K)):9.2e} "
                  f"lam_rmse={lam_err:9.2e} lam_scale={np.sqrt(np.mean(lam_exact**2)):7.2f} "
                  f"maxU={np.max(np.abs(U_hat)):8.2e}")
        W = Wn
    print("exact K:\n", K)


if __name__ == "__main__":
    import sys
    kw = {}
    for a in sys.argv[1:]:
        k, v = a.split("=")
        kw[k] = v if k == "mode" else (float(v) if "." in v or "e" in v else int(v))
    main(**kw)
