# scratch prototype: can kernel policy iteration recover the LQR law? (deleted before ship)
import time

import numpy as np

from gpskrl import dynamics
from gpskrl.kernels import Dictionary, KernelConfig, sparsify
from gpskrl.training import (ActorCriticWeights, CostConfig, RLSampleSet,
                             TrainingConfig, policy_iteration)


def riccati_gain(A, B, Q, R, iters=10000, tol=1e-12):
    P = Q.copy()
    for _ in range(iters):
        BtPB = R + B.T @ P @ B
        K = np.linalg.solve(BtPB, B.T @ P @ A)
        Pn = Q + A.T @ P @ (A - B @ K)
        if np.max(np.abs(Pn - P)) < tol:
            P = Pn
            break
        P = Pn
    K = np.linalg.solve(R + B.T @ P @ B, B.T @ P @ A)
    return K, P


def main(box_scale=1.0, grid_pts=3, M=3000, seed=0, gamma=1.0, max_iters=300):
    dt = 0.05
    s0 = np.array([10.0, 0, 0, 0, 0, 0])
    u0 = np.zeros(2)
    params = dynamics.exact_params()
    A, B = dynamics.nominal_jacobians(s0, u0, params, dt)

    cost = CostConfig(mu=0.0, gamma=gamma)
    Q, R = cost.Q, cost.R
    K_lqr, P = riccati_gain(A, B, gamma * Q if gamma != 1 else Q, R)
    # note: discounted LQR: minimize sum gamma^k (x Q x + u R u) ->
    # equivalent DARE with (sqrt(gamma) A, sqrt(gamma) B)? handle gamma=1 first
    if gamma != 1.0:
        Ag, Bg = np.sqrt(gamma) * A, np.sqrt(gamma) * B
        K_lqr, P = riccati_gain(Ag, Bg, Q, R)
        K_lqr = K_lqr * np.sqrt(gamma)  # check later
    print("K_lqr=\n", K_lqr)
    print("max |eig| closed loop:", np.max(np.abs(np.linalg.eigvals(A - B @ K_lqr))))

    hw = np.array([0.8, 0.8, np.pi / 12, 0.8, 0.8, 0.8]) * box_scale
    # dense grid dictionary over the box
    axes = [np.linspace(-h, h, grid_pts) for h in hw]
    mesh = np.meshgrid(*axes, indexing="ij")
    grid = np.stack([m.ravel() for m in mesh], axis=1)
    kcfg = KernelConfig(ald_threshold=1e-9)
    t0 = time.perf_counter()
    dct = sparsify(grid, kcfg)
    print(f"dict size {len(dct)} of {len(grid)} in {time.perf_counter()-t0:.1f}s")

    rng = np.random.default_rng(seed)
    X = rng.uniform(-hw, hw, size=(M, 6))
    samples = RLSampleSet(X, np.broadcast_to(A, (M, 6, 6)), np.broadcast_to(B, (M, 6, 2)))

    tcfg = TrainingConfig(max_iters=max_iters)
    t0 = time.perf_counter()
    res = policy_iteration(samples, dct, kcfg, cost, tcfg)
    t1 = time.perf_counter()
    print(f"PI: converged={res.converged} iters={res.iterations} time={t1-t0:.1f}s")
    for row in res.trace[:3] + res.trace[-3:]:
        print(f"  it={row['iteration']:3d} dA={row['delta_actor_sq']:.3e} "
              f"dC={row['delta_critic_sq']:.3e} res={row['target_residual']:.3e}")

    # test states in the inner 80% of the box
    from gpskrl.kernels import feature_matrix
    Xt = rng.uniform(-0.8 * hw, 0.8 * hw, size=(100, 6))
    U_hat = feature_matrix(Xt, dct, kcfg).T @ res.weights.actor
    U_ref = -(K_lqr @ Xt.T).T
    rel = np.linalg.norm(U_hat - U_ref, axis=1) / np.maximum(np.linalg.norm(U_ref, axis=1), 1e-9)
    print(f"rel action err: median={np.median(rel):.4f} mean={np.mean(rel):.4f} "
          f"p90={np.percentile(rel, 90):.4f} max={np.max(rel):.4f}")
    print("ref action norms: min", np.min(np.linalg.norm(U_ref, axis=1)),
          "median", np.median(np.linalg.norm(U_ref, axis=1)))


if __name__ == "__main__":
    import sys
    kw = {}
    for a in sys.argv[1:]:
        k, v = a.split("=")
        kw[k] = float(v) if "." in v else int(v)
    main(**kw)
