# scratch: exact-matrix version of the coupled actor-critic recursion (deleted before ship)
import numpy as np

from gpskrl import dynamics


def run(scheme, gamma=1.0, iters=400):
    dt = 0.05
    s0 = np.array([10.0, 0, 0, 0, 0, 0])
    params = dynamics.exact_params()
    A, B = dynamics.nominal_jacobians(s0, np.zeros(2), params, dt)
    Q = np.diag([2.0, 0, 5.0, 0, 2.0, 2.0])
    R = np.diag([1.0, 1.0])

    P = np.zeros((6, 6))
    K = np.zeros((2, 6))
    for i in range(iters):
        if scheme == "explicit":
            # u = -1/2 g R^-1 B' lam(x'), lam = 2P x', x' = (A - B K_old) x
            K_new = gamma * np.linalg.solve(R, B.T @ P @ (A - B @ K))
            P_new = Q + gamma * A.T @ P @ (A - B @ K_new)
        else:
            # implicit: u solves 2Ru + g B'(2P)(Ax + Bu) = 0
            K_new = gamma * np.linalg.solve(R + gamma * B.T @ P @ B, B.T @ P @ A)
            P_new = Q + gamma * A.T @ P @ (A - B @ K_new)
        dK = np.max(np.abs(K_new - K))
        dP = np.max(np.abs(P_new - P))
        K, P = K_new, P_new
        if not np.isfinite(dP) or dP > 1e15:
            return i + 1, np.inf, np.inf, K, P
        if dP < 1e-12 and dK < 1e-12:
            return i + 1, dP, dK, K, P
    return iters, dP, dK, K, P


for gamma in (1.0, 0.95):
    for scheme in ("explicit", "implicit"):
        it, dP, dK, K, P = run(scheme, gamma)
        tag = "DIVERGED" if not np.isfinite(dP) else f"dP={dP:.2e}"
        print(f"gamma={gamma} {scheme:9s}: iters={it:4d} {tag}")
        if np.isfinite(dP):
            print("   K=", np.array_str(K, precision=3, suppress_small=True).replace("\n", "\n      "))
            print("   BtPB/R scale:", np.diag(K @ np.linalg.pinv(np.linalg.solve(np.diag([1.,1.]), K))) if False else 0)
