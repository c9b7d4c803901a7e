# scratch: ridge-fit conditioning probe (deleted before ship)
import numpy as np

from gpskrl import dynamics
from gpskrl.kernels import KernelConfig, feature_matrix, sparsify
from gpskrl.training import ridge_weights


def probe(widths, grid_pts, rho, M=3000, seed=0, hw_scale=1.0):
    hw = np.array([0.8, 0.8, np.pi / 12, 0.8, 0.8, 0.8]) * hw_scale
    axes = [np.linspace(-h, h, grid_pts) for h in hw]
    mesh = np.meshgrid(*axes, indexing="ij")
    grid = np.stack([m.ravel() for m in mesh], axis=1)
    kcfg = KernelConfig(widths=widths, ald_threshold=1e-9)
    dct = sparsify(grid, kcfg)

    rng = np.random.default_rng(seed)
    X = rng.uniform(-hw, hw, size=(M, 6))
    Phi = feature_matrix(X, dct, kcfg)
    G = Phi @ Phi.T
    sv = np.linalg.svd(G, compute_uv=False)
    print(f"widths={widths} n_F={Phi.shape[0]} G sv: max={sv[0]:.2e} min={sv[-1]:.2e} "
          f"cond={sv[0]/sv[-1]:.2e} rho={rho}")

    # fit the linear costate-like target 2*Q*x
    Q = np.diag([2.0, 0, 5.0, 0, 2.0, 2.0])
    T = 2.0 * X @ Q
    W = ridge_weights(Phi, T, rho)
    fit = Phi.T @ W
    print(f"  |W|_F={np.linalg.norm(W):.3e} rms train err={np.sqrt(np.mean((fit-T)**2)):.3e}")

    # wiggle at fresh points inside box and outside (1.2x)
    Xi = rng.uniform(-hw, hw, size=(2000, 6))
    Fi = feature_matrix(Xi, dct, kcfg).T @ W
    Ti = 2.0 * Xi @ Q
    print(f"  fresh in-box rms err={np.sqrt(np.mean((Fi-Ti)**2)):.3e} max={np.max(np.abs(Fi-Ti)):.3e}")
    Xo = rng.uniform(-1.3 * hw, 1.3 * hw, size=(2000, 6))
    mask = np.any(np.abs(Xo) > hw, axis=1)
    Fo = feature_matrix(Xo[mask], dct, kcfg).T @ W
    To = 2.0 * Xo[mask] @ Q
    print(f"  outside rms err={np.sqrt(np.mean((Fo-To)**2)):.3e} max={np.max(np.abs(Fo-To)):.3e}")


probe((0.7, 0.8, 0.9, 1.0), 3, 1e-4)
probe((0.7, 0.8, 0.9, 1.0), 3, 1e-1)
probe((0.9,), 3, 1e-4)
probe((0.7, 0.8, 0.9, 1.0), 3, 1e-4, hw_scale=0.75)
