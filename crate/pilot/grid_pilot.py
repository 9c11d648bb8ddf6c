import numpy as np

FLOOR = 1e-8

def build_map(venv, e_max, n, beta, r_min, r_max, refine=32):
    """Fine-mesh cumulative phase + inversion.
    Returns extended nodes R[0..n+1] (walls at ends), interior jacobian J[n],
    wall jacobians (jw0, jw1)."""
    nf = refine * (n + 1) + 1
    rf = np.linspace(r_min, r_max, nf)
    p = np.sqrt(2.0 * np.maximum(e_max - venv(rf), FLOOR)) * beta / np.pi
    # cumulative trapezoid
    phi = np.concatenate([[0.0], np.cumsum(0.5 * (p[1:] + p[:-1]) * np.diff(rf))])
    phi_tot = phi[-1]
    levels = np.arange(1, n + 1) / (n + 1) * phi_tot
    # invert monotone piecewise-linear
    idx = np.searchsorted(phi, levels, side="left")
    idx = np.clip(idx, 1, nf - 1)
    t = (levels - phi[idx - 1]) / (phi[idx] - phi[idx - 1])
    r_int = rf[idx - 1] + t * (rf[idx] - rf[idx - 1])
    R = np.concatenate([[r_min], r_int, [r_max]])
    J = 0.5 * (R[2:] - R[:-2])          # central differences, dx=1
    jw0 = R[1] - R[0]
    jw1 = R[-1] - R[-2]
    return R, J, jw0, jw1

def kinetic(R, J, jw0, jw1, mass):
    n = len(J)
    N = n + 1
    k = np.arange(0, n + 2)
    j = np.arange(1, n + 1)
    F = np.sqrt(2.0 / N) * np.sin(np.outer(k, j) * np.pi / N)
    C = np.sqrt(2.0 / N) * np.cos(np.outer(k, j) * np.pi / N)
    kappa = j * np.pi / N
    Fint = F[1:-1, :]
    A = (C * kappa[None, :]) @ Fint.T      # derivative at all nodes from interior values
    q = np.ones(n + 2); q[0] = 0.5; q[-1] = 0.5
    jall = np.concatenate([[jw0], J, [jw1]])
    M = A @ np.diag(1.0 / np.sqrt(J))
    T = (0.5 / mass) * (M.T @ (np.diag(q / jall) @ M))
    return 0.5 * (T + T.T)

def morse(D, a, re, off=0.0):
    return lambda r: D * (1.0 - np.exp(-a * (np.asarray(r) - re))) ** 2 + off

def morse_levels(D, a, m, nmax):
    w0 = a * np.sqrt(2.0 * D / m)
    v = np.arange(nmax)
    return w0 * (v + 0.5) - a * a * (v + 0.5) ** 2 / (2.0 * m)

if __name__ == "__main__":
    # uniform box checks
    n = 64
    m = 20000.0
    rmin, rmax = 0.0, 10.0
    venv = lambda r: np.zeros_like(np.asarray(r, dtype=float))
    R, J, jw0, jw1 = build_map(venv, 0.01, n, 1.3, rmin, rmax)
    sp = np.diff(R)
    print("uniform: max/min spacing - 1 =", sp.max() / sp.min() - 1.0)
    T = kinetic(R, J, jw0, jw1, m)
    ev = np.linalg.eigvalsh(T)
    L = rmax - rmin
    box = (np.arange(1, n + 1) * np.pi / L) ** 2 / (2 * m)
    print("box low rel err:", abs(ev[0] - box[0]) / box[0], abs(ev[1] - box[1]) / box[1])
    print("symm:", np.max(np.abs(T - T.T)), "min eig:", ev[0])
    q = np.ones(n + 2); q[0] = 0.5; q[-1] = 0.5
    jall = np.concatenate([[jw0], J, [jw1]])
    print("mapping consistency rel:", abs(np.sum(q * jall) - (rmax - rmin)) / (rmax - rmin))
