import numpy as np
from grid_pilot import build_map, morse, morse_levels

FLOOR = 1e-8
D, a, re = 0.02, 0.8, 2.5
m = 20000.0
venv = morse(D, a, re)
exact = morse_levels(D, a, m, 35)

def build_map_full(venv, e_max, n, beta, r_min, r_max, refine=32):
    nf = refine * (n + 1) + 1
    rf = np.linspace(r_min, r_max, nf)
    p = np.sqrt(2.0 * np.maximum(e_max - venv(rf), FLOOR)) * beta / np.pi
    phi = np.concatenate([[0.0], np.cumsum(0.5 * (p[1:] + p[:-1]) * np.diff(rf))])
    phi_tot = phi[-1]
    levels = np.arange(1, n + 1) / (n + 1) * phi_tot
    idx = np.clip(np.searchsorted(phi, levels), 1, nf - 1)
    t = (levels - phi[idx - 1]) / (phi[idx] - phi[idx - 1])
    r_int = rf[idx - 1] + t * (rf[idx] - rf[idx - 1])
    R = np.concatenate([[r_min], r_int, [r_max]])
    # analytic jacobian: J = phi_tot / ((n+1) * beta*p(r)/pi)
    pr = np.sqrt(2.0 * np.maximum(e_max - venv(R), FLOOR)) * beta / np.pi
    Jana = phi_tot / ((n + 1) * pr)
    # central-diff jacobian
    Jcd = np.empty(n + 2)
    Jcd[1:-1] = 0.5 * (R[2:] - R[:-2])
    Jcd[0] = R[1] - R[0]
    Jcd[-1] = R[-1] - R[-2]
    return R, Jana, Jcd

def kinetic_j(R, Jall, m):
    n = len(R) - 2
    N = n + 1
    k = np.arange(0, n + 2); j = np.arange(1, n + 1)
    F = np.sqrt(2.0 / N) * np.sin(np.outer(k, j) * np.pi / N)
    C = np.sqrt(2.0 / N) * np.cos(np.outer(k, j) * np.pi / N)
    kappa = j * np.pi / N
    A = (C * kappa[None, :]) @ F[1:-1, :].T
    q = np.ones(n + 2); q[0] = 0.5; q[-1] = 0.5
    M = A @ np.diag(1.0 / np.sqrt(Jall[1:-1]))
    T = (0.5 / m) * (M.T @ (np.diag(q / Jall) @ M))
    return 0.5 * (T + T.T)

for n, emax, refine in [(512, 0.025, 32), (512, 0.025, 128), (256, 0.025, 32), (512, 0.035, 32), (1024, 0.025, 32)]:
    R, Jana, Jcd = build_map_full(venv, emax, n, 1.3, 1.5, 30.0, refine)
    for name, Jall in [("ana", Jana), ("cd ", Jcd)]:
        T = kinetic_j(R, Jall, m)
        ev = np.linalg.eigvalsh(T + np.diag(venv(R[1:-1])))
        nb = int(np.sum(ev < D - 1e-12))
        nchk = min(nb, 35)
        rel = np.abs(ev[:nchk] - exact[:nchk]) / np.abs(exact[:nchk])
        low10 = np.abs(ev[:10] - exact[:10]) / np.abs(exact[:10])
        q = np.ones(n + 2); q[0] = 0.5; q[-1] = 0.5
        cons = abs(np.sum(q * Jall) - 28.5) / 28.5
        print(f"n={n} emax={emax} ref={refine} J={name}: low10={low10.max():.2e} all({nb})={rel.max():.2e} cons={cons:.1e}")
