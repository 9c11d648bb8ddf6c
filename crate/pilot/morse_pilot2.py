import numpy as np
from grid_pilot import build_map, kinetic, morse, morse_levels

D, a, re = 0.02, 0.8, 2.5
m = 20000.0
venv = morse(D, a, re)
nb_analytic = int(np.floor(np.sqrt(2 * m * D) / a - 0.5)) + 1
print("analytic count:", nb_analytic)

for n, rmin, rmax, emax in [(512, 1.5, 30.0, 0.025), (512, 1.6, 40.0, 0.025),
                            (1024, 1.5, 40.0, 0.025), (256, 1.5, 30.0, 0.025),
                            (512, 1.5, 30.0, 0.035)]:
    R, J, jw0, jw1 = build_map(venv, emax, n, 1.3, rmin, rmax)
    sp = np.diff(R)
    T = kinetic(R, J, jw0, jw1, m)
    V = venv(R[1:-1])
    ev = np.linalg.eigvalsh(T + np.diag(V))
    exact = morse_levels(D, a, m, nb_analytic)
    nb = int(np.sum(ev < D - 1e-12))
    nchk = min(nb, nb_analytic, 12)
    rel = np.abs(ev[:nchk] - exact[:nchk]) / np.abs(exact[:nchk])
    nall = min(nb, nb_analytic)
    relall = np.abs(ev[:nall] - exact[:nall]) / np.abs(exact[:nall])
    q = np.ones(n + 2); q[0] = 0.5; q[-1] = 0.5
    jall = np.concatenate([[jw0], J, [jw1]])
    cons = abs(np.sum(q * jall) - (rmax - rmin)) / (rmax - rmin)
    print(f"n={n} rmin={rmin} rmax={rmax} emax={emax}: low12={rel.max():.2e} nb={nb} "
          f"all={relall.max():.2e} sp[{sp.min():.4f},{sp.max():.4f}] cons={cons:.1e}")

# ghost check
n = 256
R, J, jw0, jw1 = build_map(venv, 0.025, n, 1.3, 1.5, 30.0)
evc = np.linalg.eigvalsh(kinetic(R, J, jw0, jw1, m) + np.diag(venv(R[1:-1])))
n2 = 1024
R2, J2, w0, w1 = build_map(venv, 0.025, n2, 1.3, 1.5, 30.0)
evd = np.linalg.eigvalsh(kinetic(R2, J2, w0, w1, m) + np.diag(venv(R2[1:-1])))
bound_c = evc[evc < D - 1e-6]
bound_d = evd[evd < D - 1e-6]
worst = 0.0
for E in bound_c:
    i = np.searchsorted(bound_d, E)
    lo = bound_d[i - 1] if i > 0 else -np.inf
    hi = bound_d[i] if i < len(bound_d) else np.inf
    dist = min(E - lo, hi - E); gap = hi - lo
    worst = max(worst, dist / gap)
print("ghost: worst dist/gap =", worst)
