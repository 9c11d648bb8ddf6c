import numpy as np
from grid_pilot import build_map, kinetic, morse, morse_levels

D, a, re = 0.02, 0.8, 2.5
m = 20000.0
venv = morse(D, a, re)
nb_analytic = int(np.floor(np.sqrt(2 * m * D) / a - 0.5)) + 1
print("analytic count:", nb_analytic)

for n, rmin, rmax, emax in [(512, 1.5, 30.0, 0.025), (512, 1.5, 40.0, 0.025), (1024, 1.5, 40.0, 0.025), (256, 1.5, 30.0, 0.025)]:
    r, jac, sigma = build_map(venv, emax, n, 1.3, rmin, rmax)
    sp = np.diff(r)
    T = kinetic(r, jac, m, n)
    V = venv(r[1:-1])
    ev = np.linalg.eigvalsh(T + np.diag(V))
    exact = morse_levels(D, a, m, nb_analytic)
    rel = np.abs(ev[:12] - exact[:12]) / np.abs(exact[:12])
    nb = int(np.sum(ev < D - 1e-12))
    # compare all bound levels
    nchk = min(nb, nb_analytic)
    relall = np.abs(ev[:nchk] - exact[:nchk]) / np.abs(exact[:nchk])
    print(f"n={n} rmin={rmin} rmax={rmax} emax={emax}: low12 maxrel={rel.max():.2e} "
          f"nbound={nb} allbound maxrel={relall.max():.2e} spacing min={sp.min():.4f} max={sp.max():.4f}")

# ghost check: coarse n=256 eigenvalues vs dense n=1024 reference, bound region only
n, rmin, rmax, emax = 256, 1.5, 30.0, 0.025
r, jac, s = build_map(venv, emax, n, 1.3, rmin, rmax)
Tc = kinetic(r, jac, m, n)
evc = np.linalg.eigvalsh(Tc + np.diag(venv(r[1:-1])))
n2 = 1024
r2, jac2, s2 = build_map(venv, emax, n2, 1.3, rmin, rmax)
Td = kinetic(r2, jac2, m, n2)
evd = np.linalg.eigvalsh(Td + np.diag(venv(r2[1:-1])))
bound_c = evc[evc < D - 1e-6]
bound_d = evd[evd < D - 1e-6]
worst = 0.0
for E in bound_c:
    i = np.searchsorted(bound_d, E)
    lo = bound_d[i-1] if i > 0 else -np.inf
    hi = bound_d[i] if i < len(bound_d) else np.inf
    gap = hi - lo
    dist = min(E - lo, hi - E)
    worst = max(worst, dist / gap)
print("ghost check: worst (dist to nearest ref)/gap =", worst, " (ghost if ~0.5, fine if <0.01)")
