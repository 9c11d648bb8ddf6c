import numpy as np
from jac_test import build_map_full, kinetic_j
from grid_pilot import morse, morse_levels

D, a, re = 0.02, 0.8, 2.5
m = 20000.0
venv = morse(D, a, re)
exact = morse_levels(D, a, m, 35)

print("--- criterion-1 configs: low-10 accuracy at n=512 ---")
for n, rmin, rmax, emax, beta in [(512, 1.5, 30.0, 0.05, 1.3), (512, 1.5, 20.0, 0.05, 1.3),
                                  (512, 1.3, 20.0, 0.08, 1.3), (512, 1.5, 30.0, 0.035, 2.0),
                                  (512, 1.5, 15.0, 0.06, 1.3), (256, 1.5, 15.0, 0.06, 1.3)]:
    R, Jana, Jcd = build_map_full(venv, emax, n, beta, rmin, rmax)
    T = kinetic_j(R, Jana, m)
    ev = np.linalg.eigvalsh(T + np.diag(venv(R[1:-1])))
    low10 = np.abs(ev[:10] - exact[:10]) / np.abs(exact[:10])
    nb = int(np.sum(ev < D - 1e-12))
    nall = min(nb, 35)
    rall = np.abs(ev[:nall] - exact[:nall]) / np.abs(exact[:nall])
    print(f"n={n} [{rmin},{rmax}] emax={emax} beta={beta}: low10={low10.max():.2e} nb={nb} all={rall.max():.2e}")

print("--- variational doubling (lowest 10), config [1.5,30] emax=0.05 ---")
prev = None
for n in [256, 512, 1024]:
    R, Jana, Jcd = build_map_full(venv, 0.05, n, 1.3, 1.5, 30.0)
    ev = np.linalg.eigvalsh(kinetic_j(R, Jana, m) + np.diag(venv(R[1:-1])))[:10]
    if prev is not None:
        rise = np.max((ev - prev) / np.abs(prev))
        print(f"n={n}: max rise vs n/2 = {rise:.2e}")
    prev = ev

print("--- ghost check, emax=0.05 [1.5,30], n=256 vs n=1024, bound below D-5e-4 ---")
R, Ja, _ = build_map_full(venv, 0.05, 256, 1.3, 1.5, 30.0)
evc = np.linalg.eigvalsh(kinetic_j(R, Ja, m) + np.diag(venv(R[1:-1])))
R2, Ja2, _ = build_map_full(venv, 0.05, 1024, 1.3, 1.5, 30.0)
evd = np.linalg.eigvalsh(kinetic_j(R2, Ja2, m) + np.diag(venv(R2[1:-1])))
bc = evc[evc < D - 5e-4]; bd = evd[evd < D - 5e-4]
worst = 0.0
for E in bc:
    i = np.searchsorted(bd, E)
    lo = bd[i-1] if i > 0 else -np.inf
    hi = bd[i] if i < len(bd) else np.inf
    dist = min(E - lo, hi - E); gap = hi - lo
    worst = max(worst, dist/gap)
print("worst dist/gap:", worst, " n_levels:", len(bc))

print("--- 66-level model at n=1024 (paper-scale count) ---")
a66 = np.sqrt(2 * m * D) / 66.5
print("a for 66 levels:", a66)
v66 = morse(D, a66, 3.0)
nb_analytic = int(np.floor(np.sqrt(2 * m * D) / a66 - 0.5)) + 1
R, Ja, _ = build_map_full(v66, D + 0.003, 1024, 1.3, 1.8, 120.0, refine=32)
ev = np.linalg.eigvalsh(kinetic_j(R, Ja, m) + np.diag(v66(R[1:-1])))
nb = int(np.sum(ev < D - 1e-12))
print(f"analytic={nb_analytic} numeric={nb}")
ex66 = morse_levels(D, a66, m, nb_analytic)
nall = min(nb, nb_analytic)
print("all-level rel err:", np.max(np.abs(ev[:nall]-ex66[:nall])/np.abs(ex66[:nall])))
