import numpy as np
from scipy.special import jv
from jac_test import build_map_full, kinetic_j
from grid_pilot import morse, morse_levels

# ---------------- desk-scale two-channel model ----------------
m = 2000.0
Dg, ag, reg = 0.02, 0.4587, 2.5
De, ae, ree, Te = 0.016, 0.45, 3.2, 0.02
mu = 1.0

vg = morse(Dg, ag, reg)
ve = morse(De, ae, ree, off=Te)
venv = lambda r: np.minimum(vg(r), ve(r))

n = 256
rmin, rmax = 0.8, 14.0
emax = 0.06
beta = 1.3
R, Jana, Jcd = build_map_full(venv, emax, n, beta, rmin, rmax)
T = kinetic_j(R, Jana, m)
Vg = vg(R[1:-1]); Ve = ve(R[1:-1])

evg, vecg = np.linalg.eigh(T + np.diag(Vg))
eve, vece = np.linalg.eigh(T + np.diag(Ve))
nbg = int(np.sum(evg < Dg - 1e-12))
nbe = int(np.sum(eve < Te + De - 1e-12))
print("ground bound:", nbg, " excited bound:", nbe)
print("E_g[0..9]:", evg[:10])
print("analytic:", morse_levels(Dg, ag, m, 10))

# FC map from v=8 and v=0
fc8 = (vecg[:, 8] @ vece[:, :nbe]) ** 2
fc0 = (vecg[:, 0] @ vece[:, :nbe]) ** 2
w8 = eve[:nbe] - evg[8]
w0 = eve[:nbe] - evg[0]
i8 = np.argmax(fc8); i0 = np.argmax(fc0)
print(f"FC peak v=8: v'={i8} FC={fc8[i8]:.3f} freq={w8[i8]:.5f}")
print(f"FC peak v=0: v'={i0} FC={fc0[i0]:.3f} freq={w0[i0]:.5f}")
print("fc8 top5:", np.argsort(fc8)[-5:], np.sort(fc8)[-5:])
print("fc0 top5:", np.argsort(fc0)[-5:], np.sort(fc0)[-5:])

# spectral bounds
tmax = np.linalg.eigvalsh(T)[-1]
print("kinetic max:", tmax)

# ---------------- Chebyshev propagator ----------------
def make_cheb(dt, emin, emax_h, tol=1e-12):
    ebar = 0.5 * (emax_h + emin)
    de = 0.5 * (emax_h - emin)
    z = de * dt
    K = max(int(abs(z)) + 30, 12)
    # Bessel J_k(|z|)
    ks = np.arange(K + 1)
    js = jv(ks, abs(z))
    # truncate
    kk = K
    for k in range(max(2, int(abs(z))), K):
        if abs(js[k]) < tol and abs(js[k + 1]) < tol:
            kk = k
            break
    sgn = 1.0 if z >= 0 else -1.0
    coef = 2.0 * ((-1j * sgn) ** ks[:kk + 1]) * js[:kk + 1]
    coef[0] *= 0.5
    phase = np.exp(-1j * ebar * dt)
    return coef * phase, ebar, de, kk

_X = None
def hmul(pg, pe, eps):
    global _X
    if _X is None or _X.shape[0] != len(pg):
        _X = np.empty((len(pg), 4))
    _X[:, 0] = pg.real; _X[:, 1] = pg.imag
    _X[:, 2] = pe.real; _X[:, 3] = pe.imag
    Y = T @ _X
    yg = (Y[:, 0] + 1j * Y[:, 1]) + Vg * pg + (mu * eps) * pe
    ye = (Y[:, 2] + 1j * Y[:, 3]) + Ve * pe + (mu * eps) * pg
    return yg, ye

def cheb_step(pg, pe, eps, coef, ebar, de):
    # phi_0 = psi, phi_1 = Hn psi, recurrence; Hn = (H-ebar)/de
    f0g, f0e = pg, pe
    hg, he = hmul(pg, pe, eps)
    f1g = (hg - ebar * pg) / de
    f1e = (he - ebar * pe) / de
    outg = coef[0] * f0g + coef[1] * f1g
    oute = coef[0] * f0e + coef[1] * f1e
    for k in range(2, len(coef)):
        hg, he = hmul(f1g, f1e, eps)
        f2g = 2.0 * (hg - ebar * f1g) / de - f0g
        f2e = 2.0 * (he - ebar * f1e) / de - f0e
        outg += coef[k] * f2g
        oute += coef[k] * f2e
        f0g, f1g = f1g, f2g
        f0e, f1e = f1e, f2e
    return outg, oute

# ---------------- Krotov ----------------
def propagate(pg, pe, eps_arr, coef, ebar, de, store=False):
    traj = [(pg.copy(), pe.copy())] if store else None
    for k in range(len(eps_arr)):
        pg, pe = cheb_step(pg, pe, eps_arr[k], coef, ebar, de)
        if store:
            traj.append((pg.copy(), pe.copy()))
    return pg, pe, traj

def krotov(psi0, target, eps0, S, dt, nt, alpha, iters, bounds, ftarget=0.99):
    emin_h, emax_h = bounds
    coef_f, ebar, de, kk = make_cheb(dt, emin_h, emax_h)
    coef_b, _, _, _ = make_cheb(-dt, emin_h, emax_h)
    print("cheb order:", kk)
    eps = eps0.copy()
    # initial forward
    pg, pe, _ = propagate(psi0[0], psi0[1], eps, coef_f, ebar, de)
    c = np.vdot(target[0], pg) + np.vdot(target[1], pe)
    F = abs(c) ** 2
    print(f"iter 0: F={F:.6f}")
    hist = [F]
    for it in range(1, iters + 1):
        # backward from gamma(T) = c*target
        gg, ge = c * target[0], c * target[1]
        gtraj = [(gg.copy(), ge.copy())]
        for k in range(nt - 1, -1, -1):
            gg, ge = cheb_step(gg, ge, eps[k], coef_b, ebar, de)
            gtraj.append((gg.copy(), ge.copy()))
        gtraj.reverse()  # gtraj[k] = gamma(t_k)
        # forward sweep with update
        pg, pe = psi0[0].copy(), psi0[1].copy()
        eps_new = np.empty_like(eps)
        pen = 0.0
        for k in range(nt):
            gg, ge = gtraj[k]
            # <gamma|mu|psi> couples channels
            ovl = mu * (np.vdot(gg, pe) + np.vdot(ge, pg))
            deps = (S[k] / (2.0 * alpha)) * ovl.imag
            eps_new[k] = eps[k] + deps
            pen += (alpha / max(S[k], 1e-8)) * deps * deps * dt
            pg, pe = cheb_step(pg, pe, eps_new[k], coef_f, ebar, de)
        c_new = np.vdot(target[0], pg) + np.vdot(target[1], pe)
        F_new = abs(c_new) ** 2
        d1 = abs(c - c_new) ** 2
        J_new = -F_new + pen
        J_old = -F
        mono = "OK" if J_new <= J_old + 1e-9 else "VIOLATION"
        if it % 10 == 0 or it <= 3 or F_new >= ftarget:
            print(f"iter {it}: F={F_new:.6f} J={J_new:.6f} pen={pen:.3e} d1={d1:.3e} {mono}")
        eps = eps_new
        c, F = c_new, F_new
        hist.append(F)
        if F >= ftarget:
            break
    return eps, F, it, hist

# problem setup
x_g = vecg[:, 8].astype(complex)
psi0 = (x_g, np.zeros(n, dtype=complex))
targ = (vecg[:, 0].astype(complex), np.zeros(n, dtype=complex))

spacing8 = evg[8] - evg[7]
Tstar = 2 * np.pi / spacing8
Ttot = 2 * Tstar
print(f"T* = {Tstar:.1f}  T = {Ttot:.1f} au")
w_hi = max(w8[i8], w0[i0]); print("max carrier:", w_hi)
dt_max = 2 * np.pi / w_hi / 12
nt = int(np.ceil(Ttot / dt_max))
nt = int(np.ceil(nt / 10.0)) * 10
dt = Ttot / nt
print(f"nt={nt} dt={dt:.2f}")

tf = (np.arange(nt) + 0.5) * dt
S = np.sin(np.pi * tf / Ttot) ** 2

eps0_amp = 0.004
guess = eps0_amp * S * (np.cos(w8[i8] * tf) + np.cos(w0[i0] * tf))

emin_b = min(Vg.min(), Ve.min()) - mu * 0.25
emax_b = tmax + max(Vg.max(), Ve.max()) + mu * 0.25
print("bounds:", emin_b, emax_b)

import time
t0 = time.time()
eps_opt, F, niters, hist = krotov(psi0, targ, guess, S, dt, nt, alpha=2.0, iters=120, bounds=(emin_b, emax_b))
print(f"final F={F:.5f} after {niters} iters, {time.time()-t0:.1f} s wall")
np.save("eps_opt.npy", eps_opt)
np.save("hist.npy", np.array(hist))
