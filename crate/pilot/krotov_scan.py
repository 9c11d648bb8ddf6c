import sys
import numpy as np
from scipy.special import jv
from jac_test import build_map_full, kinetic_j
from grid_pilot import morse, morse_levels

m = 2000.0
Dg, ag, reg = 0.02, 0.4587, 2.5
De, ae, ree, Te = 0.016, 0.45, 3.2, 0.02
mu = 1.0
vg = morse(Dg, ag, reg)
ve = morse(De, ae, ree, off=Te)
venv = lambda r: np.minimum(vg(r), ve(r))

n = 256
R, Jana, Jcd = build_map_full(venv, 0.05, n, 1.3, 0.8, 12.0)
T = kinetic_j(R, Jana, m)
Vg = vg(R[1:-1]); Ve = ve(R[1:-1])
evg, vecg = np.linalg.eigh(T + np.diag(Vg))
eve, vece = np.linalg.eigh(T + np.diag(Ve))
nbe = int(np.sum(eve < Te + De - 1e-12))
fc8 = (vecg[:, 8] @ vece[:, :nbe]) ** 2
fc0 = (vecg[:, 0] @ vece[:, :nbe]) ** 2
w8 = eve[:nbe] - evg[8]; w0 = eve[:nbe] - evg[0]
i8, i0 = np.argmax(fc8), np.argmax(fc0)
tmax = np.linalg.eigvalsh(T)[-1]

spacing8 = evg[8] - evg[7]
Ttot = 2 * (2 * np.pi / spacing8)
w_hi = max(w8[i8], w0[i0])
nt = int(np.ceil(Ttot / (2 * np.pi / w_hi / 12) / 10.0)) * 10
dt = Ttot / nt
tf = (np.arange(nt) + 0.5) * dt
S = np.sin(np.pi * tf / Ttot) ** 2

EPS_BUDGET = 0.5
emin_b = min(Vg.min(), Ve.min()) - mu * EPS_BUDGET
emax_b = tmax + max(Vg.max(), Ve.max()) + mu * EPS_BUDGET

def make_cheb(dtv, tol=1e-12):
    ebar = 0.5 * (emax_b + emin_b); de = 0.5 * (emax_b - emin_b)
    z = de * dtv
    K = max(int(abs(z)) + 40, 12)
    ks = np.arange(K + 1); js = jv(ks, abs(z))
    kk = K
    for k in range(max(2, int(abs(z))), K):
        if abs(js[k]) < tol and abs(js[k + 1]) < tol:
            kk = k; break
    sgn = 1.0 if z >= 0 else -1.0
    coef = 2.0 * ((-1j * sgn) ** ks[:kk+1]) * js[:kk+1]
    coef[0] *= 0.5
    return coef * np.exp(-1j * ebar * dtv), ebar, de

coef_f, ebar, de = make_cheb(dt)
coef_b, _, _ = make_cheb(-dt)

_X = np.empty((n, 4))
def hmul(pg, pe, eps):
    _X[:, 0] = pg.real; _X[:, 1] = pg.imag; _X[:, 2] = pe.real; _X[:, 3] = pe.imag
    Y = T @ _X
    return (Y[:, 0] + 1j*Y[:, 1]) + Vg*pg + (mu*eps)*pe, (Y[:, 2] + 1j*Y[:, 3]) + Ve*pe + (mu*eps)*pg

def cheb_step(pg, pe, eps, coef):
    f0g, f0e = pg, pe
    hg, he = hmul(pg, pe, eps)
    f1g = (hg - ebar*pg)/de; f1e = (he - ebar*pe)/de
    outg = coef[0]*f0g + coef[1]*f1g; oute = coef[0]*f0e + coef[1]*f1e
    for k in range(2, len(coef)):
        hg, he = hmul(f1g, f1e, eps)
        f2g = 2.0*(hg - ebar*f1g)/de - f0g; f2e = 2.0*(he - ebar*f1e)/de - f0e
        outg += coef[k]*f2g; oute += coef[k]*f2e
        f0g, f1g = f1g, f2g; f0e, f1e = f1e, f2e
    return outg, oute

def run(alpha_small, n_small, alpha_large, amp, iters, label):
    psi0 = (vecg[:, 8].astype(complex), np.zeros(n, complex))
    targ = (vecg[:, 0].astype(complex), np.zeros(n, complex))
    eps = amp * S * (np.cos(w8[i8]*tf) + np.cos(w0[i0]*tf))
    pg, pe = psi0[0].copy(), psi0[1].copy()
    for k in range(nt):
        pg, pe = cheb_step(pg, pe, eps[k], coef_f)
    c = np.vdot(targ[0], pg) + np.vdot(targ[1], pe)
    F = abs(c)**2
    print(f"[{label}] iter 0: F={F:.2e}", flush=True)
    for it in range(1, iters+1):
        alpha = alpha_small if it <= n_small else alpha_large
        gg, ge = c*targ[0], c*targ[1]
        gtraj = [(gg.copy(), ge.copy())]
        for k in range(nt-1, -1, -1):
            gg, ge = cheb_step(gg, ge, eps[k], coef_b)
            gtraj.append((gg.copy(), ge.copy()))
        gtraj.reverse()
        pg, pe = psi0[0].copy(), psi0[1].copy()
        pen = 0.0
        for k in range(nt):
            gg, ge = gtraj[k]
            ovl = mu*(np.vdot(gg, pe) + np.vdot(ge, pg))
            deps = (S[k]/(2.0*alpha))*ovl.imag
            eps[k] = eps[k] + deps
            pen += (alpha/max(S[k], 1e-8))*deps*deps*dt
            pg, pe = cheb_step(pg, pe, eps[k], coef_f)
        nrm = np.sqrt(np.vdot(pg,pg).real + np.vdot(pe,pe).real)
        c_new = np.vdot(targ[0], pg) + np.vdot(targ[1], pe)
        F_new = abs(c_new)**2
        J_new = -F_new + pen; J_old = -F
        bad = "VIOL" if J_new > J_old + 1e-9 else "ok"
        if it % 20 == 0 or F_new >= 0.99 or bad == "VIOL":
            print(f"[{label}] it {it}: F={F_new:.4f} pen={pen:.2e} |eps|max={np.abs(eps).max():.4f} norm={nrm:.6f} {bad}", flush=True)
        c, F = c_new, F_new
        if F >= 0.99:
            print(f"[{label}] CONVERGED at iter {it}", flush=True)
            break
        if not np.isfinite(F):
            print(f"[{label}] DIVERGED", flush=True)
            break
    return F

cfg = sys.argv[1]
if cfg == "a":
    run(2.0, 20, 100.0, 0.004, 200, "a: 2/100@20 amp4e-3")
elif cfg == "b":
    run(2.0, 20, 30.0, 0.004, 200, "b: 2/30@20 amp4e-3")
elif cfg == "c":
    run(5.0, 30, 300.0, 0.008, 200, "c: 5/300@30 amp8e-3")
elif cfg == "d":
    run(10.0, 40, 100.0, 0.008, 200, "d: 10/100@40 amp8e-3")
