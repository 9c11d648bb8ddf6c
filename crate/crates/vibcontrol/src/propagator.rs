//! Chebychev propagation of two-channel wavepackets under the staggered-grid
//! field discretization, plus trajectory storage (in memory or spilled to
//! disk).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2};
use num_complex::Complex64;

use crate::error::{Result, VibError};
use crate::hamiltonian::{Channel, ChannelSystem, EigenBasis};

/// Two complex component functions on the shared grid, stored in the
/// volume-scaled convention so that the plain dot product is the
/// jacobian-weighted inner product.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    pub phi_g: Array1<Complex64>,
    pub phi_e: Array1<Complex64>,
}

impl StateVector {
    pub fn zeros(n: usize) -> Self {
        StateVector { phi_g: Array1::zeros(n), phi_e: Array1::zeros(n) }
    }

    /// Place a real eigenstate on one channel, zero on the other.
    pub fn from_eigenstate(basis: &EigenBasis, v: usize) -> Self {
        let n = basis.grid.n_points;
        let mut s = StateVector::zeros(n);
        let target = match basis.channel {
            Channel::Ground => &mut s.phi_g,
            Channel::Excited => &mut s.phi_e,
        };
        for (dst, &src) in target.iter_mut().zip(basis.state(v).iter()) {
            *dst = Complex64::new(src, 0.0);
        }
        s
    }

    pub fn n_points(&self) -> usize {
        self.phi_g.len()
    }

    /// `<self | other>` summed over both channels.
    pub fn inner(&self, other: &StateVector) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for (a, b) in self.phi_g.iter().zip(other.phi_g.iter()) {
            acc += a.conj() * b;
        }
        for (a, b) in self.phi_e.iter().zip(other.phi_e.iter()) {
            acc += a.conj() * b;
        }
        acc
    }

    pub fn norm_sq(&self) -> f64 {
        self.phi_g.iter().map(|c| c.norm_sqr()).sum::<f64>()
            + self.phi_e.iter().map(|c| c.norm_sqr()).sum::<f64>()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn channel_norm_sq(&self, channel: Channel) -> f64 {
        match channel {
            Channel::Ground => self.phi_g.iter().map(|c| c.norm_sqr()).sum(),
            Channel::Excited => self.phi_e.iter().map(|c| c.norm_sqr()).sum(),
        }
    }

    pub fn scale(&mut self, factor: Complex64) {
        self.phi_g.mapv_inplace(|c| c * factor);
        self.phi_e.mapv_inplace(|c| c * factor);
    }

    /// `<self | mu_hat | other>` for the channel-swapping dipole block.
    pub fn dipole_matrix_element(&self, other: &StateVector, dipole: f64) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for (a, b) in self.phi_g.iter().zip(other.phi_e.iter()) {
            acc += a.conj() * b;
        }
        for (a, b) in self.phi_e.iter().zip(other.phi_g.iter()) {
            acc += a.conj() * b;
        }
        acc * dipole
    }
}

/// State times t_k = k dt for k = 0..=n_steps; field samples live on the
/// interleaved midpoints.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub n_steps: usize,
    pub dt: f64,
}

impl TimeGrid {
    pub fn new(n_steps: usize, dt: f64) -> Result<Self> {
        if n_steps == 0 || dt <= 0.0 {
            return Err(VibError::invalid(format!(
                "time grid needs n_steps > 0 and dt > 0, got {n_steps}, {dt}"
            )));
        }
        Ok(TimeGrid { n_steps, dt })
    }

    /// Total duration T = n_steps * dt.
    pub fn duration(&self) -> f64 {
        self.n_steps as f64 * self.dt
    }

    pub fn state_times(&self) -> Vec<f64> {
        (0..=self.n_steps).map(|k| k as f64 * self.dt).collect()
    }

    /// Midpoints of consecutive state times, computed from them exactly.
    pub fn field_times(&self) -> Vec<f64> {
        let st = self.state_times();
        (0..self.n_steps).map(|k| 0.5 * (st[k] + st[k + 1])).collect()
    }
}

/// Bessel functions J_0..J_k_max at x >= 0 by downward (Miller) recurrence.
fn bessel_j_sequence(x: f64, k_max: usize) -> Vec<f64> {
    if x == 0.0 {
        let mut out = vec![0.0; k_max + 1];
        out[0] = 1.0;
        return out;
    }
    let start = k_max + 16 + (1.2 * x) as usize;
    let mut out = vec![0.0; k_max + 1];
    let mut next = 0.0f64;
    let mut cur = 1e-280f64;
    let mut norm = 0.0f64;
    for k in (0..=start).rev() {
        let prev = (2.0 * (k + 1) as f64 / x) * cur - next;
        next = cur;
        cur = prev;
        if k <= k_max {
            out[k] = cur;
        }
        // the normalization sum J_0 + 2 sum J_2j picks up even orders
        if k % 2 == 0 && k > 0 {
            norm += 2.0 * cur;
        }
        if cur.abs() > 1e270 {
            let s = 1e-270;
            cur *= s;
            next *= s;
            norm *= s;
            for v in out.iter_mut() {
                *v *= s;
            }
        }
    }
    norm += cur;
    for v in out.iter_mut() {
        *v /= norm;
    }
    out
}

/// Expansion coefficients for exp(-i H dt) after spectral normalization:
/// coefficient k multiplies T_k((H - ebar)/de). Includes the global phase
/// exp(-i ebar dt). Errors when the series has not decayed below `tol` by
/// `max_order`.
fn chebychev_coefficients(
    z: f64,
    ebar_dt: f64,
    tol: f64,
    max_order: usize,
) -> Result<Vec<Complex64>> {
    let x = z.abs();
    let js = bessel_j_sequence(x, max_order);
    let min_k = (x.ceil() as usize).max(2);
    let mut order = None;
    for k in min_k..max_order {
        if js[k].abs() < 0.5 * tol && js[k + 1].abs() < 0.5 * tol {
            order = Some(k);
            break;
        }
    }
    let order = order.ok_or_else(|| {
        VibError::numerical(format!(
            "Chebychev series not converged within order {max_order} for spectral half-range \
             phase z = {z:.3}; the spectral bounds are likely too tight"
        ))
    })?;
    let phase = Complex64::from_polar(1.0, -ebar_dt);
    // (-i sign(z))^k J_k(|z|), factor 2 for k >= 1
    let mi = Complex64::new(0.0, -z.signum());
    let mut c = Vec::with_capacity(order + 1);
    let mut mik = Complex64::new(1.0, 0.0);
    for (k, &jk) in js.iter().enumerate().take(order + 1) {
        let w = if k == 0 { 1.0 } else { 2.0 };
        c.push(phase * mik * (w * jk));
        mik *= mi;
    }
    Ok(c)
}

struct Workspace {
    x_pack: Array2<f64>,
    y_pack: Array2<f64>,
    phi0: StateVector,
    phi1: StateVector,
    phi2: StateVector,
    acc: StateVector,
}

impl Workspace {
    fn new(n: usize) -> Self {
        Workspace {
            x_pack: Array2::zeros((n, 4)),
            y_pack: Array2::zeros((n, 4)),
            phi0: StateVector::zeros(n),
            phi1: StateVector::zeros(n),
            phi2: StateVector::zeros(n),
            acc: StateVector::zeros(n),
        }
    }
}

/// Short-time propagator `exp(-i H(eps) dt)` by Chebychev expansion, with the
/// expansion order chosen adaptively from the spectral radius and the decay
/// of the Bessel coefficients.
pub struct ChebychevPropagator {
    pub system: Arc<ChannelSystem>,
    pub bounds: (f64, f64),
    pub tol: f64,
    ebar: f64,
    de: f64,
    ws: Workspace,
    coef_cache: Option<(f64, Vec<Complex64>)>,
}

impl ChebychevPropagator {
    pub fn new(system: Arc<ChannelSystem>, bounds: (f64, f64), tol: f64) -> Result<Self> {
        if !(tol > 0.0 && tol <= 1e-6) {
            return Err(VibError::invalid(format!("tolerance must be in (0, 1e-6], got {tol}")));
        }
        if !(bounds.1 > bounds.0) {
            return Err(VibError::invalid("spectral bounds must satisfy E_max > E_min"));
        }
        let n = system.n_points();
        Ok(ChebychevPropagator {
            system,
            bounds,
            tol,
            ebar: 0.5 * (bounds.0 + bounds.1),
            de: 0.5 * (bounds.1 - bounds.0),
            ws: Workspace::new(n),
            coef_cache: None,
        })
    }

    /// Default per-step tolerance.
    pub const DEFAULT_TOL: f64 = 1e-12;

    fn coefficients(&mut self, dt: f64) -> Result<&[Complex64]> {
        let fresh = match &self.coef_cache {
            Some((cached_dt, _)) => *cached_dt != dt,
            None => true,
        };
        if fresh {
            let z = self.de * dt;
            let max_order = (10.0 * z.abs()) as usize + 40;
            let coefs = chebychev_coefficients(z, self.ebar * dt, self.tol, max_order)
                .map_err(|e| {
                    VibError::numerical(format!(
                        "{e} (bounds [{:.4}, {:.4}], dt = {dt:.4})",
                        self.bounds.0, self.bounds.1
                    ))
                })?;
            self.coef_cache = Some((dt, coefs));
        }
        Ok(&self.coef_cache.as_ref().unwrap().1)
    }

    /// `out = (H(eps) - ebar) / de . input`, the spectrally normalized apply.
    fn apply_normalized(&mut self, eps: f64, which: usize) {
        let n = self.system.n_points();
        let (input, output) = match which {
            0 => (&self.ws.phi0, &mut self.ws.phi1),
            _ => (&self.ws.phi1, &mut self.ws.phi2),
        };
        // pack both channels' real and imaginary parts into an (n, 4) block
        let xg = input.phi_g.as_slice().unwrap();
        let xe = input.phi_e.as_slice().unwrap();
        {
            let xp = self.ws.x_pack.as_slice_mut().unwrap();
            for i in 0..n {
                xp[4 * i] = xg[i].re;
                xp[4 * i + 1] = xg[i].im;
                xp[4 * i + 2] = xe[i].re;
                xp[4 * i + 3] = xe[i].im;
            }
        }
        general_mat_mul(1.0, &self.system.kinetic.matrix, &self.ws.x_pack, 0.0, &mut self.ws.y_pack);
        let yp = self.ws.y_pack.as_slice().unwrap();
        let vg = self.system.v_g.as_slice().unwrap();
        let ve = self.system.v_e.as_slice().unwrap();
        let mu_eps = self.system.dipole * eps;
        let og = output.phi_g.as_slice_mut().unwrap();
        let oe = output.phi_e.as_slice_mut().unwrap();
        let inv_de = 1.0 / self.de;
        let ebar = self.ebar;
        for i in 0..n {
            let tg = Complex64::new(yp[4 * i], yp[4 * i + 1]);
            let te = Complex64::new(yp[4 * i + 2], yp[4 * i + 3]);
            let hg = tg + xg[i] * (vg[i] - ebar) + xe[i] * mu_eps;
            let he = te + xe[i] * (ve[i] - ebar) + xg[i] * mu_eps;
            og[i] = hg * inv_de;
            oe[i] = he * inv_de;
        }
    }

    /// Advance `psi` by one step of `exp(-i H(eps) dt)` in place.
    pub fn step(&mut self, psi: &mut StateVector, eps: f64, dt: f64) -> Result<()> {
        self.coefficients(dt)?;
        let coefs: &[Complex64] = &self.coef_cache.as_ref().unwrap().1;
        let n = psi.n_points();
        let order = coefs.len() - 1;
        let c0 = coefs[0];
        let c1 = if order >= 1 { coefs[1] } else { Complex64::new(0.0, 0.0) };
        let coefs: Vec<Complex64> = coefs.to_vec();
        let in_norm = psi.norm_sq();

        std::mem::swap(&mut self.ws.phi0, psi);
        self.apply_normalized(eps, 0);
        {
            let p0g = self.ws.phi0.phi_g.as_slice().unwrap();
            let p0e = self.ws.phi0.phi_e.as_slice().unwrap();
            let p1g = self.ws.phi1.phi_g.as_slice().unwrap();
            let p1e = self.ws.phi1.phi_e.as_slice().unwrap();
            let ag = self.ws.acc.phi_g.as_slice_mut().unwrap();
            let ae = self.ws.acc.phi_e.as_slice_mut().unwrap();
            for i in 0..n {
                ag[i] = c0 * p0g[i] + c1 * p1g[i];
                ae[i] = c0 * p0e[i] + c1 * p1e[i];
            }
        }
        for &ck in coefs.iter().skip(2) {
            // phi2 = 2 Hn phi1 - phi0, then rotate
            self.apply_normalized(eps, 1);
            let p0g = self.ws.phi0.phi_g.as_slice().unwrap();
            let p0e = self.ws.phi0.phi_e.as_slice().unwrap();
            let p2g = self.ws.phi2.phi_g.as_slice_mut().unwrap();
            let p2e = self.ws.phi2.phi_e.as_slice_mut().unwrap();
            let ag = self.ws.acc.phi_g.as_slice_mut().unwrap();
            let ae = self.ws.acc.phi_e.as_slice_mut().unwrap();
            for i in 0..n {
                p2g[i] = 2.0 * p2g[i] - p0g[i];
                p2e[i] = 2.0 * p2e[i] - p0e[i];
                ag[i] += ck * p2g[i];
                ae[i] += ck * p2e[i];
            }
            // phi0 <- phi1 <- phi2
            std::mem::swap(&mut self.ws.phi0, &mut self.ws.phi1);
            std::mem::swap(&mut self.ws.phi1, &mut self.ws.phi2);
        }
        // a unitary step can only lose norm to truncation; growth means the
        // spectrum escaped the bounds and the recurrence is diverging
        let out_norm = self.ws.acc.norm_sq();
        if !out_norm.is_finite() || out_norm > in_norm * (1.0 + 1e-3) + 1e-300 {
            return Err(VibError::numerical(format!(
                "Chebychev step amplified the norm ({} -> {}); spectral bounds [{:.4}, {:.4}] \
                 do not enclose the Hamiltonian spectrum",
                in_norm.sqrt(),
                out_norm.sqrt(),
                self.bounds.0,
                self.bounds.1
            )));
        }
        std::mem::swap(psi, &mut self.ws.acc);
        Ok(())
    }
}

/// One Chebychev step as a pure function; prefer [`ChebychevPropagator`] for
/// repeated stepping.
pub fn chebychev_step(
    psi: &StateVector,
    system: &Arc<ChannelSystem>,
    eps_mid: f64,
    dt: f64,
    bounds: (f64, f64),
    tol: f64,
) -> Result<StateVector> {
    let mut prop = ChebychevPropagator::new(system.clone(), bounds, tol)?;
    let mut out = psi.clone();
    prop.step(&mut out, eps_mid, dt)?;
    Ok(out)
}

/// Receives intermediate states during propagation.
pub trait TrajectorySink {
    fn record(&mut self, index: usize, t: f64, state: &StateVector) -> Result<()>;
}

/// Sink that drops everything.
pub struct NullSink;

impl TrajectorySink for NullSink {
    fn record(&mut self, _index: usize, _t: f64, _state: &StateVector) -> Result<()> {
        Ok(())
    }
}

/// Random access to a stored trajectory.
pub trait Trajectory: TrajectorySink {
    fn len(&self) -> usize;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
    fn read_into(&mut self, index: usize, state: &mut StateVector) -> Result<()>;
    fn time(&self, index: usize) -> f64;
}

/// Trajectory held in memory, indexed by state-time index.
pub struct MemoryTrajectory {
    states: Vec<Option<StateVector>>,
    times: Vec<f64>,
}

impl MemoryTrajectory {
    pub fn new(n_slots: usize) -> Self {
        MemoryTrajectory { states: (0..n_slots).map(|_| None).collect(), times: vec![0.0; n_slots] }
    }

    pub fn state(&self, index: usize) -> Option<&StateVector> {
        self.states[index].as_ref()
    }
}

impl TrajectorySink for MemoryTrajectory {
    fn record(&mut self, index: usize, t: f64, state: &StateVector) -> Result<()> {
        if index >= self.states.len() {
            return Err(VibError::invalid(format!(
                "trajectory index {index} out of range {}",
                self.states.len()
            )));
        }
        self.states[index] = Some(state.clone());
        self.times[index] = t;
        Ok(())
    }
}

impl Trajectory for MemoryTrajectory {
    fn len(&self) -> usize {
        self.states.len()
    }

    fn read_into(&mut self, index: usize, state: &mut StateVector) -> Result<()> {
        match &self.states[index] {
            Some(s) => {
                state.phi_g.assign(&s.phi_g);
                state.phi_e.assign(&s.phi_e);
                Ok(())
            }
            None => Err(VibError::invalid(format!("trajectory slot {index} was never recorded"))),
        }
    }

    fn time(&self, index: usize) -> f64 {
        self.times[index]
    }
}

const TRAJ_MAGIC: &[u8; 8] = b"VCTRAJ01";

/// Trajectory spilled to a binary file: a 32-byte header (magic, n_points,
/// n_steps, dt) followed by one fixed-size record per state time holding both
/// channels as little-endian f64 (re, im) pairs.
pub struct DiskTrajectory {
    file: File,
    path: PathBuf,
    n_points: usize,
    n_slots: usize,
    dt: f64,
    buf: Vec<u8>,
}

impl DiskTrajectory {
    const HEADER_LEN: u64 = 32;

    pub fn create(path: impl AsRef<Path>, n_points: usize, n_steps: usize, dt: f64) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let mut file = File::options()
            .read(true)
            .write(true)
            .create(true)
            .truncate(true)
            .open(&path)?;
        let mut header = [0u8; 32];
        header[..8].copy_from_slice(TRAJ_MAGIC);
        header[8..16].copy_from_slice(&(n_points as u64).to_le_bytes());
        header[16..24].copy_from_slice(&(n_steps as u64).to_le_bytes());
        header[24..32].copy_from_slice(&dt.to_le_bytes());
        file.write_all(&header)?;
        let record = 32 * n_points;
        Ok(DiskTrajectory { file, path, n_points, n_slots: n_steps + 1, dt, buf: vec![0u8; record] })
    }

    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let mut file = File::options().read(true).write(true).open(&path)?;
        let mut header = [0u8; 32];
        file.read_exact(&mut header)?;
        if &header[..8] != TRAJ_MAGIC {
            return Err(VibError::invalid(format!(
                "{} is not a trajectory file (bad magic)",
                path.display()
            )));
        }
        let n_points = u64::from_le_bytes(header[8..16].try_into().unwrap()) as usize;
        let n_steps = u64::from_le_bytes(header[16..24].try_into().unwrap()) as usize;
        let dt = f64::from_le_bytes(header[24..32].try_into().unwrap());
        let record = 32 * n_points;
        Ok(DiskTrajectory { file, path, n_points, n_slots: n_steps + 1, dt, buf: vec![0u8; record] })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    fn offset(&self, index: usize) -> u64 {
        Self::HEADER_LEN + (index as u64) * (32 * self.n_points as u64)
    }
}

impl TrajectorySink for DiskTrajectory {
    fn record(&mut self, index: usize, _t: f64, state: &StateVector) -> Result<()> {
        if index >= self.n_slots {
            return Err(VibError::invalid(format!("trajectory index {index} out of range {}", self.n_slots)));
        }
        if state.n_points() != self.n_points {
            return Err(VibError::invalid("state size does not match trajectory file"));
        }
        let mut pos = 0;
        for c in state.phi_g.iter().chain(state.phi_e.iter()) {
            self.buf[pos..pos + 8].copy_from_slice(&c.re.to_le_bytes());
            self.buf[pos + 8..pos + 16].copy_from_slice(&c.im.to_le_bytes());
            pos += 16;
        }
        self.file.seek(SeekFrom::Start(self.offset(index)))?;
        self.file.write_all(&self.buf)?;
        Ok(())
    }
}

impl Trajectory for DiskTrajectory {
    fn len(&self) -> usize {
        self.n_slots
    }

    fn read_into(&mut self, index: usize, state: &mut StateVector) -> Result<()> {
        if index >= self.n_slots {
            return Err(VibError::invalid(format!("trajectory index {index} out of range {}", self.n_slots)));
        }
        self.file.seek(SeekFrom::Start(self.offset(index)))?;
        self.file.read_exact(&mut self.buf)?;
        let n = self.n_points;
        if state.n_points() != n {
            *state = StateVector::zeros(n);
        }
        for i in 0..2 * n {
            let re = f64::from_le_bytes(self.buf[16 * i..16 * i + 8].try_into().unwrap());
            let im = f64::from_le_bytes(self.buf[16 * i + 8..16 * i + 16].try_into().unwrap());
            let c = Complex64::new(re, im);
            if i < n {
                state.phi_g[i] = c;
            } else {
                state.phi_e[i - n] = c;
            }
        }
        Ok(())
    }

    fn time(&self, index: usize) -> f64 {
        index as f64 * self.dt
    }
}

fn check_drift(initial: f64, current: f64) -> Result<()> {
    let drift = (current - initial).abs() / initial.max(f64::MIN_POSITIVE);
    if !current.is_finite() || drift > 1e-6 {
        return Err(VibError::numerical(format!(
            "norm drifted by {drift:.3e} during propagation; check spectral bounds and tolerance"
        )));
    }
    Ok(())
}

/// Propagate forward over the whole time grid with the staggered midpoint
/// field, streaming every state (including the initial one) to the sink.
pub fn propagate(
    psi0: &StateVector,
    field_values: &[f64],
    prop: &mut ChebychevPropagator,
    tgrid: &TimeGrid,
    sink: &mut dyn TrajectorySink,
) -> Result<StateVector> {
    if field_values.len() != tgrid.n_steps {
        return Err(VibError::invalid(format!(
            "field has {} samples but the time grid has {} steps",
            field_values.len(),
            tgrid.n_steps
        )));
    }
    let norm0 = psi0.norm();
    let mut psi = psi0.clone();
    sink.record(0, 0.0, &psi)?;
    for (k, &eps) in field_values.iter().enumerate() {
        prop.step(&mut psi, eps, tgrid.dt)?;
        sink.record(k + 1, (k + 1) as f64 * tgrid.dt, &psi)?;
    }
    check_drift(norm0, psi.norm())?;
    Ok(psi)
}

/// Propagate the adjoint state backward from t = T to t = 0 under the same
/// staggered field (H is symmetric for a real field, so forward and adjoint
/// propagation share one kernel with the sign of dt flipped). Every
/// intermediate state is recorded at its state-time index.
pub fn propagate_adjoint(
    chi_t: &StateVector,
    field_values: &[f64],
    prop: &mut ChebychevPropagator,
    tgrid: &TimeGrid,
    sink: &mut dyn TrajectorySink,
) -> Result<StateVector> {
    if field_values.len() != tgrid.n_steps {
        return Err(VibError::invalid(format!(
            "field has {} samples but the time grid has {} steps",
            field_values.len(),
            tgrid.n_steps
        )));
    }
    let norm0 = chi_t.norm();
    let mut gamma = chi_t.clone();
    let t_total = tgrid.duration();
    sink.record(tgrid.n_steps, t_total, &gamma)?;
    for k in (0..tgrid.n_steps).rev() {
        prop.step(&mut gamma, field_values[k], -tgrid.dt)?;
        sink.record(k, k as f64 * tgrid.dt, &gamma)?;
    }
    check_drift(norm0, gamma.norm())?;
    Ok(gamma)
}
