//! Two-channel Hamiltonian assembly, vibrational eigenstates by dense
//! diagonalization, and Franck-Condon analysis.

use std::sync::Arc;

use ndarray::{Array1, Array2};

use crate::error::{Result, VibError};
use crate::grid::{kinetic_matrix, KineticOperator, SpatialGrid};
use crate::linalg::symmetric_eigen;
use crate::potential::PotentialCurve;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channel {
    Ground,
    Excited,
}

impl std::fmt::Display for Channel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Channel::Ground => write!(f, "ground"),
            Channel::Excited => write!(f, "excited"),
        }
    }
}

/// Two potential curves sampled on a shared grid, the kinetic operator, and a
/// constant dipole coupling; the field enters only through the off-diagonal
/// block `mu * eps(t)`.
#[derive(Debug, Clone)]
pub struct ChannelSystem {
    pub grid: Arc<SpatialGrid>,
    pub v_g: Array1<f64>,
    pub v_e: Array1<f64>,
    pub kinetic: KineticOperator,
    pub dipole: f64,
    pub asymptote_g: f64,
    pub asymptote_e: f64,
}

impl ChannelSystem {
    pub fn n_points(&self) -> usize {
        self.grid.n_points
    }

    pub fn potential(&self, channel: Channel) -> &Array1<f64> {
        match channel {
            Channel::Ground => &self.v_g,
            Channel::Excited => &self.v_e,
        }
    }

    pub fn asymptote(&self, channel: Channel) -> f64 {
        match channel {
            Channel::Ground => self.asymptote_g,
            Channel::Excited => self.asymptote_e,
        }
    }

    /// Dense single-channel Hamiltonian `T + diag(V)`.
    pub fn channel_matrix(&self, channel: Channel) -> Array2<f64> {
        let mut h = self.kinetic.matrix.clone();
        let v = self.potential(channel);
        for i in 0..self.n_points() {
            h[[i, i]] += v[i];
        }
        h
    }
}

/// Sample both curves on the grid and store the constant dipole.
pub fn build_system(
    g_curve: &PotentialCurve,
    e_curve: &PotentialCurve,
    grid: Arc<SpatialGrid>,
    mass: f64,
    dipole: f64,
) -> Result<ChannelSystem> {
    let r = grid.r.as_slice().unwrap();
    let v_g = Array1::from(g_curve.values(r)?);
    let v_e = Array1::from(e_curve.values(r)?);
    let kinetic = kinetic_matrix(&grid, mass)?;
    Ok(ChannelSystem {
        grid,
        v_g,
        v_e,
        kinetic,
        dipole,
        asymptote_g: g_curve.asymptote,
        asymptote_e: e_curve.asymptote,
    })
}

/// Vibrational eigenpairs of one channel.
///
/// States are columns, unit-normalized under the jacobian-weighted inner
/// product (a plain dot product in the scaled representation) with the first
/// significant lobe positive.
#[derive(Debug, Clone)]
pub struct EigenBasis {
    pub channel: Channel,
    pub energies: Array1<f64>,
    pub states: Array2<f64>,
    /// Count of levels below the channel asymptote, over the full spectrum.
    pub n_bound: usize,
    pub grid: Arc<SpatialGrid>,
}

impl EigenBasis {
    pub fn n_states(&self) -> usize {
        self.energies.len()
    }

    pub fn state(&self, v: usize) -> ndarray::ArrayView1<'_, f64> {
        self.states.column(v)
    }
}

/// Lowest `n_requested` eigenpairs of `T + V_channel` by dense diagonalization.
pub fn eigenstates(system: &ChannelSystem, channel: Channel, n_requested: usize) -> Result<EigenBasis> {
    let n = system.n_points();
    if n_requested > n {
        return Err(VibError::invalid(format!(
            "requested {n_requested} eigenstates from a {n}-point grid"
        )));
    }
    let h = system.channel_matrix(channel);
    let (vals, vecs) = symmetric_eigen(&h)
        .map_err(|e| VibError::numerical(format!("{channel} channel diagonalization: {e}")))?;

    let asym = system.asymptote(channel);
    let n_bound = vals.iter().filter(|&&e| e < asym - 1e-12).count();

    let energies = vals.slice(ndarray::s![..n_requested]).to_owned();
    let mut states = vecs.slice(ndarray::s![.., ..n_requested]).to_owned();
    // sign convention: first significant lobe positive
    for mut col in states.columns_mut() {
        let scale = col.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
        if let Some(first) = col.iter().find(|&&x| x.abs() > 1e-8 * scale) {
            if *first < 0.0 {
                col.mapv_inplace(|x| -x);
            }
        }
    }
    Ok(EigenBasis { channel, energies, states, n_bound, grid: system.grid.clone() })
}

/// Squared overlaps and transition frequencies between two eigenbases.
#[derive(Debug, Clone)]
pub struct FranckCondonMap {
    /// `factors[[v, vp]] = |<g_v | e_vp>|^2`
    pub factors: Array2<f64>,
    /// `frequencies[[v, vp]] = E~e_vp - E~g_v` (hartree)
    pub frequencies: Array2<f64>,
}

impl FranckCondonMap {
    /// Index and frequency of the strongest overlap out of level `v`.
    pub fn peak_from(&self, v: usize) -> (usize, f64, f64) {
        let row = self.factors.row(v);
        let (mut best, mut best_f) = (0usize, -1.0f64);
        for (j, &f) in row.iter().enumerate() {
            if f > best_f {
                best = j;
                best_f = f;
            }
        }
        (best, best_f, self.frequencies[[v, best]])
    }
}

/// Overlap map between ground and excited bases on the same grid.
pub fn franck_condon_map(ground: &EigenBasis, excited: &EigenBasis) -> Result<FranckCondonMap> {
    if !ground.grid.same_grid(&excited.grid) {
        return Err(VibError::invalid("Franck-Condon map requires both bases on the same grid"));
    }
    let overlaps = ground.states.t().dot(&excited.states);
    let factors = overlaps.mapv(|x| x * x);
    let nv = ground.n_states();
    let nvp = excited.n_states();
    let mut frequencies = Array2::zeros((nv, nvp));
    for v in 0..nv {
        for vp in 0..nvp {
            frequencies[[v, vp]] = excited.energies[vp] - ground.energies[v];
        }
    }
    Ok(FranckCondonMap { factors, frequencies })
}

/// Rigorous enclosure of the coupled-Hamiltonian spectrum for any field value
/// with `|eps| <= eps_max`:
/// `[min V - mu eps_max, max kinetic eigenvalue + max V + mu eps_max]`.
pub fn spectral_bounds(system: &ChannelSystem, eps_max: f64) -> (f64, f64) {
    let coupling = system.dipole.abs() * eps_max.abs();
    let v_min = system
        .v_g
        .iter()
        .chain(system.v_e.iter())
        .cloned()
        .fold(f64::INFINITY, f64::min);
    let v_max = system
        .v_g
        .iter()
        .chain(system.v_e.iter())
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    (v_min - coupling, system.kinetic.max_eigenvalue + v_max + coupling)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_mapped_grid;
    use crate::potential::{morse_level, morse_level_count};
    use approx::assert_relative_eq;

    fn morse_system(n: usize) -> ChannelSystem {
        let g = PotentialCurve::morse(0.02, 0.8, 2.5, 0.0, "g").unwrap();
        let e = PotentialCurve::morse(0.02, 0.8, 2.5, 0.0, "e").unwrap();
        let grid = build_mapped_grid(&g, 0.08, n, 1.3, 1.3, 20.0).unwrap();
        build_system(&g, &e, Arc::new(grid), 20000.0, 1.0).unwrap()
    }

    #[test]
    fn identical_curves_give_identical_channels() {
        let sys = morse_system(64);
        assert_eq!(sys.v_g, sys.v_e);
        let hg = sys.channel_matrix(Channel::Ground);
        let he = sys.channel_matrix(Channel::Excited);
        assert_eq!(hg, he);
    }

    #[test]
    fn morse_bound_count_matches_analytic() {
        let sys = morse_system(512);
        let basis = eigenstates(&sys, Channel::Ground, 40).unwrap();
        assert_eq!(basis.n_bound, morse_level_count(0.02, 0.8, 20000.0));
    }

    #[test]
    fn morse_levels_match_closed_form() {
        let sys = morse_system(512);
        let basis = eigenstates(&sys, Channel::Ground, 10).unwrap();
        for v in 0..10 {
            let exact = morse_level(0.02, 0.8, 20000.0, v);
            let rel = (basis.energies[v] - exact).abs() / exact;
            assert!(rel < 1e-7, "v={v} rel={rel}");
        }
    }

    #[test]
    fn box_levels_scale_quadratically() {
        let r: Vec<f64> = (0..32).map(|i| i as f64).collect();
        let flat = PotentialCurve::from_samples(r, vec![0.0; 32], "flat", None).unwrap();
        let grid = build_mapped_grid(&flat, 0.01, 128, 1.3, 0.0, 10.0).unwrap();
        let sys = build_system(&flat, &flat, Arc::new(grid), 20000.0, 0.0).unwrap();
        let basis = eigenstates(&sys, Channel::Ground, 8).unwrap();
        let e0 = basis.energies[0];
        for v in 0..8 {
            let expect = e0 * ((v + 1) * (v + 1)) as f64;
            assert_relative_eq!(basis.energies[v], expect, max_relative = 1e-8);
        }
    }

    #[test]
    fn states_are_orthonormal() {
        let sys = morse_system(256);
        let basis = eigenstates(&sys, Channel::Ground, 20).unwrap();
        let gram = basis.states.t().dot(&basis.states);
        for i in 0..20 {
            for j in 0..20 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!(
                    (gram[[i, j]] - expect).abs() < 1e-9,
                    "gram[{i},{j}] = {}",
                    gram[[i, j]]
                );
            }
        }
        // tighter normalization contract on the diagonal
        for i in 0..20 {
            assert!((gram[[i, i]] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn energies_strictly_ascending() {
        let sys = morse_system(128);
        let basis = eigenstates(&sys, Channel::Ground, 30).unwrap();
        for v in 1..30 {
            assert!(basis.energies[v] > basis.energies[v - 1]);
        }
    }

    #[test]
    fn fc_identity_for_identical_potentials() {
        let sys = morse_system(256);
        let g = eigenstates(&sys, Channel::Ground, 12).unwrap();
        let e = eigenstates(&sys, Channel::Excited, 12).unwrap();
        let fc = franck_condon_map(&g, &e).unwrap();
        for i in 0..12 {
            for j in 0..12 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!(
                    (fc.factors[[i, j]] - expect).abs() < 1e-9,
                    "fc[{i},{j}] = {}",
                    fc.factors[[i, j]]
                );
            }
        }
    }

    #[test]
    fn fc_displaced_harmonic_follows_poisson() {
        // displaced equal-frequency wells: |<0|v'>|^2 = e^-S S^v'/v'!,
        // S = m w d^2 / 2
        let mass = 2000.0;
        let omega = 2.0e-3;
        let k = mass * omega * omega;
        let d = 0.6;
        let g_curve = PotentialCurve::harmonic(k, 3.0, 0.0, "g").unwrap();
        let e_curve = PotentialCurve::harmonic(k, 3.0 + d, 0.0, "e").unwrap();
        let envelope = PotentialCurve::harmonic(k, 3.0, 0.0, "env").unwrap();
        let grid = build_mapped_grid(&envelope, 0.08, 384, 1.3, 0.5, 7.0).unwrap();
        let sys = build_system(&g_curve, &e_curve, Arc::new(grid), mass, 1.0).unwrap();
        let g = eigenstates(&sys, Channel::Ground, 1).unwrap();
        let e = eigenstates(&sys, Channel::Excited, 8).unwrap();
        let fc = franck_condon_map(&g, &e).unwrap();
        let s = mass * omega * d * d / 2.0;
        let mut fact = 1.0;
        for vp in 0..8 {
            if vp > 0 {
                fact *= vp as f64;
            }
            let poisson = (-s).exp() * s.powi(vp as i32) / fact;
            let rel = (fc.factors[[0, vp]] - poisson).abs() / poisson;
            assert!(rel < 1e-5, "vp={vp} fc={} poisson={poisson} rel={rel}", fc.factors[[0, vp]]);
        }
    }

    #[test]
    fn fc_row_sums_bounded_by_one() {
        let g_curve = PotentialCurve::morse(0.02, 0.46, 2.5, 0.0, "g").unwrap();
        let e_curve = PotentialCurve::morse(0.016, 0.45, 3.2, 0.02, "e").unwrap();
        let envelope = PotentialCurve::morse(0.02, 0.46, 2.5, 0.0, "env").unwrap();
        let grid = build_mapped_grid(&envelope, 0.08, 256, 1.3, 0.8, 14.0).unwrap();
        let sys = build_system(&g_curve, &e_curve, Arc::new(grid), 2000.0, 1.0).unwrap();
        let g = eigenstates(&sys, Channel::Ground, 10).unwrap();
        let e_all = eigenstates(&sys, Channel::Excited, 256).unwrap();
        let fc = franck_condon_map(&g, &e_all).unwrap();
        for v in 0..10 {
            let sum: f64 = fc.factors.row(v).sum();
            assert!(sum <= 1.0 + 1e-9, "row {v} sums to {sum}");
            // completeness: including every discretized level recovers ~1
            assert!(sum > 1.0 - 1e-6, "row {v} sums to {sum}");
        }
    }

    #[test]
    fn spectral_bounds_enclose_brute_force() {
        let g_curve = PotentialCurve::morse(0.02, 0.46, 2.5, 0.0, "g").unwrap();
        let e_curve = PotentialCurve::morse(0.016, 0.45, 3.2, 0.02, "e").unwrap();
        let grid = build_mapped_grid(&g_curve, 0.08, 64, 1.3, 1.0, 12.0).unwrap();
        let sys = build_system(&g_curve, &e_curve, Arc::new(grid), 2000.0, 1.0).unwrap();
        let eps = 0.02;
        let (lo, hi) = spectral_bounds(&sys, eps);
        // assemble the coupled 2n x 2n matrix at fixed field eps
        let n = 64;
        let mut h = Array2::zeros((2 * n, 2 * n));
        let hg = sys.channel_matrix(Channel::Ground);
        let he = sys.channel_matrix(Channel::Excited);
        for i in 0..n {
            for j in 0..n {
                h[[i, j]] = hg[[i, j]];
                h[[n + i, n + j]] = he[[i, j]];
            }
            h[[i, n + i]] = sys.dipole * eps;
            h[[n + i, i]] = sys.dipole * eps;
        }
        let vals = crate::linalg::symmetric_eigenvalues(&h).unwrap();
        assert!(vals[0] >= lo, "min {} below bound {lo}", vals[0]);
        assert!(vals[2 * n - 1] <= hi, "max {} above bound {hi}", vals[2 * n - 1]);
    }

    #[test]
    fn spectral_bounds_widen_with_field() {
        let sys = morse_system(64);
        let (l0, h0) = spectral_bounds(&sys, 0.0);
        let (l1, h1) = spectral_bounds(&sys, 0.1);
        assert!(l1 < l0 && h1 > h0);
        // flat zero potential, zero field: lower bound is exactly zero
        let r: Vec<f64> = (0..32).map(|i| i as f64).collect();
        let flat = PotentialCurve::from_samples(r, vec![0.0; 32], "flat", None).unwrap();
        let grid = build_mapped_grid(&flat, 0.01, 64, 1.3, 0.0, 10.0).unwrap();
        let fsys = build_system(&flat, &flat, Arc::new(grid), 2000.0, 1.0).unwrap();
        let (lo, _) = spectral_bounds(&fsys, 0.0);
        assert_eq!(lo, 0.0);
    }

    #[test]
    fn variational_doubling_never_raises_levels() {
        let coarse = eigenstates(&morse_system(256), Channel::Ground, 10).unwrap();
        let fine = eigenstates(&morse_system(512), Channel::Ground, 10).unwrap();
        for v in 0..10 {
            let rise = (fine.energies[v] - coarse.energies[v]) / coarse.energies[v].abs();
            assert!(rise < 1e-10, "v={v} rose by {rise}");
        }
    }

    #[test]
    fn energy_weighted_closure() {
        let sys = morse_system(256);
        let basis = eigenstates(&sys, Channel::Ground, 6).unwrap();
        // psi = normalized combination of a few bound states
        let coefs = [0.6f64, 0.5, 0.4, 0.3, 0.2, 0.32818594519624716];
        let norm: f64 = coefs.iter().map(|c| c * c).sum::<f64>().sqrt();
        let n = sys.n_points();
        let mut psi = Array1::<f64>::zeros(n);
        for (v, &c) in coefs.iter().enumerate() {
            psi = psi + basis.state(v).mapv(|x| x * c / norm);
        }
        let h = sys.channel_matrix(Channel::Ground);
        let direct = psi.dot(&h.dot(&psi));
        let spectral: f64 = (0..6)
            .map(|v| {
                let a = basis.state(v).dot(&psi);
                basis.energies[v] * a * a
            })
            .sum();
        assert_relative_eq!(direct, spectral, max_relative = 1e-8);
    }

    #[test]
    fn ghost_free_on_model_system() {
        // no coarse-grid eigenvalue may sit deep inside a spectral gap of a
        // 4x-denser reference, for solidly bound levels
        let coarse = eigenstates(&morse_system(256), Channel::Ground, 256).unwrap();
        let fine = eigenstates(&morse_system(1024), Channel::Ground, 1024).unwrap();
        let d = 0.02;
        let bound_c: Vec<f64> = coarse.energies.iter().cloned().filter(|&e| e < d - 5e-4).collect();
        let bound_f: Vec<f64> = fine.energies.iter().cloned().filter(|&e| e < d - 5e-4).collect();
        for &e in &bound_c {
            let pos = bound_f.partition_point(|&x| x < e);
            let lo = if pos > 0 { bound_f[pos - 1] } else { f64::NEG_INFINITY };
            let hi = if pos < bound_f.len() { bound_f[pos] } else { f64::INFINITY };
            let gap = hi - lo;
            let dist = (e - lo).min(hi - e);
            assert!(dist <= gap / 100.0, "eigenvalue {e} sits {dist} into a gap of {gap}");
        }
    }
}
