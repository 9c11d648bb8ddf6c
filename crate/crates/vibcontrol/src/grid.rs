//! Mapped radial grid and the sine-basis kinetic operator shared by both
//! channels.
//!
//! The mapped coordinate x runs over [0, n+1] with unit spacing; hard walls
//! (Dirichlet) sit at x = 0 and x = n+1, pinned to r_min and r_max, and the n
//! collocation points are the interior nodes. The local point density follows
//! the semiclassical momentum of an envelope potential, so a deep well and a
//! long-range tail can share one modest grid.
//!
//! Wavefunctions are stored in the volume-scaled convention
//! u_k = sqrt(J_k) psi(r_k), which makes the plain complex dot product equal
//! to the jacobian-weighted quadrature of psi* psi and keeps the kinetic
//! matrix exactly symmetric.

use ndarray::{Array1, Array2};

use crate::error::{Result, VibError};
use crate::linalg::symmetric_eigenvalues;
use crate::potential::PotentialCurve;

/// Density floor (hartree) applied under the square root so the mapping stays
/// defined past the dissociation limit.
pub const DENSITY_FLOOR: f64 = 1e-8;

const REFINE: usize = 32;

/// Nonuniformly mapped radial grid.
#[derive(Debug, Clone)]
pub struct SpatialGrid {
    pub n_points: usize,
    /// Interior collocation radii (bohr), strictly increasing.
    pub r: Array1<f64>,
    /// Discrete jacobian dr/dx at the collocation points (central differences
    /// against the walls). Positive; the wall-weighted trapezoid sum over
    /// these telescopes exactly to r_max - r_min.
    pub jacobian: Array1<f64>,
    pub r_min: f64,
    pub r_max: f64,
    pub beta: f64,
    pub e_max: f64,
    /// Smooth map density dr/dx from the semiclassical mapping itself;
    /// the kinetic operator is built from this one.
    map_jacobian: Array1<f64>,
    wall_jacobian: (f64, f64),
    wall_map_jacobian: (f64, f64),
}

impl SpatialGrid {
    /// One-sided discrete jacobians at the two walls.
    pub fn wall_jacobians(&self) -> (f64, f64) {
        self.wall_jacobian
    }

    pub(crate) fn map_jacobian(&self) -> &Array1<f64> {
        &self.map_jacobian
    }

    pub(crate) fn wall_map_jacobians(&self) -> (f64, f64) {
        self.wall_map_jacobian
    }

    /// Wall-weighted trapezoid sum of the discrete jacobian; equals
    /// r_max - r_min up to rounding.
    pub fn mapped_length(&self) -> f64 {
        0.5 * self.wall_jacobian.0 + self.jacobian.sum() + 0.5 * self.wall_jacobian.1
    }

    /// Convert a volume-scaled amplitude to the physical wavefunction value
    /// psi(r_k) = u_k / sqrt(J_k).
    pub fn scaled_to_physical(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .zip(self.map_jacobian.iter())
            .map(|(&a, &j)| a / j.sqrt())
            .collect()
    }

    /// True when two grids are the same discretization.
    pub fn same_grid(&self, other: &SpatialGrid) -> bool {
        self.n_points == other.n_points && self.r == other.r
    }
}

/// Build the mapped grid from an envelope potential.
///
/// Point density is proportional to `beta * sqrt(2 max(e_max - V_env, floor))`
/// normalized so that exactly n interior points cover [r_min, r_max]. The
/// construction integrates the density on a refined mesh and inverts the
/// cumulative phase, which stays robust when the envelope crosses e_max.
pub fn build_mapped_grid(
    envelope: &PotentialCurve,
    e_max: f64,
    n_points: usize,
    beta: f64,
    r_min: f64,
    r_max: f64,
) -> Result<SpatialGrid> {
    if n_points < 16 {
        return Err(VibError::invalid(format!("n_points must be at least 16, got {n_points}")));
    }
    if beta < 1.0 {
        return Err(VibError::invalid(format!("beta must be >= 1, got {beta}")));
    }
    if !(r_min < r_max) {
        return Err(VibError::invalid(format!("need r_min < r_max, got [{r_min}, {r_max}]")));
    }

    let n = n_points;
    let nf = REFINE * (n + 1) + 1;
    let hf = (r_max - r_min) / (nf - 1) as f64;
    let mut density = Vec::with_capacity(nf);
    let mut v_min = f64::INFINITY;
    for i in 0..nf {
        let r = r_min + hf * i as f64;
        let v = envelope.value(r)?;
        v_min = v_min.min(v);
        density.push(beta * (2.0 * (e_max - v).max(DENSITY_FLOOR)).sqrt() / std::f64::consts::PI);
    }
    if e_max <= v_min {
        return Err(VibError::invalid(format!(
            "e_max = {e_max} does not exceed the envelope minimum {v_min}"
        )));
    }

    // cumulative phase by trapezoid on the refined mesh
    let mut phi = Vec::with_capacity(nf);
    let mut acc = 0.0;
    phi.push(0.0);
    for i in 1..nf {
        acc += 0.5 * (density[i] + density[i - 1]) * hf;
        phi.push(acc);
    }
    let phi_tot = acc;

    // invert at uniform phase levels (single forward sweep)
    let mut r_int = Array1::zeros(n);
    let mut seg = 1usize;
    for k in 0..n {
        let level = (k + 1) as f64 / (n + 1) as f64 * phi_tot;
        while seg < nf - 1 && phi[seg] < level {
            seg += 1;
        }
        let t = (level - phi[seg - 1]) / (phi[seg] - phi[seg - 1]);
        r_int[k] = r_min + hf * ((seg - 1) as f64 + t);
    }

    // discrete jacobian: central differences using the walls
    let mut jac = Array1::zeros(n);
    for k in 0..n {
        let left = if k == 0 { r_min } else { r_int[k - 1] };
        let right = if k == n - 1 { r_max } else { r_int[k + 1] };
        jac[k] = 0.5 * (right - left);
    }
    let wall_jacobian = (r_int[0] - r_min, r_max - r_int[n - 1]);

    // smooth map density at the nodes: dr/dx = phi_tot / ((n+1) rho(r))
    let rho = |r: f64| -> Result<f64> {
        let v = envelope.value(r)?;
        Ok(beta * (2.0 * (e_max - v).max(DENSITY_FLOOR)).sqrt() / std::f64::consts::PI)
    };
    let scale = phi_tot / (n + 1) as f64;
    let mut map_jac = Array1::zeros(n);
    for k in 0..n {
        map_jac[k] = scale / rho(r_int[k])?;
    }
    let wall_map_jacobian = (scale / rho(r_min)?, scale / rho(r_max)?);

    if jac.iter().any(|&j| j <= 0.0) {
        return Err(VibError::numerical("mapping produced a non-positive jacobian"));
    }

    Ok(SpatialGrid {
        n_points: n,
        r: r_int,
        jacobian: jac,
        r_min,
        r_max,
        beta,
        e_max,
        map_jacobian: map_jac,
        wall_jacobian,
        wall_map_jacobian,
    })
}

/// Dense sine-basis representation of -(1/2m) d^2/dR^2 on the mapped grid.
#[derive(Debug, Clone)]
pub struct KineticOperator {
    pub matrix: Array2<f64>,
    pub mass: f64,
    /// Largest eigenvalue, computed at construction.
    pub max_eigenvalue: f64,
}

/// Assemble the kinetic matrix for the given reduced mass.
///
/// In the mapped coordinate, matrix elements are quadratures of
/// f'(x) g'(x) / J(x) with derivatives taken exactly in the sine basis and the
/// trapezoid rule including the wall nodes; the result is symmetrized Gram
/// style, so it is exactly symmetric and positive semidefinite.
pub fn kinetic_matrix(grid: &SpatialGrid, mass: f64) -> Result<KineticOperator> {
    if mass <= 0.0 {
        return Err(VibError::invalid(format!("mass must be positive, got {mass}")));
    }
    let n = grid.n_points;
    let nn = (n + 1) as f64;
    let pi = std::f64::consts::PI;
    let norm = (2.0 / nn).sqrt();

    // derivative of the interpolant at every node (walls included):
    // A = C . diag(kappa_j) . F_int with F_int the orthogonal DST-I matrix
    let mut ck = Array2::zeros((n + 2, n));
    for k in 0..n + 2 {
        for j in 1..=n {
            let kappa = j as f64 * pi / nn;
            ck[[k, j - 1]] = norm * (j as f64 * k as f64 * pi / nn).cos() * kappa;
        }
    }
    let mut f_int = Array2::zeros((n, n));
    for k in 1..=n {
        for j in 1..=n {
            f_int[[k - 1, j - 1]] = norm * (j as f64 * k as f64 * pi / nn).sin();
        }
    }
    let mut a = ck.dot(&f_int);

    // scale columns by 1/sqrt(J) at the source nodes
    let jm = grid.map_jacobian();
    for j in 0..n {
        let s = 1.0 / jm[j].sqrt();
        for k in 0..n + 2 {
            a[[k, j]] *= s;
        }
    }

    // rows weighted by trapezoid weight over jacobian at the evaluation nodes
    let (jw0, jw1) = grid.wall_map_jacobians();
    let mut w = Array1::zeros(n + 2);
    w[0] = 0.5 / jw0;
    w[n + 1] = 0.5 / jw1;
    for k in 0..n {
        w[k + 1] = 1.0 / jm[k];
    }
    let mut wa = a.clone();
    for k in 0..n + 2 {
        let s = w[k];
        for j in 0..n {
            wa[[k, j]] *= s;
        }
    }

    let mut t = a.t().dot(&wa);
    t *= 0.5 / mass;
    // enforce exact symmetry against rounding in the products
    for i in 0..n {
        for j in 0..i {
            let s = 0.5 * (t[[i, j]] + t[[j, i]]);
            t[[i, j]] = s;
            t[[j, i]] = s;
        }
    }

    let max_eigenvalue = {
        let vals = symmetric_eigenvalues(&t)?;
        vals[n - 1]
    };

    Ok(KineticOperator { matrix: t, mass, max_eigenvalue })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::PotentialCurve;

    fn flat_envelope() -> PotentialCurve {
        let r: Vec<f64> = (0..32).map(|i| i as f64).collect();
        let v = vec![0.0; 32];
        PotentialCurve::from_samples(r, v, "flat", None).unwrap()
    }

    #[test]
    fn flat_envelope_gives_uniform_grid() {
        let env = flat_envelope();
        let g = build_mapped_grid(&env, 0.01, 64, 1.3, 0.0, 10.0).unwrap();
        let mut spacings: Vec<f64> = vec![g.r[0] - 0.0];
        for k in 1..g.n_points {
            spacings.push(g.r[k] - g.r[k - 1]);
        }
        spacings.push(10.0 - g.r[g.n_points - 1]);
        let max = spacings.iter().cloned().fold(0.0, f64::max);
        let min = spacings.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(max / min - 1.0 < 1e-12, "spacing spread {}", max / min - 1.0);
        // n interior points between walls: spacing = (r_max - r_min)/(n + 1)
        let expect = 10.0 / 65.0;
        assert!((spacings[0] - expect).abs() / expect < 1e-12);
    }

    #[test]
    fn deep_well_concentrates_points() {
        let env = PotentialCurve::morse(0.02, 0.8, 2.5, 0.0, "well").unwrap();
        let g = build_mapped_grid(&env, 0.05, 256, 1.3, 1.3, 20.0).unwrap();
        // spacing near the well minimum vs spacing at the outer edge
        let near = g
            .r
            .iter()
            .position(|&r| r > 2.5)
            .unwrap();
        let d_near = g.r[near + 1] - g.r[near];
        let d_far = g.r[g.n_points - 1] - g.r[g.n_points - 2];
        assert!(d_near < d_far, "near {} far {}", d_near, d_far);
    }

    #[test]
    fn mapping_consistency_telescopes() {
        let env = PotentialCurve::morse(0.02, 0.8, 2.5, 0.0, "well").unwrap();
        let g = build_mapped_grid(&env, 0.05, 200, 1.3, 1.3, 20.0).unwrap();
        let len = g.mapped_length();
        assert!((len - (20.0 - 1.3)).abs() / (20.0 - 1.3) < 1e-10, "len {}", len);
    }

    #[test]
    fn rejects_bad_arguments() {
        let env = flat_envelope();
        assert!(build_mapped_grid(&env, 0.01, 8, 1.3, 0.0, 10.0).is_err());
        assert!(build_mapped_grid(&env, 0.01, 64, 0.5, 0.0, 10.0).is_err());
        assert!(build_mapped_grid(&env, -0.01, 64, 1.3, 0.0, 10.0).is_err());
        // envelope not interpolable outside its table
        assert!(build_mapped_grid(&env, 0.01, 64, 1.3, 0.0, 50.0).is_err());
    }

    #[test]
    fn box_spectrum_exact_on_uniform_grid() {
        let env = flat_envelope();
        let mass = 20000.0;
        let (r_min, r_max) = (0.0, 10.0);
        let g = build_mapped_grid(&env, 0.01, 64, 1.3, r_min, r_max).unwrap();
        let t = kinetic_matrix(&g, mass).unwrap();
        let vals = crate::linalg::symmetric_eigenvalues(&t.matrix).unwrap();
        let l = r_max - r_min;
        for j in 0..10 {
            let exact = ((j + 1) as f64 * std::f64::consts::PI / l).powi(2) / (2.0 * mass);
            let rel = (vals[j] - exact).abs() / exact;
            assert!(rel < 1e-8, "level {} rel err {}", j, rel);
        }
        assert!(vals[0] >= -1e-10 * vals[63]);
    }

    #[test]
    fn kinetic_symmetric_and_psd() {
        let env = PotentialCurve::morse(0.02, 0.8, 2.5, 0.0, "well").unwrap();
        let g = build_mapped_grid(&env, 0.05, 96, 1.3, 1.3, 20.0).unwrap();
        let t = kinetic_matrix(&g, 20000.0).unwrap();
        let m = &t.matrix;
        let mut asym: f64 = 0.0;
        let mut scale: f64 = 0.0;
        for i in 0..96 {
            for j in 0..96 {
                asym = asym.max((m[[i, j]] - m[[j, i]]).abs());
                scale = scale.max(m[[i, j]].abs());
            }
        }
        assert!(asym <= 1e-12 * scale);
        let vals = crate::linalg::symmetric_eigenvalues(m).unwrap();
        assert!(vals[0] >= -1e-10 * vals[95], "min {} max {}", vals[0], vals[95]);
        assert!((t.max_eigenvalue - vals[95]).abs() <= 1e-12 * vals[95].abs());
    }

    #[test]
    fn doubling_points_keeps_low_box_levels() {
        let env = flat_envelope();
        let mass = 20000.0;
        let g1 = build_mapped_grid(&env, 0.01, 64, 1.3, 0.0, 10.0).unwrap();
        let g2 = build_mapped_grid(&env, 0.01, 128, 1.3, 0.0, 10.0).unwrap();
        let v1 = crate::linalg::symmetric_eigenvalues(&kinetic_matrix(&g1, mass).unwrap().matrix).unwrap();
        let v2 = crate::linalg::symmetric_eigenvalues(&kinetic_matrix(&g2, mass).unwrap().matrix).unwrap();
        for j in 0..8 {
            let rel = (v1[j] - v2[j]).abs() / v2[j];
            assert!(rel < 1e-10, "level {} rel change {}", j, rel);
        }
    }
}
