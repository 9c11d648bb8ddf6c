//! Named model systems used by the examples, the bundled configs, and the
//! acceptance suite.

use std::sync::Arc;

use crate::error::Result;
use crate::grid::build_mapped_grid;
use crate::hamiltonian::{build_system, eigenstates, franck_condon_map, Channel, ChannelSystem, EigenBasis, FranckCondonMap};
use crate::potential::PotentialCurve;
use crate::propagator::TimeGrid;

/// Effective two-level system: flat potential curves split by `splitting`,
/// one spatial mode per channel doing the work (the kinetic energy is a
/// common shift that factors out of the channel dynamics).
pub fn two_level_system(splitting: f64, dipole: f64) -> Result<Arc<ChannelSystem>> {
    let r: Vec<f64> = (0..16).map(|i| i as f64 * 0.25).collect();
    let lower = PotentialCurve::from_samples(r.clone(), vec![0.0; 16], "lower", None)?;
    let upper = PotentialCurve::from_samples(r, vec![splitting; 16], "upper", None)?;
    let grid = build_mapped_grid(&lower, 0.01, 16, 1.3, 0.0, 3.5)?;
    Ok(Arc::new(build_system(&lower, &upper, Arc::new(grid), 2000.0, dipole)?))
}

/// Parameters of the desk-scale two-channel Morse ladder.
#[derive(Debug, Clone, Copy)]
pub struct LadderParams {
    pub mass: f64,
    pub d_g: f64,
    pub a_g: f64,
    pub r_e_g: f64,
    pub d_e: f64,
    pub a_e: f64,
    pub r_e_e: f64,
    /// Electronic offset of the excited curve.
    pub t_e: f64,
    pub dipole: f64,
    pub n_points: usize,
    pub r_min: f64,
    pub r_max: f64,
    pub e_max: f64,
    pub beta: f64,
}

impl Default for LadderParams {
    fn default() -> Self {
        // ~17 bound ground levels, ~16 excited; wavefunctions wide enough to
        // need r well below the ground equilibrium distance
        LadderParams {
            mass: 2000.0,
            d_g: 0.02,
            a_g: 0.4587,
            r_e_g: 2.5,
            d_e: 0.016,
            a_e: 0.46,
            r_e_e: 3.2,
            t_e: 0.02,
            dipole: 1.0,
            n_points: 256,
            r_min: 0.8,
            r_max: 20.0,
            e_max: 0.05,
            beta: 1.3,
        }
    }
}

/// Fully assembled ladder model: system, eigenbases, and the FC map.
pub struct LadderModel {
    pub params: LadderParams,
    pub system: Arc<ChannelSystem>,
    pub ground: EigenBasis,
    pub excited: EigenBasis,
    pub fc: FranckCondonMap,
}

impl LadderModel {
    pub fn build(params: LadderParams) -> Result<Self> {
        let g_curve = PotentialCurve::morse(params.d_g, params.a_g, params.r_e_g, 0.0, "ground")?;
        let e_curve =
            PotentialCurve::morse(params.d_e, params.a_e, params.r_e_e, params.t_e, "excited")?;
        // envelope: pointwise minimum of the two curves on a fine mesh
        let nf = 2048;
        let mut rr = Vec::with_capacity(nf);
        let mut vv = Vec::with_capacity(nf);
        for i in 0..nf {
            let r = params.r_min + (params.r_max - params.r_min) * i as f64 / (nf - 1) as f64;
            rr.push(r);
            vv.push(g_curve.value(r)?.min(e_curve.value(r)?));
        }
        let envelope = PotentialCurve::from_samples(rr, vv, "envelope", None)?;
        let grid = build_mapped_grid(
            &envelope,
            params.e_max,
            params.n_points,
            params.beta,
            params.r_min,
            params.r_max,
        )?;
        let system = Arc::new(build_system(&g_curve, &e_curve, Arc::new(grid), params.mass, params.dipole)?);
        let n_request = params.n_points.min(64);
        let ground = eigenstates(&system, Channel::Ground, n_request)?;
        let excited = eigenstates(&system, Channel::Excited, n_request)?;
        let fc = franck_condon_map(&ground, &excited)?;
        Ok(LadderModel { params, system, ground, excited, fc })
    }

    /// The desk-scale model at full resolution.
    pub fn desk() -> Result<Self> {
        Self::build(LadderParams::default())
    }

    /// A small, fast variant for unit tests and gradient checks.
    pub fn small(n_points: usize) -> Result<Self> {
        Self::build(LadderParams { n_points, ..LadderParams::default() })
    }

    /// Time grid spanning `multiple` vibrational periods of level `v`, with
    /// `samples_per_cycle` field samples per period of the fastest relevant
    /// transition frequency.
    pub fn time_grid_for(&self, v: usize, multiple: f64, samples_per_cycle: f64) -> Result<TimeGrid> {
        let hint = crate::strategies::minimal_time_hint(&self.ground, v)?;
        let t_total = multiple * hint.t_star;
        let (_, _, w_from) = self.fc.peak_from(v);
        let (_, _, w_to) = self.fc.peak_from(0);
        let w_max = w_from.max(w_to);
        let dt_max = 2.0 * std::f64::consts::PI / w_max / samples_per_cycle;
        let n_steps = (t_total / dt_max).ceil() as usize;
        let n_steps = n_steps.div_ceil(10) * 10;
        TimeGrid::new(n_steps, t_total / n_steps as f64)
    }

    /// FC-guided carrier pair for a `v -> 0` transfer: the strongest
    /// transition out of `v` and the strongest one into the target.
    pub fn guess_centers(&self, v: usize) -> (f64, f64) {
        let (_, _, w_from) = self.fc.peak_from(v);
        let (_, _, w_to) = self.fc.peak_from(0);
        (w_from, w_to)
    }
}
