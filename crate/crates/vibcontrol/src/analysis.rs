//! Post-run diagnostics: pulse spectra, integrated pulse energy, vibrational
//! level populations, and threshold censuses.

use ndarray::{Array1, Array2};
use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Result, VibError};
use crate::hamiltonian::EigenBasis;
use crate::krotov::ControlField;
use crate::propagator::Trajectory;
use crate::units;

/// Spectral window applied before the transform. The shape function already
/// gates the field to zero at the edges, so the rectangular window is the
/// default.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WindowKind {
    Rectangular,
    RaisedCosine,
}

/// Magnitude spectrum over nonnegative frequencies.
#[derive(Debug, Clone)]
pub struct Spectrum {
    /// Bin centers in cm^-1.
    pub frequencies_cm1: Vec<f64>,
    pub magnitude: Vec<f64>,
    /// Bin width in cm^-1.
    pub bin_width_cm1: f64,
}

impl Spectrum {
    pub fn peak_bin(&self) -> usize {
        self.magnitude
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(i, _)| i)
            .unwrap_or(0)
    }

    /// Index of the strongest bin within `half_width` bins of `center_cm1`.
    pub fn peak_near(&self, center_cm1: f64, half_width: usize) -> usize {
        let center = (center_cm1 / self.bin_width_cm1).round() as i64;
        let lo = (center - half_width as i64).max(0) as usize;
        let hi = ((center + half_width as i64) as usize).min(self.magnitude.len() - 1);
        (lo..=hi)
            .max_by(|&a, &b| self.magnitude[a].partial_cmp(&self.magnitude[b]).unwrap())
            .unwrap_or(lo)
    }
}

fn dft(values: &Array1<f64>, window: WindowKind) -> Vec<Complex64> {
    let n = values.len();
    let mut buf: Vec<Complex64> = values
        .iter()
        .enumerate()
        .map(|(k, &v)| {
            let w = match window {
                WindowKind::Rectangular => 1.0,
                WindowKind::RaisedCosine => {
                    let x = std::f64::consts::PI * k as f64 / (n - 1).max(1) as f64;
                    x.sin() * x.sin()
                }
            };
            Complex64::new(v * w, 0.0)
        })
        .collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    buf
}

/// Magnitude of the discrete Fourier transform over nonnegative frequencies,
/// frequency axis in cm^-1.
pub fn pulse_spectrum(field: &ControlField, window: WindowKind) -> Result<Spectrum> {
    let n = field.n_samples();
    if n == 0 {
        return Err(VibError::invalid("cannot take the spectrum of an empty field"));
    }
    let buf = dft(&field.values, window);
    // angular frequency of bin j is 2 pi j / (n dt); as an energy in hartree
    // (hbar = 1) that is the same number, converted to cm^-1 for output
    let bin_hartree = 2.0 * std::f64::consts::PI / (n as f64 * field.dt);
    let bin_width_cm1 = units::hartree_to_cm1(bin_hartree);
    let n_keep = n / 2 + 1;
    Ok(Spectrum {
        frequencies_cm1: (0..n_keep).map(|j| j as f64 * bin_width_cm1).collect(),
        magnitude: buf.iter().take(n_keep).map(|c| c.norm()).collect(),
        bin_width_cm1,
    })
}

/// Integrated pulse energy `E_P = eps0 c A int |E(t)|^2 dt` in joule for a
/// beam of the given radius (meters), `A = pi r^2`.
pub fn pulse_energy_joules(field: &ControlField, beam_radius_m: f64) -> Result<f64> {
    if !(beam_radius_m > 0.0) {
        return Err(VibError::invalid(format!("beam radius must be positive, got {beam_radius_m}")));
    }
    let area = std::f64::consts::PI * beam_radius_m * beam_radius_m;
    let e2dt_si: f64 = field
        .values
        .iter()
        .map(|&v| {
            let e = v * units::VOLT_PER_METER_PER_AU;
            e * e
        })
        .sum::<f64>()
        * field.dt
        * units::SECOND_PER_AU;
    Ok(units::VACUUM_PERMITTIVITY_SI * units::SPEED_OF_LIGHT_SI * area * e2dt_si)
}

/// Time-resolved level populations for both channels.
#[derive(Debug, Clone)]
pub struct PopulationTrace {
    pub times: Vec<f64>,
    /// `ground[[k, v]] = |<phi_v^g | psi_g(t_k)>|^2`
    pub ground: Array2<f64>,
    pub excited: Array2<f64>,
    /// Total norm per channel at each stored time.
    pub ground_total: Vec<f64>,
    pub excited_total: Vec<f64>,
    /// Population summed over levels below each channel's asymptote.
    pub ground_bound_sum: Vec<f64>,
    pub excited_bound_sum: Vec<f64>,
}

impl PopulationTrace {
    /// Continuum remainder `total - bound sum` for one channel.
    pub fn continuum(&self, channel: crate::hamiltonian::Channel) -> Vec<f64> {
        let (total, bound) = match channel {
            crate::hamiltonian::Channel::Ground => (&self.ground_total, &self.ground_bound_sum),
            crate::hamiltonian::Channel::Excited => (&self.excited_total, &self.excited_bound_sum),
        };
        total.iter().zip(bound.iter()).map(|(t, b)| t - b).collect()
    }
}

/// Project every stored state of a trajectory onto the two eigenbases.
/// Bound sums cover the bound levels present in each basis, so pass bases
/// holding at least `n_bound` states for exact continuum remainders.
pub fn population_trace(
    trajectory: &mut dyn Trajectory,
    ground_basis: &EigenBasis,
    excited_basis: &EigenBasis,
) -> Result<PopulationTrace> {
    if !ground_basis.grid.same_grid(&excited_basis.grid) {
        return Err(VibError::invalid("population trace requires bases on the same grid"));
    }
    let n_times = trajectory.len();
    let n = ground_basis.grid.n_points;
    let nvg = ground_basis.n_states();
    let nve = excited_basis.n_states();
    let mut out = PopulationTrace {
        times: Vec::with_capacity(n_times),
        ground: Array2::zeros((n_times, nvg)),
        excited: Array2::zeros((n_times, nve)),
        ground_total: Vec::with_capacity(n_times),
        excited_total: Vec::with_capacity(n_times),
        ground_bound_sum: Vec::with_capacity(n_times),
        excited_bound_sum: Vec::with_capacity(n_times),
    };
    let mut state = crate::propagator::StateVector::zeros(n);
    for k in 0..n_times {
        trajectory.read_into(k, &mut state)?;
        out.times.push(trajectory.time(k));
        let mut bound_g = 0.0;
        for v in 0..nvg {
            let col = ground_basis.state(v);
            let mut acc = Complex64::new(0.0, 0.0);
            for (i, &b) in col.iter().enumerate() {
                acc += state.phi_g[i] * b;
            }
            let p = acc.norm_sqr();
            out.ground[[k, v]] = p;
            if v < ground_basis.n_bound {
                bound_g += p;
            }
        }
        let mut bound_e = 0.0;
        for v in 0..nve {
            let col = excited_basis.state(v);
            let mut acc = Complex64::new(0.0, 0.0);
            for (i, &b) in col.iter().enumerate() {
                acc += state.phi_e[i] * b;
            }
            let p = acc.norm_sqr();
            out.excited[[k, v]] = p;
            if v < excited_basis.n_bound {
                bound_e += p;
            }
        }
        out.ground_total.push(state.channel_norm_sq(crate::hamiltonian::Channel::Ground));
        out.excited_total.push(state.channel_norm_sq(crate::hamiltonian::Channel::Excited));
        out.ground_bound_sum.push(bound_g);
        out.excited_bound_sum.push(bound_e);
    }
    Ok(out)
}

/// Census of levels against population thresholds.
#[derive(Debug, Clone)]
pub struct ThresholdCensus {
    pub thresholds: Vec<f64>,
    /// Per threshold: number of ground levels whose population exceeds it at
    /// any stored time.
    pub ground_counts: Vec<usize>,
    pub excited_counts: Vec<usize>,
    /// Per threshold: (level, longest contiguous time above threshold) for
    /// every exceeding level.
    pub ground_runs: Vec<Vec<(usize, f64)>>,
    pub excited_runs: Vec<Vec<(usize, f64)>>,
}

fn census_channel(
    pops: &Array2<f64>,
    times: &[f64],
    threshold: f64,
) -> (usize, Vec<(usize, f64)>) {
    let (n_times, n_levels) = pops.dim();
    let dt = if n_times > 1 { times[1] - times[0] } else { 0.0 };
    let mut runs = Vec::new();
    for v in 0..n_levels {
        let mut longest = 0.0f64;
        let mut current = 0.0f64;
        let mut any = false;
        for k in 0..n_times {
            if pops[[k, v]] > threshold {
                any = true;
                current += dt;
                longest = longest.max(current);
            } else {
                current = 0.0;
            }
        }
        if any {
            runs.push((v, longest));
        }
    }
    (runs.len(), runs)
}

/// For each threshold, count the levels whose population ever exceeds it and
/// report each exceeding level's longest contiguous time above threshold.
pub fn threshold_census(trace: &PopulationTrace, thresholds: &[f64]) -> Result<ThresholdCensus> {
    if thresholds.iter().any(|&t| !(0.0 < t && t < 1.0)) {
        return Err(VibError::invalid("thresholds must lie in (0, 1)"));
    }
    let mut out = ThresholdCensus {
        thresholds: thresholds.to_vec(),
        ground_counts: Vec::new(),
        excited_counts: Vec::new(),
        ground_runs: Vec::new(),
        excited_runs: Vec::new(),
    };
    for &th in thresholds {
        let (cg, rg) = census_channel(&trace.ground, &trace.times, th);
        let (ce, re) = census_channel(&trace.excited, &trace.times, th);
        out.ground_counts.push(cg);
        out.excited_counts.push(ce);
        out.ground_runs.push(rg);
        out.excited_runs.push(re);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_mapped_grid;
    use crate::hamiltonian::{build_system, eigenstates, Channel};
    use crate::krotov::ControlField;
    use crate::potential::PotentialCurve;
    use crate::propagator::{MemoryTrajectory, StateVector, TimeGrid, TrajectorySink};
    use approx::assert_relative_eq;
    use ndarray::Array1;
    use std::sync::Arc;

    fn field_from(values: Vec<f64>, dt: f64) -> ControlField {
        let n = values.len();
        ControlField::new(Array1::from(values), Array1::ones(n), 1.0, dt).unwrap()
    }

    #[test]
    fn carrier_peaks_at_carrier_bin() {
        let n = 1000usize;
        let dt = 1.0;
        let j = 70usize;
        let w = 2.0 * std::f64::consts::PI * j as f64 / (n as f64 * dt);
        let values: Vec<f64> = (0..n).map(|k| (w * (k as f64 + 0.5) * dt).cos()).collect();
        let spec = pulse_spectrum(&field_from(values, dt), WindowKind::Rectangular).unwrap();
        assert_eq!(spec.peak_bin(), j);
    }

    #[test]
    fn gaussian_pulse_is_transform_limited() {
        let n = 4096usize;
        let dt = 1.0;
        let t_total = n as f64 * dt;
        let fwhm_t = 220.0;
        let sig2 = fwhm_t * fwhm_t / (4.0 * std::f64::consts::LN_2);
        let w = 2.0 * std::f64::consts::PI * 600.0 / t_total;
        let values: Vec<f64> = (0..n)
            .map(|k| {
                let t = (k as f64 + 0.5) * dt;
                (-(t - 0.5 * t_total).powi(2) / sig2).exp() * (w * t).cos()
            })
            .collect();
        let spec = pulse_spectrum(&field_from(values, dt), WindowKind::Rectangular).unwrap();
        // amplitude FWHM in angular frequency for a Gaussian envelope:
        // dw = 8 ln2 / fwhm_t (time-bandwidth product of field amplitudes)
        let peak = spec.peak_bin();
        let half = spec.magnitude[peak] / 2.0;
        let mut lo = peak;
        while lo > 0 && spec.magnitude[lo] > half {
            lo -= 1;
        }
        let mut hi = peak;
        while hi < spec.magnitude.len() - 1 && spec.magnitude[hi] > half {
            hi += 1;
        }
        let bin_hartree = 2.0 * std::f64::consts::PI / t_total;
        let measured = (hi - lo) as f64 * bin_hartree;
        let expect = 8.0 * std::f64::consts::LN_2 / fwhm_t;
        assert!(
            (measured - expect).abs() / expect < 0.1,
            "measured {measured}, transform limit {expect}"
        );
    }

    #[test]
    fn parseval_identity_holds() {
        let n = 512usize;
        let values: Vec<f64> = (0..n)
            .map(|k| (0.3 * k as f64).sin() + 0.2 * (0.11 * k as f64).cos())
            .collect();
        let f = field_from(values, 1.0);
        let buf = dft(&f.values, WindowKind::Rectangular);
        let time_sum: f64 = f.values.iter().map(|v| v * v).sum();
        let freq_sum: f64 = buf.iter().map(|c| c.norm_sqr()).sum::<f64>() / n as f64;
        assert_relative_eq!(time_sum, freq_sum, max_relative = 1e-10);
    }

    #[test]
    fn zero_field_has_zero_energy() {
        let f = field_from(vec![0.0; 64], 2.0);
        assert_eq!(pulse_energy_joules(&f, 300e-6).unwrap(), 0.0);
    }

    #[test]
    fn constant_field_energy_closed_form() {
        let e0 = 0.005;
        let n = 1000usize;
        let dt = 4.0;
        let f = field_from(vec![e0; n], dt);
        let r = 300e-6;
        let num = pulse_energy_joules(&f, r).unwrap();
        let tau = n as f64 * dt * units::SECOND_PER_AU;
        let e_si = e0 * units::VOLT_PER_METER_PER_AU;
        let closed = units::VACUUM_PERMITTIVITY_SI
            * units::SPEED_OF_LIGHT_SI
            * std::f64::consts::PI
            * r
            * r
            * e_si
            * e_si
            * tau;
        assert_relative_eq!(num, closed, max_relative = 1e-10);
    }

    #[test]
    fn few_ps_gaussian_train_lands_in_millijoule_decade() {
        // 0.005 au amplitude, 300 um beam, ~3 ps of structured pulse train
        let dt = 10.0;
        let n = 12000usize; // 120000 au ~ 2.9 ps
        let t_total = n as f64 * dt;
        let centers = [0.2 * t_total, 0.5 * t_total, 0.8 * t_total];
        let fwhm = 0.12 * t_total;
        let sig2 = fwhm * fwhm / (4.0 * std::f64::consts::LN_2);
        let w = 0.02;
        let values: Vec<f64> = (0..n)
            .map(|k| {
                let t = (k as f64 + 0.5) * dt;
                let env: f64 = centers.iter().map(|&c| (-(t - c) * (t - c) / sig2).exp()).sum();
                0.005 * env.min(1.0) * (w * t).cos()
            })
            .collect();
        let e = pulse_energy_joules(&field_from(values, dt), 300e-6).unwrap();
        assert!(
            (1e-3..1e-2).contains(&e),
            "expected a few mJ, got {e} J"
        );
    }

    fn two_morse_setup() -> (Arc<crate::hamiltonian::ChannelSystem>, EigenBasis, EigenBasis) {
        let g = PotentialCurve::morse(0.02, 0.46, 2.5, 0.0, "g").unwrap();
        let e = PotentialCurve::morse(0.016, 0.45, 3.2, 0.02, "e").unwrap();
        let grid = build_mapped_grid(&g, 0.08, 128, 1.3, 0.8, 14.0).unwrap();
        let sys = Arc::new(build_system(&g, &e, Arc::new(grid), 2000.0, 1.0).unwrap());
        let gb = eigenstates(&sys, Channel::Ground, 24).unwrap();
        let eb = eigenstates(&sys, Channel::Excited, 24).unwrap();
        (sys, gb, eb)
    }

    #[test]
    fn stationary_eigenstate_keeps_unit_population() {
        let (_sys, gb, eb) = two_morse_setup();
        let psi = StateVector::from_eigenstate(&gb, 3);
        let mut traj = MemoryTrajectory::new(5);
        for k in 0..5 {
            traj.record(k, k as f64, &psi).unwrap();
        }
        let trace = population_trace(&mut traj, &gb, &eb).unwrap();
        for k in 0..5 {
            assert!((trace.ground[[k, 3]] - 1.0).abs() < 1e-9);
            assert!((trace.ground_total[k] - 1.0).abs() < 1e-9);
            assert!(trace.excited_total[k].abs() < 1e-12);
            // continuum remainder nonnegative
            assert!(trace.ground_total[k] - trace.ground_bound_sum[k] >= -1e-9);
        }
    }

    #[test]
    fn equal_superposition_splits_population() {
        let (_sys, gb, eb) = two_morse_setup();
        let a = StateVector::from_eigenstate(&gb, 1);
        let b = StateVector::from_eigenstate(&gb, 4);
        let mut psi = StateVector::zeros(a.n_points());
        let s = std::f64::consts::FRAC_1_SQRT_2;
        for i in 0..a.n_points() {
            psi.phi_g[i] = (a.phi_g[i] + b.phi_g[i]) * s;
        }
        let mut traj = MemoryTrajectory::new(3);
        for k in 0..3 {
            traj.record(k, k as f64, &psi).unwrap();
        }
        let trace = population_trace(&mut traj, &gb, &eb).unwrap();
        for k in 0..3 {
            assert!((trace.ground[[k, 1]] - 0.5).abs() < 1e-9);
            assert!((trace.ground[[k, 4]] - 0.5).abs() < 1e-9);
        }
    }

    #[test]
    fn census_counts_and_runs() {
        let (_sys, gb, eb) = two_morse_setup();
        let psi = StateVector::from_eigenstate(&gb, 2);
        let mut traj = MemoryTrajectory::new(4);
        for k in 0..4 {
            traj.record(k, k as f64 * 2.0, &psi).unwrap();
        }
        let trace = population_trace(&mut traj, &gb, &eb).unwrap();
        let census = threshold_census(&trace, &[0.05, 0.5, 0.999]).unwrap();
        assert_eq!(census.ground_counts, vec![1, 1, 1]);
        assert_eq!(census.excited_counts, vec![0, 0, 0]);
        // level 2 occupied the whole window
        assert_eq!(census.ground_runs[0][0].0, 2);
        assert_relative_eq!(census.ground_runs[0][0].1, 8.0, epsilon = 1e-12);
        // spreading superposition never exceeds a 0.999 threshold
        let a = StateVector::from_eigenstate(&gb, 1);
        let b = StateVector::from_eigenstate(&gb, 4);
        let mut psi2 = StateVector::zeros(a.n_points());
        let s = std::f64::consts::FRAC_1_SQRT_2;
        for i in 0..a.n_points() {
            psi2.phi_g[i] = (a.phi_g[i] + b.phi_g[i]) * s;
        }
        let mut traj2 = MemoryTrajectory::new(2);
        traj2.record(0, 0.0, &psi2).unwrap();
        traj2.record(1, 1.0, &psi2).unwrap();
        let trace2 = population_trace(&mut traj2, &gb, &eb).unwrap();
        let census2 = threshold_census(&trace2, &[0.999]).unwrap();
        assert_eq!(census2.ground_counts, vec![0]);
        assert!(threshold_census(&trace2, &[1.5]).is_err());
    }

    #[test]
    fn spectral_and_time_energy_agree() {
        // Parseval implies the spectral sum reproduces int eps^2 dt
        let n = 777usize;
        let dt = 3.0;
        let values: Vec<f64> = (0..n).map(|k| 0.01 * (0.21 * k as f64).sin()).collect();
        let f = field_from(values, dt);
        let buf = dft(&f.values, WindowKind::Rectangular);
        let spectral = buf.iter().map(|c| c.norm_sqr()).sum::<f64>() / n as f64 * dt;
        assert_relative_eq!(f.energy_integral(), spectral, max_relative = 1e-9);
    }
}
