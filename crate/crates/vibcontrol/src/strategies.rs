//! Guess-field construction and the two meta-strategies: intensity reduction
//! with restart, and optimization-time compression by spectral decimation.

use ndarray::Array1;
use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Result, VibError};
use crate::hamiltonian::EigenBasis;
use crate::krotov::ControlField;
use crate::propagator::TimeGrid;

/// Envelope of one sub-pulse.
#[derive(Debug, Clone, PartialEq)]
pub enum EnvelopeKind {
    /// Gaussian with the given intensity FWHM (atomic time units).
    Gaussian { fwhm: f64 },
    /// `sin^2(pi t / T)` over the whole window.
    SinSquared,
    /// `sin(pi t / T)` over the whole window (the restart shape).
    Sine,
}

/// Shape function S(t) gating where the optimization may change the field.
#[derive(Debug, Clone, PartialEq)]
pub enum ShapeKind {
    SinSquared,
    Sine,
    Gaussian { fwhm: f64 },
    /// Product of Gaussian bumps centered at the given times.
    GaussianTrain { fwhm: f64, centers: Vec<f64> },
}

/// Sample a shape function on the staggered field times, clipped to [0, 1].
pub fn sample_shape(kind: &ShapeKind, tgrid: &TimeGrid) -> Array1<f64> {
    let t_total = tgrid.duration();
    let times = tgrid.field_times();
    let values: Vec<f64> = match kind {
        ShapeKind::SinSquared => times
            .iter()
            .map(|&t| (std::f64::consts::PI * t / t_total).sin().powi(2))
            .collect(),
        ShapeKind::Sine => times
            .iter()
            .map(|&t| (std::f64::consts::PI * t / t_total).sin())
            .collect(),
        ShapeKind::Gaussian { fwhm } => {
            let sig2 = fwhm * fwhm / (4.0 * std::f64::consts::LN_2);
            let mid = 0.5 * t_total;
            times.iter().map(|&t| (-(t - mid) * (t - mid) / sig2).exp()).collect()
        }
        ShapeKind::GaussianTrain { fwhm, centers } => {
            let sig2 = fwhm * fwhm / (4.0 * std::f64::consts::LN_2);
            times
                .iter()
                .map(|&t| {
                    centers
                        .iter()
                        .map(|&c| (-(t - c) * (t - c) / sig2).exp())
                        .sum::<f64>()
                        .min(1.0)
                })
                .collect()
        }
    };
    Array1::from(values).mapv(|s: f64| s.clamp(0.0, 1.0))
}

/// Analytic guess pulse: carrier-modulated envelopes.
#[derive(Debug, Clone)]
pub struct GuessSpec {
    /// Peak field amplitude (atomic units).
    pub amplitude: f64,
    /// Carrier frequencies (hartree; with hbar = 1 these are angular
    /// frequencies in atomic time units).
    pub centers: Vec<f64>,
    pub envelope: EnvelopeKind,
    /// Sub-pulse center times; a single envelope centered at T/2 when empty.
    pub train_offsets: Vec<f64>,
}

/// Superpose carrier-modulated envelopes on the staggered field times.
/// The returned field carries the given gating shape and penalty weight.
pub fn make_guess(
    spec: &GuessSpec,
    tgrid: &TimeGrid,
    shape: &ShapeKind,
    alpha: f64,
) -> Result<ControlField> {
    if spec.amplitude < 0.0 {
        return Err(VibError::invalid("guess amplitude must be nonnegative"));
    }
    let t_total = tgrid.duration();
    for &w in &spec.centers {
        if w <= 0.0 {
            return Err(VibError::invalid(format!("carrier frequency {w} must be positive")));
        }
        if w * tgrid.dt >= std::f64::consts::PI {
            return Err(VibError::invalid(format!(
                "carrier frequency {w} violates the Nyquist limit for dt = {}: need w dt < pi",
                tgrid.dt
            )));
        }
    }
    if let EnvelopeKind::Gaussian { fwhm } = spec.envelope {
        if fwhm >= t_total {
            return Err(VibError::invalid(format!(
                "sub-pulse FWHM {fwhm} does not fit in the window T = {t_total}"
            )));
        }
    }
    let centers_t: Vec<f64> = if spec.train_offsets.is_empty() {
        vec![0.5 * t_total]
    } else {
        spec.train_offsets.clone()
    };
    let env = |t: f64| -> f64 {
        match spec.envelope {
            EnvelopeKind::Gaussian { fwhm } => {
                let sig2 = fwhm * fwhm / (4.0 * std::f64::consts::LN_2);
                centers_t.iter().map(|&c| (-(t - c) * (t - c) / sig2).exp()).sum()
            }
            EnvelopeKind::SinSquared => (std::f64::consts::PI * t / t_total).sin().powi(2),
            EnvelopeKind::Sine => (std::f64::consts::PI * t / t_total).sin(),
        }
    };
    let values: Vec<f64> = tgrid
        .field_times()
        .iter()
        .map(|&t| {
            let e = env(t);
            spec.amplitude * e * spec.centers.iter().map(|&w| (w * t).cos()).sum::<f64>()
        })
        .collect();
    ControlField::new(Array1::from(values), sample_shape(shape, tgrid), alpha, tgrid.dt)
}

/// Divide an optimal field by `factor` to seed a lower-intensity restart;
/// the pulse energy drops by `factor^2`.
pub fn reduce_intensity_restart(optimal: &ControlField, factor: f64) -> Result<ControlField> {
    if !(factor >= 1.0) {
        return Err(VibError::invalid(format!("reduction factor must be >= 1, got {factor}")));
    }
    let mut out = optimal.clone();
    out.values.mapv_inplace(|v| v / factor);
    Ok(out)
}

/// Which spectral samples survive decimation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpectralDeletion {
    /// Keep bins 0, k, 2k, ... (contains the DC bin and all Hermitian
    /// partners, so the compressed field is real by construction).
    Asymmetric,
    /// Keep bins offset by floor(k/2), symmetric about zero frequency after
    /// re-Hermitization.
    Symmetric,
}

/// What pulse energy the compressed field is rescaled to before restart.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EnergyTarget {
    /// Leave the folded amplitudes untouched.
    Keep,
    /// Rescale so that `int eps^2 dt` is this fraction of the original.
    FractionOfOriginal(f64),
    /// Rescale to an absolute `int eps^2 dt` (atomic units).
    Absolute(f64),
}

#[derive(Debug, Clone)]
pub struct CompressOptions {
    pub deletion: SpectralDeletion,
    pub energy: EnergyTarget,
}

impl CompressOptions {
    /// Asymmetric deletion, energy scaled down by the compression factor.
    pub fn default_for(keep_every: usize) -> Self {
        CompressOptions {
            deletion: SpectralDeletion::Asymmetric,
            energy: EnergyTarget::FractionOfOriginal(1.0 / keep_every as f64),
        }
    }
}

/// Compress the optimization window by keeping every k-th spectral sample:
/// the surviving bins keep their physical frequencies while the duration and
/// sample count shrink by k. The result carries the restart shape
/// `S = sin(pi t / T~)`.
pub fn compress_time(
    field: &ControlField,
    keep_every: usize,
    options: &CompressOptions,
) -> Result<ControlField> {
    if keep_every < 1 {
        return Err(VibError::invalid("keep_every must be at least 1"));
    }
    let n_raw = field.n_samples();
    if keep_every > 1 && keep_every > n_raw / 4 {
        return Err(VibError::invalid(format!(
            "keep_every = {keep_every} leaves fewer than a quarter of {n_raw} samples"
        )));
    }
    // pad with zeros so the decimation divides evenly
    let n = n_raw.div_ceil(keep_every) * keep_every;
    let mut buf: Vec<Complex64> = field
        .values
        .iter()
        .map(|&v| Complex64::new(v, 0.0))
        .chain(std::iter::repeat(Complex64::new(0.0, 0.0)))
        .take(n)
        .collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(n).process(&mut buf);

    let m = n / keep_every;
    let offset = match options.deletion {
        SpectralDeletion::Asymmetric => 0usize,
        SpectralDeletion::Symmetric => keep_every / 2,
    };
    let mut spec: Vec<Complex64> = (0..m).map(|j| buf[(offset + j * keep_every) % n]).collect();
    if options.deletion == SpectralDeletion::Symmetric {
        // re-Hermitize from the nonnegative-frequency half so the inverse
        // transform is real
        for j in 1..m.div_ceil(2) {
            let conj = spec[j].conj();
            spec[m - j] = conj;
        }
        spec[0] = Complex64::new(spec[0].re, 0.0);
        if m % 2 == 0 {
            spec[m / 2] = Complex64::new(spec[m / 2].re, 0.0);
        }
    }
    planner.plan_fft_inverse(m).process(&mut spec);
    let scale = 1.0 / m as f64;
    let mut values = Array1::from_iter(spec.iter().map(|c| c.re * scale));

    let original_energy = field.energy_integral();
    let new_energy: f64 = values.iter().map(|v| v * v).sum::<f64>() * field.dt;
    let target = match options.energy {
        EnergyTarget::Keep => None,
        EnergyTarget::FractionOfOriginal(f) => Some(original_energy * f),
        EnergyTarget::Absolute(e) => Some(e),
    };
    if let Some(t) = target {
        if new_energy > 0.0 && t >= 0.0 {
            let s = (t / new_energy).sqrt();
            values.mapv_inplace(|v| v * s);
        }
    }

    let tgrid = TimeGrid { n_steps: m, dt: field.dt };
    let shape = sample_shape(&ShapeKind::Sine, &tgrid);
    ControlField::new(values, shape, field.alpha, field.dt)
}

/// Natural optimization horizon for transferring out of level v.
#[derive(Debug, Clone, Copy)]
pub struct TimeHint {
    /// `T* = 2 pi / (E_v - E_{v-1})`, the local vibrational period.
    pub t_star: f64,
    /// The usual good choice `2 T*`.
    pub recommended: f64,
}

/// Vibrational-period hint from the level spacing below `v`.
pub fn minimal_time_hint(basis: &EigenBasis, v: usize) -> Result<TimeHint> {
    if v == 0 {
        return Err(VibError::invalid("level v = 0 has no lower neighbor"));
    }
    if v >= basis.n_states() {
        return Err(VibError::invalid(format!(
            "level {v} not available in a basis of {} states",
            basis.n_states()
        )));
    }
    let gap = (basis.energies[v] - basis.energies[v - 1]).abs();
    if gap == 0.0 {
        return Err(VibError::numerical("degenerate neighboring levels"));
    }
    let t_star = 2.0 * std::f64::consts::PI / gap;
    Ok(TimeHint { t_star, recommended: 2.0 * t_star })
}
