//! Potential energy curves: tabulated (with optional long-range tails) and
//! analytic model forms used throughout the tests and presets.

use std::path::Path;

use crate::error::{Result, VibError};

/// Long-range extrapolation beyond the last table point, matched in value at
/// the last sample: `V(r) = asymptote - C_n / r^n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TailKind {
    /// `C3 / R^3`
    InverseCube,
    /// `C6 / R^6`
    InverseSixth,
}

impl TailKind {
    fn power(self) -> i32 {
        match self {
            TailKind::InverseCube => 3,
            TailKind::InverseSixth => 6,
        }
    }
}

#[derive(Debug, Clone)]
enum CurveForm {
    /// Linear interpolation in a strictly increasing table.
    Table { r: Vec<f64>, v: Vec<f64>, tail_coef: Option<(i32, f64)> },
    /// `D (1 - exp(-a (r - r_e)))^2 + offset`
    Morse { d: f64, a: f64, r_e: f64, offset: f64 },
    /// `k/2 (r - r_e)^2 + offset`
    Harmonic { k: f64, r_e: f64, offset: f64 },
}

/// One adiabatic potential curve in hartree over bohr.
#[derive(Debug, Clone)]
pub struct PotentialCurve {
    pub label: String,
    /// V at infinite separation; `f64::INFINITY` for confining model forms.
    pub asymptote: f64,
    form: CurveForm,
}

impl PotentialCurve {
    /// Parse a two-column "R V" text table ('#' starts a comment line).
    pub fn from_file(path: impl AsRef<Path>, label: impl Into<String>, tail: Option<TailKind>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| {
            VibError::invalid(format!("cannot read potential file {}: {e}", path.display()))
        })?;
        Self::from_table_text(&text, label, tail)
            .map_err(|e| VibError::invalid(format!("{}: {e}", path.display())))
    }

    pub fn from_table_text(text: &str, label: impl Into<String>, tail: Option<TailKind>) -> Result<Self> {
        let mut r = Vec::new();
        let mut v = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut it = line.split_whitespace();
            let (a, b) = (it.next(), it.next());
            match (a, b) {
                (Some(a), Some(b)) => {
                    let rv: f64 = a.parse().map_err(|_| {
                        VibError::invalid(format!("line {}: bad R value '{a}'", lineno + 1))
                    })?;
                    let vv: f64 = b.parse().map_err(|_| {
                        VibError::invalid(format!("line {}: bad V value '{b}'", lineno + 1))
                    })?;
                    r.push(rv);
                    v.push(vv);
                }
                _ => return Err(VibError::invalid(format!("line {}: expected 'R V'", lineno + 1))),
            }
        }
        Self::from_samples(r, v, label, tail)
    }

    pub fn from_samples(r: Vec<f64>, v: Vec<f64>, label: impl Into<String>, tail: Option<TailKind>) -> Result<Self> {
        if r.len() < 8 {
            return Err(VibError::invalid(format!(
                "potential table needs at least 8 samples, got {}",
                r.len()
            )));
        }
        if r.windows(2).any(|w| w[1] <= w[0]) {
            return Err(VibError::invalid("potential table R values must be strictly increasing"));
        }
        let v_last = *v.last().unwrap();
        let r_last = *r.last().unwrap();
        // without a declared tail the last sample is the best asymptote estimate
        let asymptote = v_last;
        let tail_coef = match tail {
            None => None,
            Some(kind) => {
                let n = kind.power();
                let c = (asymptote - v_last) * r_last.powi(n);
                Some((n, c))
            }
        };
        Ok(PotentialCurve {
            label: label.into(),
            asymptote,
            form: CurveForm::Table { r, v, tail_coef },
        })
    }

    /// Tabulated curve with an explicit asymptote; the tail coefficient is
    /// matched in value at the last sample. The last sample must already be
    /// within 10% of the declared asymptote depth.
    pub fn from_samples_with_asymptote(
        r: Vec<f64>,
        v: Vec<f64>,
        asymptote: f64,
        label: impl Into<String>,
        tail: Option<TailKind>,
    ) -> Result<Self> {
        let mut curve = Self::from_samples(r, v, label, tail)?;
        let (r_last, v_last) = match &curve.form {
            CurveForm::Table { r, v, .. } => (*r.last().unwrap(), *v.last().unwrap()),
            _ => unreachable!(),
        };
        if tail.is_some() {
            let v_min = curve.min_sampled_value();
            let depth = (asymptote - v_min).abs().max(f64::MIN_POSITIVE);
            if (v_last - asymptote).abs() > 0.1 * depth {
                return Err(VibError::invalid(format!(
                    "table end V({r_last}) = {v_last} is more than 10% of the well depth away from the declared asymptote {asymptote}"
                )));
            }
        }
        curve.asymptote = asymptote;
        if let CurveForm::Table { tail_coef, .. } = &mut curve.form {
            if let Some((n, c)) = tail_coef {
                *c = (asymptote - v_last) * r_last.powi(*n);
            }
        }
        Ok(curve)
    }

    /// Morse well `D (1 - e^{-a(r - r_e)})^2 + offset`; asymptote `offset + D`.
    pub fn morse(d: f64, a: f64, r_e: f64, offset: f64, label: impl Into<String>) -> Result<Self> {
        if d <= 0.0 || a <= 0.0 {
            return Err(VibError::invalid("Morse parameters D and a must be positive"));
        }
        Ok(PotentialCurve {
            label: label.into(),
            asymptote: offset + d,
            form: CurveForm::Morse { d, a, r_e, offset },
        })
    }

    /// Harmonic well `k/2 (r - r_e)^2 + offset`; confining, so no asymptote.
    pub fn harmonic(k: f64, r_e: f64, offset: f64, label: impl Into<String>) -> Result<Self> {
        if k <= 0.0 {
            return Err(VibError::invalid("harmonic force constant must be positive"));
        }
        Ok(PotentialCurve {
            label: label.into(),
            asymptote: f64::INFINITY,
            form: CurveForm::Harmonic { k, r_e, offset },
        })
    }

    /// Potential value at `r`; errors outside a table domain unless a tail
    /// extrapolation is configured.
    pub fn value(&self, r: f64) -> Result<f64> {
        match &self.form {
            CurveForm::Morse { d, a, r_e, offset } => {
                let x = 1.0 - (-a * (r - r_e)).exp();
                Ok(d * x * x + offset)
            }
            CurveForm::Harmonic { k, r_e, offset } => Ok(0.5 * k * (r - r_e) * (r - r_e) + offset),
            CurveForm::Table { r: rt, v: vt, tail_coef } => {
                let r0 = rt[0];
                let r1 = *rt.last().unwrap();
                if r < r0 {
                    return Err(VibError::invalid(format!(
                        "r = {r} below table start {r0} for curve '{}'",
                        self.label
                    )));
                }
                if r > r1 {
                    return match tail_coef {
                        Some((n, c)) => Ok(self.asymptote - c / r.powi(*n)),
                        None => Err(VibError::invalid(format!(
                            "r = {r} beyond table end {r1} for curve '{}' and no tail configured",
                            self.label
                        ))),
                    };
                }
                let idx = match rt.binary_search_by(|x| x.partial_cmp(&r).unwrap()) {
                    Ok(i) => return Ok(vt[i]),
                    Err(i) => i,
                };
                let (ra, rb) = (rt[idx - 1], rt[idx]);
                let t = (r - ra) / (rb - ra);
                Ok(vt[idx - 1] * (1.0 - t) + vt[idx] * t)
            }
        }
    }

    /// Sampled values over a slice of radii.
    pub fn values(&self, r: &[f64]) -> Result<Vec<f64>> {
        r.iter().map(|&x| self.value(x)).collect()
    }

    /// Minimum of the curve over its sampled or characteristic range.
    pub fn min_sampled_value(&self) -> f64 {
        match &self.form {
            CurveForm::Table { v, .. } => v.iter().cloned().fold(f64::INFINITY, f64::min),
            CurveForm::Morse { offset, .. } => *offset,
            CurveForm::Harmonic { offset, .. } => *offset,
        }
    }

    /// Table samples; synthesized for analytic forms (64 points around the well).
    pub fn samples(&self) -> Vec<(f64, f64)> {
        match &self.form {
            CurveForm::Table { r, v, .. } => r.iter().cloned().zip(v.iter().cloned()).collect(),
            CurveForm::Morse { a, r_e, .. } => {
                let lo = r_e - 2.0 / a;
                let hi = r_e + 10.0 / a;
                (0..64)
                    .map(|i| {
                        let r = lo + (hi - lo) * i as f64 / 63.0;
                        (r, self.value(r).unwrap())
                    })
                    .collect()
            }
            CurveForm::Harmonic { k, r_e, .. } => {
                let half_width = (2.0 / k).sqrt().max(1.0);
                (0..64)
                    .map(|i| {
                        let r = r_e - half_width + 2.0 * half_width * i as f64 / 63.0;
                        (r, self.value(r).unwrap())
                    })
                    .collect()
            }
        }
    }

    /// Domain over which `value` succeeds (tail extends the upper end).
    pub fn domain(&self) -> (f64, f64) {
        match &self.form {
            CurveForm::Table { r, tail_coef, .. } => {
                let hi = if tail_coef.is_some() { f64::INFINITY } else { *r.last().unwrap() };
                (r[0], hi)
            }
            _ => (f64::NEG_INFINITY, f64::INFINITY),
        }
    }
}

/// Analytic Morse level count: `floor(sqrt(2 m D)/a - 1/2) + 1`.
pub fn morse_level_count(d: f64, a: f64, mass: f64) -> usize {
    ((2.0 * mass * d).sqrt() / a - 0.5).floor() as usize + 1
}

/// Analytic Morse levels above the well minimum:
/// `E_v = w0 (v + 1/2) - a^2 (v + 1/2)^2 / (2 m)` with `w0 = a sqrt(2 D / m)`.
pub fn morse_level(d: f64, a: f64, mass: f64, v: usize) -> f64 {
    let w0 = a * (2.0 * d / mass).sqrt();
    let s = v as f64 + 0.5;
    w0 * s - a * a * s * s / (2.0 * mass)
}
