//! Unit conversions. Everything inside the crate is in Hartree atomic units
//! (hartree, bohr, electron mass, hbar = 1); these constants form the single
//! conversion boundary for external I/O.

/// Wavenumbers per hartree.
pub const CM1_PER_HARTREE: f64 = 219474.6313632;

/// Seconds per atomic time unit.
pub const SECOND_PER_AU: f64 = 2.418_884_326_585_7e-17;

/// Femtoseconds per atomic time unit.
pub const FS_PER_AU: f64 = SECOND_PER_AU * 1e15;

/// Electron masses per unified atomic mass unit.
pub const ME_PER_AMU: f64 = 1822.888_486_209;

/// Volts per meter per atomic unit of electric field.
pub const VOLT_PER_METER_PER_AU: f64 = 5.142_206_751_12e11;

/// Meters per bohr.
pub const METER_PER_BOHR: f64 = 0.529_177_210_903e-10;

/// Vacuum permittivity, F/m.
pub const VACUUM_PERMITTIVITY_SI: f64 = 8.854_187_812_8e-12;

/// Speed of light, m/s.
pub const SPEED_OF_LIGHT_SI: f64 = 2.997_924_58e8;

pub fn cm1_to_hartree(w: f64) -> f64 {
    w / CM1_PER_HARTREE
}

pub fn hartree_to_cm1(e: f64) -> f64 {
    e * CM1_PER_HARTREE
}

pub fn fs_to_au(t: f64) -> f64 {
    t / FS_PER_AU
}

pub fn au_to_fs(t: f64) -> f64 {
    t * FS_PER_AU
}

pub fn ps_to_au(t: f64) -> f64 {
    t * 1e3 / FS_PER_AU
}

pub fn amu_to_me(m: f64) -> f64 {
    m * ME_PER_AMU
}
