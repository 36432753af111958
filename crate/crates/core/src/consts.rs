//! Physical constants (CODATA 2018, SI).

pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;
pub const ATOMIC_MASS: f64 = 1.660_539_066_60e-27;
pub const HBAR: f64 = 1.054_571_817e-34;
pub const EPSILON_0: f64 = 8.854_187_812_8e-12;

/// Mass of a 40Ca+ ion.
pub const CA40_MASS: f64 = 39.962_591 * ATOMIC_MASS;

/// `1 / (4 pi epsilon_0)`.
pub const COULOMB_K: f64 = 1.0 / (4.0 * std::f64::consts::PI * EPSILON_0);
