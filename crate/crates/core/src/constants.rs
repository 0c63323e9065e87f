//! CODATA 2018 values, SI units.

pub const BOLTZMANN: f64 = 1.380_649e-23;
pub const HBAR: f64 = 1.054_571_817e-34;
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
pub const VACUUM_PERMITTIVITY: f64 = 8.854_187_8128e-12;
pub const VACUUM_PERMEABILITY: f64 = 1.256_637_062_12e-6;

/// Angular frequency of one electron-volt, rad/s.
pub const RAD_PER_S_PER_EV: f64 = 1.519_267_447e15;
pub const CUBIC_ANGSTROM: f64 = 1e-30;
pub const PASCAL_PER_BAR: f64 = 1e5;
