//! Reflection coefficients of loads and of the voltage-to-phase circuit.

mod circuit;
mod network;
mod varactor;

pub use circuit::{
    band_flatness, circuit_s11, phase_voltage_curve, tune_reference_branch, Branch, CurvePoint,
    PhaseVoltageCurve, ReferenceBranch, ReflectiveCircuitSpec, TransmissionLineSpec, TuningGrid,
    TuningOutcome, DEFAULT_BAND_HI_HZ, DEFAULT_BAND_LO_HZ, REFERENCE_FREQUENCY_HZ,
};
pub use network::Abcd;
pub use varactor::{BiasConvention, VaractorFit, VaractorSpec};

use num_complex::Complex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RfError {
    #[error("domain error: {what} = {value}")]
    Domain { what: &'static str, value: f64 },
    #[error("bias {value} V outside valid range [0, {limit}] V")]
    BiasOutOfRange { value: f64, limit: f64 },
    #[error("invalid circuit spec: {field}: {reason}")]
    InvalidSpec { field: String, reason: String },
    #[error("reference tuning failed: best residual {best_residual_deg:.3} deg")]
    Tuning { best_residual_deg: f64 },
    #[error("invalid grid: {0}")]
    Grid(String),
}

pub(crate) fn domain<T: Real>(what: &'static str, value: T) -> RfError {
    RfError::Domain {
        what,
        value: value.to_f64_lossy(),
    }
}

/// Complex reflection coefficient at one frequency point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: serde::de::DeserializeOwned"))]
pub struct ReflectionCoefficient<T> {
    pub value: Complex<T>,
    pub frequency: T,
}

impl<T: Real> ReflectionCoefficient<T> {
    pub fn new(value: Complex<T>, frequency: T) -> Self {
        Self { value, frequency }
    }

    pub fn magnitude(&self) -> T {
        self.value.norm()
    }

    /// Phase in radians, `(-pi, pi]`.
    pub fn phase(&self) -> T {
        self.value.arg()
    }

    pub fn phase_deg(&self) -> T {
        self.value.arg().to_degrees()
    }
}

/// Terminating impedance referenced to a real characteristic impedance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: Real + serde::de::DeserializeOwned"))]
pub struct LoadImpedance<T> {
    pub z_load: Complex<T>,
    pub z_char: T,
    /// Marks `z_load = inf`; `z_load` is ignored when set.
    #[serde(default)]
    pub open: bool,
}

impl<T: Real> LoadImpedance<T> {
    pub fn new(z_load: Complex<T>, z_char: T) -> Self {
        Self {
            z_load,
            z_char,
            open: false,
        }
    }

    pub fn open(z_char: T) -> Self {
        Self {
            z_load: Complex::new(T::zero(), T::zero()),
            z_char,
            open: true,
        }
    }

    pub fn short(z_char: T) -> Self {
        Self::new(Complex::new(T::zero(), T::zero()), z_char)
    }

    /// Ideal capacitor `1 / (j 2 pi f C)`.
    pub fn capacitor(c: T, f: T, z_char: T) -> Self {
        let w = T::lit(2.0) * T::PI() * f;
        Self::new(Complex::new(T::zero(), -T::one() / (w * c)), z_char)
    }
}

/// `(Z_L - Z0) / (Z_L + Z0)`.
pub fn gamma_from_load<T: Real>(
    load: &LoadImpedance<T>,
    frequency: T,
) -> Result<ReflectionCoefficient<T>, RfError> {
    if !(load.z_char > T::zero()) || !load.z_char.is_finite() {
        return Err(domain("z_char", load.z_char));
    }
    if load.open {
        return Ok(ReflectionCoefficient::new(
            Complex::new(T::one(), T::zero()),
            frequency,
        ));
    }
    let z = load.z_load;
    if !z.re.is_finite() || !z.im.is_finite() {
        return Err(domain("z_load", z.re + z.im));
    }
    if z.re < T::zero() {
        return Err(domain("re(z_load)", z.re));
    }
    let z0 = Complex::new(load.z_char, T::zero());
    let num = z - z0;
    if num.re == T::zero() && num.im == T::zero() {
        return Ok(ReflectionCoefficient::new(num, frequency));
    }
    Ok(ReflectionCoefficient::new(num / (z + z0), frequency))
}

/// Shorted capacitor: unit magnitude, phase `-2 atan(2 pi f C Z0)`.
pub fn shorted_capacitor_reflection<T: Real>(
    c: T,
    f: T,
    z0: T,
) -> Result<ReflectionCoefficient<T>, RfError> {
    if !(c >= T::zero()) || !c.is_finite() {
        return Err(domain("capacitance", c));
    }
    if !(f > T::zero()) || !f.is_finite() {
        return Err(domain("frequency", f));
    }
    if !(z0 > T::zero()) || !z0.is_finite() {
        return Err(domain("z0", z0));
    }
    let x = T::lit(2.0) * T::PI() * f * c * z0;
    let theta = -T::lit(2.0) * x.atan();
    Ok(ReflectionCoefficient::new(
        Complex::from_polar(T::one(), theta),
        f,
    ))
}
