//! Sample-level simulator for analog WiFi backscatter that carries a sensor
//! voltage in the CSI phase of an extra HT-LTF.
//!
//! RF, OFDM and receiver math is generic over [`Real`] (`f32` or `f64`);
//! packet-level simulation and experiment plumbing run in `f64`.
pub mod channel;
pub mod experiment;
pub mod link;
pub mod mac;
pub mod phy;
pub mod receiver;
pub mod rf;
pub mod scalar;
pub mod tag;

pub use scalar::{Cplx, Real};

pub type ReflectionCoefficient64 = rf::ReflectionCoefficient<f64>;
pub type ReflectionCoefficient32 = rf::ReflectionCoefficient<f32>;
pub type LoadImpedance64 = rf::LoadImpedance<f64>;
pub type LoadImpedance32 = rf::LoadImpedance<f32>;
pub type VaractorSpec64 = rf::VaractorSpec<f64>;
pub type VaractorSpec32 = rf::VaractorSpec<f32>;
pub type CircuitSpec64 = rf::ReflectiveCircuitSpec<f64>;
pub type CircuitSpec32 = rf::ReflectiveCircuitSpec<f32>;
pub type PhaseVoltageCurve64 = rf::PhaseVoltageCurve<f64>;
pub type PhaseVoltageCurve32 = rf::PhaseVoltageCurve<f32>;
pub type Waveform64 = phy::Waveform<f64>;
pub type Waveform32 = phy::Waveform<f32>;
pub type LtfSymbol64 = phy::LtfSymbol<f64>;
pub type LtfSymbol32 = phy::LtfSymbol<f32>;
pub type OfdmEngine64 = phy::OfdmEngine<f64>;
pub type OfdmEngine32 = phy::OfdmEngine<f32>;
pub type CsiVector64 = receiver::CsiVector<f64>;
pub type CsiVector32 = receiver::CsiVector<f32>;
pub type PhaseDifference64 = receiver::PhaseDifference<f64>;
pub type PhaseDifference32 = receiver::PhaseDifference<f32>;
pub type Digitizer64 = receiver::DigitizerConfig<f64>;
pub type Digitizer32 = receiver::DigitizerConfig<f32>;
