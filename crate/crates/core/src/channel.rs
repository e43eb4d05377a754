//! Environment and tag propagation: multipath taps, tag reflection with a
//! time-varying reflection coefficient, square-wave frequency shifting,
//! CFO/SFO and additive noise.
//!
//! The output waveform is what the receiver sees after channelizing to the
//! secondary channel when mixing is on (only the +20 MHz image is kept),
//! or to the original channel when mixing is off.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::phy::Waveform;

pub const MIXER_FREQUENCY_HZ: f64 = 20e6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChannelError {
    #[error("channel needs at least one tap")]
    NoTaps,
    #[error("non-finite tap gain at delay {0}")]
    BadTap(usize),
    #[error("empty input waveform")]
    EmptyInput,
    #[error("schedule error: {0}")]
    Schedule(String),
    #[error("invalid parameter: {0}")]
    Param(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tap {
    pub delay: usize,
    pub gain: Complex64,
}

impl Tap {
    pub fn unit() -> Self {
        Self {
            delay: 0,
            gain: Complex64::new(1.0, 0.0),
        }
    }
}

/// One realization of the environment between transmitter, tag and
/// receiver for a single packet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelModel {
    /// Tag-path impulse response (Tx -> tag -> Rx), path gain included.
    pub taps: Vec<Tap>,
    /// `None` disables noise.
    pub snr_db: Option<f64>,
    pub cfo_hz: f64,
    pub sfo_ppm: f64,
    /// Oscillator phase common to the whole packet.
    #[serde(default)]
    pub common_phase_rad: f64,
    pub seed: u64,
    /// Unshifted Tx -> Rx path.
    #[serde(default)]
    pub direct_path: Vec<Tap>,
    /// Leakage of the unshifted signal into the secondary channel; `None`
    /// is an ideal channel filter.
    #[serde(default)]
    pub adjacent_leakage_db: Option<f64>,
    /// Power that `snr_db` is referenced to. `None` uses the power of this
    /// realization's tag path, so the SNR holds exactly per packet.
    #[serde(default)]
    pub noise_reference_power: Option<f64>,
}

impl ChannelModel {
    pub fn identity() -> Self {
        Self {
            taps: vec![Tap::unit()],
            snr_db: None,
            cfo_hz: 0.0,
            sfo_ppm: 0.0,
            common_phase_rad: 0.0,
            seed: 0,
            direct_path: Vec::new(),
            adjacent_leakage_db: None,
            noise_reference_power: None,
        }
    }

    pub fn validate(&self) -> Result<(), ChannelError> {
        if self.taps.is_empty() {
            return Err(ChannelError::NoTaps);
        }
        for t in self.taps.iter().chain(&self.direct_path) {
            if !t.gain.re.is_finite() || !t.gain.im.is_finite() {
                return Err(ChannelError::BadTap(t.delay));
            }
        }
        for (name, v) in [("cfo_hz", self.cfo_hz), ("sfo_ppm", self.sfo_ppm)] {
            if !v.is_finite() {
                return Err(ChannelError::Param(name.into()));
            }
        }
        Ok(())
    }

    pub fn tap_power(&self) -> f64 {
        self.taps.iter().map(|t| t.gain.norm_sqr()).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Mixing {
    #[default]
    Off,
    #[serde(rename = "square_20mhz")]
    SquareWave20MHz,
}

/// Reflection coefficient over one segment of time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GammaProfile {
    Constant(Complex64),
    /// Linear interpolation from `from` at segment start to `to` at end.
    Ramp { from: Complex64, to: Complex64 },
    /// Piecewise-linear samples; held constant past the last entry.
    Table {
        times_us: Vec<f64>,
        values: Vec<Complex64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReflectionSegment {
    pub start_us: f64,
    pub end_us: f64,
    pub profile: GammaProfile,
}

impl ReflectionSegment {
    pub fn constant(start_us: f64, end_us: f64, gamma: Complex64) -> Self {
        Self {
            start_us,
            end_us,
            profile: GammaProfile::Constant(gamma),
        }
    }

    fn eval(&self, t_us: f64) -> Complex64 {
        match &self.profile {
            GammaProfile::Constant(g) => *g,
            GammaProfile::Ramp { from, to } => {
                let span = self.end_us - self.start_us;
                let a = if span > 0.0 {
                    ((t_us - self.start_us) / span).clamp(0.0, 1.0)
                } else {
                    1.0
                };
                from + (to - from) * a
            }
            GammaProfile::Table { times_us, values } => {
                let i = times_us.partition_point(|&x| x <= t_us);
                if i == 0 {
                    values[0]
                } else if i >= times_us.len() {
                    values[values.len() - 1]
                } else {
                    let (t0, t1) = (times_us[i - 1], times_us[i]);
                    let a = (t_us - t0) / (t1 - t0);
                    values[i - 1] + (values[i] - values[i - 1]) * a
                }
            }
        }
    }
}

/// Time-varying reflection of the tag over a packet. Times are absolute,
/// on the same clock as [`Waveform::start_time_us`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TagReflectionSchedule {
    pub segments: Vec<ReflectionSegment>,
    pub mixing: Mixing,
    pub mixer_harmonics: u32,
    /// Phase of the tag's square wave at t = 0.
    #[serde(default)]
    pub mixer_phase_rad: f64,
}

impl TagReflectionSchedule {
    pub fn constant(start_us: f64, end_us: f64, gamma: Complex64) -> Self {
        Self {
            segments: vec![ReflectionSegment::constant(start_us, end_us, gamma)],
            mixing: Mixing::Off,
            mixer_harmonics: 1,
            mixer_phase_rad: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), ChannelError> {
        let mut last = f64::NEG_INFINITY;
        for s in &self.segments {
            if !(s.start_us <= s.end_us) {
                return Err(ChannelError::Schedule(format!(
                    "segment [{}, {}) is reversed",
                    s.start_us, s.end_us
                )));
            }
            if s.start_us < last - 1e-9 {
                return Err(ChannelError::Schedule(format!(
                    "segment at {} us overlaps the previous one",
                    s.start_us
                )));
            }
            if let GammaProfile::Table { times_us, values } = &s.profile {
                if times_us.is_empty() || times_us.len() != values.len() {
                    return Err(ChannelError::Schedule("malformed gamma table".into()));
                }
            }
            last = s.end_us;
        }
        if self.mixing == Mixing::SquareWave20MHz && self.mixer_harmonics == 0 {
            return Err(ChannelError::Schedule("mixer needs at least one harmonic".into()));
        }
        Ok(())
    }

    /// Reflection at `t_us`; zero in gaps.
    pub fn gamma_at(&self, t_us: f64) -> Complex64 {
        let i = self.segments.partition_point(|s| s.end_us <= t_us);
        match self.segments.get(i) {
            Some(s) if s.start_us <= t_us => s.eval(t_us),
            _ => Complex64::new(0.0, 0.0),
        }
    }

    pub fn end_us(&self) -> f64 {
        self.segments.last().map_or(f64::NEG_INFINITY, |s| s.end_us)
    }

    /// Drops or trims segments to `[start_us, end_us)`.
    pub fn clipped(&self, start_us: f64, end_us: f64) -> Self {
        let segments = self
            .segments
            .iter()
            .filter(|s| s.end_us > start_us && s.start_us < end_us)
            .map(|s| {
                let mut s = s.clone();
                if let GammaProfile::Ramp { from, to } = s.profile {
                    // Keep the ramp slope when trimming.
                    let f = ReflectionSegment { profile: GammaProfile::Ramp { from, to }, ..s.clone() };
                    let (a, b) = (s.start_us.max(start_us), s.end_us.min(end_us));
                    s.profile = GammaProfile::Ramp {
                        from: f.eval(a),
                        to: f.eval(b),
                    };
                }
                s.start_us = s.start_us.max(start_us);
                s.end_us = s.end_us.min(end_us);
                s
            })
            .collect();
        Self {
            segments,
            ..self.clone()
        }
    }

    /// Complex gain of the kept +20 MHz image relative to the incident
    /// signal; unity with mixing off.
    pub fn image_gain(&self) -> Complex64 {
        match self.mixing {
            Mixing::Off => Complex64::new(1.0, 0.0),
            Mixing::SquareWave20MHz => Complex64::from_polar(2.0 / PI, self.mixer_phase_rad),
        }
    }
}

/// 4-tap Lagrange interpolator delaying by `1 + frac` samples.
fn lagrange_fir(frac: f64) -> [f64; 4] {
    let d = 1.0 + frac;
    let mut h = [1.0; 4];
    for (k, hk) in h.iter_mut().enumerate() {
        for m in 0..4 {
            if m != k {
                *hk *= (d - m as f64) / (k as f64 - m as f64);
            }
        }
    }
    h
}

fn convolve(x: &[Complex64], taps: &[Tap]) -> Vec<Complex64> {
    let mut y = vec![Complex64::new(0.0, 0.0); x.len()];
    for t in taps {
        if t.delay >= x.len() {
            continue;
        }
        for (yn, xn) in y[t.delay..].iter_mut().zip(x) {
            *yn += t.gain * xn;
        }
    }
    y
}

/// Fractional sample offset accumulated by the sampling clock error up to
/// `t_us`; whole samples are absorbed by the receiver's timing.
pub fn sfo_fractional_offset(sfo_ppm: f64, t_us: f64, sample_rate: f64) -> f64 {
    let offset = sfo_ppm * 1e-6 * t_us * 1e-6 * sample_rate;
    offset - offset.floor()
}

fn effective_taps(channel: &ChannelModel, start_us: f64, sample_rate: f64) -> Vec<Tap> {
    if channel.sfo_ppm == 0.0 {
        return channel.taps.clone();
    }
    let h = lagrange_fir(sfo_fractional_offset(channel.sfo_ppm, start_us, sample_rate));
    let mut out: Vec<Tap> = Vec::with_capacity(channel.taps.len() * 4);
    for t in &channel.taps {
        for (k, &hk) in h.iter().enumerate() {
            out.push(Tap {
                delay: t.delay + k,
                gain: t.gain * hk,
            });
        }
    }
    out
}

/// Receiver-side waveform for transmitted `tx` reflected by the tag.
pub fn propagate(
    tx: &Waveform<f64>,
    channel: &ChannelModel,
    schedule: &TagReflectionSchedule,
) -> Result<Waveform<f64>, ChannelError> {
    if tx.is_empty() {
        return Err(ChannelError::EmptyInput);
    }
    channel.validate()?;
    schedule.validate()?;
    let end = tx.end_time_us();
    if schedule.end_us() > end + 1e-9 {
        return Err(ChannelError::Schedule(format!(
            "schedule ends at {} us, after waveform end {} us",
            schedule.end_us(),
            end
        )));
    }
    let fs = tx.sample_rate;
    let mix = schedule.image_gain();
    let tagged: Vec<Complex64> = tx
        .samples
        .iter()
        .enumerate()
        .map(|(n, &x)| x * schedule.gamma_at(tx.time_us(n)) * mix)
        .collect();
    let mut y = convolve(&tagged, &effective_taps(channel, tx.start_time_us, fs));

    if !channel.direct_path.is_empty() {
        let direct_gain = match (schedule.mixing, channel.adjacent_leakage_db) {
            (Mixing::Off, _) => Some(1.0),
            (Mixing::SquareWave20MHz, Some(db)) => Some(10f64.powf(db / 20.0)),
            (Mixing::SquareWave20MHz, None) => None,
        };
        if let Some(g) = direct_gain {
            for (yn, d) in y.iter_mut().zip(convolve(&tx.samples, &channel.direct_path)) {
                *yn += d * g;
            }
        }
    }

    if channel.cfo_hz != 0.0 || channel.common_phase_rad != 0.0 {
        for (n, yn) in y.iter_mut().enumerate() {
            let t_s = tx.time_us(n) * 1e-6;
            *yn *= Complex64::from_polar(1.0, 2.0 * PI * channel.cfo_hz * t_s + channel.common_phase_rad);
        }
    }

    if let Some(snr_db) = channel.snr_db {
        let p_ref = channel
            .noise_reference_power
            .unwrap_or_else(|| channel.tap_power() * mix.norm_sqr());
        let sigma2 = p_ref / 10f64.powf(snr_db / 10.0);
        add_noise(&mut y, sigma2, channel.seed)?;
    }
    Ok(Waveform::new(y, fs, tx.start_time_us))
}

/// Adds circular complex Gaussian noise of variance `sigma2`.
pub fn add_noise(y: &mut [Complex64], sigma2: f64, seed: u64) -> Result<(), ChannelError> {
    let normal = Normal::new(0.0, (sigma2 / 2.0).sqrt())
        .map_err(|e| ChannelError::Param(format!("noise variance: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for yn in y.iter_mut() {
        *yn += Complex64::new(normal.sample(&mut rng), normal.sample(&mut rng));
    }
    Ok(())
}

/// Multiplies by the odd-harmonic Fourier series of a unit 20 MHz square
/// wave truncated to `harmonics` terms.
pub fn mix_square_wave(x: &Waveform<f64>, harmonics: u32) -> Waveform<f64> {
    let samples = x
        .samples
        .iter()
        .enumerate()
        .map(|(n, &s)| {
            let t = x.time_us(n) * 1e-6;
            let m: f64 = (0..harmonics)
                .map(|h| {
                    let k = (2 * h + 1) as f64;
                    4.0 / (k * PI) * (2.0 * PI * k * MIXER_FREQUENCY_HZ * t).cos()
                })
                .sum();
            s * m
        })
        .collect();
    Waveform::new(samples, x.sample_rate, x.start_time_us)
}

/// Power of the unshifted direct path landing in the receive channel,
/// relative to the direct path itself.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InterferenceLevel {
    Db(f64),
    /// Fully rejected by an ideal channel filter.
    Rejected,
}

pub fn self_interference_power(
    channel: &ChannelModel,
    schedule: &TagReflectionSchedule,
) -> InterferenceLevel {
    match (schedule.mixing, channel.adjacent_leakage_db) {
        (Mixing::Off, _) => InterferenceLevel::Db(0.0),
        (Mixing::SquareWave20MHz, Some(db)) => InterferenceLevel::Db(db),
        (Mixing::SquareWave20MHz, None) => InterferenceLevel::Rejected,
    }
}

/// Statistical description of an environment, realized per packet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelProfile {
    pub n_taps: usize,
    /// Power decay per tap in dB.
    pub tap_decay_db: f64,
    /// Rician K-factor of the first tap; `None` is Rayleigh.
    pub rician_k_db: Option<f64>,
    /// Mean SNR of the tag path at the receiver; `None` disables noise.
    pub mean_snr_db: Option<f64>,
    pub cfo_hz_max: f64,
    pub sfo_ppm_max: f64,
    #[serde(default)]
    pub direct_path_db: Option<f64>,
    #[serde(default)]
    pub adjacent_leakage_db: Option<f64>,
}

impl Default for ChannelProfile {
    fn default() -> Self {
        Self {
            n_taps: 3,
            tap_decay_db: 6.0,
            rician_k_db: Some(6.0),
            mean_snr_db: Some(25.0),
            cfo_hz_max: 50e3,
            sfo_ppm_max: 20.0,
            direct_path_db: None,
            adjacent_leakage_db: None,
        }
    }
}

impl ChannelProfile {
    pub fn validate(&self) -> Result<(), ChannelError> {
        if self.n_taps == 0 {
            return Err(ChannelError::NoTaps);
        }
        if self.n_taps > 16 {
            return Err(ChannelError::Param("n_taps must not exceed the 16-sample guard".into()));
        }
        if !(self.cfo_hz_max >= 0.0 && self.cfo_hz_max < 150e3) {
            return Err(ChannelError::Param("cfo_hz_max must be in [0, 150 kHz)".into()));
        }
        if !(self.sfo_ppm_max >= 0.0) {
            return Err(ChannelError::Param("sfo_ppm_max must be non-negative".into()));
        }
        Ok(())
    }

    /// Draws taps, CFO, SFO and phases. Tap powers average to one, and the
    /// noise is referenced to that average, so fading changes per-packet SNR.
    pub fn realize<R: Rng + ?Sized>(&self, rng: &mut R, noise_seed: u64, image_power: f64) -> ChannelModel {
        let weights: Vec<f64> = (0..self.n_taps)
            .map(|i| 10f64.powf(-self.tap_decay_db * i as f64 / 10.0))
            .collect();
        let total: f64 = weights.iter().sum();
        let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
        let cn = |rng: &mut R, p: f64| {
            let s = (p / 2.0).sqrt();
            Complex64::new(s * std_normal.sample(rng), s * std_normal.sample(rng))
        };
        let mut taps = Vec::with_capacity(self.n_taps);
        for (i, w) in weights.iter().enumerate() {
            let p = w / total;
            let gain = if i == 0 {
                match self.rician_k_db {
                    Some(k_db) => {
                        let k = 10f64.powf(k_db / 10.0);
                        let los = Complex64::from_polar((p * k / (k + 1.0)).sqrt(), rng.random::<f64>() * 2.0 * PI);
                        los + cn(rng, p / (k + 1.0))
                    }
                    None => cn(rng, p),
                }
            } else {
                cn(rng, p)
            };
            taps.push(Tap { delay: i, gain });
        }
        let direct_path = match self.direct_path_db {
            Some(db) => vec![Tap {
                delay: 0,
                gain: Complex64::from_polar(10f64.powf(db / 20.0), rng.random::<f64>() * 2.0 * PI),
            }],
            None => Vec::new(),
        };
        ChannelModel {
            taps,
            snr_db: self.mean_snr_db,
            cfo_hz: (rng.random::<f64>() * 2.0 - 1.0) * self.cfo_hz_max,
            sfo_ppm: (rng.random::<f64>() * 2.0 - 1.0) * self.sfo_ppm_max,
            common_phase_rad: rng.random::<f64>() * 2.0 * PI,
            seed: noise_seed,
            direct_path,
            adjacent_leakage_db: self.adjacent_leakage_db,
            noise_reference_power: Some(image_power),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone(n: usize) -> Waveform<f64> {
        Waveform::new(vec![Complex64::new(1.0, 0.0); n], 20e6, 0.0)
    }

    #[test]
    fn lagrange_integer_delay_is_exact() {
        assert_eq!(lagrange_fir(0.0), [0.0, 1.0, 0.0, 0.0]);
        let h = lagrange_fir(0.3);
        assert!((h.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gamma_lookup_and_gaps() {
        let s = TagReflectionSchedule {
            segments: vec![
                ReflectionSegment::constant(0.0, 1.0, Complex64::new(1.0, 0.0)),
                ReflectionSegment {
                    start_us: 2.0,
                    end_us: 3.0,
                    profile: GammaProfile::Ramp {
                        from: Complex64::new(0.0, 0.0),
                        to: Complex64::new(1.0, 0.0),
                    },
                },
            ],
            mixing: Mixing::Off,
            mixer_harmonics: 1,
            mixer_phase_rad: 0.0,
        };
        assert_eq!(s.gamma_at(0.5).re, 1.0);
        assert_eq!(s.gamma_at(1.5).re, 0.0);
        assert!((s.gamma_at(2.5).re - 0.5).abs() < 1e-12);
        assert_eq!(s.gamma_at(3.0).re, 0.0);
        let c = s.clipped(2.5, 3.0);
        assert_eq!(c.segments.len(), 1);
        assert!((c.gamma_at(2.75).re - 0.75).abs() < 1e-12);
    }

    #[test]
    fn overlap_is_rejected() {
        let mut s = TagReflectionSchedule::constant(0.0, 2.0, Complex64::new(1.0, 0.0));
        s.segments.push(ReflectionSegment::constant(1.0, 3.0, Complex64::new(1.0, 0.0)));
        assert!(s.validate().is_err());
    }

    #[test]
    fn schedule_past_end_errors() {
        let x = tone(20);
        let s = TagReflectionSchedule::constant(0.0, 5.0, Complex64::new(1.0, 0.0));
        assert!(matches!(
            propagate(&x, &ChannelModel::identity(), &s),
            Err(ChannelError::Schedule(_))
        ));
    }

    #[test]
    fn noise_is_seeded() {
        let x = tone(100);
        let mut ch = ChannelModel::identity();
        ch.snr_db = Some(10.0);
        ch.seed = 9;
        let s = TagReflectionSchedule::constant(0.0, 5.0, Complex64::new(1.0, 0.0));
        let a = propagate(&x, &ch, &s).unwrap();
        let b = propagate(&x, &ch, &s).unwrap();
        assert_eq!(a, b);
        ch.seed = 10;
        assert_ne!(a, propagate(&x, &ch, &s).unwrap());
    }

    #[test]
    fn interference_levels() {
        let mut ch = ChannelModel::identity();
        let mut s = TagReflectionSchedule::constant(0.0, 1.0, Complex64::new(1.0, 0.0));
        assert_eq!(self_interference_power(&ch, &s), InterferenceLevel::Db(0.0));
        s.mixing = Mixing::SquareWave20MHz;
        assert_eq!(self_interference_power(&ch, &s), InterferenceLevel::Rejected);
        ch.adjacent_leakage_db = Some(-30.0);
        assert_eq!(self_interference_power(&ch, &s), InterferenceLevel::Db(-30.0));
    }

    #[test]
    fn profile_realization_is_normalized_on_average() {
        let p = ChannelProfile::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 4000;
        let mean: f64 = (0..n).map(|i| p.realize(&mut rng, i, 1.0).tap_power()).sum::<f64>() / n as f64;
        assert!((mean - 1.0).abs() < 0.05, "{mean}");
    }
}
