//! 802.11n mixed-format packet timeline and training-field synthesis at
//! 20 MS/s. Only training fields carry meaningful samples; SIG and DATA
//! symbols are filled with fixed pseudo-random BPSK so the waveform has
//! realistic power but no decodable content.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Real;

pub const SAMPLE_RATE_HZ: f64 = 20e6;
pub const FFT_SIZE: usize = 64;
pub const GI_SAMPLES: usize = 16;
pub const SYMBOL_SAMPLES: usize = FFT_SIZE + GI_SAMPLES;
pub const SYMBOL_US: f64 = 4.0;
/// Start of HT-ELTF relative to the packet start.
pub const PREAMBLE_BEFORE_ELTF_US: f64 = 36.0;
pub const USED_SUBCARRIERS: usize = 56;

/// HT-LTF sequence on subcarriers -28..=28 (index 28 is DC).
pub const HT_LTF_SEQUENCE: [i8; 57] = [
    1, 1, 1, 1, -1, -1, 1, 1, -1, 1, -1, 1, 1, 1, 1, 1, 1, -1, -1, 1, 1, -1, 1, -1, 1, 1, 1, 1, 0,
    1, -1, -1, 1, 1, -1, 1, -1, 1, -1, -1, -1, -1, -1, 1, 1, -1, -1, 1, -1, 1, -1, 1, 1, 1, 1, -1,
    -1,
];

/// Short training sequence on subcarriers -26..=26, in units of `(1+j)`
/// scaled by `sqrt(13/6)`; the sign is given here.
const STF_SIGNS: [i8; 53] = [
    0, 0, 1, 0, 0, 0, -1, 0, 0, 0, 1, 0, 0, 0, -1, 0, 0, 0, -1, 0, 0, 0, 1, 0, 0, 0, 0, 0, 0, 0, -1,
    0, 0, 0, -1, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0,
];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PhyError {
    #[error("LTF symbol needs {USED_SUBCARRIERS} values of +1/-1, got {0}")]
    BadSymbol(String),
}

/// Data subcarrier index (-28..=-1, 1..=28) for position `i` in a
/// 56-entry CSI array.
pub fn subcarrier_index(i: usize) -> i32 {
    let i = i as i32;
    if i < 28 {
        i - 28
    } else {
        i - 27
    }
}

/// FFT bin for a subcarrier index.
pub fn fft_bin(k: i32) -> usize {
    k.rem_euclid(FFT_SIZE as i32) as usize
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING-KEBAB-CASE")]
pub enum PacketField {
    LStf,
    LLtf,
    LSig,
    HtSig,
    HtStf,
    HtDltf,
    HtEltf,
    Data,
}

impl fmt::Display for PacketField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::LStf => "L-STF",
            Self::LLtf => "L-LTF",
            Self::LSig => "L-SIG",
            Self::HtSig => "HT-SIG",
            Self::HtStf => "HT-STF",
            Self::HtDltf => "HT-DLTF",
            Self::HtEltf => "HT-ELTF",
            Self::Data => "DATA",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldSpan {
    pub field: PacketField,
    pub start_us: f64,
    pub duration_us: f64,
}

impl FieldSpan {
    pub fn end_us(&self) -> f64 {
        self.start_us + self.duration_us
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PacketTimeline {
    pub fields: Vec<FieldSpan>,
    pub sample_rate_hz: f64,
    pub n_data_symbols: usize,
    pub ess_enabled: bool,
}

impl PacketTimeline {
    pub fn field(&self, f: PacketField) -> Option<&FieldSpan> {
        self.fields.iter().find(|s| s.field == f)
    }

    pub fn airtime_us(&self) -> f64 {
        self.fields.last().map_or(0.0, FieldSpan::end_us)
    }

    /// Sample index at which `f` starts.
    pub fn start_sample(&self, f: PacketField) -> Option<usize> {
        self.field(f)
            .map(|s| (s.start_us * self.sample_rate_hz * 1e-6).round() as usize)
    }

    pub fn total_samples(&self) -> usize {
        (self.airtime_us() * self.sample_rate_hz * 1e-6).round() as usize
    }
}

/// Mixed-format field layout; with ESS the extra LTF occupies 36-40 us.
pub fn build_packet_timeline(n_data_symbols: usize, ess_enabled: bool) -> PacketTimeline {
    let mut fields = Vec::with_capacity(8);
    let mut t = 0.0;
    let mut push = |field, dur: f64| {
        fields.push(FieldSpan {
            field,
            start_us: t,
            duration_us: dur,
        });
        t += dur;
    };
    push(PacketField::LStf, 8.0);
    push(PacketField::LLtf, 8.0);
    push(PacketField::LSig, 4.0);
    push(PacketField::HtSig, 8.0);
    push(PacketField::HtStf, 4.0);
    push(PacketField::HtDltf, 4.0);
    if ess_enabled {
        push(PacketField::HtEltf, 4.0);
    }
    if n_data_symbols > 0 {
        push(PacketField::Data, SYMBOL_US * n_data_symbols as f64);
    }
    PacketTimeline {
        fields,
        sample_rate_hz: SAMPLE_RATE_HZ,
        n_data_symbols,
        ess_enabled,
    }
}

/// Complex baseband samples with their rate and absolute start time.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform<T> {
    pub samples: Vec<Complex<T>>,
    pub sample_rate: T,
    pub start_time_us: T,
}

impl<T: Real> Waveform<T> {
    pub fn new(samples: Vec<Complex<T>>, sample_rate: T, start_time_us: T) -> Self {
        Self {
            samples,
            sample_rate,
            start_time_us,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Time of sample `n` in microseconds.
    pub fn time_us(&self, n: usize) -> T {
        self.start_time_us + T::lit(n as f64) / self.sample_rate * T::lit(1e6)
    }

    pub fn end_time_us(&self) -> T {
        self.time_us(self.samples.len())
    }

    pub fn mean_power(&self) -> T {
        if self.samples.is_empty() {
            return T::zero();
        }
        self.samples.iter().fold(T::zero(), |a, s| a + s.norm_sqr())
            / T::lit(self.samples.len() as f64)
    }

    pub fn slice(&self, start: usize, len: usize) -> Self {
        Self {
            samples: self.samples[start..start + len].to_vec(),
            sample_rate: self.sample_rate,
            start_time_us: self.time_us(start),
        }
    }

    pub fn scaled(&self, a: Complex<T>) -> Self {
        Self {
            samples: self.samples.iter().map(|&s| s * a).collect(),
            ..*self
        }
    }
}

impl<T: Copy> Waveform<T> {
    fn empty_like(sample_rate: T, start_time_us: T) -> Self {
        Self {
            samples: Vec::new(),
            sample_rate,
            start_time_us,
        }
    }
}

/// Known +-1 training sequence on the 56 used subcarriers.
#[derive(Debug, Clone, PartialEq)]
pub struct LtfSymbol<T> {
    /// Ordered -28..=-1, 1..=28.
    pub subcarrier_values: Vec<T>,
    pub gi_samples: usize,
    pub payload_samples: usize,
}

impl<T: Real> LtfSymbol<T> {
    pub fn ht_ltf() -> Self {
        let subcarrier_values = HT_LTF_SEQUENCE
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != 28)
            .map(|(_, &v)| T::lit(v as f64))
            .collect();
        Self {
            subcarrier_values,
            gi_samples: GI_SAMPLES,
            payload_samples: FFT_SIZE,
        }
    }

    pub fn from_values(values: &[T]) -> Result<Self, PhyError> {
        if values.len() != USED_SUBCARRIERS
            || values.iter().any(|&v| v != T::one() && v != -T::one())
        {
            return Err(PhyError::BadSymbol(format!("{} entries", values.len())));
        }
        Ok(Self {
            subcarrier_values: values.to_vec(),
            gi_samples: GI_SAMPLES,
            payload_samples: FFT_SIZE,
        })
    }

    /// Value on subcarrier `k`, zero for DC and unused tones.
    pub fn value_at(&self, k: i32) -> T {
        match k {
            -28..=-1 => self.subcarrier_values[(k + 28) as usize],
            1..=28 => self.subcarrier_values[(k + 27) as usize],
            _ => T::zero(),
        }
    }
}

/// Cached 64-point transforms.
#[derive(Clone)]
pub struct OfdmEngine<T: Real> {
    fwd: Arc<dyn Fft<T>>,
    inv: Arc<dyn Fft<T>>,
}

impl<T: Real> fmt::Debug for OfdmEngine<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("OfdmEngine(64)")
    }
}

impl<T: Real> Default for OfdmEngine<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> OfdmEngine<T> {
    pub fn new() -> Self {
        let mut p = FftPlanner::new();
        Self {
            fwd: p.plan_fft_forward(FFT_SIZE),
            inv: p.plan_fft_inverse(FFT_SIZE),
        }
    }

    /// Unnormalized forward DFT of 64 samples.
    pub fn dft(&self, x: &[Complex<T>]) -> Vec<Complex<T>> {
        let mut buf = x[..FFT_SIZE].to_vec();
        self.fwd.process(&mut buf);
        buf
    }

    /// `sum_k X_k e^{+j 2 pi k n / 64}`, unnormalized.
    pub fn idft(&self, bins: &[Complex<T>]) -> Vec<Complex<T>> {
        let mut buf = bins[..FFT_SIZE].to_vec();
        self.inv.process(&mut buf);
        buf
    }

    /// Body of one OFDM symbol for `tones` given as `(subcarrier, value)`,
    /// scaled to unit mean power.
    fn body(&self, tones: &[(i32, Complex<T>)]) -> Vec<Complex<T>> {
        let mut bins = vec![Complex::new(T::zero(), T::zero()); FFT_SIZE];
        let mut p = T::zero();
        for &(k, v) in tones {
            bins[fft_bin(k)] = v;
            p = p + v.norm_sqr();
        }
        let scale = T::one() / p.sqrt();
        self.idft(&bins).into_iter().map(|s| s * scale).collect()
    }

    /// GI + body, 80 samples.
    pub fn ltf(&self, symbol: &LtfSymbol<T>) -> Waveform<T> {
        let tones: Vec<(i32, Complex<T>)> = (0..USED_SUBCARRIERS)
            .map(|i| (subcarrier_index(i), Complex::new(symbol.subcarrier_values[i], T::zero())))
            .collect();
        let body = self.body(&tones);
        let mut samples = Vec::with_capacity(SYMBOL_SAMPLES);
        samples.extend_from_slice(&body[FFT_SIZE - symbol.gi_samples..]);
        samples.extend_from_slice(&body);
        Waveform::new(samples, T::lit(SAMPLE_RATE_HZ), T::zero())
    }

    fn stf_body(&self) -> Vec<Complex<T>> {
        let tones: Vec<(i32, Complex<T>)> = STF_SIGNS
            .iter()
            .enumerate()
            .filter(|&(_, &s)| s != 0)
            .map(|(i, &s)| {
                let s = T::lit(s as f64);
                (i as i32 - 26, Complex::new(s, s))
            })
            .collect();
        self.body(&tones)
    }

    fn legacy_ltf_body(&self) -> Vec<Complex<T>> {
        let tones: Vec<(i32, Complex<T>)> = (-26..=26)
            .filter(|&k| k != 0)
            .map(|k| (k, Complex::new(T::lit(HT_LTF_SEQUENCE[(k + 28) as usize] as f64), T::zero())))
            .collect();
        self.body(&tones)
    }

    /// Opaque symbol: fixed pseudo-random BPSK on the 52 legacy tones.
    fn opaque_symbol(&self, rng: &mut ChaCha8Rng) -> Vec<Complex<T>> {
        let tones: Vec<(i32, Complex<T>)> = (-26..=26)
            .filter(|&k| k != 0)
            .map(|k| {
                let v = if rng.random::<bool>() { T::one() } else { -T::one() };
                (k, Complex::new(v, T::zero()))
            })
            .collect();
        with_gi(&self.body(&tones))
    }

    /// Full packet waveform starting at `start_time_us`. Every field has
    /// unit mean power over its body; SIG/DATA content derives from
    /// `content_seed`.
    pub fn packet(&self, timeline: &PacketTimeline, content_seed: u64, start_time_us: T) -> Waveform<T> {
        let mut rng = ChaCha8Rng::seed_from_u64(content_seed);
        let mut out = Waveform::empty_like(T::lit(timeline.sample_rate_hz), start_time_us);
        let ltf = self.ltf(&LtfSymbol::ht_ltf()).samples;
        for span in &timeline.fields {
            let n = (span.duration_us * timeline.sample_rate_hz * 1e-6).round() as usize;
            match span.field {
                PacketField::LStf | PacketField::HtStf => {
                    let body = self.stf_body();
                    out.samples.extend((0..n).map(|i| body[i % FFT_SIZE]));
                }
                PacketField::LLtf => {
                    let body = self.legacy_ltf_body();
                    out.samples.extend_from_slice(&body[FFT_SIZE - 2 * GI_SAMPLES..]);
                    out.samples.extend_from_slice(&body);
                    out.samples.extend_from_slice(&body);
                }
                PacketField::HtDltf | PacketField::HtEltf => out.samples.extend_from_slice(&ltf),
                PacketField::LSig | PacketField::HtSig | PacketField::Data => {
                    for _ in 0..n / SYMBOL_SAMPLES {
                        out.samples.extend(self.opaque_symbol(&mut rng));
                    }
                }
            }
        }
        out
    }
}

fn with_gi<T: Copy>(body: &[Complex<T>]) -> Vec<Complex<T>> {
    let mut v = Vec::with_capacity(SYMBOL_SAMPLES);
    v.extend_from_slice(&body[FFT_SIZE - GI_SAMPLES..]);
    v.extend_from_slice(body);
    v
}

/// One LTF (GI + body) for `symbol`.
pub fn generate_ltf_waveform<T: Real>(symbol: &LtfSymbol<T>) -> Waveform<T> {
    OfdmEngine::new().ltf(symbol)
}
