//! CSI estimation from the two HT-LTFs, phase extraction by CSI division,
//! segment digitization, voltage reconstruction and link metrics.

use num_complex::Complex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::phy::{fft_bin, subcarrier_index, LtfSymbol, OfdmEngine, Waveform, FFT_SIZE, GI_SAMPLES, SYMBOL_SAMPLES, USED_SUBCARRIERS};
use crate::scalar::{wrap_deg, wrap_pi, LineFit, Real};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReceiverError {
    #[error("LTF window needs {needed} samples, got {got}")]
    ShortWindow { needed: usize, got: usize },
    #[error("non-finite or saturated samples in LTF window")]
    Estimation,
    #[error("every subcarrier fell below the numeric floor")]
    AllExcluded,
    #[error("invalid digitizer: {0}")]
    Digitizer(String),
    #[error("metrics: {0}")]
    Metrics(String),
}

/// Per-subcarrier channel estimate ordered -28..=-1, 1..=28.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: serde::de::DeserializeOwned"))]
pub struct CsiVector<T> {
    pub h: Vec<Complex<T>>,
}

impl<T: Real> CsiVector<T> {
    /// Phase of the vector sum, a single-number summary of the raw CSI.
    pub fn mean_phase(&self) -> T {
        self.h
            .iter()
            .fold(Complex::new(T::zero(), T::zero()), |a, &b| a + b)
            .arg()
    }
}

/// Estimates CSI from the LTF body starting at `body_start` in `samples`.
pub fn estimate_csi_at<T: Real>(
    engine: &OfdmEngine<T>,
    samples: &[Complex<T>],
    body_start: usize,
    known: &LtfSymbol<T>,
) -> Result<CsiVector<T>, ReceiverError> {
    let end = body_start + FFT_SIZE;
    if samples.len() < end {
        return Err(ReceiverError::ShortWindow {
            needed: end,
            got: samples.len(),
        });
    }
    let body = &samples[body_start..end];
    if body.iter().any(|s| !s.re.is_finite() || !s.im.is_finite()) {
        return Err(ReceiverError::Estimation);
    }
    let y = engine.dft(body);
    // Undo the synthesis scaling: the body carries s_k / sqrt(56) per tone.
    let scale = T::lit(USED_SUBCARRIERS as f64).sqrt() / T::lit(FFT_SIZE as f64);
    let h = (0..USED_SUBCARRIERS)
        .map(|i| {
            let k = subcarrier_index(i);
            y[fft_bin(k)] * scale / known.value_at(k)
        })
        .collect();
    Ok(CsiVector { h })
}

/// Least-squares single-symbol estimate: drop the GI, DFT, divide by the
/// known sequence.
pub fn estimate_csi<T: Real>(rx_ltf: &Waveform<T>, known: &LtfSymbol<T>) -> Result<CsiVector<T>, ReceiverError> {
    if rx_ltf.len() < SYMBOL_SAMPLES {
        return Err(ReceiverError::ShortWindow {
            needed: SYMBOL_SAMPLES,
            got: rx_ltf.len(),
        });
    }
    estimate_csi_at(&OfdmEngine::new(), &rx_ltf.samples, GI_SAMPLES, known)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: serde::de::DeserializeOwned"))]
pub struct PhaseDifference<T> {
    /// Radians in `(-pi, pi]`; `None` where the regular CSI was too weak.
    pub per_subcarrier: Vec<Option<T>>,
    /// Circular mean in radians.
    pub mean: T,
    pub used: usize,
}

impl<T: Real> PhaseDifference<T> {
    pub fn mean_deg(&self) -> T {
        self.mean.to_degrees()
    }
}

/// `angle(ess_k / regular_k)` per subcarrier and their circular mean.
pub fn extract_phase_difference<T: Real>(
    regular: &CsiVector<T>,
    ess: &CsiVector<T>,
) -> Result<PhaseDifference<T>, ReceiverError> {
    let peak = regular.h.iter().fold(T::zero(), |a, h| a.max(h.norm()));
    let floor = peak * T::lit(1e-9);
    let mut acc = Complex::new(T::zero(), T::zero());
    let mut used = 0;
    let per_subcarrier = regular
        .h
        .iter()
        .zip(&ess.h)
        .map(|(&r, &e)| {
            let rn = r.norm();
            if !(rn > floor) || !rn.is_finite() || !e.re.is_finite() || !e.im.is_finite() {
                return None;
            }
            let q = e / r;
            let qn = q.norm();
            if !(qn > T::zero()) || !qn.is_finite() {
                return None;
            }
            acc = acc + q / qn;
            used += 1;
            Some(wrap_pi(q.arg()))
        })
        .collect();
    if used == 0 {
        return Err(ReceiverError::AllExcluded);
    }
    Ok(PhaseDifference {
        per_subcarrier,
        mean: acc.arg(),
        used,
    })
}

/// Carrier offset from two identical 64-sample bodies `lag` samples apart.
pub fn estimate_cfo<T: Real>(samples: &[Complex<T>], start: usize, lag: usize, sample_rate: T) -> T {
    let acc = (start..start + FFT_SIZE).fold(Complex::new(T::zero(), T::zero()), |a, n| {
        a + samples[n + lag] * samples[n].conj()
    });
    acc.arg() * sample_rate / (T::lit(2.0) * T::PI() * T::lit(lag as f64))
}

/// Removes a carrier offset in place; sample `n` sits at `n / sample_rate`.
pub fn correct_cfo<T: Real>(samples: &mut [Complex<T>], cfo_hz: T, sample_rate: T) {
    let w = -T::lit(2.0) * T::PI() * cfo_hz / sample_rate;
    for (n, s) in samples.iter_mut().enumerate() {
        *s = *s * Complex::from_polar(T::one(), w * T::lit(n as f64));
    }
}

/// Maps the usable phase span onto equal segments and back to volts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: Real + serde::de::DeserializeOwned"))]
pub struct DigitizerConfig<T> {
    pub phase_min_deg: T,
    pub phase_max_deg: T,
    pub n_segments: usize,
    /// `phase_deg = intercept + slope * volts`.
    pub calibration_intercept_deg: T,
    pub calibration_slope_deg_per_v: T,
}

impl<T: Real> DigitizerConfig<T> {
    pub fn new(phase_min_deg: T, phase_max_deg: T, n_segments: usize, calibration: LineFit<T>) -> Result<Self, ReceiverError> {
        let c = Self {
            phase_min_deg,
            phase_max_deg,
            n_segments,
            calibration_intercept_deg: calibration.intercept,
            calibration_slope_deg_per_v: calibration.slope,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), ReceiverError> {
        if !(self.phase_min_deg < self.phase_max_deg) {
            return Err(ReceiverError::Digitizer("phase_min must be below phase_max".into()));
        }
        if self.phase_max_deg - self.phase_min_deg > T::lit(360.0) {
            return Err(ReceiverError::Digitizer("span exceeds a full turn".into()));
        }
        if self.n_segments < 2 {
            return Err(ReceiverError::Digitizer("need at least 2 segments".into()));
        }
        if !(self.calibration_slope_deg_per_v != T::zero()) || !self.calibration_slope_deg_per_v.is_finite() {
            return Err(ReceiverError::Digitizer("calibration slope must be nonzero".into()));
        }
        Ok(())
    }

    pub fn calibration(&self) -> LineFit<T> {
        LineFit {
            intercept: self.calibration_intercept_deg,
            slope: self.calibration_slope_deg_per_v,
        }
    }

    pub fn width_deg(&self) -> T {
        (self.phase_max_deg - self.phase_min_deg) / T::lit(self.n_segments as f64)
    }

    pub fn bits_per_packet(&self) -> T {
        T::lit(self.n_segments as f64).log2()
    }

    /// Upper bound of segment `i`.
    pub fn upper_bound(&self, i: usize) -> T {
        self.phase_min_deg + self.width_deg() * T::lit((i + 1) as f64)
    }

    /// Representative of `phase_deg` modulo 360 closest to the span centre.
    pub fn unwrap_into_span(&self, phase_deg: T) -> T {
        let c = (self.phase_min_deg + self.phase_max_deg) / T::lit(2.0);
        c + wrap_deg(phase_deg - c)
    }

    /// Segment of `phase_deg`: segments are `(lo, hi]` except the first,
    /// so boundaries go to the lower segment; out-of-span values clamp.
    pub fn segment_of_deg(&self, phase_deg: T) -> usize {
        let u = self.unwrap_into_span(phase_deg);
        let n = self.n_segments;
        let x = (u - self.phase_min_deg) / self.width_deg();
        let mut i = if !(x > T::zero()) {
            0
        } else {
            (x.ceil().to_f64_lossy() as usize).saturating_sub(1).min(n - 1)
        };
        while i > 0 && u <= self.upper_bound(i - 1) {
            i -= 1;
        }
        while i < n - 1 && u > self.upper_bound(i) {
            i += 1;
        }
        i
    }

    pub fn voltage_of_deg(&self, phase_deg: T) -> T {
        self.calibration().invert(self.unwrap_into_span(phase_deg))
    }
}

pub fn digitize<T: Real>(phase: &PhaseDifference<T>, cfg: &DigitizerConfig<T>) -> usize {
    cfg.segment_of_deg(phase.mean_deg())
}

pub fn reconstruct_voltage<T: Real>(phase: &PhaseDifference<T>, cfg: &DigitizerConfig<T>) -> T {
    cfg.voltage_of_deg(phase.mean_deg())
}

/// One received packet as seen by the metrics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub true_v: f64,
    /// Noiseless embedded phase for `true_v`.
    pub true_phase_deg: f64,
    pub decoded_segment: usize,
    pub measured_phase_deg: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseErrorStats {
    pub p50: f64,
    pub p95: f64,
    pub max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub packets_rx: usize,
    pub bits_per_packet: f64,
    pub throughput_bps: f64,
    pub der: f64,
    pub phase_error_stats: PhaseErrorStats,
}

/// Linear-interpolated percentile of sorted data, `q` in `[0, 1]`.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn compute_metrics(
    trials: &[Trial],
    cfg: &DigitizerConfig<f64>,
    duration_s: f64,
) -> Result<MetricsReport, ReceiverError> {
    if trials.is_empty() {
        return Err(ReceiverError::Metrics("no received packets".into()));
    }
    if !(duration_s > 0.0) {
        return Err(ReceiverError::Metrics("duration must be positive".into()));
    }
    let wrong = trials
        .iter()
        .filter(|t| t.decoded_segment != cfg.segment_of_deg(t.true_phase_deg))
        .count();
    let mut errs: Vec<f64> = trials
        .iter()
        .map(|t| wrap_deg(t.measured_phase_deg - t.true_phase_deg).abs())
        .collect();
    errs.sort_by(f64::total_cmp);
    let bits = cfg.bits_per_packet();
    Ok(MetricsReport {
        packets_rx: trials.len(),
        bits_per_packet: bits,
        throughput_bps: trials.len() as f64 * bits / duration_s,
        der: wrong as f64 / trials.len() as f64,
        phase_error_stats: PhaseErrorStats {
            p50: percentile(&errs, 0.5),
            p95: percentile(&errs, 0.95),
            max: errs[errs.len() - 1],
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(n: usize) -> DigitizerConfig<f64> {
        DigitizerConfig::new(0.0, 40.0, n, LineFit { intercept: 0.0, slope: 8.0 }).unwrap()
    }

    #[test]
    fn identity_gives_unit_csi() {
        let sym = LtfSymbol::<f64>::ht_ltf();
        let w = crate::phy::generate_ltf_waveform(&sym);
        let h = estimate_csi(&w, &sym).unwrap();
        assert!(h.h.iter().all(|x| (x - Complex::new(1.0, 0.0)).norm() < 1e-12));
    }

    #[test]
    fn short_window_rejected() {
        let sym = LtfSymbol::<f64>::ht_ltf();
        let w = Waveform::new(vec![Complex::new(0.0, 0.0); 40], 20e6, 0.0);
        assert!(matches!(estimate_csi(&w, &sym), Err(ReceiverError::ShortWindow { .. })));
    }

    #[test]
    fn nan_rejected() {
        let sym = LtfSymbol::<f64>::ht_ltf();
        let mut w = crate::phy::generate_ltf_waveform(&sym);
        w.samples[30].re = f64::NAN;
        assert_eq!(estimate_csi(&w, &sym), Err(ReceiverError::Estimation));
    }

    #[test]
    fn rotation_recovered() {
        let r = CsiVector { h: vec![Complex::new(0.3f64, -1.2); 56] };
        let e = CsiVector { h: r.h.iter().map(|x| x * Complex::from_polar(1.0, 0.3)).collect() };
        let p = extract_phase_difference(&r, &e).unwrap();
        assert!((p.mean - 0.3).abs() < 1e-15);
        assert_eq!(p.used, 56);
        let z = extract_phase_difference(&r, &r).unwrap();
        assert_eq!(z.mean, 0.0);
    }

    #[test]
    fn all_excluded_errors() {
        let r = CsiVector { h: vec![Complex::new(0.0f64, 0.0); 56] };
        assert_eq!(extract_phase_difference(&r, &r), Err(ReceiverError::AllExcluded));
    }

    #[test]
    fn boundaries_round_down() {
        let c = cfg(10);
        assert_eq!(c.segment_of_deg(4.0), 0);
        assert_eq!(c.segment_of_deg(4.000001), 1);
        assert_eq!(c.segment_of_deg(0.0), 0);
        assert_eq!(c.segment_of_deg(40.0), 9);
        assert_eq!(c.segment_of_deg(-5.0), 0);
        assert_eq!(c.segment_of_deg(55.0), 9);
        assert!((c.bits_per_packet() - 10f64.log2()).abs() < 1e-12);
    }

    #[test]
    fn wrapped_phases_land_consistently() {
        let c = DigitizerConfig::new(150.0, 210.0, 6, LineFit { intercept: 150.0, slope: 12.0 }).unwrap();
        assert_eq!(c.segment_of_deg(-175.0), c.segment_of_deg(185.0));
        assert_eq!(c.segment_of_deg(-175.0), 3);
    }

    #[test]
    fn metrics_counting() {
        let c = cfg(10);
        let mut trials: Vec<Trial> = (0..10)
            .map(|i| {
                let v = 0.5 * i as f64;
                Trial { true_v: v, true_phase_deg: 8.0 * v, decoded_segment: c.segment_of_deg(8.0 * v), measured_phase_deg: 8.0 * v }
            })
            .collect();
        let m = compute_metrics(&trials, &c, 1.0).unwrap();
        assert_eq!(m.der, 0.0);
        trials[3].decoded_segment += 1;
        let m = compute_metrics(&trials, &c, 1.0).unwrap();
        assert!((m.der - 0.1).abs() < 1e-15);
        assert!((m.throughput_bps - 10.0 * 10f64.log2()).abs() < 1e-12);
        assert!(compute_metrics(&[], &c, 1.0).is_err());
    }

    #[test]
    fn calibration_fixed_point() {
        let c = DigitizerConfig::new(0.0, 40.0, 10, LineFit { intercept: 1.5, slope: 8.0 }).unwrap();
        assert_eq!(c.voltage_of_deg(1.5), 0.0);
    }
}
