use serde::{Deserialize, Serialize};

use super::RfError;
use crate::scalar::{LineFit, Real};

/// Which algebraic form of the junction-capacitance law the stored
/// `v0` belongs to. Both produce the same capacitance for the same device.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BiasConvention {
    /// `C0 / (1 + V/V0)^g` with `V0 > 0` and `V` the reverse-bias magnitude.
    #[default]
    ReverseMagnitude,
    /// `C0 / (1 - V/V0)^g` with `V0 < 0` stored signed.
    Signed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: Real + serde::de::DeserializeOwned"))]
pub struct VaractorSpec<T> {
    pub c0: T,
    pub v0: T,
    pub gamma_exp: T,
    #[serde(default)]
    pub reverse_sat_current: T,
    #[serde(default)]
    pub convention: BiasConvention,
    /// Highest accepted reverse bias.
    pub max_bias: T,
}

impl<T: Real> VaractorSpec<T> {
    /// Default part: 2.0 pF at 0 V falling to 0.35 pF at 5 V.
    pub fn default_part() -> Self {
        Self {
            c0: T::lit(2.0e-12),
            v0: T::lit(9.155),
            gamma_exp: T::lit(4.0),
            reverse_sat_current: T::lit(20e-9),
            convention: BiasConvention::ReverseMagnitude,
            max_bias: T::lit(5.0),
        }
    }

    /// GaAs hyperabrupt-style part: about 2.0 pF to 0.1 pF over 0-20 V.
    pub fn gaas_like() -> Self {
        Self {
            c0: T::lit(2.0e-12),
            v0: T::lit(2.0),
            gamma_exp: T::lit(1.25),
            reverse_sat_current: T::lit(50e-9),
            convention: BiasConvention::ReverseMagnitude,
            max_bias: T::lit(20.0),
        }
    }

    /// Same device expressed in the other convention.
    pub fn with_convention(mut self, convention: BiasConvention) -> Self {
        if convention != self.convention {
            self.v0 = -self.v0;
            self.convention = convention;
        }
        self
    }

    pub fn validate(&self) -> Result<(), RfError> {
        let bad = |field: &str, reason: &str| RfError::InvalidSpec {
            field: field.to_string(),
            reason: reason.to_string(),
        };
        if !(self.c0 > T::zero()) || !self.c0.is_finite() {
            return Err(bad("varactor.c0", "must be positive"));
        }
        if !(self.gamma_exp > T::zero()) || !self.gamma_exp.is_finite() {
            return Err(bad("varactor.gamma_exp", "must be positive"));
        }
        let v0_ok = match self.convention {
            BiasConvention::ReverseMagnitude => self.v0 > T::zero(),
            BiasConvention::Signed => self.v0 < T::zero(),
        };
        if !v0_ok || !self.v0.is_finite() {
            return Err(bad("varactor.v0", "sign does not match convention"));
        }
        if !(self.max_bias > T::zero()) || !self.max_bias.is_finite() {
            return Err(bad("varactor.max_bias", "must be positive"));
        }
        Ok(())
    }

    /// Junction capacitance at reverse bias `v_bias` volts.
    pub fn capacitance(&self, v_bias: T) -> Result<T, RfError> {
        if !(v_bias >= T::zero() && v_bias <= self.max_bias) {
            return Err(RfError::BiasOutOfRange {
                value: v_bias.to_f64_lossy(),
                limit: self.max_bias.to_f64_lossy(),
            });
        }
        let base = match self.convention {
            BiasConvention::ReverseMagnitude => T::one() + v_bias / self.v0,
            BiasConvention::Signed => T::one() - v_bias / self.v0,
        };
        Ok(self.c0 / base.powf(self.gamma_exp))
    }

    /// Least-squares fit of the law to `(volts, farads)` samples.
    ///
    /// For fixed `v0` the log form is linear in `(ln C0, gamma)`; `v0` is
    /// found by a log-spaced scan followed by golden-section refinement.
    pub fn fit(samples: &[(T, T)], max_bias: T) -> Result<VaractorFit<T>, RfError> {
        if samples.len() < 3 {
            return Err(RfError::Grid("varactor fit needs at least 3 samples".into()));
        }
        if samples.iter().any(|&(v, c)| !(v >= T::zero()) || !(c > T::zero())) {
            return Err(RfError::Grid("varactor fit needs v >= 0 and c > 0".into()));
        }
        let ln_c: Vec<T> = samples.iter().map(|&(_, c)| c.ln()).collect();
        let solve = |v0: T| -> (T, LineFit<T>) {
            let xs: Vec<T> = samples
                .iter()
                .map(|&(v, _)| -(T::one() + v / v0).ln())
                .collect();
            let line = LineFit::fit(&xs, &ln_c).unwrap_or(LineFit {
                intercept: T::zero(),
                slope: T::zero(),
            });
            let sse = xs
                .iter()
                .zip(&ln_c)
                .fold(T::zero(), |a, (&x, &y)| a + (line.eval(x) - y).powi(2));
            (sse, line)
        };
        let (lo, hi) = (T::lit(-2.0), T::lit(3.0));
        let steps = 200;
        let mut best = (T::infinity(), lo);
        for i in 0..=steps {
            let e = lo + (hi - lo) * T::lit(i as f64 / steps as f64);
            let (sse, _) = solve(T::lit(10.0).powf(e));
            if sse < best.0 {
                best = (sse, e);
            }
        }
        let step = (hi - lo) / T::lit(steps as f64);
        let (mut a, mut b) = (best.1 - step, best.1 + step);
        let g = T::lit(0.618_033_988_749_894_8);
        for _ in 0..80 {
            let m1 = b - g * (b - a);
            let m2 = a + g * (b - a);
            if solve(T::lit(10.0).powf(m1)).0 < solve(T::lit(10.0).powf(m2)).0 {
                b = m2;
            } else {
                a = m1;
            }
        }
        let v0 = T::lit(10.0).powf((a + b) / T::lit(2.0));
        let (sse, line) = solve(v0);
        let n = T::lit(samples.len() as f64);
        let spec = VaractorSpec {
            c0: line.intercept.exp(),
            v0,
            gamma_exp: line.slope,
            reverse_sat_current: T::zero(),
            convention: BiasConvention::ReverseMagnitude,
            max_bias,
        };
        spec.validate()?;
        Ok(VaractorFit {
            spec,
            rms_log_residual: (sse / n).sqrt(),
        })
    }
}

/// Result of [`VaractorSpec::fit`]; the residual is RMS in `ln C`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VaractorFit<T> {
    pub spec: VaractorSpec<T>,
    pub rms_log_residual: T,
}
