//! The tag's reflective conversion circuit.
//!
//! Node graph: antenna port -> TL1 -> shunt shorted stub TL2 -> series C_S
//! -> TL3 -> RF switch. The switch selects either the shunt varactor
//! (embedding branch) or a fixed shorted capacitor behind its own line
//! (reference branch). The bias choke is an ideal RF open and does not
//! appear in the cascade.

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use super::network::Abcd;
use super::varactor::VaractorSpec;
use super::{domain, shorted_capacitor_reflection, ReflectionCoefficient, RfError};
use crate::scalar::{unwrap_deg, wrap_deg, LineFit, Real};

pub const REFERENCE_FREQUENCY_HZ: f64 = 2.45e9;
pub const DEFAULT_BAND_LO_HZ: f64 = 2.40e9;
pub const DEFAULT_BAND_HI_HZ: f64 = 2.50e9;

const NEPER_PER_DB: f64 = 0.115_129_254_649_702_28;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: Real + serde::de::DeserializeOwned"))]
pub struct TransmissionLineSpec<T> {
    pub impedance: T,
    pub electrical_length_deg: T,
    pub reference_frequency: T,
    #[serde(default)]
    pub loss_db: T,
}

impl<T: Real> TransmissionLineSpec<T> {
    pub fn new(impedance: T, electrical_length_deg: T) -> Self {
        Self {
            impedance,
            electrical_length_deg,
            reference_frequency: T::lit(REFERENCE_FREQUENCY_HZ),
            loss_db: T::zero(),
        }
    }

    fn validate(&self, name: &str) -> Result<(), RfError> {
        let bad = |reason: &str| RfError::InvalidSpec {
            field: name.to_string(),
            reason: reason.to_string(),
        };
        if !(self.impedance > T::zero()) || !self.impedance.is_finite() {
            return Err(bad("impedance must be positive"));
        }
        if !(self.electrical_length_deg >= T::zero()) || !self.electrical_length_deg.is_finite() {
            return Err(bad("electrical length must be non-negative"));
        }
        if !(self.reference_frequency > T::zero()) {
            return Err(bad("reference frequency must be positive"));
        }
        if !(self.loss_db >= T::zero()) {
            return Err(bad("loss must be non-negative"));
        }
        Ok(())
    }

    /// Phase length in radians at `f`.
    pub fn beta_l(&self, f: T) -> T {
        self.electrical_length_deg.to_radians() * f / self.reference_frequency
    }

    fn alpha_l(&self) -> T {
        self.loss_db * T::lit(NEPER_PER_DB)
    }

    pub fn abcd(&self, f: T) -> Abcd<T> {
        Abcd::line(self.impedance, self.beta_l(f), self.alpha_l())
    }

    /// Admittance of this line used as a shunt stub shorted at its far end.
    fn shorted_stub_admittance(&self, f: T) -> Complex<T> {
        // Shorted load: Z_in = B / D, so Y = D / B stays finite at a quarter wave.
        let m = self.abcd(f);
        m.d / m.b
    }
}

/// Constant-phase branch selected by the RF switch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: Real + serde::de::DeserializeOwned"))]
pub struct ReferenceBranch<T> {
    /// Shorted capacitor; zero means an open end.
    pub c_ref: T,
    pub tl_ref: TransmissionLineSpec<T>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: Real + serde::de::DeserializeOwned"))]
pub struct ReflectiveCircuitSpec<T> {
    #[serde(default = "default_z0")]
    pub z0: T,
    pub tl1: TransmissionLineSpec<T>,
    /// `None` removes the stub (a zero-length shorted stub would short the port).
    pub tl2: Option<TransmissionLineSpec<T>>,
    pub c_series: T,
    pub tl3: TransmissionLineSpec<T>,
    /// Bias choke; RF-open, kept for completeness.
    pub l_bias: T,
    pub varactor: VaractorSpec<T>,
    pub reference: ReferenceBranch<T>,
}

fn default_z0<T: Real>() -> T {
    T::lit(50.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    Embedding,
    Reference,
}

impl<T: Real> Default for ReflectiveCircuitSpec<T> {
    fn default() -> Self {
        Self {
            z0: T::lit(50.0),
            tl1: TransmissionLineSpec::new(T::lit(50.0), T::lit(10.0)),
            tl2: Some(TransmissionLineSpec::new(T::lit(50.0), T::lit(70.0))),
            c_series: T::lit(2.0e-12),
            tl3: TransmissionLineSpec::new(T::lit(30.0), T::lit(35.0)),
            l_bias: T::lit(100e-9),
            varactor: VaractorSpec::default_part(),
            reference: ReferenceBranch {
                c_ref: T::lit(2.0e-12),
                tl_ref: TransmissionLineSpec::new(T::lit(50.0), T::zero()),
            },
        }
    }
}

impl<T: Real> ReflectiveCircuitSpec<T> {
    /// Degenerate circuit whose response reduces to a bare shorted varactor:
    /// zero-length lines, no stub, a huge series capacitor and an open
    /// reference.
    pub fn degenerate(varactor: VaractorSpec<T>) -> Self {
        let zero_line = TransmissionLineSpec::new(T::lit(50.0), T::zero());
        Self {
            z0: T::lit(50.0),
            tl1: zero_line,
            tl2: None,
            c_series: T::lit(1e-3),
            tl3: zero_line,
            l_bias: T::lit(100e-9),
            varactor,
            reference: ReferenceBranch {
                c_ref: T::zero(),
                tl_ref: zero_line,
            },
        }
    }

    /// Default circuit with TL2 shortened to `deg` degrees.
    pub fn with_tl2_length(mut self, deg: T) -> Self {
        if let Some(tl2) = self.tl2.as_mut() {
            tl2.electrical_length_deg = deg;
        }
        self
    }

    pub fn validate(&self) -> Result<(), RfError> {
        let bad = |field: &str, reason: &str| RfError::InvalidSpec {
            field: field.to_string(),
            reason: reason.to_string(),
        };
        if !(self.z0 > T::zero()) {
            return Err(bad("z0", "must be positive"));
        }
        self.tl1.validate("tl1")?;
        if let Some(tl2) = &self.tl2 {
            tl2.validate("tl2")?;
            if !(tl2.electrical_length_deg > T::zero()) {
                return Err(bad("tl2", "stub length must be positive"));
            }
        }
        self.tl3.validate("tl3")?;
        if !(self.c_series > T::zero()) || !self.c_series.is_finite() {
            return Err(bad("c_series", "must be positive"));
        }
        if !(self.l_bias > T::zero()) {
            return Err(bad("l_bias", "must be positive"));
        }
        self.varactor.validate()?;
        if !(self.reference.c_ref >= T::zero()) || !self.reference.c_ref.is_finite() {
            return Err(bad("reference.c_ref", "must be non-negative"));
        }
        self.reference.tl_ref.validate("reference.tl_ref")?;
        Ok(())
    }

    /// Network between the antenna port and the RF switch.
    fn shared_network(&self, f: T) -> Abcd<T> {
        let w = T::lit(2.0) * T::PI() * f;
        let mut m = self.tl1.abcd(f);
        if let Some(tl2) = &self.tl2 {
            m = m.then(&Abcd::shunt(tl2.shorted_stub_admittance(f)));
        }
        let zcs = Complex::new(T::zero(), -T::one() / (w * self.c_series));
        m.then(&Abcd::series(zcs)).then(&self.tl3.abcd(f))
    }

    fn reference_gamma(&self, f: T) -> Result<Complex<T>, RfError> {
        let load = shorted_capacitor_reflection(self.reference.c_ref, f, self.z0)?.value;
        let net = self.shared_network(f).then(&self.reference.tl_ref.abcd(f));
        Ok(net.input_reflection(self.z0, load))
    }

    fn embedding_gamma(&self, v_bias: T, f: T) -> Result<Complex<T>, RfError> {
        let cj = self.varactor.capacitance(v_bias)?;
        let load = shorted_capacitor_reflection(cj, f, self.z0)?.value;
        Ok(self.shared_network(f).input_reflection(self.z0, load))
    }
}

/// Input reflection coefficient of the circuit with the switch in `branch`.
pub fn circuit_s11<T: Real>(
    spec: &ReflectiveCircuitSpec<T>,
    branch: Branch,
    v_bias: T,
    f: T,
) -> Result<ReflectionCoefficient<T>, RfError> {
    spec.validate()?;
    if !(f > T::zero()) || !f.is_finite() {
        return Err(domain("frequency", f));
    }
    let g = match branch {
        Branch::Embedding => spec.embedding_gamma(v_bias, f)?,
        Branch::Reference => spec.reference_gamma(f)?,
    };
    if !g.re.is_finite() || !g.im.is_finite() {
        return Err(domain("s11", g.re));
    }
    Ok(ReflectionCoefficient::new(g, f))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvePoint<T> {
    pub volts: T,
    /// Absolute S11 phase of the embedding branch, unwrapped along the grid.
    pub phase_deg: T,
    /// Embedding phase minus reference phase, unwrapped along the grid.
    pub relative_phase_deg: T,
    pub magnitude: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseVoltageCurve<T> {
    pub frequency: T,
    pub points: Vec<CurvePoint<T>>,
    pub fit: LineFit<T>,
    pub max_residual_deg: T,
    pub rms_residual_deg: T,
}

impl<T: Real> PhaseVoltageCurve<T> {
    /// Phase at the last grid point minus phase at the first.
    pub fn span_deg(&self) -> T {
        match (self.points.first(), self.points.last()) {
            (Some(a), Some(b)) => b.phase_deg - a.phase_deg,
            _ => T::zero(),
        }
    }

    pub fn is_strictly_monotonic(&self) -> bool {
        let d: Vec<T> = self
            .points
            .windows(2)
            .map(|w| w[1].phase_deg - w[0].phase_deg)
            .collect();
        d.iter().all(|&x| x > T::zero()) || d.iter().all(|&x| x < T::zero())
    }
}

pub fn phase_voltage_curve<T: Real>(
    spec: &ReflectiveCircuitSpec<T>,
    f: T,
    v_grid: &[T],
) -> Result<PhaseVoltageCurve<T>, RfError> {
    if v_grid.is_empty() {
        return Err(RfError::Grid("voltage grid is empty".into()));
    }
    if v_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(RfError::Grid("voltage grid must be strictly ascending".into()));
    }
    let g_ref = circuit_s11(spec, Branch::Reference, T::zero(), f)?;
    let mut abs = Vec::with_capacity(v_grid.len());
    let mut rel = Vec::with_capacity(v_grid.len());
    let mut mags = Vec::with_capacity(v_grid.len());
    for &v in v_grid {
        let g = circuit_s11(spec, Branch::Embedding, v, f)?;
        abs.push(g.phase_deg());
        rel.push((g.value / g_ref.value).arg().to_degrees());
        mags.push(g.magnitude());
    }
    unwrap_deg(&mut abs);
    unwrap_deg(&mut rel);
    let fit = LineFit::fit(v_grid, &abs).unwrap_or(LineFit {
        intercept: abs[0],
        slope: T::zero(),
    });
    let mut max_res = T::zero();
    let mut sse = T::zero();
    for (&v, &p) in v_grid.iter().zip(&abs) {
        let r = p - fit.eval(v);
        max_res = max_res.max(r.abs());
        sse = sse + r * r;
    }
    let points = v_grid
        .iter()
        .zip(abs.iter().zip(rel.iter().zip(&mags)))
        .map(|(&volts, (&phase_deg, (&relative_phase_deg, &magnitude)))| CurvePoint {
            volts,
            phase_deg,
            relative_phase_deg,
            magnitude,
        })
        .collect();
    Ok(PhaseVoltageCurve {
        frequency: f,
        points,
        fit,
        max_residual_deg: max_res,
        rms_residual_deg: (sse / T::lit(v_grid.len() as f64)).sqrt(),
    })
}

/// Relative phase (embedding minus reference) across a frequency grid,
/// unwrapped, in degrees.
fn relative_phase_over_band<T: Real>(
    spec: &ReflectiveCircuitSpec<T>,
    v_bias: T,
    f_lo: T,
    f_hi: T,
    n: usize,
) -> Result<Vec<T>, RfError> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let f = f_lo + (f_hi - f_lo) * T::lit(i as f64 / (n - 1) as f64);
        let e = circuit_s11(spec, Branch::Embedding, v_bias, f)?;
        let r = circuit_s11(spec, Branch::Reference, v_bias, f)?;
        out.push((e.value / r.value).arg().to_degrees());
    }
    unwrap_deg(&mut out);
    Ok(out)
}

/// Number of frequency points used by [`band_flatness`].
pub const FLATNESS_POINTS: usize = 101;

/// Peak-to-peak of the embedded phase (embedding minus reference) over
/// `[f_lo, f_hi]` at bias `v_bias`.
pub fn band_flatness<T: Real>(
    spec: &ReflectiveCircuitSpec<T>,
    v_bias: T,
    f_lo: T,
    f_hi: T,
) -> Result<T, RfError> {
    if !(f_lo < f_hi) || !(f_lo > T::zero()) {
        return Err(RfError::Grid("band requires 0 < f_lo < f_hi".into()));
    }
    let p = relative_phase_over_band(spec, v_bias, f_lo, f_hi, FLATNESS_POINTS)?;
    let (lo, hi) = p
        .iter()
        .fold((T::infinity(), T::neg_infinity()), |(a, b), &x| (a.min(x), b.max(x)));
    Ok(hi - lo)
}

/// Search box for [`tune_reference_branch`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TuningGrid<T> {
    pub c_min: T,
    pub c_max: T,
    pub c_steps: usize,
    pub len_min_deg: T,
    pub len_max_deg: T,
    pub len_steps: usize,
    pub frequency: T,
    pub tolerance_deg: T,
    pub give_up_deg: T,
}

impl<T: Real> Default for TuningGrid<T> {
    fn default() -> Self {
        Self {
            c_min: T::lit(0.05e-12),
            c_max: T::lit(5.0e-12),
            c_steps: 200,
            len_min_deg: T::zero(),
            len_max_deg: T::lit(180.0),
            len_steps: 200,
            frequency: T::lit(REFERENCE_FREQUENCY_HZ),
            tolerance_deg: T::lit(0.5),
            give_up_deg: T::lit(5.0),
        }
    }
}

impl<T: Real> TuningGrid<T> {
    pub fn c_at(&self, i: usize) -> T {
        self.c_min + (self.c_max - self.c_min) * T::lit(i as f64 / (self.c_steps.max(2) - 1) as f64)
    }

    pub fn len_at(&self, j: usize) -> T {
        self.len_min_deg
            + (self.len_max_deg - self.len_min_deg)
                * T::lit(j as f64 / (self.len_steps.max(2) - 1) as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuningOutcome<T> {
    pub spec: ReflectiveCircuitSpec<T>,
    /// `|theta_ref - theta_embed(0 V)|` at the tuning frequency.
    pub residual_deg: T,
    /// Peak-to-peak of `theta_embed(0 V, f) - theta_ref(f)` over 2.40-2.50 GHz.
    pub band_mismatch_deg: T,
    pub converged: bool,
}

fn reference_residual<T: Real>(spec: &ReflectiveCircuitSpec<T>, f: T, target: Complex<T>) -> T {
    match spec.reference_gamma(f) {
        Ok(g) => wrap_deg((g / target).arg().to_degrees()).abs(),
        Err(_) => T::infinity(),
    }
}

fn band_mismatch<T: Real>(spec: &ReflectiveCircuitSpec<T>) -> Result<T, RfError> {
    let p = relative_phase_over_band(
        spec,
        T::zero(),
        T::lit(DEFAULT_BAND_LO_HZ),
        T::lit(DEFAULT_BAND_HI_HZ),
        11,
    )?;
    let (lo, hi) = p
        .iter()
        .fold((T::infinity(), T::neg_infinity()), |(a, b), &x| (a.min(x), b.max(x)));
    Ok(hi - lo)
}

/// Chooses `(c_ref, tl_ref length)` so the reference branch reproduces the
/// 0 V embedding phase at the tuning frequency.
///
/// Grid search, then compass refinement of the best cells. Among refined
/// candidates inside tolerance the one whose phase tracks the 0 V
/// embedding phase best across the band wins.
pub fn tune_reference_branch<T: Real>(
    spec: &ReflectiveCircuitSpec<T>,
    grid: &TuningGrid<T>,
) -> Result<TuningOutcome<T>, RfError> {
    spec.validate()?;
    if grid.c_steps < 2 || grid.len_steps < 2 || !(grid.c_max >= grid.c_min) || !(grid.c_min >= T::zero())
        || !(grid.len_max_deg >= grid.len_min_deg) || !(grid.len_min_deg >= T::zero())
    {
        return Err(RfError::Grid("tuning grid bounds are invalid".into()));
    }
    let f = grid.frequency;
    let target = spec.embedding_gamma(T::zero(), f)?;

    let current = reference_residual(spec, f, target);
    if current <= grid.tolerance_deg {
        return Ok(TuningOutcome {
            spec: *spec,
            residual_deg: current,
            band_mismatch_deg: band_mismatch(spec)?,
            converged: true,
        });
    }

    let with = |c: T, l: T| {
        let mut s = *spec;
        s.reference.c_ref = c;
        s.reference.tl_ref.electrical_length_deg = l;
        s
    };

    let mut cells: Vec<(T, usize, usize)> = Vec::with_capacity(grid.c_steps * grid.len_steps);
    for i in 0..grid.c_steps {
        for j in 0..grid.len_steps {
            let r = reference_residual(&with(grid.c_at(i), grid.len_at(j)), f, target);
            cells.push((r, i, j));
        }
    }
    cells.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));

    let dc0 = (grid.c_max - grid.c_min) / T::lit((grid.c_steps - 1) as f64);
    let dl0 = (grid.len_max_deg - grid.len_min_deg) / T::lit((grid.len_steps - 1) as f64);
    let mut refined: Vec<(T, T, T)> = Vec::new();
    for &(_, i, j) in cells.iter().take(24) {
        let (mut c, mut l) = (grid.c_at(i), grid.len_at(j));
        let mut r = reference_residual(&with(c, l), f, target);
        let (mut dc, mut dl) = (dc0, dl0);
        for _ in 0..60 {
            let mut moved = false;
            for (sc, sl) in [(T::one(), T::zero()), (-T::one(), T::zero()), (T::zero(), T::one()), (T::zero(), -T::one())] {
                let nc = (c + sc * dc).max(grid.c_min).min(grid.c_max);
                let nl = (l + sl * dl).max(grid.len_min_deg).min(grid.len_max_deg);
                let nr = reference_residual(&with(nc, nl), f, target);
                if nr < r {
                    c = nc;
                    l = nl;
                    r = nr;
                    moved = true;
                }
            }
            if !moved {
                dc = dc / T::lit(2.0);
                dl = dl / T::lit(2.0);
            }
        }
        refined.push((r, c, l));
    }

    let best_residual = refined
        .iter()
        .map(|x| x.0)
        .fold(T::infinity(), |a, b| a.min(b));
    if !(best_residual < grid.give_up_deg) {
        return Err(RfError::Tuning {
            best_residual_deg: best_residual.to_f64_lossy(),
        });
    }

    let mut best: Option<TuningOutcome<T>> = None;
    for &(r, c, l) in &refined {
        let ok = r <= grid.tolerance_deg;
        if !ok && r > best_residual {
            continue;
        }
        let s = with(c, l);
        let m = band_mismatch(&s)?;
        let cand = TuningOutcome {
            spec: s,
            residual_deg: r,
            band_mismatch_deg: m,
            converged: ok,
        };
        best = match best {
            None => Some(cand),
            Some(b) => {
                let better = match (cand.converged, b.converged) {
                    (true, false) => true,
                    (false, true) => false,
                    (true, true) => cand.band_mismatch_deg < b.band_mismatch_deg,
                    (false, false) => cand.residual_deg < b.residual_deg,
                };
                Some(if better { cand } else { b })
            }
        };
    }
    best.ok_or(RfError::Tuning {
        best_residual_deg: best_residual.to_f64_lossy(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize) -> Vec<f64> {
        (0..n).map(|i| 5.0 * i as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn default_spec_is_valid() {
        ReflectiveCircuitSpec::<f64>::default().validate().unwrap();
    }

    #[test]
    fn default_curve_shape() {
        let c = phase_voltage_curve(&ReflectiveCircuitSpec::default(), 2.45e9, &grid(26)).unwrap();
        assert!(c.is_strictly_monotonic());
        assert!((c.span_deg().abs() - 40.0).abs() < 3.0, "{}", c.span_deg());
        assert!(c.rms_residual_deg < 3.0);
    }

    #[test]
    fn reference_matches_zero_volt() {
        let s = ReflectiveCircuitSpec::<f64>::default();
        let e = circuit_s11(&s, Branch::Embedding, 0.0, 2.45e9).unwrap();
        let r = circuit_s11(&s, Branch::Reference, 0.0, 2.45e9).unwrap();
        assert!(wrap_deg(e.phase_deg() - r.phase_deg()).abs() < 0.5);
    }

    #[test]
    fn lossless_is_unit_magnitude() {
        let s = ReflectiveCircuitSpec::<f64>::default();
        for v in grid(11) {
            let g = circuit_s11(&s, Branch::Embedding, v, 2.42e9).unwrap();
            assert!((g.magnitude() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn lossy_lines_attenuate() {
        let mut s = ReflectiveCircuitSpec::<f64>::default();
        s.tl1.loss_db = 0.3;
        let g = circuit_s11(&s, Branch::Embedding, 2.0, 2.45e9).unwrap();
        assert!(g.magnitude() < 1.0 - 1e-3);
    }

    #[test]
    fn rejects_nonpositive_components() {
        let mut s = ReflectiveCircuitSpec::<f64>::default();
        s.c_series = 0.0;
        assert!(matches!(
            circuit_s11(&s, Branch::Embedding, 0.0, 2.45e9),
            Err(RfError::InvalidSpec { .. })
        ));
    }

    #[test]
    fn grid_must_ascend() {
        let s = ReflectiveCircuitSpec::<f64>::default();
        assert!(phase_voltage_curve(&s, 2.45e9, &[]).is_err());
        assert!(phase_voltage_curve(&s, 2.45e9, &[1.0, 0.5]).is_err());
        assert!(band_flatness(&s, 0.0, 2.5e9, 2.4e9).is_err());
    }

    #[test]
    fn tuning_fixed_point() {
        let s = ReflectiveCircuitSpec::<f64>::default();
        let out = tune_reference_branch(&s, &TuningGrid::default()).unwrap();
        assert_eq!(out.spec, s);
    }

    #[test]
    fn f32_curve() {
        let s = ReflectiveCircuitSpec::<f32>::default();
        let v: Vec<f32> = (0..6).map(|i| i as f32).collect();
        let c = phase_voltage_curve(&s, 2.45e9, &v).unwrap();
        assert!((c.span_deg().abs() - 40.0).abs() < 3.0);
    }
}
