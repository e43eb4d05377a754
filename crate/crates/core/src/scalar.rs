//! Scalar abstraction shared by the RF and OFDM math.
//!
//! The circuit model, LTF synthesis and CSI estimation are written against
//! [`Real`] so they run in `f32` or `f64`. The link simulator and the MAC
//! layer are fixed to `f64`.

use std::fmt;

use num_complex::Complex;
use num_traits::{Float, FloatConst, FromPrimitive};

/// Floating point scalar usable by every generic routine in this crate.
pub trait Real:
    Float + FloatConst + FromPrimitive + rustfft::FftNum + Default + fmt::Debug + fmt::Display
{
    /// Converts an `f64` constant into `Self`.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable in scalar type")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Complex number over a [`Real`] scalar.
pub type Cplx<T> = Complex<T>;

/// Wraps an angle in radians into `(-pi, pi]`.
pub fn wrap_pi<T: Real>(x: T) -> T {
    let two_pi = T::PI() + T::PI();
    let mut y = x % two_pi;
    if y <= -T::PI() {
        y = y + two_pi;
    } else if y > T::PI() {
        y = y - two_pi;
    }
    y
}

/// Wraps an angle in degrees into `(-180, 180]`.
pub fn wrap_deg<T: Real>(x: T) -> T {
    let full = T::lit(360.0);
    let half = T::lit(180.0);
    let mut y = x % full;
    if y <= -half {
        y = y + full;
    } else if y > half {
        y = y - full;
    }
    y
}

/// Unwraps a sequence of angles in degrees in place so consecutive
/// entries never jump by more than 180 degrees.
pub fn unwrap_deg<T: Real>(phases: &mut [T]) {
    for i in 1..phases.len() {
        let step = wrap_deg(phases[i] - phases[i - 1]);
        phases[i] = phases[i - 1] + step;
    }
}

/// Ordinary least-squares line `y = intercept + slope * x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit<T> {
    pub intercept: T,
    pub slope: T,
}

impl<T: Real> LineFit<T> {
    /// Fits a line through `(x, y)` pairs. Returns `None` for fewer than two
    /// points or when all `x` coincide.
    pub fn fit(xs: &[T], ys: &[T]) -> Option<Self> {
        if xs.len() != ys.len() || xs.len() < 2 {
            return None;
        }
        let n = T::from_usize(xs.len())?;
        let mx = xs.iter().fold(T::zero(), |a, &b| a + b) / n;
        let my = ys.iter().fold(T::zero(), |a, &b| a + b) / n;
        let mut sxx = T::zero();
        let mut sxy = T::zero();
        for (&x, &y) in xs.iter().zip(ys) {
            sxx = sxx + (x - mx) * (x - mx);
            sxy = sxy + (x - mx) * (y - my);
        }
        if sxx <= T::zero() {
            return None;
        }
        let slope = sxy / sxx;
        Some(Self {
            intercept: my - slope * mx,
            slope,
        })
    }

    pub fn eval(&self, x: T) -> T {
        self.intercept + self.slope * x
    }

    /// Inverse map `x = (y - intercept) / slope`.
    pub fn invert(&self, y: T) -> T {
        (y - self.intercept) / self.slope
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrap_pi_range() {
        assert_eq!(wrap_pi(std::f64::consts::PI), std::f64::consts::PI);
        assert!((wrap_pi(-std::f64::consts::PI) - std::f64::consts::PI).abs() < 1e-15);
        assert!((wrap_pi(3.0 * std::f64::consts::PI) - std::f64::consts::PI).abs() < 1e-12);
        assert!((wrap_pi(0.25f64) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn unwrap_removes_jumps() {
        let mut p = vec![170.0f64, 179.0, -175.0, -160.0];
        unwrap_deg(&mut p);
        assert!((p[2] - 185.0).abs() < 1e-12);
        assert!((p[3] - 200.0).abs() < 1e-12);
    }

    #[test]
    fn line_fit_exact_line() {
        let xs = [0.0f32, 1.0, 2.0, 3.0];
        let ys = [1.0f32, 3.0, 5.0, 7.0];
        let f = LineFit::fit(&xs, &ys).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-6);
        assert!((f.intercept - 1.0).abs() < 1e-6);
        assert!((f.invert(5.0) - 2.0).abs() < 1e-6);
    }
}
