use num_complex::Complex;

use crate::scalar::Real;

/// ABCD (chain) matrix of a linear two-port.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Abcd<T> {
    pub a: Complex<T>,
    pub b: Complex<T>,
    pub c: Complex<T>,
    pub d: Complex<T>,
}

impl<T: Real> Abcd<T> {
    pub fn identity() -> Self {
        let (o, z) = (Complex::new(T::one(), T::zero()), Complex::new(T::zero(), T::zero()));
        Self { a: o, b: z, c: z, d: o }
    }

    pub fn series(z: Complex<T>) -> Self {
        Self {
            b: z,
            ..Self::identity()
        }
    }

    pub fn shunt(y: Complex<T>) -> Self {
        Self {
            c: y,
            ..Self::identity()
        }
    }

    /// Uniform line of impedance `z0`, phase length `beta_l` radians and
    /// attenuation `alpha_l` nepers.
    pub fn line(z0: T, beta_l: T, alpha_l: T) -> Self {
        let zc = Complex::new(z0, T::zero());
        if alpha_l == T::zero() {
            let (s, c) = beta_l.sin_cos();
            let j = Complex::new(T::zero(), T::one());
            let cc = Complex::new(c, T::zero());
            return Self {
                a: cc,
                b: j * zc * s,
                c: j * s / z0,
                d: cc,
            };
        }
        let gl = Complex::new(alpha_l, beta_l);
        let (sh, ch) = (gl.sinh(), gl.cosh());
        Self {
            a: ch,
            b: zc * sh,
            c: sh / zc,
            d: ch,
        }
    }

    /// `self` followed by `next` (closer to the load).
    pub fn then(&self, next: &Self) -> Self {
        Self {
            a: self.a * next.a + self.b * next.c,
            b: self.a * next.b + self.b * next.d,
            c: self.c * next.a + self.d * next.c,
            d: self.c * next.b + self.d * next.d,
        }
    }

    /// Input impedance when port 2 is terminated in `z_load`.
    pub fn input_impedance(&self, z_load: Complex<T>) -> Complex<T> {
        (self.a * z_load + self.b) / (self.c * z_load + self.d)
    }

    /// Input reflection at reference `z_ref` with port 2 terminated by a
    /// load of reflection `gamma_load` (also referenced to `z_ref`).
    /// Works for open (`+1`) and short (`-1`) terminations directly.
    pub fn input_reflection(&self, z_ref: T, gamma_load: Complex<T>) -> Complex<T> {
        let z = Complex::new(z_ref, T::zero());
        let two = Complex::new(T::lit(2.0), T::zero());
        let delta = self.a + self.b / z + self.c * z + self.d;
        let s11 = (self.a + self.b / z - self.c * z - self.d) / delta;
        let s12 = two * (self.a * self.d - self.b * self.c) / delta;
        let s21 = two / delta;
        let s22 = (-self.a + self.b / z - self.c * z + self.d) / delta;
        s11 + s12 * s21 * gamma_load / (Complex::new(T::one(), T::zero()) - s22 * gamma_load)
    }
}
