//! Scalar functions bounded by linear pieces, each with analytic first and
//! second derivatives.

use crate::error::Result;
use crate::noise::NoiseParams;
use crate::special::{gauss_2f1, tricomi_u};

/// A smooth scalar function with derivative handles.
pub trait Target {
    fn value(&self, x: f64) -> Result<f64>;
    fn d1(&self, x: f64) -> Result<f64>;
    fn d2(&self, x: f64) -> Result<f64>;
}

/// Closure-backed target, mostly for tests and ad-hoc envelopes.
pub struct FnTarget<F, G, H> {
    pub f: F,
    pub df: G,
    pub d2f: H,
}

impl<F, G, H> Target for FnTarget<F, G, H>
where
    F: Fn(f64) -> f64,
    G: Fn(f64) -> f64,
    H: Fn(f64) -> f64,
{
    fn value(&self, x: f64) -> Result<f64> {
        Ok((self.f)(x))
    }
    fn d1(&self, x: f64) -> Result<f64> {
        Ok((self.df)(x))
    }
    fn d2(&self, x: f64) -> Result<f64> {
        Ok((self.d2f)(x))
    }
}

/// `(A + x^2)^{-m}` with derivatives.
#[derive(Debug, Clone, Copy)]
pub struct PowerKernel {
    pub a: f64,
    pub m: f64,
}

impl PowerKernel {
    pub fn d3(&self, x: f64) -> f64 {
        let w = self.a + x * x;
        let m = self.m;
        12.0 * m * (m + 1.0) * x * w.powf(-m - 2.0) - 8.0 * m * (m + 1.0) * (m + 2.0) * x.powi(3) * w.powf(-m - 3.0)
    }

    /// Positive zero of the second derivative.
    pub fn inflection(&self) -> f64 {
        (self.a / (2.0 * self.m + 1.0)).sqrt()
    }
}

impl Target for PowerKernel {
    fn value(&self, x: f64) -> Result<f64> {
        Ok((self.a + x * x).powf(-self.m))
    }
    fn d1(&self, x: f64) -> Result<f64> {
        Ok(-2.0 * self.m * x * (self.a + x * x).powf(-self.m - 1.0))
    }
    fn d2(&self, x: f64) -> Result<f64> {
        let w = self.a + x * x;
        let m = self.m;
        Ok(-2.0 * m * w.powf(-m - 1.0) + 4.0 * m * (m + 1.0) * x * x * w.powf(-m - 2.0))
    }
}

/// `J1(x) = (c0 + x^2)^{-alpha/4}`.
pub fn j1(params: &NoiseParams) -> PowerKernel {
    PowerKernel {
        a: params.c0(),
        m: 0.25 * params.alpha,
    }
}

/// `J1^{(alpha+2)/alpha} = (c0 + x^2)^{-(alpha+2)/4}`.
pub fn tail_power(params: &NoiseParams) -> PowerKernel {
    PowerKernel {
        a: params.c0(),
        m: 0.25 * (params.alpha + 2.0),
    }
}

/// `J2(x) = U(1/2, 1 - alpha/4, (c0 + x^2) / (8 gg^2))`.
#[derive(Debug, Clone, Copy)]
pub struct J2 {
    pub c0: f64,
    pub s: f64,
    pub b: f64,
}

impl J2 {
    pub fn new(params: &NoiseParams) -> Self {
        Self {
            c0: params.c0(),
            s: 8.0 * params.gamma_g * params.gamma_g,
            b: 1.0 - 0.25 * params.alpha,
        }
    }

    fn z(&self, x: f64) -> f64 {
        (self.c0 + x * x) / self.s
    }
}

impl Target for J2 {
    fn value(&self, x: f64) -> Result<f64> {
        tricomi_u(0.5, self.b, self.z(x))
    }
    fn d1(&self, x: f64) -> Result<f64> {
        let u1 = tricomi_u(1.5, self.b + 1.0, self.z(x))?;
        Ok(-0.5 * u1 * 2.0 * x / self.s)
    }
    fn d2(&self, x: f64) -> Result<f64> {
        let z = self.z(x);
        let u1 = tricomi_u(1.5, self.b + 1.0, z)?;
        let u2 = tricomi_u(2.5, self.b + 2.0, z)?;
        let zp = 2.0 * x / self.s;
        Ok(0.75 * u2 * zp * zp - 0.5 * u1 * 2.0 / self.s)
    }
}

/// The product `J1 J2` bounded in the S2 integral.
#[derive(Debug, Clone, Copy)]
pub struct J1J2 {
    pub j1: PowerKernel,
    pub j2: J2,
}

impl J1J2 {
    pub fn new(params: &NoiseParams) -> Self {
        Self {
            j1: j1(params),
            j2: J2::new(params),
        }
    }
}

impl Target for J1J2 {
    fn value(&self, x: f64) -> Result<f64> {
        Ok(self.j1.value(x)? * self.j2.value(x)?)
    }
    fn d1(&self, x: f64) -> Result<f64> {
        Ok(self.j1.d1(x)? * self.j2.value(x)? + self.j1.value(x)? * self.j2.d1(x)?)
    }
    fn d2(&self, x: f64) -> Result<f64> {
        // one evaluation of each Tricomi order
        let z = self.j2.z(x);
        let b = self.j2.b;
        let s = self.j2.s;
        let u0 = tricomi_u(0.5, b, z)?;
        let u1 = tricomi_u(1.5, b + 1.0, z)?;
        let u2 = tricomi_u(2.5, b + 2.0, z)?;
        let zp = 2.0 * x / s;
        let j2 = u0;
        let j2d = -0.5 * u1 * zp;
        let j2dd = 0.75 * u2 * zp * zp - u1 / s;
        Ok(self.j1.d2(x)? * j2 + 2.0 * self.j1.d1(x)? * j2d + self.j1.value(x)? * j2dd)
    }
}

/// `J3(x) = 2F1((alpha+2)/4, 1/2; (alpha+2)/2; (2 d x - d^2)/(c0 + x^2))`.
#[derive(Debug, Clone, Copy)]
pub struct J3 {
    pub c0: f64,
    pub d: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl J3 {
    pub fn new(params: &NoiseParams, d: f64) -> Self {
        Self {
            c0: params.c0(),
            d,
            a: 0.25 * (params.alpha + 2.0),
            b: 0.5,
            c: 0.5 * (params.alpha + 2.0),
        }
    }

    pub fn z(&self, x: f64) -> f64 {
        (2.0 * self.d * x - self.d * self.d) / (self.c0 + x * x)
    }

    fn z_derivs(&self, x: f64) -> (f64, f64, f64) {
        let d = self.d;
        let c0 = self.c0;
        let den = c0 + x * x;
        let p = c0 - x * x + d * x;
        let q = 2.0 * x.powi(3) - 3.0 * d * x * x - 6.0 * c0 * x + d * c0;
        (self.z(x), 2.0 * d * p / (den * den), 2.0 * d * q / den.powi(3))
    }

    /// Upper bound of `J3` on `|x| >= r` (the function is increasing in `z`).
    pub fn tail_max(&self, r: f64) -> Result<f64> {
        if self.d == 0.0 {
            return Ok(1.0);
        }
        let zmax = (2.0 * self.d / r).min(1.0);
        gauss_2f1(self.a, self.b, self.c, zmax)
    }
}

impl Target for J3 {
    fn value(&self, x: f64) -> Result<f64> {
        gauss_2f1(self.a, self.b, self.c, self.z(x))
    }
    fn d1(&self, x: f64) -> Result<f64> {
        if self.d == 0.0 {
            return Ok(0.0);
        }
        let (z, zp, _) = self.z_derivs(x);
        let f1 = self.a * self.b / self.c * gauss_2f1(self.a + 1.0, self.b + 1.0, self.c + 1.0, z)?;
        Ok(f1 * zp)
    }
    fn d2(&self, x: f64) -> Result<f64> {
        if self.d == 0.0 {
            return Ok(0.0);
        }
        let (z, zp, zpp) = self.z_derivs(x);
        let (a, b, c) = (self.a, self.b, self.c);
        let f1 = a * b / c * gauss_2f1(a + 1.0, b + 1.0, c + 1.0, z)?;
        let f2 = a * (a + 1.0) * b * (b + 1.0) / (c * (c + 1.0)) * gauss_2f1(a + 2.0, b + 2.0, c + 2.0, z)?;
        Ok(f2 * zp * zp + f1 * zpp)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd2<T: Target>(t: &T, x: f64) -> f64 {
        let h = 1e-4;
        (t.d1(x + h).unwrap() - t.d1(x - h).unwrap()) / (2.0 * h)
    }

    fn fd1<T: Target>(t: &T, x: f64) -> f64 {
        let h = 1e-5;
        (t.value(x + h).unwrap() - t.value(x - h).unwrap()) / (2.0 * h)
    }

    #[test]
    fn derivatives_match_differences() {
        let p = NoiseParams::new(1.2, 1.0, 1.0, 0.2).unwrap();
        let j = J1J2::new(&p);
        let k = J3::new(&p, 4.0);
        let t = tail_power(&p);
        for x in [-7.0, -1.1, 0.3, 2.0, 5.5, 12.0] {
            for (v, e) in [
                (j.d1(x).unwrap(), fd1(&j, x)),
                (j.d2(x).unwrap(), fd2(&j, x)),
                (k.d1(x).unwrap(), fd1(&k, x)),
                (k.d2(x).unwrap(), fd2(&k, x)),
                (t.d2(x).unwrap(), fd2(&t, x)),
            ] {
                assert!((v - e).abs() <= 1e-6 * (1.0 + e.abs()), "x = {x}: {v} vs {e}");
            }
            let h = 1e-4;
            let d3 = (t.d2(x + h).unwrap() - t.d2(x - h).unwrap()) / (2.0 * h);
            assert!((t.d3(x) - d3).abs() < 1e-6);
        }
    }

    #[test]
    fn j3_argument_stays_below_one() {
        let p = NoiseParams::new(1.8, 1.0, 1.0, 0.8).unwrap();
        let k = J3::new(&p, 32.0);
        for i in -200..200 {
            assert!(k.z(i as f64 * 0.5) < 1.0);
        }
    }
}
