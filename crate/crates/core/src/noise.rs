//! The GS mixture model for mixed Gaussian-impulsive noise.
//!
//! One-dimensional density
//!
//! ```text
//! f(n) = rho k1 exp(-n^2 / (4 gg^2)) + (1 - rho) k2 (1 + n^2 / c0)^{-(alpha+1)/2},   c0 = 2 alpha gs^2
//! ```
//!
//! and its bivariate baseband counterpart with normalizers `k3`, `k4`.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};

use crate::error::{domain, Error, Result};
use crate::special::gamma_fn;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseParams {
    pub alpha: f64,
    pub gamma_g: f64,
    pub gamma_s: f64,
    pub rho: f64,
}

impl NoiseParams {
    pub fn new(alpha: f64, gamma_g: f64, gamma_s: f64, rho: f64) -> Result<Self> {
        let p = Self {
            alpha,
            gamma_g,
            gamma_s,
            rho,
        };
        p.validate()?;
        Ok(p)
    }

    /// The two reference configurations with unit scales: (1.2, 0.2) and (1.8, 0.8).
    pub fn reference_configs() -> [NoiseParams; 2] {
        [
            NoiseParams {
                alpha: 1.2,
                gamma_g: 1.0,
                gamma_s: 1.0,
                rho: 0.2,
            },
            NoiseParams {
                alpha: 1.8,
                gamma_g: 1.0,
                gamma_s: 1.0,
                rho: 0.8,
            },
        ]
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 2.0) {
            return Err(Error::InvalidParam(format!("alpha = {} not in (0, 2)", self.alpha)));
        }
        if !(self.gamma_g > 0.0 && self.gamma_g.is_finite()) {
            return Err(Error::InvalidParam(format!("gamma_g = {}", self.gamma_g)));
        }
        if !(self.gamma_s > 0.0 && self.gamma_s.is_finite()) {
            return Err(Error::InvalidParam(format!("gamma_s = {}", self.gamma_s)));
        }
        if !(0.0..=1.0).contains(&self.rho) {
            return Err(Error::InvalidParam(format!("rho = {} not in [0, 1]", self.rho)));
        }
        Ok(())
    }

    /// Tail scale `2 alpha gamma_s^2`.
    pub fn c0(&self) -> f64 {
        2.0 * self.alpha * self.gamma_s * self.gamma_s
    }

    pub fn with_rho(&self, rho: f64) -> Self {
        Self { rho, ..*self }
    }
}

/// Which exponent the bivariate heavy-tail term uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TailExponent {
    /// `(alpha+2)/2`: a bivariate Student-t kernel, normalizable for every alpha.
    #[default]
    Normalizable,
    /// `(alpha+1)/2`: only normalizable for alpha > 1.
    Printed,
}

impl TailExponent {
    pub fn exponent(self, alpha: f64) -> f64 {
        match self {
            TailExponent::Normalizable => 0.5 * (alpha + 2.0),
            TailExponent::Printed => 0.5 * (alpha + 1.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormConstants {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub k4: f64,
}

pub fn norm_constants(params: &NoiseParams) -> NormConstants {
    norm_constants_with(params, TailExponent::Normalizable)
        .expect("normalizable tail constants exist for every valid alpha")
}

pub fn norm_constants_with(params: &NoiseParams, tail: TailExponent) -> Result<NormConstants> {
    let a = params.alpha;
    let gg = params.gamma_g;
    let c0 = params.c0();
    let k1 = 1.0 / (2.0 * PI.sqrt() * gg);
    let k2 = gamma_fn(0.5 * (a + 1.0))? / (gamma_fn(0.5 * a)? * (PI * c0).sqrt());
    let k3 = k1 * k1;
    let k4 = match tail {
        // Gamma((a+2)/2) / (Gamma(a/2) pi c0) = 1 / (4 pi gs^2)
        TailExponent::Normalizable => 0.5 * a / (PI * c0),
        TailExponent::Printed => {
            if a <= 1.0 {
                return Err(domain(
                    "norm_constants",
                    format!("exponent (alpha+1)/2 is not normalizable for alpha = {a}"),
                ));
            }
            (a - 1.0) / (2.0 * PI * c0)
        }
    };
    Ok(NormConstants { k1, k2, k3, k4 })
}

pub fn pdf_1d(n: f64, params: &NoiseParams) -> f64 {
    let k = norm_constants(params);
    let gg2 = params.gamma_g * params.gamma_g;
    let g = k.k1 * (-n * n / (4.0 * gg2)).exp();
    let t = k.k2 * (1.0 + n * n / params.c0()).powf(-0.5 * (params.alpha + 1.0));
    params.rho * g + (1.0 - params.rho) * t
}

pub fn pdf_2d(n: [f64; 2], params: &NoiseParams) -> f64 {
    pdf_2d_radial(n[0] * n[0] + n[1] * n[1], params, &norm_constants(params), TailExponent::Normalizable)
}

pub fn pdf_2d_with(n: [f64; 2], params: &NoiseParams, tail: TailExponent) -> Result<f64> {
    let k = norm_constants_with(params, tail)?;
    Ok(pdf_2d_radial(n[0] * n[0] + n[1] * n[1], params, &k, tail))
}

/// Bivariate density as a function of the squared radius.
pub fn pdf_2d_radial(r2: f64, params: &NoiseParams, k: &NormConstants, tail: TailExponent) -> f64 {
    let gg2 = params.gamma_g * params.gamma_g;
    let mut v = 0.0;
    if params.rho > 0.0 {
        v += params.rho * k.k3 * (-r2 / (4.0 * gg2)).exp();
    }
    if params.rho < 1.0 {
        v += (1.0 - params.rho) * k.k4 * (1.0 + r2 / params.c0()).powf(-tail.exponent(params.alpha));
    }
    v
}

/// Mixture branch a sample was drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Gaussian,
    Impulsive,
}

/// Deterministic sampler for the bivariate density (normalizable variant).
#[derive(Debug, Clone)]
pub struct NoiseSampler {
    params: NoiseParams,
    rng: ChaCha8Rng,
}

impl NoiseSampler {
    pub fn new(params: NoiseParams, seed: u64) -> Self {
        Self {
            params,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn sample(&mut self) -> ([f64; 2], Branch) {
        let p = self.params;
        let gaussian = self.rng.gen::<f64>() < p.rho;
        let u: f64 = self.rng.gen();
        let theta = 2.0 * PI * self.rng.gen::<f64>();
        // closed-form inverses of the radial CDFs
        let r = if gaussian {
            (-4.0 * p.gamma_g * p.gamma_g * (-u).ln_1p()).sqrt()
        } else {
            let s = ((-2.0 / p.alpha) * (-u).ln_1p()).exp_m1();
            (p.c0() * s).sqrt()
        };
        let branch = if gaussian { Branch::Gaussian } else { Branch::Impulsive };
        ([r * theta.cos(), r * theta.sin()], branch)
    }
}

pub fn sample_2d(params: &NoiseParams, seed: u64, count: usize) -> Vec<[f64; 2]> {
    sample_2d_tagged(params, seed, count).into_iter().map(|(x, _)| x).collect()
}

pub fn sample_2d_tagged(params: &NoiseParams, seed: u64, count: usize) -> Vec<([f64; 2], Branch)> {
    let mut s = NoiseSampler::new(*params, seed);
    (0..count).map(|_| s.sample()).collect()
}

/// Radial CDF of the bivariate density.
pub fn radial_cdf(r: f64, params: &NoiseParams) -> f64 {
    let r2 = r * r;
    let g = -(-r2 / (4.0 * params.gamma_g * params.gamma_g)).exp_m1();
    let t = 1.0 - (1.0 + r2 / params.c0()).powf(-0.5 * params.alpha);
    params.rho * g + (1.0 - params.rho) * t
}

pub fn gsnr_db(signal_power: f64, params: &NoiseParams) -> f64 {
    let n = 2.0 * (params.gamma_g * params.gamma_g + params.gamma_s * params.gamma_s);
    10.0 * (signal_power / n).log10()
}

pub fn power_for_gsnr(gsnr: f64, params: &NoiseParams) -> f64 {
    let n = 2.0 * (params.gamma_g * params.gamma_g + params.gamma_s * params.gamma_s);
    n * 10f64.powf(gsnr / 10.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterSpec {
    pub coeffs: Vec<f64>,
    pub f_c: u64,
    pub f_s: u64,
    pub passband_b: f64,
}

impl FilterSpec {
    pub fn validate(&self) -> Result<()> {
        if self.coeffs.is_empty() {
            return Err(Error::InvalidParam("filter has no taps".into()));
        }
        if self.f_c == 0 || self.f_s == 0 {
            return Err(domain("FilterSpec", "frequencies must be positive integers"));
        }
        if 2 * self.f_c >= self.f_s {
            return Err(Error::InvalidParam(format!(
                "carrier {} not below half the sampling rate {}",
                self.f_c, self.f_s
            )));
        }
        if !(self.passband_b > 0.0 && self.passband_b <= 0.5 * self.f_s as f64) {
            return Err(Error::InvalidParam(format!("passband {}", self.passband_b)));
        }
        Ok(())
    }
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// `p(M_h) = lcm^{-1} sum_m |h(m)|^alpha sum_{m=1}^{lcm} |cos(2 pi f_c m / f_s)|^alpha`.
///
/// The carrier term is periodic with period `f_s / gcd(f_s, f_c)`, which divides
/// the lcm, so the average is taken over one period.
pub fn impulsive_baseband_scale(filter: &FilterSpec, alpha: f64) -> Result<f64> {
    if filter.f_c == 0 || filter.f_s == 0 {
        return Err(domain("impulsive_baseband_scale", "frequencies must be positive integers"));
    }
    if filter.coeffs.is_empty() {
        return Err(Error::InvalidParam("filter has no taps".into()));
    }
    let period = filter.f_s / gcd(filter.f_s, filter.f_c);
    let taps: f64 = filter.coeffs.iter().map(|h| h.abs().powf(alpha)).sum();
    let mut carrier = 0.0;
    for m in 1..=period {
        // reduce the phase modulo f_s before scaling to keep the argument small
        let ph = ((filter.f_c * m) % filter.f_s) as f64 / filter.f_s as f64;
        carrier += (2.0 * PI * ph).cos().abs().powf(alpha);
    }
    let v = taps * carrier / period as f64;
    if !(v > 0.0) {
        return Err(domain("impulsive_baseband_scale", "scale is not positive"));
    }
    Ok(v)
}

/// Analytic passband-to-baseband parameter map.
pub fn passband_to_baseband(params: &NoiseParams, filter: &FilterSpec) -> Result<NoiseParams> {
    params.validate()?;
    filter.validate()?;
    let p = impulsive_baseband_scale(filter, params.alpha)?;
    Ok(NoiseParams {
        alpha: params.alpha,
        gamma_g: params.gamma_g * (0.25 * filter.passband_b).sqrt(),
        gamma_s: params.gamma_s * p.powf(1.0 / params.alpha),
        rho: params.rho,
    })
}

/// Standard symmetric alpha-stable draw (characteristic function `exp(-|t|^alpha)`),
/// Chambers-Mallows-Stuck.
pub fn sas_standard<R: Rng + ?Sized>(alpha: f64, rng: &mut R) -> f64 {
    let v = PI * (rng.gen::<f64>() - 0.5);
    let w: f64 = rng.sample(Exp1);
    if (alpha - 1.0).abs() < 1e-12 {
        return v.tan();
    }
    (alpha * v).sin() / v.cos().powf(1.0 / alpha) * (((1.0 - alpha) * v).cos() / w).powf((1.0 - alpha) / alpha)
}

/// Monte-Carlo fallback for the baseband map: simulates the filtered in-phase
/// branch and fits `-ln|phi(t)| = A t^2 + C |t|^alpha` on a small-`t` grid.
pub fn passband_to_baseband_mc(
    params: &NoiseParams,
    filter: &FilterSpec,
    seed: u64,
    count: usize,
) -> Result<NoiseParams> {
    params.validate()?;
    filter.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mh = filter.coeffs.len();
    let sg = (2.0f64).sqrt() * params.gamma_g;
    let mut out = Vec::with_capacity(count);
    let mut g = vec![0.0; mh];
    let mut s = vec![0.0; mh];
    for k in 0..count {
        for m in 0..mh {
            let z: f64 = rng.sample(StandardNormal);
            g[m] = sg * z;
            s[m] = params.gamma_s * sas_standard(params.alpha, &mut rng);
        }
        let mut gi = 0.0;
        let mut si = 0.0;
        for m in 0..mh {
            let ph = (((m + k) as u64 * filter.f_c) % filter.f_s) as f64 / filter.f_s as f64;
            let c = filter.coeffs[m] * (2.0 * PI * ph).cos();
            gi += c * g[m];
            si += c * s[m];
        }
        out.push((gi, si));
    }
    // separate fits keep the Gaussian and impulsive scales identifiable
    let fit = |xs: &[f64], pow: f64| -> f64 {
        let scale = {
            let mut a: Vec<f64> = xs.iter().map(|x| x.abs()).collect();
            a.sort_by(f64::total_cmp);
            a[a.len() / 2].max(1e-12)
        };
        let (mut num, mut den) = (0.0, 0.0);
        for i in 1..=16 {
            let t = 0.05 * i as f64 / scale;
            let phi: f64 = xs.iter().map(|x| (t * x).cos()).sum::<f64>() / xs.len() as f64;
            if phi <= 0.05 {
                break;
            }
            let y = -phi.ln();
            let b = t.abs().powf(pow);
            num += y * b;
            den += b * b;
        }
        num / den
    };
    let gs: Vec<f64> = out.iter().map(|p| p.0).collect();
    let ss: Vec<f64> = out.iter().map(|p| p.1).collect();
    let a = fit(&gs, 2.0);
    let c = fit(&ss, params.alpha);
    NoiseParams::new(params.alpha, a.sqrt(), c.powf(1.0 / params.alpha), params.rho)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(a: f64, r: f64) -> NoiseParams {
        NoiseParams::new(a, 1.0, 1.0, r).unwrap()
    }

    #[test]
    fn unit_scale_constants() {
        let k = norm_constants(&cfg(1.2, 0.2));
        assert!((k.k1 - 0.28209479177387814).abs() < 1e-15);
        assert!((k.k3 - 0.07957747154594767).abs() < 1e-15);
        assert!((k.k4 - 1.0 / (4.0 * PI)).abs() < 1e-15);
    }

    #[test]
    fn printed_exponent_rejected_below_one() {
        assert!(norm_constants_with(&cfg(0.8, 0.2), TailExponent::Printed).is_err());
        assert!(norm_constants_with(&cfg(1.5, 0.2), TailExponent::Printed).is_ok());
    }

    #[test]
    fn pdf_peaks() {
        let p = cfg(1.2, 1.0);
        assert!((pdf_1d(0.0, &p) - 1.0 / (2.0 * PI.sqrt())).abs() < 1e-15);
        let q = cfg(1.2, 0.0);
        assert_eq!(pdf_1d(0.0, &q), norm_constants(&q).k2);
        assert!((pdf_2d([0.0, 0.0], &p) - norm_constants(&p).k3).abs() < 1e-17);
    }

    #[test]
    fn radial_symmetry_exact() {
        let p = cfg(1.8, 0.8);
        assert_eq!(pdf_2d([0.3, -1.7], &p), pdf_2d([-1.7, -0.3], &p));
        assert_eq!(pdf_1d(2.5, &p), pdf_1d(-2.5, &p));
    }

    #[test]
    fn gsnr_round_trip() {
        let p = cfg(1.2, 0.2);
        assert!((gsnr_db(4.0, &p)).abs() < 1e-15);
        assert!((gsnr_db(40.0, &p) - 10.0).abs() < 1e-12);
        assert!((power_for_gsnr(16.0, &p) - 159.24286822139888).abs() < 1e-9);
        assert!((power_for_gsnr(-10.0, &p) - 0.4).abs() < 1e-14);
        for g in [-13.0, 0.0, 7.5, 21.0] {
            assert!((gsnr_db(power_for_gsnr(g, &p), &p) - g).abs() < 1e-12);
        }
    }

    #[test]
    fn carrier_scale_examples() {
        let f = |fc, fs, h: Vec<f64>| FilterSpec {
            coeffs: h,
            f_c: fc,
            f_s: fs,
            passband_b: 1.0,
        };
        assert!((impulsive_baseband_scale(&f(1, 4, vec![1.0]), 2.0).unwrap() - 0.5).abs() < 1e-15);
        assert!((impulsive_baseband_scale(&f(1, 8, vec![1.0]), 2.0).unwrap() - 0.5).abs() < 1e-15);
        assert!(impulsive_baseband_scale(&f(0, 8, vec![1.0]), 2.0).is_err());
    }

    #[test]
    fn halving_band_halves_gaussian_variance() {
        let p = cfg(1.2, 0.2);
        let mut f = FilterSpec {
            coeffs: vec![0.5, 0.5],
            f_c: 1,
            f_s: 8,
            passband_b: 2.0,
        };
        let a = passband_to_baseband(&p, &f).unwrap();
        f.passband_b = 1.0;
        let b = passband_to_baseband(&p, &f).unwrap();
        assert!((b.gamma_g.powi(2) / a.gamma_g.powi(2) - 0.5).abs() < 1e-15);
        assert_eq!(a.rho, p.rho);
        assert_eq!(a.alpha, p.alpha);
    }

    #[test]
    fn sampler_is_deterministic() {
        let p = cfg(1.2, 0.2);
        assert_eq!(sample_2d(&p, 7, 100), sample_2d(&p, 7, 100));
        assert_ne!(sample_2d(&p, 7, 10), sample_2d(&p, 8, 10));
    }
}
