//! Quadrature ground truth for the S-integrals, the Bhattacharyya parameter
//! and the exact cutoff rate.
//!
//! Integrals over the plane are taken in polar coordinates about the midpoint
//! `ds/2`, with `ds` rotated onto the positive x-axis. The angular integral is
//! a trapezoid rule on `[0, pi]` (the integrand is symmetric about the axis),
//! doubled until it settles; the radial integral is adaptive Gauss-Kronrod,
//! and the heavy tail beyond `r0` is mapped by `r = r0 u^{-1/alpha}` so the
//! transformed integrand stays bounded as `u -> 0`.

use std::f64::consts::PI;

use sha2::{Digest, Sha256};

use crate::bounds::cutoff_rate_with;
use crate::error::{Error, Result};
use crate::noise::{norm_constants, pdf_2d_radial, NoiseParams, TailExponent};
use crate::quadrature;
use crate::report::fmt12;
use crate::shaping::Constellation;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadSpec {
    pub abs_tol: f64,
    pub rel_tol: f64,
    /// Radius (about the midpoint, for zero separation) beyond which the
    /// integrand is dropped; grows by `ds/2` for a separated pair.
    pub trunc_radius: f64,
    pub max_subdivisions: usize,
}

impl QuadSpec {
    pub fn new(params: &NoiseParams, abs_tol: f64, rel_tol: f64) -> Result<Self> {
        if !(abs_tol > 0.0 && rel_tol > 0.0) {
            return Err(Error::InvalidParam("quadrature tolerances must be positive".into()));
        }
        Ok(Self {
            abs_tol,
            rel_tol,
            trunc_radius: trunc_radius_for(params, abs_tol),
            max_subdivisions: 2000,
        })
    }

    /// Tolerances used for frozen fixtures.
    pub fn fixture(params: &NoiseParams) -> Self {
        Self::new(params, 1e-13, 1e-9).expect("positive tolerances")
    }

    pub fn with_rel_tol(&self, params: &NoiseParams, rel_tol: f64) -> Self {
        Self::new(params, self.abs_tol, rel_tol).expect("positive tolerances")
    }
}

/// Smallest radius with `2 pi (1-rho) k4 c0^{(a+2)/2} R^{-a} / a < abs_tol / 10`,
/// the mass of the power-law envelope of the geometric-mean integrand outside `R`.
pub fn trunc_radius_for(params: &NoiseParams, abs_tol: f64) -> f64 {
    let a = params.alpha;
    let k = norm_constants(params);
    let c0 = params.c0();
    let base = 20.0 * (8.0f64).sqrt() * params.gamma_g + 20.0 * params.gamma_s;
    if params.rho >= 1.0 {
        return base;
    }
    let coef = 2.0 * PI * (1.0 - params.rho) * k.k4 * c0.powf(0.5 * (a + 2.0)) / a;
    // doubled radius absorbs the shift between |y|, |y - ds| and r
    (2.0 * (coef / (0.1 * abs_tol)).powf(1.0 / a)).max(base)
}

/// Quadrature value together with its error estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub err: f64,
}

fn angular<F: Fn(f64, f64) -> f64>(h: &F, r: f64, d: f64) -> (f64, f64) {
    // |y|^2 and |y - ds|^2 for y = (d/2 + r cos t, r sin t)
    let base = r * r + 0.25 * d * d;
    let eval = |t: f64| {
        let c = r * d * t.cos();
        h((base + c).max(0.0), (base - c).max(0.0))
    };
    let mut n = 64usize;
    let step = PI / n as f64;
    let mut sum = 0.5 * (eval(0.0) + eval(PI));
    for i in 1..n {
        sum += eval(i as f64 * step);
    }
    let mut t = sum * step;
    loop {
        let step2 = PI / (2 * n) as f64;
        let mut odd = 0.0;
        for i in 0..n {
            odd += eval((2 * i + 1) as f64 * step2);
        }
        sum += odd;
        let t2 = sum * step2;
        let diff = (t2 - t).abs();
        n *= 2;
        t = t2;
        if diff <= 1e-13 * t.abs() || diff == 0.0 || n >= 1 << 17 {
            return (2.0 * t, 2.0 * diff);
        }
    }
}

/// Integrates `h(|y|^2, |y - ds|^2)` over the plane for `|ds| = d`.
fn plane_integral<F: Fn(f64, f64) -> f64>(
    h: F,
    d: f64,
    params: &NoiseParams,
    spec: &QuadSpec,
    heavy_tail: bool,
) -> Result<Estimate> {
    let gg = params.gamma_g;
    let gs = params.gamma_s;
    let half = 0.5 * d;
    let r0 = half + 12.0 * (8.0f64).sqrt() * gg + 12.0 * gs;
    let mut pts = vec![0.0];
    for p in [half - 6.0 * gg, half, half + 6.0 * gg] {
        if p > *pts.last().unwrap() && p < r0 {
            pts.push(p);
        }
    }
    pts.push(r0);
    let mut ang_err = 0.0f64;
    let radial = |r: f64| {
        let (v, _) = angular(&h, r, d);
        r * v
    };
    let inner_tol = spec.rel_tol * 0.25;
    let core = quadrature::integrate_pts(radial, &pts, spec.abs_tol * 0.25, inner_tol, spec.max_subdivisions);
    // angular error audit on the core breakpoints
    for &r in &pts {
        let (v, e) = angular(&h, r, d);
        if v != 0.0 {
            ang_err = ang_err.max(e / v.abs());
        }
    }
    let mut value = core.value;
    let mut err = core.error + ang_err * core.value.abs();
    let mut converged = core.converged;
    if heavy_tail {
        let a = params.alpha;
        let rt = spec.trunc_radius + half;
        if rt > r0 {
            let u_min = (r0 / rt).powf(a);
            let tail = |u: f64| {
                let r = r0 * u.powf(-1.0 / a);
                let (v, _) = angular(&h, r, d);
                // r dr = (r0^2 / a) u^{-2/a - 1} du
                r * r / (a * u) * v
            };
            let t = quadrature::integrate_pts(
                tail,
                &[u_min, 1e-6f64.max(u_min), 1e-3f64.max(u_min), 0.1f64.max(u_min), 1.0],
                spec.abs_tol * 0.25,
                inner_tol,
                spec.max_subdivisions,
            );
            value += t.value;
            err += t.error;
            converged &= t.converged;
            // truncation allowance
            err += 0.1 * spec.abs_tol;
        }
    }
    let target = spec.abs_tol.max(spec.rel_tol * value.abs());
    if !converged || err > target || !value.is_finite() {
        return Err(Error::Tolerance {
            estimate: err,
            target,
        });
    }
    Ok(Estimate { value, err })
}

/// The three S-integrals `(I1, I2, I3)` at separation `ds`.
pub fn s_integrals(ds: [f64; 2], params: &NoiseParams, spec: &QuadSpec) -> Result<(f64, f64, f64)> {
    let e = s_integrals_est(ds, params, spec)?;
    Ok((e[0].value, e[1].value, e[2].value))
}

pub fn s_integrals_est(ds: [f64; 2], params: &NoiseParams, spec: &QuadSpec) -> Result<[Estimate; 3]> {
    params.validate()?;
    let d = ds[0].hypot(ds[1]);
    let k = norm_constants(params);
    let gg2 = params.gamma_g * params.gamma_g;
    let rho = params.rho;
    let c0 = params.c0();
    let beta = 0.25 * (params.alpha + 2.0);
    let zero = Estimate { value: 0.0, err: 0.0 };
    let i1 = if rho > 0.0 {
        let c = rho * k.k3;
        plane_integral(|a2, b2| c * (-(a2 + b2) / (8.0 * gg2)).exp(), d, params, spec, false)?
    } else {
        zero
    };
    let mixed = rho > 0.0 && rho < 1.0;
    let i2 = if mixed {
        let c = (rho * (1.0 - rho) * k.k3 * k.k4).sqrt();
        plane_integral(
            |a2, b2| c * (-a2 / (8.0 * gg2)).exp() * (1.0 + b2 / c0).powf(-beta),
            d,
            params,
            spec,
            false,
        )?
    } else {
        zero
    };
    let i3 = if rho < 1.0 {
        let c = (1.0 - rho) * k.k4;
        plane_integral(
            |a2, b2| c * ((1.0 + a2 / c0) * (1.0 + b2 / c0)).powf(-beta),
            d,
            params,
            spec,
            true,
        )?
    } else {
        zero
    };
    Ok([i1, i2, i3])
}

pub fn bhattacharyya(ds: [f64; 2], params: &NoiseParams, spec: &QuadSpec) -> Result<f64> {
    Ok(bhattacharyya_est(ds, params, spec)?.value)
}

pub fn bhattacharyya_est(ds: [f64; 2], params: &NoiseParams, spec: &QuadSpec) -> Result<Estimate> {
    params.validate()?;
    let d = ds[0].hypot(ds[1]);
    if d == 0.0 {
        // the integrand is the density itself
        return Ok(Estimate { value: 1.0, err: 0.0 });
    }
    let k = norm_constants(params);
    let tail = TailExponent::Normalizable;
    let p = *params;
    let e = plane_integral(
        |a2, b2| (pdf_2d_radial(a2, &p, &k, tail) * pdf_2d_radial(b2, &p, &k, tail)).sqrt(),
        d,
        params,
        spec,
        params.rho < 1.0,
    )?;
    Ok(Estimate {
        value: e.value.min(1.0),
        err: e.err,
    })
}

/// `-log2(sum p_k^2 + sum_{k<l} 2 p_k p_l Z(k,l))`, one quadrature per distinct distance.
pub fn cutoff_rate_exact(c: &Constellation, params: &NoiseParams, spec: &QuadSpec) -> Result<f64> {
    cutoff_rate_with(c, |d| bhattacharyya([d, 0.0], params, spec))
}

/// One row of the frozen fixture table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixtureRow {
    pub alpha: f64,
    pub rho: f64,
    pub gamma_g: f64,
    pub gamma_s: f64,
    pub ds_norm: f64,
    pub i1: f64,
    pub i2: f64,
    pub i3: f64,
    pub z: f64,
    pub err_est: f64,
}

impl FixtureRow {
    pub fn params(&self) -> NoiseParams {
        NoiseParams {
            alpha: self.alpha,
            gamma_g: self.gamma_g,
            gamma_s: self.gamma_s,
            rho: self.rho,
        }
    }
}

/// Separations on the fixture grid.
pub const FIXTURE_SEPARATIONS: [f64; 7] = [0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0];

pub const FIXTURE_COLUMNS: [&str; 10] = [
    "alpha", "rho", "gamma_g", "gamma_s", "ds_norm", "I1", "I2", "I3", "Z", "err_est",
];

pub fn fixture_row(params: &NoiseParams, ds_norm: f64, spec: &QuadSpec) -> Result<FixtureRow> {
    let s = s_integrals_est([ds_norm, 0.0], params, spec)?;
    let z = bhattacharyya_est([ds_norm, 0.0], params, spec)?;
    Ok(FixtureRow {
        alpha: params.alpha,
        rho: params.rho,
        gamma_g: params.gamma_g,
        gamma_s: params.gamma_s,
        ds_norm,
        i1: s[0].value,
        i2: s[1].value,
        i3: s[2].value,
        z: z.value,
        err_est: s.iter().map(|e| e.err).fold(z.err, f64::max),
    })
}

/// Regenerates the full fixture grid (both reference configurations).
pub fn generate_fixtures() -> Result<Vec<FixtureRow>> {
    let mut rows = Vec::new();
    for p in NoiseParams::reference_configs() {
        let spec = QuadSpec::fixture(&p);
        for &d in &FIXTURE_SEPARATIONS {
            rows.push(fixture_row(&p, d, &spec)?);
        }
    }
    Ok(rows)
}

fn fixture_body(rows: &[FixtureRow]) -> String {
    let mut body = FIXTURE_COLUMNS.join(" ");
    body.push('\n');
    for r in rows {
        let f = [
            r.alpha, r.rho, r.gamma_g, r.gamma_s, r.ds_norm, r.i1, r.i2, r.i3, r.z, r.err_est,
        ];
        body.push_str(&f.iter().map(|x| fmt12(*x)).collect::<Vec<_>>().join(" "));
        body.push('\n');
    }
    body
}

fn sha256_hex(s: &str) -> String {
    let digest = Sha256::digest(s.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Plain-text table with a checksum header line covering everything below it.
pub fn write_fixture_table(rows: &[FixtureRow]) -> String {
    let body = fixture_body(rows);
    format!("# sha256 {}\n{}", sha256_hex(&body), body)
}

pub fn parse_fixture_table(text: &str) -> Result<Vec<FixtureRow>> {
    let (head, body) = text.split_once('\n').ok_or(Error::Parse {
        line: 1,
        msg: "empty fixture file".into(),
    })?;
    let expected = head.strip_prefix("# sha256 ").ok_or(Error::Parse {
        line: 1,
        msg: "missing checksum header".into(),
    })?;
    if sha256_hex(body) != expected.trim() {
        return Err(Error::Parse {
            line: 1,
            msg: "checksum mismatch: fixture content was modified".into(),
        });
    }
    let mut rows = Vec::new();
    for (i, line) in body.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let v: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse {
                line: i + 2,
                msg: e.to_string(),
            })?;
        if v.len() != FIXTURE_COLUMNS.len() {
            return Err(Error::Parse {
                line: i + 2,
                msg: format!("expected {} columns, found {}", FIXTURE_COLUMNS.len(), v.len()),
            });
        }
        rows.push(FixtureRow {
            alpha: v[0],
            rho: v[1],
            gamma_g: v[2],
            gamma_s: v[3],
            ds_norm: v[4],
            i1: v[5],
            i2: v[6],
            i3: v[7],
            z: v[8],
            err_est: v[9],
        });
    }
    Ok(rows)
}

/// The committed fixture table.
pub const FIXTURE_TEXT: &str = include_str!("../fixtures/oracle.txt");

pub fn load_fixtures() -> Result<Vec<FixtureRow>> {
    parse_fixture_table(FIXTURE_TEXT)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(a: f64, r: f64) -> NoiseParams {
        NoiseParams::new(a, 1.0, 1.0, r).unwrap()
    }

    #[test]
    fn gaussian_closed_form() {
        let p = cfg(1.2, 1.0);
        let spec = QuadSpec::new(&p, 1e-13, 1e-10).unwrap();
        for d in [1.0, 4.0] {
            let z = bhattacharyya([d, 0.0], &p, &spec).unwrap();
            assert!((z - (-d * d / 16.0f64).exp()).abs() < 1e-10, "d = {d}");
        }
    }

    #[test]
    fn i1_closed_form() {
        let p = cfg(1.2, 0.2);
        let spec = QuadSpec::new(&p, 1e-13, 1e-10).unwrap();
        let (i1, i2, i3) = s_integrals([0.0, 4.0], &p, &spec).unwrap();
        assert!((i1 - 0.2 * (-1.0f64).exp()).abs() < 1e-10);
        assert!(i2 > 0.0 && i3 > 0.0);
    }

    #[test]
    fn checksum_detects_tampering() {
        let rows = vec![FixtureRow {
            alpha: 1.2,
            rho: 0.2,
            gamma_g: 1.0,
            gamma_s: 1.0,
            ds_norm: 4.0,
            i1: 0.1,
            i2: 0.2,
            i3: 0.3,
            z: 0.6,
            err_est: 1e-12,
        }];
        let text = write_fixture_table(&rows);
        assert_eq!(parse_fixture_table(&text).unwrap(), rows);
        let bad = text.replace("0.6", "0.7");
        assert!(parse_fixture_table(&bad).is_err());
    }
}
