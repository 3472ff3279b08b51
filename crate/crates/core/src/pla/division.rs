//! Division sequences: breakpoints with certified constant convexity per interval.

use super::{j1j2_inflection, j3_inflection, lower_piece, tail_power, upper_piece, PowerKernel, Target, J1J2, J3};
use crate::error::{Error, Result};
use crate::noise::NoiseParams;
use crate::report::fmt12;

/// Function family a division is built for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DivisionTarget {
    /// `J1 J2`, the S2 integrand without its Gaussian weight.
    J1J2,
    /// `J1^{(alpha+2)/alpha}` and `J3`, the two factors of the S3 integrand.
    J3,
    /// Midpoint profile `(c0 + d^2/4 + y^2)^{-(alpha+2)/2}` of the `J4` product.
    J4Product,
}

impl DivisionTarget {
    pub fn tag(self) -> &'static str {
        match self {
            DivisionTarget::J1J2 => "j1j2",
            DivisionTarget::J3 => "j3",
            DivisionTarget::J4Product => "j4-product",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DivisionConfig {
    pub k_main: usize,
    pub k_tail: usize,
    pub range_mult: f64,
    pub tail_ratio: f64,
}

impl DivisionConfig {
    /// 45 intervals for the S2 target.
    pub fn s2_default() -> Self {
        Self {
            k_main: 30,
            k_tail: 15,
            range_mult: 1.0,
            tail_ratio: 1.5,
        }
    }

    /// 60 intervals for the S3 target.
    pub fn s3_default() -> Self {
        Self {
            k_main: 40,
            k_tail: 20,
            range_mult: 1.0,
            tail_ratio: 1.5,
        }
    }

    pub fn for_target(target: DivisionTarget) -> Self {
        match target {
            DivisionTarget::J1J2 => Self::s2_default(),
            _ => Self::s3_default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k_main < 1 || self.k_tail < 1 {
            return Err(Error::InvalidParam("K_main and K_tail must be >= 1".into()));
        }
        if !(self.range_mult > 0.0) || !(self.tail_ratio >= 1.0) || !self.tail_ratio.is_finite() {
            return Err(Error::InvalidParam(format!(
                "range_mult {} must be > 0 and tail_ratio {} >= 1",
                self.range_mult, self.tail_ratio
            )));
        }
        Ok(())
    }
}

/// Strictly increasing breakpoints on which every component of the target
/// has one convexity sign per interval.
#[derive(Debug, Clone, PartialEq)]
pub struct Division {
    pub breakpoints: Vec<f64>,
    pub k_main: usize,
    pub k_tail: usize,
    /// Inflection points of the components, all present among the breakpoints.
    pub inflections: Vec<f64>,
    pub target: DivisionTarget,
    pub params: NoiseParams,
    pub ds_norm: f64,
}

const CERT_POINTS: usize = 33;
const CERT_REL_TOL: f64 = 1e-9;
const MAX_SPLIT_DEPTH: usize = 6;
const J3_SCAN_POINTS: usize = 400;

impl Division {
    pub fn range(&self) -> (f64, f64) {
        (self.breakpoints[0], *self.breakpoints.last().expect("nonempty"))
    }

    pub fn len(&self) -> usize {
        self.breakpoints.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.breakpoints.len() < 2
    }

    pub fn intervals(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.breakpoints.windows(2).map(|w| (w[0], w[1]))
    }

    /// The functions bounded piecewise on this division.
    pub fn components(&self) -> Vec<Box<dyn Target + Send + Sync>> {
        components(self.target, &self.params, self.ds_norm)
    }

    /// Same division with every interval halved (a refinement, so convexity carries over).
    pub fn bisected(&self) -> Division {
        let mut bp = Vec::with_capacity(2 * self.breakpoints.len());
        for (a, b) in self.intervals() {
            bp.push(a);
            bp.push(0.5 * (a + b));
        }
        bp.push(*self.breakpoints.last().expect("nonempty"));
        Division {
            breakpoints: bp,
            k_main: 2 * self.k_main,
            k_tail: 2 * self.k_tail,
            ..self.clone()
        }
    }

    /// Breakpoint list followed by the upper and lower piece table of every component.
    pub fn dump(&self) -> Result<String> {
        let mut out = format!(
            "# division target={} ds_norm={} k_main={} k_tail={}\n# breakpoints\n",
            self.target.tag(),
            fmt12(self.ds_norm),
            self.k_main,
            self.k_tail
        );
        for b in &self.breakpoints {
            out.push_str(&fmt12(*b));
            out.push('\n');
        }
        out.push_str("# component lo hi side kind p q\n");
        for (ci, g) in self.components().iter().enumerate() {
            for (a, b) in self.intervals() {
                for piece in [upper_piece(g.as_ref(), a, b)?, lower_piece(g.as_ref(), a, b)?] {
                    out.push_str(&format!(
                        "{ci} {} {} {} {} {} {}\n",
                        fmt12(piece.lo),
                        fmt12(piece.hi),
                        match piece.side {
                            super::Side::Upper => "upper",
                            super::Side::Lower => "lower",
                        },
                        match piece.kind {
                            super::PieceKind::Chord => "chord",
                            super::PieceKind::Tangent => "tangent",
                        },
                        fmt12(piece.p),
                        fmt12(piece.q)
                    ));
                }
            }
        }
        Ok(out)
    }
}

fn components(target: DivisionTarget, params: &NoiseParams, d: f64) -> Vec<Box<dyn Target + Send + Sync>> {
    match target {
        DivisionTarget::J1J2 => vec![Box::new(J1J2::new(params))],
        DivisionTarget::J3 => vec![Box::new(tail_power(params)), Box::new(J3::new(params, d))],
        DivisionTarget::J4Product => vec![Box::new(j4_profile(params, d))],
    }
}

/// `(c0 + d^2/4 + y^2)^{-(alpha+2)/2}`.
pub(crate) fn j4_profile(params: &NoiseParams, d: f64) -> PowerKernel {
    PowerKernel {
        a: params.c0() + 0.25 * d * d,
        m: 0.5 * (params.alpha + 2.0),
    }
}

/// Half-width `R` of the covered range.
fn half_range(params: &NoiseParams, d: f64, range_mult: f64) -> f64 {
    range_mult * (8f64.sqrt() * params.gamma_g * 6.0).max(d + 6.0 * params.gamma_s * params.alpha.sqrt())
}

/// Builds the division with [`DivisionConfig::for_target`] defaults overridden by `k_main`, `k_tail`, `range_mult`.
pub fn build_division(
    target: DivisionTarget,
    params: &NoiseParams,
    ds_norm: f64,
    k_main: usize,
    k_tail: usize,
    range_mult: f64,
) -> Result<Division> {
    let cfg = DivisionConfig {
        k_main,
        k_tail,
        range_mult,
        ..DivisionConfig::for_target(target)
    };
    build_division_with(target, params, ds_norm, &cfg)
}

pub fn build_division_with(
    target: DivisionTarget,
    params: &NoiseParams,
    ds_norm: f64,
    cfg: &DivisionConfig,
) -> Result<Division> {
    params.validate()?;
    cfg.validate()?;
    if !(ds_norm >= 0.0) || !ds_norm.is_finite() {
        return Err(Error::InvalidParam(format!("separation {ds_norm} must be finite and >= 0")));
    }
    let d = ds_norm;
    let r = half_range(params, d, cfg.range_mult);
    let comps = components(target, params, d);

    let mut inflections: Vec<f64> = Vec::new();
    let mut anchors: Vec<f64> = Vec::new();
    match target {
        DivisionTarget::J1J2 => {
            let x = j1j2_inflection(params)?;
            inflections.extend([-x, x]);
            // the Gaussian weight of S2 peaks at -d
            let w = 6.0 * params.gamma_g;
            anchors.extend([-d - w, -d + w]);
        }
        DivisionTarget::J3 => {
            let x = tail_power(params).inflection();
            inflections.extend([-x, x]);
            inflections.extend(j3_inflection(params, d)?);
            inflections.extend(scan_sign_changes(comps[1].as_ref(), -r, r, J3_SCAN_POINTS)?);
            anchors.push(d);
        }
        DivisionTarget::J4Product => {
            let y = j4_profile(params, d).inflection();
            inflections.extend([-y, y]);
        }
    }
    let clip = |v: &mut Vec<f64>| {
        v.retain(|x| x.abs() < r);
        v.sort_by(f64::total_cmp);
        v.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * r);
    };
    clip(&mut inflections);
    anchors.extend(inflections.iter().copied());
    clip(&mut anchors);
    if anchors.len() < 2 {
        let w = 0.1 * r;
        anchors.extend([-w, w]);
        clip(&mut anchors);
    }

    let (m0, m1) = (anchors[0], *anchors.last().expect("nonempty"));
    let seg_len: Vec<f64> = anchors.windows(2).map(|w| w[1] - w[0]).collect();
    let seg_counts = allocate(cfg.k_main, &seg_len);
    let mut bp = vec![-r];
    let left = m0 + r;
    let right = r - m1;
    let tail_counts = allocate(cfg.k_tail, &[left, right]);
    for x in geometric(m0, -r, tail_counts[0], cfg.tail_ratio).into_iter().rev() {
        bp.push(x);
    }
    for (i, w) in anchors.windows(2).enumerate() {
        let n = seg_counts[i];
        for k in 0..n {
            bp.push(w[0] + (w[1] - w[0]) * k as f64 / n as f64);
        }
    }
    bp.push(m1);
    bp.extend(geometric(m1, r, tail_counts[1], cfg.tail_ratio));
    bp.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * r);
    bp.sort_by(f64::total_cmp);

    let mut certified = vec![bp[0]];
    for w in bp.windows(2) {
        certify(&comps, w[0], w[1], 0, &mut certified, &mut inflections)?;
    }
    inflections.sort_by(f64::total_cmp);
    inflections.dedup();

    let k_main = certified.windows(2).filter(|w| w[0] >= m0 && w[1] <= m1).count();
    let k = certified.len() - 1;
    Ok(Division {
        breakpoints: certified,
        k_main,
        k_tail: k - k_main,
        inflections,
        target,
        params: *params,
        ds_norm,
    })
}

/// Splits `total` over segments proportionally to length, at least one per
/// nonempty segment (largest-remainder rounding).
fn allocate(total: usize, lengths: &[f64]) -> Vec<usize> {
    let nonempty: Vec<usize> = (0..lengths.len()).filter(|i| lengths[*i] > 0.0).collect();
    let mut out = vec![0usize; lengths.len()];
    if nonempty.is_empty() {
        return out;
    }
    for &i in &nonempty {
        out[i] = 1;
    }
    let extra = total.saturating_sub(nonempty.len());
    if extra == 0 {
        return out;
    }
    let sum: f64 = nonempty.iter().map(|i| lengths[*i]).sum();
    let mut rem: Vec<(usize, f64)> = Vec::new();
    let mut used = 0;
    for &i in &nonempty {
        let share = extra as f64 * lengths[i] / sum;
        let whole = share.floor() as usize;
        out[i] += whole;
        used += whole;
        rem.push((i, share - whole as f64));
    }
    rem.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    for (i, _) in rem.into_iter().take(extra - used) {
        out[i] += 1;
    }
    out
}

/// Interior breakpoints from `from` toward `to` with widths growing by `ratio`
/// (endpoint `to` included, `from` excluded).
fn geometric(from: f64, to: f64, n: usize, ratio: f64) -> Vec<f64> {
    if n == 0 {
        return Vec::new();
    }
    let len = to - from;
    let w0 = if ratio == 1.0 {
        len / n as f64
    } else {
        len * (ratio - 1.0) / (ratio.powi(n as i32) - 1.0)
    };
    let mut out = Vec::with_capacity(n);
    let mut x = from;
    let mut w = w0;
    for k in 0..n {
        x = if k + 1 == n { to } else { x + w };
        out.push(x);
        w *= ratio;
    }
    out
}

fn scan_sign_changes(g: &dyn Target, lo: f64, hi: f64, n: usize) -> Result<Vec<f64>> {
    let xs: Vec<f64> = (0..=n).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect();
    let vals: Vec<f64> = xs.iter().map(|x| g.d2(*x)).collect::<Result<_>>()?;
    let scale = vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tol = CERT_REL_TOL * scale;
    let mut out = Vec::new();
    for i in 0..n {
        if (vals[i] > tol && vals[i + 1] < -tol) || (vals[i] < -tol && vals[i + 1] > tol) {
            out.push(super::bisect_d2(g, xs[i], xs[i + 1])?);
        }
    }
    Ok(out)
}

/// Checks `[a, b]` on a 33-point grid for every component; splits at
/// bisected sign changes of the second derivative when needed.
fn certify(
    comps: &[Box<dyn Target + Send + Sync>],
    a: f64,
    b: f64,
    depth: usize,
    out: &mut Vec<f64>,
    inflections: &mut Vec<f64>,
) -> Result<()> {
    for g in comps {
        let xs: Vec<f64> = (0..CERT_POINTS)
            .map(|i| a + (b - a) * i as f64 / (CERT_POINTS - 1) as f64)
            .collect();
        let vals: Vec<f64> = xs.iter().map(|x| g.d2(*x)).collect::<Result<_>>()?;
        let scale = vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let tol = CERT_REL_TOL * scale;
        let pos = vals.iter().any(|v| *v > tol);
        let neg = vals.iter().any(|v| *v < -tol);
        if pos && neg {
            if depth >= MAX_SPLIT_DEPTH {
                return Err(Error::Convexity { lo: a, hi: b });
            }
            let mut cut = 0.5 * (a + b);
            let mut last: Option<usize> = None;
            for i in 0..CERT_POINTS {
                if vals[i].abs() <= tol {
                    continue;
                }
                if let Some(j) = last {
                    if vals[j].signum() != vals[i].signum() {
                        cut = super::bisect_d2(g.as_ref(), xs[j], xs[i])?;
                        inflections.push(cut);
                        break;
                    }
                }
                last = Some(i);
            }
            if !(cut > a && cut < b) {
                cut = 0.5 * (a + b);
            }
            certify(comps, a, cut, depth + 1, out, inflections)?;
            return certify(comps, cut, b, depth + 1, out, inflections);
        }
    }
    out.push(b);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn allocation_respects_minimum_and_total() {
        assert_eq!(allocate(10, &[1.0, 1.0]), vec![5, 5]);
        assert_eq!(allocate(1, &[1.0, 3.0]), vec![1, 1]);
        assert_eq!(allocate(7, &[0.0, 3.0]), vec![0, 7]);
        assert_eq!(allocate(10, &[1.0, 3.0]).iter().sum::<usize>(), 10);
    }

    #[test]
    fn geometric_widths_grow() {
        let pts = geometric(1.0, 20.0, 5, 1.5);
        assert_eq!(pts.len(), 5);
        assert_eq!(*pts.last().unwrap(), 20.0);
        let mut prev = 1.0;
        let mut prev_w = 0.0;
        for x in pts {
            let w = x - prev;
            assert!(w > prev_w);
            prev_w = w;
            prev = x;
        }
        let left = geometric(-1.0, -20.0, 4, 1.5);
        assert!(left.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn divisions_are_increasing_and_contain_inflections() {
        for p in NoiseParams::reference_configs() {
            for t in [DivisionTarget::J1J2, DivisionTarget::J3, DivisionTarget::J4Product] {
                let cfg = DivisionConfig::for_target(t);
                let div = build_division_with(t, &p, 4.0, &cfg).unwrap();
                assert!(div.breakpoints.windows(2).all(|w| w[0] < w[1]));
                assert!(div.len() >= cfg.k_main + cfg.k_tail);
                for x in &div.inflections {
                    assert!(div.breakpoints.iter().any(|b| (b - x).abs() < 1e-12 * (1.0 + x.abs())), "{x}");
                }
            }
        }
    }

    #[test]
    fn bisected_is_a_refinement() {
        let p = NoiseParams::reference_configs()[0];
        let div = build_division(DivisionTarget::J4Product, &p, 2.0, 5, 4, 1.0).unwrap();
        let fine = div.bisected();
        assert_eq!(fine.len(), 2 * div.len());
        assert!(div.breakpoints.iter().all(|b| fine.breakpoints.contains(b)));
    }

    #[test]
    fn dump_lists_breakpoints_and_pieces() {
        let p = NoiseParams::reference_configs()[1];
        let div = build_division(DivisionTarget::J4Product, &p, 1.0, 3, 2, 1.0).unwrap();
        let text = div.dump().unwrap();
        assert!(text.starts_with("# division target=j4-product"));
        assert_eq!(text.lines().filter(|l| l.contains("upper")).count(), div.len());
    }
}
