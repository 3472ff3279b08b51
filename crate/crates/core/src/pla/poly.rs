//! Dense real polynomials (ascending coefficients) and an Aberth-Ehrlich root finder.

use nalgebra::Complex;

pub type Poly = Vec<f64>;

pub fn mul(a: &[f64], b: &[f64]) -> Poly {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

pub fn add(a: &[f64], b: &[f64]) -> Poly {
    let n = a.len().max(b.len());
    (0..n)
        .map(|i| a.get(i).copied().unwrap_or(0.0) + b.get(i).copied().unwrap_or(0.0))
        .collect()
}

pub fn scale(a: &[f64], s: f64) -> Poly {
    a.iter().map(|x| x * s).collect()
}

pub fn eval(a: &[f64], x: f64) -> f64 {
    a.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

fn eval_c(a: &[f64], z: Complex<f64>) -> (Complex<f64>, Complex<f64>) {
    let mut p = Complex::new(0.0, 0.0);
    let mut dp = Complex::new(0.0, 0.0);
    for c in a.iter().rev() {
        dp = dp * z + p;
        p = p * z + Complex::new(*c, 0.0);
    }
    (p, dp)
}

/// Drops leading coefficients that are negligible against the largest one.
pub fn trim(a: &[f64]) -> Poly {
    let big = a.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    let mut n = a.len();
    while n > 1 && a[n - 1].abs() <= 1e-14 * big {
        n -= 1;
    }
    a[..n].to_vec()
}

/// All complex roots of a real polynomial.
pub fn roots(a: &[f64]) -> Vec<Complex<f64>> {
    let a = trim(a);
    let deg = a.len() - 1;
    if deg == 0 {
        return Vec::new();
    }
    let lead = a[deg];
    let monic: Vec<f64> = a.iter().map(|c| c / lead).collect();
    // Cauchy bound for the initial circle
    let radius = 1.0 + monic[..deg].iter().fold(0.0f64, |m, c| m.max(c.abs()));
    let mut z: Vec<Complex<f64>> = (0..deg)
        .map(|k| {
            let th = 2.0 * std::f64::consts::PI * (k as f64 + 0.25) / deg as f64 + 0.4;
            Complex::from_polar(0.5 * radius, th)
        })
        .collect();
    for _ in 0..500 {
        let mut worst = 0.0f64;
        for k in 0..deg {
            let (p, dp) = eval_c(&monic, z[k]);
            if p.norm() == 0.0 {
                continue;
            }
            let ratio = p / dp;
            let mut s = Complex::new(0.0, 0.0);
            for j in 0..deg {
                if j != k {
                    s += Complex::new(1.0, 0.0) / (z[k] - z[j]);
                }
            }
            let w = ratio / (Complex::new(1.0, 0.0) - ratio * s);
            z[k] -= w;
            worst = worst.max(w.norm() / z[k].norm().max(1e-300));
        }
        if worst < 1e-15 {
            break;
        }
    }
    z
}

/// Real roots (imaginary part below `1e-7` relative), Newton-polished and sorted.
pub fn real_roots(a: &[f64]) -> Vec<f64> {
    let a = trim(a);
    let da: Vec<f64> = (1..a.len()).map(|i| a[i] * i as f64).collect();
    let mut out: Vec<f64> = roots(&a)
        .into_iter()
        .filter(|z| z.im.abs() <= 1e-7 * z.re.abs().max(1.0))
        .map(|z| {
            let mut x = z.re;
            for _ in 0..4 {
                let d = eval(&da, x);
                if d == 0.0 {
                    break;
                }
                let step = eval(&a, x) / d;
                if !step.is_finite() {
                    break;
                }
                x -= step;
            }
            x
        })
        .collect();
    out.sort_by(f64::total_cmp);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cubic_with_known_roots() {
        // (x - 1)(x + 2)(x - 3)
        let p = mul(&mul(&[-1.0, 1.0], &[2.0, 1.0]), &[-3.0, 1.0]);
        let r = real_roots(&p);
        assert_eq!(r.len(), 3);
        for (x, e) in r.iter().zip([-2.0, 1.0, 3.0]) {
            assert!((x - e).abs() < 1e-13);
        }
    }

    #[test]
    fn complex_pair_is_filtered() {
        // (x^2 + 1)(x - 0.5)
        let p = mul(&[1.0, 0.0, 1.0], &[-0.5, 1.0]);
        let r = real_roots(&p);
        assert_eq!(r.len(), 1);
        assert!((r[0] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn degenerate_leading_term_is_trimmed() {
        let r = real_roots(&[-2.0, 1.0, 0.0]);
        assert_eq!(r, vec![2.0]);
    }
}
