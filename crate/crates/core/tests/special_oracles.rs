use cutoff_core::special::{gauss_2f1, tricomi_u, tricomi_u_dz};

/// Frozen 30-digit mpmath values: (a, b, z, U(a, b, z)).
const U_FROZEN: [(f64, f64, f64, f64); 5] = [
    (1.0, 0.7, 0.3, 0.974_419_734_499_509_69),
    (1.0, 0.55, 4.0, 0.190_881_984_304_580_25),
    (0.35, 0.6, 12.0, 0.410_675_235_388_979_74),
    (1.5, 2.2, 60.0, 0.002_135_938_615_558_939_7),
    (0.8, 1.45, 0.05, 5.270_000_277_897_772_8),
];

/// Frozen 30-digit mpmath values: (a, b, c, z, 2F1(a, b; c; z)).
const F_FROZEN: [(f64, f64, f64, f64, f64); 5] = [
    (0.8, 0.5, 1.3, 0.4, 1.163_925_382_405_687_3),
    (0.45, 0.5, 1.5, -3.0, 0.779_833_079_587_342_58),
    (0.95, 0.5, 1.45, 0.93, 2.053_328_421_437_359_4),
    (0.8, 0.5, 1.3, -40.0, 0.247_954_800_268_105_21),
    (0.7, 1.2, 2.1, 0.6, 1.396_587_602_464_081_8),
];

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

#[test]
fn tricomi_u_matches_frozen_values() {
    for (a, b, z, want) in U_FROZEN {
        let got = tricomi_u(a, b, z).unwrap();
        assert!(rel(got, want) < 1e-10, "U({a}, {b}, {z}) = {got}, want {want}");
    }
}

#[test]
fn gauss_2f1_matches_frozen_values() {
    for (a, b, c, z, want) in F_FROZEN {
        let got = gauss_2f1(a, b, c, z).unwrap();
        assert!(rel(got, want) < 1e-10, "2F1({a}, {b}; {c}; {z}) = {got}, want {want}");
    }
}

/// `U(1, b, z) = int_0^inf e^{-zt} (1 + t)^{b-2} dt` by composite Simpson on `[0, 46 / z]`.
fn u1_simpson(b: f64, z: f64) -> f64 {
    let f = |t: f64| (-z * t).exp() * (1.0 + t).powf(b - 2.0);
    let n = 400_000;
    let h = 46.0 / z / n as f64;
    let mut s = f(0.0) + f(n as f64 * h);
    for i in 1..n {
        s += f(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

#[test]
fn tricomi_u_matches_simpson_quadrature() {
    for b in [0.3, 0.6, 0.9, 1.4] {
        for z in [0.2, 1.0, 5.0, 30.0] {
            let want = u1_simpson(b, z);
            let got = tricomi_u(1.0, b, z).unwrap();
            assert!(rel(got, want) < 1e-8, "U(1, {b}, {z}) = {got}, simpson {want}");
        }
    }
}

/// Direct hypergeometric series, adequate for `|z| <= 0.8`.
fn f_series(a: f64, b: f64, c: f64, z: f64) -> f64 {
    let (mut term, mut sum) = (1.0, 1.0);
    for n in 0..2000 {
        let n = n as f64;
        term *= (a + n) * (b + n) / ((c + n) * (n + 1.0)) * z;
        sum += term;
        if term.abs() < 1e-18 * sum.abs() {
            break;
        }
    }
    sum
}

#[test]
fn gauss_2f1_matches_direct_series() {
    for (a, c) in [(0.55, 1.1), (0.8, 1.3), (0.95, 1.45)] {
        for z in [-0.8, -0.4, 0.0, 0.3, 0.6, 0.8] {
            let want = f_series(a, 0.5, c, z);
            let got = gauss_2f1(a, 0.5, c, z).unwrap();
            assert!(rel(got, want) < 1e-11, "2F1({a}, 0.5; {c}; {z}) = {got}, series {want}");
        }
    }
}

#[test]
fn tricomi_u_dz_matches_central_difference() {
    for (a, b, z) in [(1.0, 0.6, 0.7), (0.4, 0.55, 3.0), (1.0, 1.2, 40.0)] {
        let h = 1e-5 * z;
        let fd = (tricomi_u(a, b, z + h).unwrap() - tricomi_u(a, b, z - h).unwrap()) / (2.0 * h);
        let got = tricomi_u_dz(a, b, z).unwrap();
        assert!(rel(got, fd) < 1e-6, "U'({a}, {b}, {z}) = {got}, fd {fd}");
    }
}
