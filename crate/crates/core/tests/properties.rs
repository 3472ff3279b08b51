use proptest::prelude::*;

use cutoff_core::bounds::{pair_bounds, surrogate_coeffs, BoundsConfig, SurrogateTarget};
use cutoff_core::noise::{pdf_2d, power_for_gsnr, NoiseParams};
use cutoff_core::oracle::{bhattacharyya, QuadSpec};
use cutoff_core::shaping::{
    project_power_joint, project_simplex, qam16, random_layout, shape, Constellation, ShapingConfig,
};

fn config(i: usize) -> NoiseParams {
    NoiseParams::reference_configs()[i]
}

fn on_simplex(p: &[f64]) -> bool {
    p.iter().all(|x| *x >= 0.0) && (p.iter().sum::<f64>() - 1.0).abs() < 1e-12
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn simplex_projection_lands_on_the_simplex(v in prop::collection::vec(-5.0f64..5.0, 1..20)) {
        let p = project_simplex(&v);
        prop_assert!(on_simplex(&p));
    }

    #[test]
    fn simplex_projection_is_idempotent(v in prop::collection::vec(-5.0f64..5.0, 1..20)) {
        let p = project_simplex(&v);
        let q = project_simplex(&p);
        for (a, b) in p.iter().zip(&q) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn simplex_projection_is_permutation_equivariant(v in prop::collection::vec(-5.0f64..5.0, 2..20), shift in 0usize..20) {
        let n = v.len();
        let rotated: Vec<f64> = (0..n).map(|i| v[(i + shift) % n]).collect();
        let p = project_simplex(&v);
        let q = project_simplex(&rotated);
        for i in 0..n {
            prop_assert!((q[i] - p[(i + shift) % n]).abs() < 1e-12);
        }
    }

    /// KKT: positive entries share the shift `v_i - p_i`, zero entries lie below it.
    #[test]
    fn simplex_projection_satisfies_kkt(v in prop::collection::vec(-5.0f64..5.0, 1..20)) {
        let p = project_simplex(&v);
        let shifts: Vec<f64> = v.iter().zip(&p).filter(|(_, p)| **p > 0.0).map(|(v, p)| v - p).collect();
        let tau = shifts[0];
        prop_assert!(shifts.iter().all(|s| (s - tau).abs() < 1e-9));
        prop_assert!(v.iter().zip(&p).filter(|(_, p)| **p == 0.0).all(|(v, _)| *v <= tau + 1e-9));
    }

    #[test]
    fn joint_power_projection_is_feasible(
        pts in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 2..12),
        p0 in 0.1f64..20.0,
    ) {
        let cands: Vec<[f64; 2]> = pts.iter().map(|(x, y)| [*x, *y]).collect();
        let probs = vec![1.0 / cands.len() as f64; cands.len()];
        let out = project_power_joint(&cands, &probs, p0);
        let power: f64 = out.iter().zip(&probs).map(|(s, p)| p * (s[0] * s[0] + s[1] * s[1])).sum();
        prop_assert!(power <= p0 * (1.0 + 1e-9));
        let before: f64 = cands.iter().zip(&probs).map(|(s, p)| p * (s[0] * s[0] + s[1] * s[1])).sum();
        if before <= p0 {
            prop_assert_eq!(out, cands);
        }
    }

    #[test]
    fn pdf_is_radial_and_positive(r in 0.0f64..200.0, theta in 0.0f64..6.3, i in 0usize..2) {
        let p = config(i);
        let a = pdf_2d([r * theta.cos(), r * theta.sin()], &p);
        let b = pdf_2d([r, 0.0], &p);
        prop_assert!(a > 0.0);
        prop_assert!((a - b).abs() <= 1e-12 * b);
    }

    #[test]
    fn constellation_dump_round_trips(m in 2usize..20, seed in 0u64..1000) {
        let c = random_layout(m, 3.0, seed).unwrap();
        let back = Constellation::parse(&c.dump()).unwrap();
        prop_assert_eq!(back.len(), m);
        for (a, b) in c.points.iter().zip(&back.points) {
            prop_assert!((a[0] - b[0]).abs() <= 1e-10 * a[0].abs().max(1.0));
            prop_assert!((a[1] - b[1]).abs() <= 1e-10 * a[1].abs().max(1.0));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn bounds_sandwich_the_oracle(d in 0.3f64..40.0, i in 0usize..2) {
        let p = config(i);
        let b = pair_bounds(d, &p, &BoundsConfig::default()).unwrap();
        let z = bhattacharyya([d, 0.0], &p, &QuadSpec::fixture(&p)).unwrap();
        prop_assert!(b.z_lower <= z * (1.0 + 1e-9), "z_lower {} > Z {}", b.z_lower, z);
        prop_assert!(z <= b.z_upper * (1.0 + 1e-9), "Z {} > z_upper {}", z, b.z_upper);
    }

    #[test]
    fn surrogate_dominates_the_oracle(u in 0.0f64..1.0, g in -4.0f64..20.0, i in 0usize..2) {
        let p = config(i);
        let ds_max = 2.0 * (power_for_gsnr(g, &p) * 16.0).sqrt();
        let k = surrogate_coeffs(&p, &BoundsConfig::default(), ds_max, 32, SurrogateTarget::Oracle, &[(0.3 * ds_max, 1.0)]).unwrap();
        let d = u * ds_max;
        let z = bhattacharyya([d, 0.0], &p, &QuadSpec::fixture(&p)).unwrap();
        prop_assert!(k.z_tilde(d).unwrap() >= z, "d {d}: z_tilde {} < Z {z}", k.z_tilde(d).unwrap());
    }
}

#[test]
fn shaping_is_deterministic() {
    let p = config(0);
    let p0 = power_for_gsnr(4.0, &p);
    let mut cfg = ShapingConfig::new(p0);
    cfg.i_max = 30;
    cfg.surrogate_cells = 16;
    let a = shape(&qam16(p0).unwrap(), &p, &cfg).unwrap();
    let b = shape(&qam16(p0).unwrap(), &p, &cfg).unwrap();
    assert_eq!(a.constellation, b.constellation);
    assert_eq!(a.trace.to_csv(), b.trace.to_csv());
}

#[test]
fn shaping_trace_is_monotone_and_feasible() {
    let p = config(1);
    let p0 = power_for_gsnr(6.0, &p);
    let mut cfg = ShapingConfig::new(p0);
    cfg.i_max = 60;
    cfg.surrogate_cells = 16;
    let r = shape(&qam16(p0).unwrap(), &p, &cfg).unwrap();
    assert!(r.trace.is_monotone(0.0));
    for rec in &r.trace.records {
        assert!(rec.power_slack >= -1e-9 * p0);
        assert!(rec.simplex_residual <= 1e-12);
    }
    assert!(on_simplex(&r.constellation.probs));
}
