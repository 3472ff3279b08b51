//! Subcommand implementations. Grid points run on the rayon pool; every file
//! is written afterwards by the calling thread, rows in grid order.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rayon::prelude::*;

use cutoff_core::bounds::{cr_bounds, cr_lower, pair_bounds, BoundReport, BOUND_COLUMNS};
use cutoff_core::noise::{pdf_2d, power_for_gsnr, NoiseParams, NoiseSampler};
use cutoff_core::oracle::{
    bhattacharyya, cutoff_rate_exact, generate_fixtures, write_fixture_table, QuadSpec, FIXTURE_SEPARATIONS,
    FIXTURE_TEXT,
};
use cutoff_core::report::{csv_line, fmt12};
use cutoff_core::shaping::{qam16, qpsk, shape_with_baselines, surrogate_cr, Constellation};
use cutoff_core::verify::{run_all, Level};

use crate::config::{ExperimentConfig, Layout};
use crate::svg::constellation_svg;

fn write(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

fn tag(p: &NoiseParams) -> String {
    format!("a{}_r{}", fmt12(p.alpha), fmt12(p.rho))
}

/// Grid of (config, GSNR) tasks in output order.
fn tasks(cfg: &ExperimentConfig) -> Result<Vec<(NoiseParams, f64)>> {
    let mut out = Vec::new();
    for p in cfg.noise_params()? {
        for g in &cfg.gsnr_grid {
            out.push((p, *g));
        }
    }
    Ok(out)
}

/// Initial constellation of the configured layout with average power `p0`.
pub fn initial_layout(cfg: &ExperimentConfig, p0: f64) -> Result<Constellation> {
    Ok(match cfg.modulation.layout {
        Layout::Qpsk => qpsk(p0)?,
        Layout::Qam16 => qam16(p0)?,
        Layout::CustomFile => {
            let path = cfg.custom_file().context("custom-file layout without a file")?;
            let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
            let c = Constellation::parse(&text).with_context(|| format!("parsing {}", path.display()))?;
            if c.len() != cfg.modulation.order {
                bail!("{} has {} points, modulation.order is {}", path.display(), c.len(), cfg.modulation.order);
            }
            let f = (p0 / c.power()).sqrt();
            Constellation::new(c.points.iter().map(|s| [s[0] * f, s[1] * f]).collect(), c.probs)?
        }
    })
}

/// Bounds over the separation `|A (1, -1)| = sqrt(P_s)` implied by each GSNR point.
pub fn bounds_sweep(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let bcfg = cfg.bounds_config();
    let mut files = Vec::new();
    for p in cfg.noise_params()? {
        let spec = QuadSpec::fixture(&p);
        let rows: Vec<String> = cfg
            .gsnr_grid
            .par_iter()
            .map(|g| {
                let ds = power_for_gsnr(*g, &p).sqrt();
                let row = pair_bounds(ds, &p, &bcfg).and_then(|b| {
                    Ok(BoundReport {
                        params: p,
                        bounds: b,
                        z_oracle: Some(bhattacharyya([ds, 0.0], &p, &spec)?),
                    })
                });
                match row {
                    Ok(r) => r.csv_row(),
                    Err(e) => {
                        eprintln!("bounds-sweep: {} at {g} dB: {e}", tag(&p));
                        let mut f = vec![fmt12(p.alpha), fmt12(p.rho), fmt12(p.gamma_g), fmt12(p.gamma_s), fmt12(ds)];
                        f.resize(BOUND_COLUMNS.len() - 1, "nan".into());
                        f.push("error".into());
                        csv_line(f)
                    }
                }
            })
            .collect();
        let mut out = BoundReport::csv_header();
        rows.iter().for_each(|r| out.push_str(r));
        files.push(write(&cfg.output_dir, &format!("bounds_{}.csv", tag(&p)), &out)?);
    }
    Ok(files)
}

pub const CR_COLUMNS: [&str; 11] = [
    "alpha",
    "rho",
    "gamma_g",
    "gamma_s",
    "gsnr_db",
    "cr_oracle",
    "cr_lower",
    "cr_upper",
    "cr_upper_plain_jensen",
    "cr_lower_trivial",
    "cr_upper_trivial",
];

pub fn cr_sweep(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let bcfg = cfg.bounds_config();
    let rows: Vec<String> = tasks(cfg)?
        .par_iter()
        .map(|(p, g)| {
            let head = [p.alpha, p.rho, p.gamma_g, p.gamma_s, *g].map(fmt12);
            let vals = (|| -> Result<[f64; 6]> {
                let c = initial_layout(cfg, power_for_gsnr(*g, p))?;
                let b = cr_bounds(&c, p, &bcfg)?;
                let cr = cutoff_rate_exact(&c, p, &QuadSpec::fixture(p))?;
                Ok([cr, b.lower, b.upper, b.upper_plain_jensen, b.lower_trivial, b.upper_trivial])
            })();
            let vals = vals.unwrap_or_else(|e| {
                eprintln!("cr-sweep: {} at {g} dB: {e:#}", tag(p));
                [f64::NAN; 6]
            });
            csv_line(head.into_iter().chain(vals.map(fmt12)))
        })
        .collect();
    let mut out = csv_line(CR_COLUMNS);
    rows.iter().for_each(|r| out.push_str(r));
    Ok(vec![write(&cfg.output_dir, "cr_sweep.csv", &out)?])
}

pub const COMPARISON_COLUMNS: [&str; 12] = [
    "alpha",
    "rho",
    "gamma_g",
    "gamma_s",
    "gsnr_db",
    "scheme",
    "cr_surrogate",
    "cr_lower",
    "cr_oracle",
    "active_points",
    "iterations",
    "converged",
];

struct ShapeOutput {
    files: Vec<(String, String)>,
    rows: Vec<String>,
}

fn shape_point(cfg: &ExperimentConfig, p: &NoiseParams, g: f64) -> Result<ShapeOutput> {
    let p0 = power_for_gsnr(g, p);
    let init = initial_layout(cfg, p0)?;
    let rep = shape_with_baselines(&init, p, &cfg.shaping_config(p0))?;
    let k = &rep.proposed.coeffs;
    let stem = format!("{}_g{}", tag(p), fmt12(g));
    let bcfg = cfg.bounds_config();
    let schemes = [
        ("proposed", &rep.proposed.constellation, Some(&rep.proposed.trace)),
        ("conventional", &rep.conventional, None),
        ("only-geo", &rep.only_geo.constellation, Some(&rep.only_geo.trace)),
        ("only-pro", &rep.only_pro.constellation, Some(&rep.only_pro.trace)),
        ("wgnc", &rep.wgnc.constellation, Some(&rep.wgnc.trace)),
    ];
    let mut rows = Vec::new();
    for (name, c, trace) in schemes {
        let full = if cfg.shaping.full_bounds {
            cr_lower(c, p, &bcfg)?
        } else {
            f64::NAN
        };
        let exact = cutoff_rate_exact(c, p, &QuadSpec::fixture(p))?;
        let (iters, conv) = trace
            .map(|t| ((t.records.len() - 1).to_string(), t.converged.to_string()))
            .unwrap_or(("0".into(), "true".into()));
        let head = [p.alpha, p.rho, p.gamma_g, p.gamma_s, g].map(fmt12);
        rows.push(csv_line(head.into_iter().chain([
            name.to_string(),
            fmt12(surrogate_cr(c, k)?),
            fmt12(full),
            fmt12(exact),
            c.active_points().to_string(),
            iters,
            conv,
        ])));
    }
    let mut files = vec![
        (format!("shape_{stem}.csv"), rep.proposed.constellation.dump()),
        (format!("trace_{stem}.csv"), rep.proposed.trace.to_csv()),
    ];
    if cfg.shaping.svg {
        let title = format!("alpha {} rho {} GSNR {} dB", fmt12(p.alpha), fmt12(p.rho), fmt12(g));
        files.push((format!("shape_{stem}.svg"), constellation_svg(&rep.proposed.constellation, p0, &title)));
    }
    Ok(ShapeOutput { files, rows })
}

pub fn shape(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let outs: Vec<_> = tasks(cfg)?
        .par_iter()
        .map(|(p, g)| (*p, *g, shape_point(cfg, p, *g)))
        .collect();
    let mut table = csv_line(COMPARISON_COLUMNS);
    let mut written = Vec::new();
    for (p, g, out) in outs {
        match out {
            Ok(o) => {
                for (name, text) in &o.files {
                    written.push(write(&cfg.output_dir, name, text)?);
                }
                o.rows.iter().for_each(|r| table.push_str(r));
            }
            Err(e) => eprintln!("shape: {} at {g} dB: {e:#}", tag(&p)),
        }
    }
    written.push(write(&cfg.output_dir, "shape_comparison.csv", &table)?);
    Ok(written)
}

pub const MC_COLUMNS: [&str; 6] = ["alpha", "rho", "ds_norm", "z_quadrature", "z_monte_carlo", "std_err"];
pub const MC_SAMPLES: usize = 200_000;

/// `E[sqrt(f(n - ds) / f(n))]` under `n ~ f`.
fn z_monte_carlo(p: &NoiseParams, ds: f64, seed: u64) -> (f64, f64) {
    let mut s = NoiseSampler::new(*p, seed);
    let (mut sum, mut sq) = (0.0, 0.0);
    for _ in 0..MC_SAMPLES {
        let (n, _) = s.sample();
        let w = (pdf_2d([n[0] - ds, n[1]], p) / pdf_2d(n, p)).sqrt();
        sum += w;
        sq += w * w;
    }
    let n = MC_SAMPLES as f64;
    let mean = sum / n;
    (mean, ((sq / n - mean * mean).max(0.0) / n).sqrt())
}

/// Regenerates the fixture table and cross-checks the Bhattacharyya column by Monte Carlo.
pub fn oracle(cfg: &ExperimentConfig, seed: u64) -> Result<Vec<PathBuf>> {
    let rows = generate_fixtures()?;
    let table = write_fixture_table(&rows);
    if table == FIXTURE_TEXT {
        println!("fixture table matches the committed copy");
    } else {
        println!("fixture table differs from the committed copy");
    }
    let mc: Vec<String> = rows
        .par_iter()
        .enumerate()
        .map(|(i, r)| {
            let (m, se) = z_monte_carlo(&r.params(), r.ds_norm, seed.wrapping_add(i as u64));
            csv_line([r.alpha, r.rho, r.ds_norm, r.z, m, se].map(fmt12))
        })
        .collect();
    let mut out = csv_line(MC_COLUMNS);
    mc.iter().for_each(|r| out.push_str(r));
    debug_assert_eq!(rows.len(), 2 * FIXTURE_SEPARATIONS.len());
    Ok(vec![
        write(&cfg.output_dir, "oracle.txt", &table)?,
        write(&cfg.output_dir, "oracle_mc.csv", &out)?,
    ])
}

/// Prints one line per criterion; returns whether all passed.
pub fn verify(level: Level) -> bool {
    let outcomes = run_all(level, |o| println!("{o}"));
    let failed = outcomes.iter().filter(|o| !o.passed).count();
    println!("{} of {} checks passed", outcomes.len() - failed, outcomes.len());
    failed == 0
}
