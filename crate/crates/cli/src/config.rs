//! Experiment configuration: a flat TOML file with one table per section.

use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use serde::Deserialize;

use cutoff_core::bounds::{BoundsConfig, SurrogateTarget};
use cutoff_core::noise::NoiseParams;
use cutoff_core::pla::DivisionConfig;
use cutoff_core::shaping::{Freeze, ShapingConfig, UpdateMode};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSection {
    /// Paired with `rho` element-wise; one noise configuration per pair.
    pub alpha: Vec<f64>,
    pub rho: Vec<f64>,
    pub gamma_g: f64,
    pub gamma_s: f64,
}

impl Default for NoiseSection {
    fn default() -> Self {
        Self {
            alpha: vec![1.2, 1.8],
            rho: vec![0.2, 0.8],
            gamma_g: 1.0,
            gamma_s: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Layout {
    Qpsk,
    Qam16,
    CustomFile,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModulationSection {
    pub order: usize,
    pub layout: Layout,
    /// Constellation dump (`index,x,y,prob`) for `custom-file`, relative to the config file.
    pub file: Option<PathBuf>,
}

impl Default for ModulationSection {
    fn default() -> Self {
        Self {
            order: 16,
            layout: Layout::Qam16,
            file: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlaSection {
    pub s2_k_main: usize,
    pub s2_k_tail: usize,
    pub s3_k_main: usize,
    pub s3_k_tail: usize,
    pub eps_w: f64,
}

impl Default for PlaSection {
    fn default() -> Self {
        let b = BoundsConfig::default();
        Self {
            s2_k_main: b.s2.k_main,
            s2_k_tail: b.s2.k_tail,
            s3_k_main: b.s3.k_main,
            s3_k_tail: b.s3.k_tail,
            eps_w: b.eps_w,
        }
    }
}

/// What the surrogate is fitted to dominate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Target {
    Oracle,
    UpperBound,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ShapingSection {
    pub mu: f64,
    pub i_max: usize,
    pub eps_stop: f64,
    pub surrogate_cells: usize,
    pub surrogate_target: Target,
    pub inner_steps: usize,
    pub gauss_seidel: bool,
    /// Also evaluate the full cutoff-rate lower bound of every scheme (slow).
    pub full_bounds: bool,
    pub svg: bool,
}

impl Default for ShapingSection {
    fn default() -> Self {
        let c = ShapingConfig::new(1.0);
        Self {
            mu: c.mu,
            i_max: c.i_max,
            eps_stop: c.eps_stop,
            surrogate_cells: c.surrogate_cells,
            surrogate_target: Target::Oracle,
            inner_steps: c.inner_steps,
            gauss_seidel: false,
            full_bounds: false,
            svg: true,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub noise: NoiseSection,
    pub gsnr_grid: Vec<f64>,
    pub modulation: ModulationSection,
    pub pla: PlaSection,
    pub shaping: ShapingSection,
    /// Relative paths are taken from the config file's directory.
    pub output_dir: PathBuf,
    #[serde(skip)]
    base_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            noise: NoiseSection::default(),
            gsnr_grid: (-5..=10).map(|i| 2.0 * i as f64).collect(),
            modulation: ModulationSection::default(),
            pla: PlaSection::default(),
            shaping: ShapingSection::default(),
            output_dir: PathBuf::from("out"),
            base_dir: PathBuf::from("."),
        }
    }
}

impl ExperimentConfig {
    pub fn from_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).context("malformed config")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg = Self::from_str(&text).with_context(|| format!("in {}", path.display()))?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.output_dir = cfg.base_dir.join(&cfg.output_dir);
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(!self.gsnr_grid.is_empty(), "gsnr_grid is empty");
        ensure!(self.gsnr_grid.iter().all(|g| g.is_finite()), "gsnr_grid has a non-finite value");
        ensure!(
            self.noise.alpha.len() == self.noise.rho.len() && !self.noise.alpha.is_empty(),
            "noise.alpha and noise.rho must be nonempty and of equal length"
        );
        for p in self.noise_params()? {
            p.validate()?;
        }
        match self.modulation.layout {
            Layout::Qpsk if self.modulation.order != 4 => bail!("qpsk layout needs order = 4"),
            Layout::Qam16 if self.modulation.order != 16 => bail!("qam16 layout needs order = 16"),
            Layout::CustomFile if self.modulation.file.is_none() => bail!("custom-file layout needs modulation.file"),
            _ => {}
        }
        DivisionConfig {
            k_main: self.pla.s2_k_main,
            k_tail: self.pla.s2_k_tail,
            ..DivisionConfig::s2_default()
        }
        .validate()?;
        DivisionConfig {
            k_main: self.pla.s3_k_main,
            k_tail: self.pla.s3_k_tail,
            ..DivisionConfig::s3_default()
        }
        .validate()?;
        self.shaping_config(1.0).validate()?;
        Ok(())
    }

    pub fn noise_params(&self) -> Result<Vec<NoiseParams>> {
        self.noise
            .alpha
            .iter()
            .zip(&self.noise.rho)
            .map(|(a, r)| Ok(NoiseParams::new(*a, self.noise.gamma_g, self.noise.gamma_s, *r)?))
            .collect()
    }

    pub fn bounds_config(&self) -> BoundsConfig {
        let d = BoundsConfig::default();
        BoundsConfig {
            s2: DivisionConfig {
                k_main: self.pla.s2_k_main,
                k_tail: self.pla.s2_k_tail,
                ..d.s2
            },
            s3: DivisionConfig {
                k_main: self.pla.s3_k_main,
                k_tail: self.pla.s3_k_tail,
                ..d.s3
            },
            eps_w: self.pla.eps_w,
        }
    }

    pub fn shaping_config(&self, p0: f64) -> ShapingConfig {
        let s = &self.shaping;
        ShapingConfig {
            mu: s.mu,
            i_max: s.i_max,
            eps_stop: s.eps_stop,
            eps_w: self.pla.eps_w,
            bounds: self.bounds_config(),
            surrogate_cells: s.surrogate_cells,
            target: match s.surrogate_target {
                Target::Oracle => SurrogateTarget::Oracle,
                Target::UpperBound => SurrogateTarget::UpperBound,
            },
            inner_steps: s.inner_steps,
            mode: if s.gauss_seidel {
                UpdateMode::GaussSeidel
            } else {
                UpdateMode::Jacobi
            },
            freeze: Freeze::None,
            ..ShapingConfig::new(p0)
        }
    }

    pub fn custom_file(&self) -> Option<PathBuf> {
        self.modulation.file.as_ref().map(|f| self.base_dir.join(f))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let c = ExperimentConfig::from_str("").unwrap();
        assert_eq!(c.noise_params().unwrap().len(), 2);
        assert_eq!(c.modulation.layout, Layout::Qam16);
        assert_eq!(c.bounds_config(), BoundsConfig::default());
    }

    #[test]
    fn sections_override() {
        let c = ExperimentConfig::from_str(
            "gsnr_grid = [0.0, 4.0]\n[noise]\nalpha = [1.5]\nrho = [0.5]\n[modulation]\norder = 4\nlayout = \"qpsk\"\n[shaping]\ni_max = 10\nsurrogate_target = \"upper-bound\"\n",
        )
        .unwrap();
        assert_eq!(c.gsnr_grid, vec![0.0, 4.0]);
        assert_eq!(c.shaping_config(2.0).i_max, 10);
        assert_eq!(c.shaping_config(2.0).target, SurrogateTarget::UpperBound);
        assert_eq!(c.modulation.layout, Layout::Qpsk);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        for bad in [
            "gsnr_grid = []",
            "[noise]\nalpha = [1.2]\nrho = [0.2, 0.3]",
            "[noise]\nalpha = [2.5]\nrho = [0.2]",
            "[modulation]\nlayout = \"qpsk\"",
            "[modulation]\nlayout = \"hexagonal\"",
            "[modulation]\nlayout = \"custom-file\"",
            "[pla]\nunknown = 3",
        ] {
            assert!(ExperimentConfig::from_str(bad).is_err(), "{bad}");
        }
    }
}
