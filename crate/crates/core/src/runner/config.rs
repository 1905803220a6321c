use crate::count_models::Flavor;
use crate::error::{Error, Result};
use crate::eval::ModelKind;
use crate::synth::{CorrelationKind, Transform};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    SettingOne,
    SettingOneDeflation,
    SettingTwo,
    SettingThree,
    RealData,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::SettingOne => "setting_one",
            Experiment::SettingOneDeflation => "setting_one_deflation",
            Experiment::SettingTwo => "setting_two",
            Experiment::SettingThree => "setting_three",
            Experiment::RealData => "real_data",
        }
    }

    pub(crate) fn uses_aic(self) -> bool {
        matches!(self, Experiment::SettingOne | Experiment::SettingOneDeflation)
    }
}

/// Bundled synthetic tables used when no count file is supplied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Standin {
    Qmp,
    Scrna,
}

/// Where real-data and Setting Three marginals come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceConfig {
    /// CSV count table (header row, one observation per row).
    pub path: Option<PathBuf>,
    /// Stand-in used when `path` is absent.
    #[serde(default = "default_standin")]
    pub standin: Standin,
    #[serde(default = "default_standin_seed")]
    pub standin_seed: u64,
    /// Power applied before rounding, e.g. 0.851 for the QMP protocol.
    pub rescale: Option<f64>,
}

fn default_standin() -> Standin {
    Standin::Qmp
}

fn default_standin_seed() -> u64 {
    2017
}

impl Default for SourceConfig {
    fn default() -> Self {
        Self { path: None, standin: default_standin(), standin_seed: default_standin_seed(), rescale: None }
    }
}

/// Parameter grids. Absent keys take the experiment's defaults; an explicitly empty list is an
/// error.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    /// Population flavor (Setting One).
    pub flavor: Option<Vec<Flavor>>,
    /// Target zero proportion (Setting One calibration, Setting Three column selection).
    pub zero_level: Option<Vec<f64>>,
    /// Hurdle zero probability (zero-deflation sweep).
    pub pi_h: Option<Vec<f64>>,
    pub beta1: Option<Vec<f64>>,
    pub gamma0: Option<Vec<f64>>,
    pub gamma1: Option<Vec<f64>>,
    pub rho: Option<Vec<f64>>,
    pub correlation: Option<Vec<CorrelationKind>>,
    pub transform: Option<Vec<Transform>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    #[serde(default)]
    pub seed: u64,
    /// Replicated datasets per grid point; random splits for real data.
    #[serde(default = "default_replications")]
    pub replications: usize,
    /// Cross-validation folds. Defaults to 5 (3 for real data).
    pub folds: Option<usize>,
    /// Wasserstein order.
    #[serde(default = "default_order")]
    pub order: u32,
    /// Sample size override.
    pub n: Option<usize>,
    /// Variables per dataset (Settings Two and Three).
    #[serde(default = "default_p")]
    pub p: usize,
    /// Models compared. Defaults to TLNPN and HNB, plus HNB_COV in Setting Two.
    pub models: Option<Vec<ModelKind>>,
    #[serde(default)]
    pub keep_residuals: bool,
    /// Output directory; the CLI `--out` flag takes precedence.
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub grid: Grid,
    #[serde(default)]
    pub source: SourceConfig,
}

fn default_replications() -> usize {
    10
}

fn default_order() -> u32 {
    1
}

fn default_p() -> usize {
    5
}

/// One point of the expanded grid. Only the coordinates relevant to the experiment are set.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub flavor: Option<Flavor>,
    pub zero_level: Option<f64>,
    pub pi_h: Option<f64>,
    pub beta1: Option<f64>,
    pub gamma0: Option<f64>,
    pub gamma1: Option<f64>,
    pub rho: Option<f64>,
    pub correlation: Option<CorrelationKind>,
    pub transform: Option<Transform>,
}

impl GridPoint {
    /// Compact `key=value` label, stable across runs.
    pub fn label(&self) -> String {
        let mut parts = Vec::new();
        if let Some(f) = self.flavor {
            parts.push(format!("flavor={f:?}"));
        }
        let mut num = |k: &str, v: Option<f64>| {
            if let Some(v) = v {
                parts.push(format!("{k}={v}"));
            }
        };
        num("zero_level", self.zero_level);
        num("pi_h", self.pi_h);
        num("beta1", self.beta1);
        num("gamma0", self.gamma0);
        num("gamma1", self.gamma1);
        num("rho", self.rho);
        if let Some(c) = self.correlation {
            parts.push(format!("corr={c:?}"));
        }
        if let Some(t) = self.transform {
            parts.push(format!("transform={}", if t == Transform::Sqrt { "sqrt" } else { "none" }));
        }
        if parts.is_empty() {
            "all".into()
        } else {
            parts.join(";")
        }
    }
}

fn pick<T: Clone>(name: &str, given: &Option<Vec<T>>, default: &[T]) -> Result<Vec<T>> {
    match given {
        Some(v) if v.is_empty() => Err(Error::Config(format!("grid key `{name}` is empty"))),
        Some(v) => Ok(v.clone()),
        None => Ok(default.to_vec()),
    }
}

fn check_all(name: &str, values: &[f64], ok: impl Fn(f64) -> bool, what: &str) -> Result<()> {
    match values.iter().find(|&&v| !ok(v)) {
        Some(v) => Err(Error::Config(format!("grid `{name}` value {v} must be {what}"))),
        None => Ok(()),
    }
}

fn unit_open(v: f64) -> bool {
    v > 0.0 && v < 1.0
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    /// Defaults for an experiment with no grid overrides.
    pub fn new(experiment: Experiment) -> Self {
        Self {
            experiment,
            seed: 0,
            replications: default_replications(),
            folds: None,
            order: default_order(),
            n: None,
            p: default_p(),
            models: None,
            keep_residuals: false,
            output: None,
            grid: Grid::default(),
            source: SourceConfig::default(),
        }
    }

    pub fn folds(&self) -> usize {
        self.folds.unwrap_or(if self.experiment == Experiment::RealData { 3 } else { 5 })
    }

    pub fn models(&self) -> Vec<ModelKind> {
        match &self.models {
            Some(m) => m.clone(),
            None if self.experiment == Experiment::SettingTwo => vec![ModelKind::Tlnpn, ModelKind::Hnb, ModelKind::HnbCovariates],
            None => vec![ModelKind::Tlnpn, ModelKind::Hnb],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::Config("replications must be at least 1".into()));
        }
        if !matches!(self.order, 1 | 2) {
            return Err(Error::Config(format!("order must be 1 or 2, got {}", self.order)));
        }
        if self.folds() < 2 {
            return Err(Error::Config("folds must be at least 2".into()));
        }
        if self.p < 2 && matches!(self.experiment, Experiment::SettingTwo | Experiment::SettingThree) {
            return Err(Error::Config("p must be at least 2".into()));
        }
        if let Some(n) = self.n {
            if n < 2 * self.folds() {
                return Err(Error::Config(format!("n = {n} is too small for {} folds", self.folds())));
            }
        }
        if let Some(e) = self.source.rescale {
            if !(e > 0.0 && e <= 1.0) {
                return Err(Error::Config(format!("rescale exponent {e} must lie in (0, 1]")));
            }
        }
        if self.experiment.uses_aic() {
            if self.models.is_some() {
                return Err(Error::Config(format!("models does not apply to {}; it always compares ZINB and HNB", self.experiment.name())));
            }
        } else {
            let models = self.models();
            if models.is_empty() {
                return Err(Error::Config("models list is empty".into()));
            }
            if !models.contains(&ModelKind::Tlnpn) {
                return Err(Error::Config("TLNPN must be among the models; comparisons are against it".into()));
            }
            if models.contains(&ModelKind::HnbCovariates) && self.experiment != Experiment::SettingTwo {
                return Err(Error::Config("HNB_COV needs covariates, which only Setting Two has".into()));
            }
        }
        self.points().map(|_| ())
    }

    /// Expand the grid for this experiment, in a fixed nested order.
    pub fn points(&self) -> Result<Vec<GridPoint>> {
        let g = &self.grid;
        let mut out = Vec::new();
        match self.experiment {
            Experiment::SettingOne => {
                let flavors = pick("flavor", &g.flavor, &[Flavor::ZINB, Flavor::HNB])?;
                if flavors.contains(&Flavor::NB) {
                    return Err(Error::Config("Setting One populations are ZINB or HNB".into()));
                }
                let levels = pick("zero_level", &g.zero_level, &[0.2, 0.4, 0.6])?;
                check_all("zero_level", &levels, unit_open, "in (0, 1)")?;
                for &flavor in &flavors {
                    for &z in &levels {
                        out.push(GridPoint { flavor: Some(flavor), zero_level: Some(z), ..Default::default() });
                    }
                }
            }
            Experiment::SettingOneDeflation => {
                let grid = pick("pi_h", &g.pi_h, &[0.08, 0.1, 0.15, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7])?;
                check_all("pi_h", &grid, unit_open, "in (0, 1)")?;
                out.extend(grid.into_iter().map(|p| GridPoint { pi_h: Some(p), ..Default::default() }));
            }
            Experiment::SettingTwo => {
                let beta1 = pick("beta1", &g.beta1, &[0.0, 1.0, 2.0])?;
                let gamma0 = pick("gamma0", &g.gamma0, &[(1.0f64 / 20.0).ln(), (1.0f64 / 9.0).ln(), (1.0f64 / 3.0).ln()])?;
                let gamma1 = pick("gamma1", &g.gamma1, &[-0.8, 0.0, 0.8])?;
                let rho = pick("rho", &g.rho, &[0.01, 0.3, 0.7, 0.9])?;
                let corr = pick("correlation", &g.correlation, &[CorrelationKind::AR, CorrelationKind::GD])?;
                for v in [&beta1, &gamma0, &gamma1] {
                    check_all("beta1/gamma0/gamma1", v, |x| x.is_finite() && x.abs() < 50.0, "finite with |value| < 50")?;
                }
                for &c in &corr {
                    check_rho(c, &rho)?;
                    for &r in &rho {
                        for &b in &beta1 {
                            for &g0 in &gamma0 {
                                for &g1 in &gamma1 {
                                    out.push(GridPoint {
                                        beta1: Some(b),
                                        gamma0: Some(g0),
                                        gamma1: Some(g1),
                                        rho: Some(r),
                                        correlation: Some(c),
                                        ..Default::default()
                                    });
                                }
                            }
                        }
                    }
                }
            }
            Experiment::SettingThree => {
                let levels = pick("zero_level", &g.zero_level, &[0.1, 0.3, 0.5, 0.7])?;
                check_all("zero_level", &levels, |v| (0.0..1.0).contains(&v), "in [0, 1)")?;
                let rho = pick("rho", &g.rho, &[0.05, 0.3, 0.7, 0.999999])?;
                let corr = pick("correlation", &g.correlation, &[CorrelationKind::AR, CorrelationKind::GD])?;
                let transform = pick("transform", &g.transform, &[Transform::None, Transform::Sqrt])?;
                for &t in &transform {
                    for &c in &corr {
                        check_rho(c, &rho)?;
                        for &r in &rho {
                            for &z in &levels {
                                out.push(GridPoint {
                                    zero_level: Some(z),
                                    rho: Some(r),
                                    correlation: Some(c),
                                    transform: Some(t),
                                    ..Default::default()
                                });
                            }
                        }
                    }
                }
            }
            Experiment::RealData => out.push(GridPoint::default()),
        }
        Ok(out)
    }

    /// SHA-256 of the canonical JSON form; any change to a setting changes it.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }
}

fn check_rho(kind: CorrelationKind, rho: &[f64]) -> Result<()> {
    match kind {
        CorrelationKind::AR => check_all("rho", rho, |r| r.abs() < 1.0, "in (-1, 1) for AR"),
        CorrelationKind::GD => check_all("rho", rho, unit_open, "in (0, 1) for GD"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_minimal_config() {
        let c = ExperimentConfig::from_toml_str("experiment = \"setting_two\"\nseed = 3\n[grid]\nbeta1 = [0.0, 2.0]\nrho = [0.9]\ncorrelation = [\"AR\"]\ngamma0 = [-2.0]\ngamma1 = [0.0]\n").unwrap();
        assert_eq!(c.points().unwrap().len(), 2);
        assert_eq!(c.folds(), 5);
        assert_eq!(c.order, 1);
        assert_eq!(c.models().len(), 3);
    }

    #[test]
    fn empty_grid_is_rejected() {
        let e = ExperimentConfig::from_toml_str("experiment = \"setting_two\"\n[grid]\nbeta1 = []\n").unwrap_err();
        assert!(e.to_string().contains("beta1"), "{e}");
    }

    #[test]
    fn out_of_range_values_are_rejected() {
        assert!(ExperimentConfig::from_toml_str("experiment = \"setting_one\"\n[grid]\nzero_level = [1.2]\n").is_err());
        assert!(ExperimentConfig::from_toml_str("experiment = \"setting_two\"\n[grid]\nrho = [1.0]\n").is_err());
        assert!(ExperimentConfig::from_toml_str("experiment = \"setting_two\"\norder = 3\n").is_err());
        assert!(ExperimentConfig::from_toml_str("experiment = \"real_data\"\nmodels = [\"HNB_COV\", \"TLNPN\"]\n").is_err());
        assert!(ExperimentConfig::from_toml_str("experiment = \"real_data\"\nunknown = 1\n").is_err());
    }

    #[test]
    fn default_grids_have_paper_sizes() {
        assert_eq!(ExperimentConfig::new(Experiment::SettingOne).points().unwrap().len(), 6);
        assert_eq!(ExperimentConfig::new(Experiment::SettingTwo).points().unwrap().len(), 3 * 3 * 3 * 4 * 2);
        assert_eq!(ExperimentConfig::new(Experiment::RealData).folds(), 3);
    }

    #[test]
    fn fingerprint_tracks_content() {
        let a = ExperimentConfig::new(Experiment::SettingTwo);
        let mut b = a.clone();
        assert_eq!(a.fingerprint(), b.fingerprint());
        b.seed = 1;
        assert_ne!(a.fingerprint(), b.fingerprint());
        assert_eq!(a.fingerprint().len(), 64);
    }

    #[test]
    fn labels_are_stable() {
        let p = GridPoint { beta1: Some(2.0), rho: Some(0.9), correlation: Some(CorrelationKind::AR), ..Default::default() };
        assert_eq!(p.label(), "beta1=2;rho=0.9;corr=AR");
        assert_eq!(GridPoint::default().label(), "all");
    }
}
