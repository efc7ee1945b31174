//! Experiment configuration: a TOML file with `[model]`, `[sim]`,
//! `[experiment]` and `[output]` tables. Unknown keys are errors.

use std::fmt;
use std::path::Path;

use anyhow::{bail, Context, Result};
use clap::ValueEnum;
use serde::{Deserialize, Serialize};

use mvx_core::builtin::{self, Switching};
use mvx_core::particle::{InitLaw, PositionLaw, RegimeLaw};
use mvx_core::SwitchMode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    MomentDecay,
    Contraction,
    ContractionSwitching,
    Picard,
    Verify,
    Invariant,
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Kind::MomentDecay => "moment-decay",
            Kind::Contraction => "contraction",
            Kind::ContractionSwitching => "contraction-switching",
            Kind::Picard => "picard",
            Kind::Verify => "verify",
            Kind::Invariant => "invariant",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub name: String,
    pub beta: f64,
    /// `default`, `none` or `symmetric`; the default depends on the experiment.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub switching: Option<String>,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            name: "example1".into(),
            beta: 0.5,
            switching: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimSection {
    pub dt: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    pub particles: usize,
    pub seed: u64,
    pub switch_mode: String,
    /// Radius `N` of the coefficient truncation `φ_N`; 0 disables it.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub truncation: Option<f64>,
    pub record_every: f64,
    /// Worker threads; 0 lets rayon decide.
    pub threads: usize,
}

impl Default for SimSection {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            horizon: None,
            particles: 5000,
            seed: 0,
            switch_mode: "thinning".into(),
            truncation: None,
            record_every: 0.05,
            threads: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSection {
    pub kind: Kind,
    /// Picard rounds.
    pub rounds: usize,
    /// Initial position law: `point:x`, `uniform:lo:hi` or `gaussian:mean:sd`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub init: Option<String>,
    /// Initial regime: a 1-based label or `uniform`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub init_regime: Option<String>,
    /// Second initial law for two-law experiments.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub init2: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub init2_regime: Option<String>,
    /// `[t0, t1]` window of the log-linear fit; the whole horizon by default.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fit_window: Option<[f64; 2]>,
    /// Allowed relative excess `δ` over the moment bound.
    pub delta_stat: f64,
    /// Allowed excess of a fitted slope over its theoretical bound.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub slope_tol: Option<f64>,
    /// Required regime agreement at the horizon (contraction with switching).
    pub agreement_min: f64,
    /// Probe count of the `verify` grid on `[-probe_radius, probe_radius]`.
    pub probes: usize,
    pub probe_radius: f64,
    /// Fail the run (nonzero exit) when an embedded check fails.
    pub assert: bool,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            kind: Kind::MomentDecay,
            rounds: 4,
            init: None,
            init_regime: None,
            init2: None,
            init2_regime: None,
            fit_window: None,
            delta_stat: 0.15,
            slope_tol: None,
            agreement_min: 0.99,
            probes: 1000,
            probe_radius: 10.0,
            assert: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: String,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: "mvx-out".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub model: ModelSection,
    pub sim: SimSection,
    pub experiment: ExperimentSection,
    pub output: OutputSection,
}

/// Reads, defaults and validates a config file.
pub fn load_config(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
    let path = path.as_ref();
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let cfg = parse_config(&text).with_context(|| format!("in {}", path.display()))?;
    Ok(cfg)
}

/// Parses TOML text, then fills and validates the result.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let mut cfg: ExperimentConfig = toml::from_str(text)?;
    cfg.resolve()?;
    Ok(cfg)
}

/// Default truncation radius for example2. Explicit Euler on `−x³ − x` is
/// unstable once `dt (3x² + 1) > 2`; coefficients read `φ_20(x)` so that the
/// rare far excursions of regime 2 cannot trigger it.
pub const EXAMPLE2_TRUNCATION: f64 = 20.0;

fn default_horizon(kind: Kind, model: &str) -> f64 {
    match kind {
        Kind::MomentDecay if model == "example1" => 4.0,
        Kind::Picard => 0.5,
        Kind::Invariant => 5.0,
        _ => 3.0,
    }
}

fn default_switching(kind: Kind) -> Switching {
    match kind {
        Kind::Contraction => Switching::Frozen,
        Kind::ContractionSwitching => Switching::Symmetric,
        _ => Switching::Default,
    }
}

fn default_inits(kind: Kind) -> (&'static str, &'static str, &'static str, &'static str) {
    match kind {
        Kind::Contraction => ("point:2", "1", "point:-2", "1"),
        Kind::ContractionSwitching => ("uniform:0.5:1.5", "1", "uniform:-1.5:-0.5", "2"),
        Kind::Invariant => ("uniform:-1:1", "1", "uniform:1:3", "2"),
        _ => ("uniform:-1:1", "uniform", "uniform:-1:1", "uniform"),
    }
}

impl ExperimentConfig {
    /// Fills every kind-dependent default, then validates.
    pub fn resolve(&mut self) -> Result<()> {
        let kind = self.experiment.kind;
        if !builtin::NAMES.contains(&self.model.name.as_str()) {
            bail!(
                "model.name: unknown model `{}` (builtins: {})",
                self.model.name,
                builtin::NAMES.join(", ")
            );
        }
        self.sim
            .horizon
            .get_or_insert(default_horizon(kind, &self.model.name));
        if self.model.name == "example2" {
            self.sim.truncation.get_or_insert(EXAMPLE2_TRUNCATION);
        }
        self.model
            .switching
            .get_or_insert_with(|| default_switching(kind).to_string());
        let (i1, r1, i2, r2) = default_inits(kind);
        self.experiment.init.get_or_insert_with(|| i1.into());
        self.experiment.init_regime.get_or_insert_with(|| r1.into());
        self.experiment.init2.get_or_insert_with(|| i2.into());
        self.experiment
            .init2_regime
            .get_or_insert_with(|| r2.into());
        let horizon = self.horizon();
        self.experiment.fit_window.get_or_insert([0.0, horizon]);
        self.experiment.slope_tol.get_or_insert(match kind {
            Kind::ContractionSwitching => 0.1,
            _ => 0.15,
        });
        self.validate()
    }

    pub fn validate(&self) -> Result<()> {
        let kind = self.experiment.kind;
        let beta = self.model.beta;
        if !beta.is_finite() {
            bail!("model.beta: must be finite, got {beta}");
        }
        if self.model.name == "example1"
            && matches!(kind, Kind::Contraction | Kind::ContractionSwitching)
            && !(beta > -1.0 && beta < 1.0)
        {
            bail!("model.beta: contraction experiments on example1 require beta in (-1, 1), got {beta}");
        }
        self.switching()?;
        if !(self.sim.dt > 0.0 && self.sim.dt.is_finite()) {
            bail!("sim.dt: must be positive, got {}", self.sim.dt);
        }
        let horizon = self.horizon();
        if !(horizon > 0.0 && horizon.is_finite()) {
            bail!("sim.horizon: must be positive, got {horizon}");
        }
        if self.sim.particles == 0 {
            bail!("sim.particles: must be at least 1");
        }
        self.switch_mode()?;
        if let Some(r) = self.sim.truncation {
            if !(r >= 0.0) {
                bail!("sim.truncation: radius must be >= 0 (0 disables truncation), got {r}");
            }
        }
        if !(self.sim.record_every > 0.0) {
            bail!(
                "sim.record_every: must be positive, got {}",
                self.sim.record_every
            );
        }
        if kind == Kind::Picard && self.experiment.rounds == 0 {
            bail!("experiment.rounds: must be at least 1");
        }
        self.init_laws()?;
        if let Some([a, b]) = self.experiment.fit_window {
            if !(a < b) {
                bail!("experiment.fit_window: needs t0 < t1, got [{a}, {b}]");
            }
        }
        if !(self.experiment.delta_stat >= 0.0) {
            bail!("experiment.delta_stat: must be >= 0");
        }
        if !(0.0..=1.0).contains(&self.experiment.agreement_min) {
            bail!("experiment.agreement_min: must lie in [0, 1]");
        }
        if self.experiment.probes < 2 || !(self.experiment.probe_radius > 0.0) {
            bail!("experiment.probes / probe_radius: need at least 2 probes on a positive radius");
        }
        Ok(())
    }

    pub fn horizon(&self) -> f64 {
        self.sim
            .horizon
            .unwrap_or_else(|| default_horizon(self.experiment.kind, &self.model.name))
    }

    pub fn switching(&self) -> Result<Switching> {
        match &self.model.switching {
            Some(s) => s
                .parse()
                .map_err(|e| anyhow::anyhow!("model.switching: {e}")),
            None => Ok(default_switching(self.experiment.kind)),
        }
    }

    pub fn switch_mode(&self) -> Result<SwitchMode> {
        self.sim
            .switch_mode
            .parse()
            .map_err(|e| anyhow::anyhow!("sim.switch_mode: {e}"))
    }

    /// First and second initial laws.
    pub fn init_laws(&self) -> Result<(InitLaw, InitLaw)> {
        let (i1, r1, i2, r2) = default_inits(self.experiment.kind);
        let e = &self.experiment;
        let first = init_law(
            e.init.as_deref().unwrap_or(i1),
            e.init_regime.as_deref().unwrap_or(r1),
            "experiment.init",
        )?;
        let second = init_law(
            e.init2.as_deref().unwrap_or(i2),
            e.init2_regime.as_deref().unwrap_or(r2),
            "experiment.init2",
        )?;
        Ok((first, second))
    }

    /// The config as TOML, with every default filled in.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

/// Parses `point:x`, `uniform:lo:hi` or `gaussian:mean:sd` (on the line) and a
/// regime label (`1`, `2`, ... or `uniform`).
pub fn init_law(position: &str, regime: &str, key: &str) -> Result<InitLaw> {
    let parts: Vec<&str> = position.split(':').collect();
    let nums = parts[1..]
        .iter()
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<Vec<f64>, _>>()
        .with_context(|| format!("{key}: bad number in `{position}`"))?;
    let position = match (parts[0], nums.as_slice()) {
        ("point", [x]) => PositionLaw::Point(vec![*x]),
        ("uniform", [lo, hi]) => PositionLaw::UniformBox {
            lo: vec![*lo],
            hi: vec![*hi],
        },
        ("gaussian", [mean, sd]) => PositionLaw::Gaussian {
            mean: vec![*mean],
            sd: *sd,
        },
        _ => bail!("{key}: expected point:x, uniform:lo:hi or gaussian:mean:sd, got `{position}`"),
    };
    let regime_key = format!("{key}_regime");
    let regime = match regime {
        "uniform" => RegimeLaw::Uniform(2),
        label => {
            let i: usize = label.parse().with_context(|| {
                format!("{regime_key}: expected a regime label or `uniform`, got `{label}`")
            })?;
            if !(1..=2).contains(&i) {
                bail!("{regime_key}: builtin models have regimes 1 and 2, got {i}");
            }
            RegimeLaw::Fixed(i - 1)
        }
    };
    InitLaw::new(position, regime).map_err(|e| anyhow::anyhow!("{key}: {e}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = parse_config("[model]\nname = \"example1\"\nbeta = 0.5\n").unwrap();
        assert_eq!(cfg.sim.dt, 1e-3);
        assert_eq!(cfg.sim.particles, 5000);
        assert_eq!(cfg.sim.seed, 0);
        assert_eq!(cfg.horizon(), 4.0);
        assert_eq!(cfg.switching().unwrap(), Switching::Default);
    }

    #[test]
    fn beta_out_of_range_for_contraction() {
        let err = parse_config("[model]\nbeta = 1.2\n[experiment]\nkind = \"contraction\"\n")
            .unwrap_err();
        assert!(format!("{err:#}").contains("beta in (-1, 1)"), "{err:#}");
        assert!(
            parse_config("[model]\nbeta = 1.2\n[experiment]\nkind = \"moment-decay\"\n").is_ok()
        );
    }

    #[test]
    fn unknown_key_is_named() {
        let err = parse_config("[sim]\ndtt = 0.1\n").unwrap_err();
        let msg = format!("{err:#}");
        assert!(msg.contains("dtt"), "{msg}");
        assert!(msg.contains("line 2"), "{msg}");
    }

    #[test]
    fn echo_round_trips() {
        let cfg = parse_config(
            "[experiment]\nkind = \"contraction-switching\"\n[model]\nname = \"example2\"\n",
        )
        .unwrap();
        let again = parse_config(&cfg.to_toml()).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(again.switching().unwrap(), Switching::Symmetric);
    }

    #[test]
    fn init_strings() {
        assert_eq!(
            init_law("point:2", "1", "k").unwrap(),
            InitLaw::point(&[2.0], 0)
        );
        assert!(init_law("uniform:1", "1", "k").is_err());
        assert!(init_law("point:0", "3", "k").is_err());
        assert!(matches!(
            init_law("gaussian:0:1", "uniform", "k").unwrap().regime,
            RegimeLaw::Uniform(2)
        ));
    }
}
