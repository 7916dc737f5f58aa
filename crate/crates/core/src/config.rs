//! Run configuration: parsing, default materialization and validation.

use std::f64::consts::{FRAC_PI_4, PI};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize};

use crate::bits::{check_qubits, BitString, MAX_QUBITS};
use crate::cost_stein::ScoreSpec;
use crate::data::{TargetSpec, DEFAULT_FIDELITY};
use crate::error::{config_err, Error, Result};
use crate::kernels::KernelSpec;
use crate::model::{random_hard_init, random_uniform_init, AngleFamily, CircuitParams, ParamIndex};
use crate::rng::{derive_seed, rng_from_seed, tags};
use crate::train::{AdamConfig, CostSpec, SamplingSpec};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    #[default]
    Train,
    Compile,
    Bench,
    OracleCheck,
}

/// Random initialization of couplings and local fields.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitSpec {
    Uniform { low: f64, high: f64 },
    Hard { family: AngleFamily },
}

impl Default for InitSpec {
    fn default() -> Self {
        InitSpec::Uniform { low: 0.0, high: PI }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Connectivity {
    #[default]
    Full,
    Edges(Vec<(usize, usize)>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSpec {
    pub connectivity: Connectivity,
    pub init: InitSpec,
    /// X-axis angle of the final layer.
    pub mixer_angle: f64,
    pub train_mixer: bool,
    /// Keep updated angles on the hard-init family's lattice.
    pub snap_to_family: bool,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            connectivity: Connectivity::Full,
            init: InitSpec::default(),
            mixer_angle: FRAC_PI_4,
            train_mixer: false,
            snap_to_family: false,
        }
    }
}

impl ModelSpec {
    /// Hardness family used for snapping, if enabled.
    pub fn snap_family(&self) -> Option<AngleFamily> {
        match (self.snap_to_family, self.init) {
            (true, InitSpec::Hard { family }) => Some(family),
            _ => None,
        }
    }

    /// Initial circuit for `n` qubits drawn from `seed`.
    pub fn initial_params(&self, n: usize, seed: u64) -> Result<CircuitParams> {
        let mut params = match self.init {
            InitSpec::Uniform { low, high } => random_uniform_init(n, low, high, seed)?,
            InitSpec::Hard { family } => random_hard_init(n, family, seed)?,
        };
        for k in 0..n {
            params.set(ParamIndex::Gamma(k), self.mixer_angle)?;
            params.set_trainable(ParamIndex::Gamma(k), self.train_mixer)?;
        }
        if let Connectivity::Edges(edges) = &self.connectivity {
            params.restrict_couplings(edges)?;
        }
        Ok(params)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    /// Sample the multi-mode target distribution.
    #[default]
    Target,
    /// Read samples from a dataset file; the target is their empirical distribution.
    File { path: PathBuf },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSpec {
    pub source: DataSource,
    pub modes: Option<Vec<BitString>>,
    pub mode_count: Option<usize>,
    pub fidelity: f64,
    pub samples: usize,
    pub train_fraction: f64,
}

impl Default for DataSpec {
    fn default() -> Self {
        Self {
            source: DataSource::Target,
            modes: None,
            mode_count: None,
            fidelity: DEFAULT_FIDELITY,
            samples: 500,
            train_fraction: 0.8,
        }
    }
}

impl DataSpec {
    /// Size of the training split out of `total` samples.
    pub fn train_size(&self, total: usize) -> usize {
        ((total as f64 * self.train_fraction).round() as usize)
            .clamp(1, total.saturating_sub(1).max(1))
    }

    pub fn target_spec(&self, n: usize) -> Result<TargetSpec> {
        let modes = self
            .modes
            .clone()
            .ok_or_else(|| config_err("data.modes", "modes were not materialized"))?;
        TargetSpec::new(n, modes, self.fidelity)
    }
}

/// Explicit IQP target angles for compilation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IqpAngles {
    pub couplings: Vec<Vec<f64>>,
    pub local: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompileSpec {
    pub target_family: AngleFamily,
    pub target: Option<IqpAngles>,
}

impl Default for CompileSpec {
    fn default() -> Self {
        Self {
            target_family: AngleFamily::Grid8,
            target: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSpec {
    pub pairs: usize,
    pub epsilon: f64,
    pub kernel: KernelSpec,
}

impl Default for BenchSpec {
    fn default() -> Self {
        Self {
            pairs: 100,
            epsilon: 0.1,
            kernel: KernelSpec::default(),
        }
    }
}

/// A complete experiment description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub command: Command,
    pub n: usize,
    #[serde(deserialize_with = "cost_by_name_or_spec")]
    pub cost: CostSpec,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub threads: Option<usize>,
    #[serde(default)]
    pub model: ModelSpec,
    #[serde(default)]
    pub data: DataSpec,
    #[serde(default)]
    pub sampling: SamplingSpec,
    #[serde(default)]
    pub optimizer: AdamConfig,
    #[serde(default)]
    pub compile: CompileSpec,
    #[serde(default)]
    pub bench: BenchSpec,
}

fn default_epochs() -> usize {
    100
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn cost_by_name_or_spec<'de, D: Deserializer<'de>>(
    d: D,
) -> std::result::Result<CostSpec, D::Error> {
    let value = serde_json::Value::deserialize(d)?;
    match value {
        serde_json::Value::String(name) => {
            CostSpec::from_name(&name).map_err(serde::de::Error::custom)
        }
        other => CostSpec::deserialize(other).map_err(serde::de::Error::custom),
    }
}

impl RunConfig {
    /// Config with defaults for everything except `n` and `cost`.
    pub fn new(n: usize, cost: CostSpec) -> Self {
        Self {
            command: Command::Train,
            n,
            cost,
            seed: 0,
            epochs: default_epochs(),
            output_dir: default_output_dir(),
            threads: None,
            model: ModelSpec::default(),
            data: DataSpec::default(),
            sampling: SamplingSpec::default(),
            optimizer: AdamConfig::default(),
            compile: CompileSpec::default(),
            bench: BenchSpec::default(),
        }
    }

    /// Parse JSON text, then materialize and validate.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let mut cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            let msg = inner.to_string();
            let field = missing_field(&msg)
                .map(|f| join_path(&path, f))
                .unwrap_or(path);
            config_err(&field, msg)
        })?;
        cfg.materialize()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Fill every seed- and size-dependent default, then validate.
    pub fn materialize(&mut self) -> Result<()> {
        check_qubits(self.n).map_err(|e| config_err("n", e.to_string()))?;
        self.cost.materialize(self.n);
        if self.data.source == DataSource::Target && self.data.modes.is_none() {
            let count = self
                .data
                .mode_count
                .unwrap_or(TargetSpec::default_mode_count(self.n));
            let spec = TargetSpec::random(
                self.n,
                count,
                self.data.fidelity,
                derive_seed(self.seed, &[tags::TARGET]),
            )
            .map_err(|e| config_err("data.mode_count", e.to_string()))?;
            self.data.modes = Some(spec.modes);
        }
        if let Some(modes) = &self.data.modes {
            self.data.mode_count = Some(modes.len());
        }
        if self.command == Command::Compile && self.compile.target.is_none() {
            self.compile.target = Some(random_iqp_angles(
                self.n,
                self.compile.target_family,
                self.seed,
            )?);
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n;
        if n == 0 || n > MAX_QUBITS {
            return Err(config_err(
                "n",
                format!("must lie in 1..={MAX_QUBITS}, got {n}"),
            ));
        }
        self.cost
            .validate()
            .map_err(|e| config_err("cost", e.to_string()))?;
        if let (
            CostSpec::Stein {
                score: ScoreSpec::Exact,
                ..
            },
            DataSource::File { .. },
        ) = (&self.cost, &self.data.source)
        {
            return Err(config_err(
                "cost.score",
                "exact score needs a known target, but data comes from a file",
            ));
        }
        self.optimizer
            .validate()
            .map_err(|e| config_err("optimizer", e.to_string()))?;
        self.validate_model()?;
        self.validate_data()?;
        self.validate_sampling()?;
        if self.command == Command::Compile {
            self.compile
                .target_family
                .validate()
                .map_err(|e| config_err("compile.target_family", e.to_string()))?;
            if self.model.train_mixer {
                return Err(config_err(
                    "model.train_mixer",
                    "the mixer stays frozen during compilation",
                ));
            }
            if let Some(t) = &self.compile.target {
                crate::model::iqp_params(t.couplings.clone(), t.local.clone())
                    .and_then(|p| {
                        if p.n() == n {
                            Ok(())
                        } else {
                            Err(Error::Shape("qubit count".into()))
                        }
                    })
                    .map_err(|e| config_err("compile.target", e.to_string()))?;
            }
        }
        if self.bench.pairs == 0 || !(self.bench.epsilon > 0.0) {
            return Err(config_err(
                "bench",
                "pairs must be positive and epsilon > 0",
            ));
        }
        self.bench
            .kernel
            .validate()
            .map_err(|e| config_err("bench.kernel", e.to_string()))?;
        if self.threads == Some(0) {
            return Err(config_err("threads", "must be at least 1"));
        }
        Ok(())
    }

    fn validate_model(&self) -> Result<()> {
        let m = &self.model;
        match m.init {
            InitSpec::Uniform { low, high }
                if !(low < high) || !low.is_finite() || !high.is_finite() =>
            {
                return Err(config_err(
                    "model.init",
                    format!("empty range [{low}, {high})"),
                ));
            }
            InitSpec::Hard { family } => family
                .validate()
                .map_err(|e| config_err("model.init", e.to_string()))?,
            _ => {}
        }
        if m.snap_to_family && !matches!(m.init, InitSpec::Hard { .. }) {
            return Err(config_err(
                "model.snap_to_family",
                "snapping needs a hard-angle init family",
            ));
        }
        if m.snap_to_family && m.train_mixer {
            return Err(config_err(
                "model.snap_to_family",
                "cannot snap a trainable mixer",
            ));
        }
        if !m.mixer_angle.is_finite() {
            return Err(config_err("model.mixer_angle", "must be finite"));
        }
        if let Connectivity::Edges(edges) = &m.connectivity {
            for &(i, j) in edges {
                if i == j || i >= self.n || j >= self.n {
                    return Err(config_err(
                        "model.connectivity",
                        format!("bad edge ({i},{j})"),
                    ));
                }
            }
        }
        Ok(())
    }

    fn validate_data(&self) -> Result<()> {
        let d = &self.data;
        if !(d.train_fraction > 0.0 && d.train_fraction < 1.0) {
            return Err(config_err(
                "data.train_fraction",
                "must lie strictly between 0 and 1",
            ));
        }
        if d.source == DataSource::Target {
            if d.samples < 2 {
                return Err(config_err(
                    "data.samples",
                    "need at least 2 samples to split",
                ));
            }
            self.data
                .target_spec(self.n)
                .map_err(|e| config_err("data.modes", e.to_string()))?;
        }
        Ok(())
    }

    fn validate_sampling(&self) -> Result<()> {
        let s = &self.sampling;
        if s.model_samples == 0 || s.batch_size == 0 || s.shift_samples == 0 {
            return Err(config_err("sampling", "sample counts must be positive"));
        }
        if s.batch_size > s.model_samples {
            return Err(config_err(
                "sampling.batch_size",
                "exceeds sampling.model_samples",
            ));
        }
        Ok(())
    }
}

fn missing_field(msg: &str) -> Option<&str> {
    msg.strip_prefix("missing field `")?.split('`').next()
}

fn join_path(path: &str, field: &str) -> String {
    if path == "." || path.is_empty() {
        field.to_string()
    } else {
        format!("{path}.{field}")
    }
}

/// Random IQP coupling and local angles drawn from `family`.
pub fn random_iqp_angles(n: usize, family: AngleFamily, seed: u64) -> Result<IqpAngles> {
    family.validate()?;
    let mut rng = rng_from_seed(derive_seed(seed, &[tags::COMPILE_TARGET]));
    let mut couplings = vec![vec![0.0; n]; n];
    for i in 0..n {
        for k in (i + 1)..n {
            let v = family.draw(&mut rng);
            couplings[i][k] = v;
            couplings[k][i] = v;
        }
    }
    let local = (0..n).map(|_| family.draw(&mut rng)).collect();
    Ok(IqpAngles { couplings, local })
}

/// Read, materialize and validate a config file.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)?;
    RunConfig::from_json(&text)
}

pub fn save_config(path: &Path, cfg: &RunConfig) -> Result<()> {
    std::fs::write(path, cfg.to_json()? + "\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost_sinkhorn::DEFAULT_EPSILON;

    #[test]
    fn minimal_config_fills_defaults() {
        let cfg = RunConfig::from_json(r#"{"n": 3, "cost": "mmd"}"#).unwrap();
        assert_eq!(
            cfg.cost,
            CostSpec::Mmd {
                kernel: KernelSpec::Gaussian {
                    bandwidths: vec![0.25, 10.0, 1000.0]
                }
            }
        );
        assert_eq!(
            (
                cfg.optimizer.beta1,
                cfg.optimizer.beta2,
                cfg.optimizer.epsilon
            ),
            (0.9, 0.999, 1e-8)
        );
        assert_eq!(cfg.data.mode_count, Some(4));
        assert_eq!(cfg.data.modes.as_ref().unwrap().len(), 4);

        let cfg = RunConfig::from_json(r#"{"n": 2, "cost": "sinkhorn"}"#).unwrap();
        match cfg.cost {
            CostSpec::Sinkhorn { epsilon, .. } => assert_eq!(epsilon, DEFAULT_EPSILON),
            other => panic!("{other:?}"),
        }
        let text = cfg.to_json().unwrap();
        for key in [
            "\"epsilon\": 0.1",
            "\"beta1\": 0.9",
            "\"modes\"",
            "\"seed\": 0",
            "\"model_samples\": 500",
        ] {
            assert!(text.contains(key), "{key} missing from echo");
        }
    }

    #[test]
    fn spectral_eigenvector_default_materialized() {
        let cfg = RunConfig::from_json(
            r#"{"n": 4, "cost": {"kind": "stein", "score": {"method": "spectral"}}}"#,
        )
        .unwrap();
        match cfg.cost {
            CostSpec::Stein {
                score: ScoreSpec::Spectral { eigenvectors },
                ..
            } => assert_eq!(eigenvectors, Some(6)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn missing_fields_are_named() {
        match RunConfig::from_json(r#"{"cost": "mmd"}"#) {
            Err(Error::Config { field, .. }) => assert_eq!(field, "n"),
            other => panic!("{other:?}"),
        }
        match RunConfig::from_json(r#"{"n": 2}"#) {
            Err(Error::Config { field, .. }) => assert_eq!(field, "cost"),
            other => panic!("{other:?}"),
        }
        match RunConfig::from_json(
            r#"{"n": 2, "cost": "mmd", "optimizer": {"learning_rate": "x"}}"#,
        ) {
            Err(Error::Config { field, .. }) => assert_eq!(field, "optimizer.learning_rate"),
            other => panic!("{other:?}"),
        }
        match RunConfig::from_json(r#"{"n": 2, "cost": "nope"}"#) {
            Err(Error::Config { field, .. }) => assert_eq!(field, "cost"),
            other => panic!("{other:?}"),
        }
        match RunConfig::from_json(r#"{"n": 30, "cost": "mmd"}"#) {
            Err(Error::Config { field, .. }) => assert_eq!(field, "n"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn conflicts_reported() {
        let bad = [
            (
                r#"{"n": 2, "cost": "stein", "data": {"source": {"kind": "file", "path": "x.txt"}}}"#,
                "cost.score",
            ),
            (
                r#"{"n": 2, "cost": {"kind": "stein", "score": {"method": "identity"}}}"#,
                "cost",
            ),
            (
                r#"{"n": 2, "cost": "mmd", "sampling": {"batch_size": 600}}"#,
                "sampling.batch_size",
            ),
            (
                r#"{"n": 2, "cost": "mmd", "model": {"snap_to_family": true}}"#,
                "model.snap_to_family",
            ),
            (r#"{"n": 2, "cost": "mmd", "unknown": 1}"#, "unknown"),
        ];
        for (text, want) in bad {
            match RunConfig::from_json(text) {
                Err(Error::Config { field, msg }) => assert!(
                    field == want || msg.contains(want),
                    "{text}: got field {field} ({msg})"
                ),
                other => panic!("{text}: {other:?}"),
            }
        }
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        let mut cfg = RunConfig::new(3, CostSpec::from_name("stein").unwrap());
        cfg.command = Command::Compile;
        cfg.seed = 17;
        cfg.model.init = InitSpec::Hard {
            family: AngleFamily::OddMultiple { d: 3 },
        };
        cfg.model.snap_to_family = true;
        cfg.materialize().unwrap();
        save_config(&path, &cfg).unwrap();
        assert_eq!(load_config(&path).unwrap(), cfg);
    }

    #[test]
    fn initial_params_follow_model_spec() {
        let mut spec = ModelSpec::default();
        spec.connectivity = Connectivity::Edges(vec![(0, 1)]);
        let p = spec.initial_params(3, 5).unwrap();
        assert_eq!(p.gamma(), &[FRAC_PI_4; 3]);
        assert_eq!(p.couplings()[0][2], 0.0);
        assert!(!p.is_trainable(ParamIndex::Coupling(1, 2)));
        assert!(p.is_trainable(ParamIndex::Coupling(0, 1)));
        assert!(!p.is_trainable(ParamIndex::Gamma(0)));
    }
}
