//! Adam and the training loop: sample, evaluate the cost, take parameter-shift
//! gradients, update, and benchmark against the exact target.

use rand::seq::index::sample as sample_indices;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bits::SampleSet;
use crate::config::{DataSource, RunConfig};
use crate::cost_mmd::{mmd_estimate, mmd_exact, mmd_gradient, mmd_gradient_exact};
use crate::cost_sinkhorn::{
    sinkhorn_divergence, sinkhorn_gradient, sinkhorn_gradient_exact, Measure, SinkhornOptions,
    SinkhornSolution, DEFAULT_EPSILON,
};
use crate::cost_stein::{
    default_eigenvectors, identity_score, spectral_score, stein_cost, stein_cost_exact,
    stein_gradient, stein_gradient_exact, ScoreFunction, ScoreSpec, UndefinedScorePolicy,
};
use crate::data::{
    read_dataset, sample_target, target_pmf, train_test_split, DatasetHeader, WeightedSupport,
};
use crate::error::{Error, Result};
use crate::kernels::{Kernel, KernelSpec};
use crate::metrics::tv_distance;
use crate::model::{build_distribution, AngleFamily, CircuitParams};
use crate::rng::{derive_seed, rng_from_seed, tags};
use crate::sim::{ProbabilityVector, Sampler};

/// Adam hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidArgument(
                "learning rate must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::InvalidArgument(
                "Adam betas must lie in [0, 1)".into(),
            ));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidArgument(
                "Adam epsilon must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Moment estimates and step count.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
    pub config: AdamConfig,
}

impl AdamState {
    pub fn new(len: usize, config: AdamConfig) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
            config,
        }
    }
}

/// One bias-corrected Adam step; the returned delta is applied as `theta - delta`.
pub fn adam_step(state: &AdamState, grad: &[f64]) -> Result<(AdamState, Vec<f64>)> {
    if grad.len() != state.m.len() {
        return Err(Error::Shape(format!(
            "{} gradient entries for {} parameters",
            grad.len(),
            state.m.len()
        )));
    }
    let c = state.config;
    let t = state.t + 1;
    let mut next = AdamState { t, ..state.clone() };
    let (bc1, bc2) = (1.0 - c.beta1.powi(t as i32), 1.0 - c.beta2.powi(t as i32));
    let delta = grad
        .iter()
        .enumerate()
        .map(|(i, &g)| {
            next.m[i] = c.beta1 * state.m[i] + (1.0 - c.beta1) * g;
            next.v[i] = c.beta2 * state.v[i] + (1.0 - c.beta2) * g * g;
            c.learning_rate * (next.m[i] / bc1) / ((next.v[i] / bc2).sqrt() + c.epsilon)
        })
        .collect();
    Ok((next, delta))
}

/// Which cost is minimized.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CostSpec {
    Mmd {
        #[serde(default)]
        kernel: KernelSpec,
    },
    Stein {
        #[serde(default)]
        kernel: KernelSpec,
        #[serde(default = "exact_score")]
        score: ScoreSpec,
        #[serde(default)]
        policy: UndefinedScorePolicy,
    },
    Sinkhorn {
        #[serde(default = "default_epsilon")]
        epsilon: f64,
        #[serde(default)]
        options: SinkhornOptions,
    },
}

fn exact_score() -> ScoreSpec {
    ScoreSpec::Exact
}

fn default_epsilon() -> f64 {
    DEFAULT_EPSILON
}

impl CostSpec {
    /// Defaults for a cost given by name.
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "mmd" => Ok(CostSpec::Mmd {
                kernel: KernelSpec::default(),
            }),
            "stein" => Ok(CostSpec::Stein {
                kernel: KernelSpec::default(),
                score: ScoreSpec::Exact,
                policy: UndefinedScorePolicy::Error,
            }),
            "sinkhorn" => Ok(CostSpec::Sinkhorn {
                epsilon: DEFAULT_EPSILON,
                options: SinkhornOptions::default(),
            }),
            other => Err(Error::InvalidArgument(format!(
                "unknown cost {other:?}; expected mmd, stein or sinkhorn"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            CostSpec::Mmd { .. } => "mmd",
            CostSpec::Stein { .. } => "stein",
            CostSpec::Sinkhorn { .. } => "sinkhorn",
        }
    }

    /// Fill register-dependent defaults.
    pub fn materialize(&mut self, n: usize) {
        if let CostSpec::Stein {
            score: ScoreSpec::Spectral { eigenvectors },
            ..
        } = self
        {
            eigenvectors.get_or_insert(default_eigenvectors(n));
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            CostSpec::Mmd { kernel } => kernel.validate(),
            CostSpec::Stein {
                kernel,
                score,
                policy,
            } => {
                kernel.validate()?;
                match score {
                    ScoreSpec::Identity { eta } if !(*eta > 0.0) => {
                        Err(Error::InvalidArgument("identity score needs a positive ridge".into()))
                    }
                    ScoreSpec::Identity { .. } if *policy == UndefinedScorePolicy::Error => Err(Error::InvalidArgument(
                        "identity score is undefined off the data samples; use policy drop_pair".into(),
                    )),
                    ScoreSpec::Spectral { eigenvectors: Some(0) } => {
                        Err(Error::InvalidArgument("spectral score needs at least one eigenvector".into()))
                    }
                    _ => Ok(()),
                }
            }
            CostSpec::Sinkhorn { epsilon, options } => {
                if !(*epsilon > 0.0) || !epsilon.is_finite() {
                    return Err(Error::InvalidArgument(format!(
                        "epsilon must be positive, got {epsilon}"
                    )));
                }
                if options.max_iters == 0 || !(options.tol > 0.0) {
                    return Err(Error::InvalidArgument(
                        "Sinkhorn needs max_iters >= 1 and tol > 0".into(),
                    ));
                }
                Ok(())
            }
        }
    }
}

/// Whether expectations come from samples or exact distributions.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Expectation {
    #[default]
    Sampled,
    Exact,
}

/// Sample counts per epoch.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingSpec {
    pub model_samples: usize,
    pub batch_size: usize,
    pub shift_samples: usize,
    pub expectation: Expectation,
}

impl Default for SamplingSpec {
    fn default() -> Self {
        Self {
            model_samples: 500,
            batch_size: 250,
            shift_samples: 250,
            expectation: Expectation::Sampled,
        }
    }
}

/// Everything the loop needs besides the initial parameters and the data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub seed: u64,
    pub cost: CostSpec,
    pub optimizer: AdamConfig,
    pub sampling: SamplingSpec,
    /// Snap updated angles onto this family's lattice after each step.
    pub snap_to: Option<AngleFamily>,
}

/// Exact target plus train/test samples drawn from it.
#[derive(Clone, Debug)]
pub struct TrainingData {
    pub target: ProbabilityVector,
    pub train: SampleSet,
    pub test: SampleSet,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub cost_train: f64,
    pub cost_test: f64,
    pub tv: f64,
    pub param_hash: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub master: u64,
    pub data: u64,
    pub init: u64,
    pub training: u64,
}

/// Full trace of one training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingRecord {
    pub version: String,
    pub config: serde_json::Value,
    pub seeds: SeedRecord,
    pub initial_params: CircuitParams,
    pub final_params: CircuitParams,
    pub epochs: Vec<EpochRecord>,
}

impl TrainingRecord {
    pub fn initial_tv(&self) -> f64 {
        self.epochs.first().map(|e| e.tv).unwrap_or(f64::NAN)
    }

    pub fn final_tv(&self) -> f64 {
        self.epochs.last().map(|e| e.tv).unwrap_or(f64::NAN)
    }

    /// CSV with columns `epoch,cost_train,cost_test,tv`.
    pub fn trace_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["epoch", "cost_train", "cost_test", "tv"])?;
        for e in &self.epochs {
            w.serialize((e.epoch, e.cost_train, e.cost_test, e.tv))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

enum Engine {
    Mmd {
        kernel: Kernel,
    },
    Stein {
        kernel: Kernel,
        score: ScoreFunction,
        policy: UndefinedScorePolicy,
    },
    Sinkhorn {
        eps: f64,
        opts: SinkhornOptions,
    },
}

/// Per-epoch state shared between cost evaluation and gradients.
struct EpochState {
    sinkhorn: Option<SinkhornSolution>,
}

impl Engine {
    fn build(spec: &CostSpec, n: usize, data: &TrainingData) -> Result<Self> {
        spec.validate()?;
        Ok(match spec {
            CostSpec::Mmd { kernel } => Engine::Mmd {
                kernel: Kernel::new(kernel, n)?,
            },
            CostSpec::Stein {
                kernel,
                score,
                policy,
            } => {
                let score = match score {
                    ScoreSpec::Exact => ScoreFunction::Exact {
                        target: data.target.clone(),
                    },
                    ScoreSpec::Identity { eta } => identity_score(&data.train, kernel, *eta)?,
                    ScoreSpec::Spectral { eigenvectors } => spectral_score(
                        &data.train,
                        kernel,
                        eigenvectors.unwrap_or(default_eigenvectors(n)),
                    )?,
                };
                Engine::Stein {
                    kernel: Kernel::new(kernel, n)?,
                    score,
                    policy: *policy,
                }
            }
            CostSpec::Sinkhorn { epsilon, options } => Engine::Sinkhorn {
                eps: *epsilon,
                opts: *options,
            },
        })
    }

    fn cost(&self, model: &SampleSet, data: &SampleSet) -> Result<(f64, EpochState)> {
        Ok(match self {
            Engine::Mmd { kernel } => (
                mmd_estimate(model, data, kernel)?.value,
                EpochState { sinkhorn: None },
            ),
            Engine::Stein {
                kernel,
                score,
                policy,
            } => (
                stein_cost(model, score, kernel, *policy)?.value,
                EpochState { sinkhorn: None },
            ),
            Engine::Sinkhorn { eps, opts } => {
                let r = sinkhorn_divergence(
                    Measure::Samples(model),
                    Measure::Samples(data),
                    *eps,
                    *opts,
                )?;
                (
                    r.cost.value,
                    EpochState {
                        sinkhorn: Some(r.solution),
                    },
                )
            }
        })
    }

    fn cost_exact(
        &self,
        p: &ProbabilityVector,
        target: &ProbabilityVector,
    ) -> Result<(f64, EpochState)> {
        Ok(match self {
            Engine::Mmd { kernel } => {
                (mmd_exact(p, target, kernel)?, EpochState { sinkhorn: None })
            }
            Engine::Stein { kernel, score, .. } => (
                stein_cost_exact(p, score, kernel)?,
                EpochState { sinkhorn: None },
            ),
            Engine::Sinkhorn { eps, opts } => {
                let r =
                    sinkhorn_divergence(Measure::Exact(p), Measure::Exact(target), *eps, *opts)?;
                (
                    r.cost.value,
                    EpochState {
                        sinkhorn: Some(r.solution),
                    },
                )
            }
        })
    }

    #[allow(clippy::too_many_arguments)]
    fn gradient(
        &self,
        params: &CircuitParams,
        idx: crate::model::ParamIndex,
        model: &SampleSet,
        data: &SampleSet,
        state: &EpochState,
        shift_samples: usize,
        seed: u64,
    ) -> Result<f64> {
        match self {
            Engine::Mmd { kernel } => {
                mmd_gradient(params, idx, model, data, kernel, shift_samples, seed)
            }
            Engine::Stein {
                kernel,
                score,
                policy,
            } => stein_gradient(
                params,
                idx,
                model,
                score,
                kernel,
                shift_samples,
                seed,
                *policy,
            ),
            Engine::Sinkhorn { .. } => sinkhorn_gradient(
                params,
                idx,
                state.sinkhorn.as_ref().expect("solution computed"),
                shift_samples,
                seed,
            ),
        }
    }

    fn gradient_exact(
        &self,
        params: &CircuitParams,
        idx: crate::model::ParamIndex,
        target: &ProbabilityVector,
        state: &EpochState,
    ) -> Result<f64> {
        match self {
            Engine::Mmd { kernel } => mmd_gradient_exact(params, idx, target, kernel),
            Engine::Stein { kernel, score, .. } => stein_gradient_exact(params, idx, score, kernel),
            Engine::Sinkhorn { .. } => sinkhorn_gradient_exact(
                params,
                idx,
                state.sinkhorn.as_ref().expect("solution computed"),
            ),
        }
    }
}

fn subset(samples: &SampleSet, size: usize, seed: u64) -> SampleSet {
    if size >= samples.len() {
        return samples.clone();
    }
    let mut idx = sample_indices(&mut rng_from_seed(seed), samples.len(), size).into_vec();
    idx.sort_unstable();
    samples.select(&idx)
}

fn validate(cfg: &TrainConfig, init: &CircuitParams, data: &TrainingData) -> Result<()> {
    cfg.optimizer.validate()?;
    cfg.cost.validate()?;
    let n = init.n();
    if data.target.n() != n || data.train.n() != n || data.test.n() != n {
        return Err(Error::Shape("data and model registers differ".into()));
    }
    let s = cfg.sampling;
    if s.expectation == Expectation::Sampled {
        let min = if matches!(cfg.cost, CostSpec::Mmd { .. }) {
            2
        } else {
            1
        };
        if s.model_samples < min || s.batch_size < min || s.shift_samples < 1 {
            return Err(Error::InvalidArgument(format!(
                "sample counts must be at least {min}"
            )));
        }
        if s.batch_size > s.model_samples {
            return Err(Error::InvalidArgument(
                "batch size exceeds the number of model samples".into(),
            ));
        }
        if data.train.len() < min || data.test.len() < min {
            return Err(Error::TooFewSamples {
                needed: min,
                got: data.train.len().min(data.test.len()),
            });
        }
    }
    if let Some(fam) = cfg.snap_to {
        fam.validate()?;
        for idx in init.trainable_indices() {
            if !fam.contains(init.get(idx)?) {
                return Err(Error::InvalidArgument(format!(
                    "initial {idx} is not in the snapping family"
                )));
            }
        }
    }
    Ok(())
}

/// Train from `init` on `data`; the record echoes `config_echo`.
pub fn train(
    cfg: &TrainConfig,
    init: &CircuitParams,
    data: &TrainingData,
    config_echo: serde_json::Value,
    seeds: SeedRecord,
) -> Result<TrainingRecord> {
    validate(cfg, init, data)?;
    let n = init.n();
    let engine = Engine::build(&cfg.cost, n, data)?;
    let indices = init.trainable_indices();
    let mut params = init.clone();
    let mut adam = AdamState::new(indices.len(), cfg.optimizer);
    let mut epochs = Vec::with_capacity(cfg.epochs + 1);
    let s = cfg.sampling;
    let stream = |tag: u64, epoch: usize| derive_seed(cfg.seed, &[tag, epoch as u64]);

    for epoch in 0..=cfg.epochs {
        let p = build_distribution(&params)?;
        let tv = tv_distance(&p, &data.target)?;
        let (cost_train, cost_test, grads) = match s.expectation {
            Expectation::Exact => {
                let (value, state) = engine.cost_exact(&p, &data.target)?;
                let grads = if epoch < cfg.epochs {
                    indices
                        .par_iter()
                        .map(|&idx| engine.gradient_exact(&params, idx, &data.target, &state))
                        .collect::<Result<Vec<f64>>>()?
                } else {
                    Vec::new()
                };
                (value, value, grads)
            }
            Expectation::Sampled => {
                let sampler = Sampler::new(&p);
                let model = sampler.draw_many(s.model_samples, stream(tags::MODEL_SAMPLES, epoch));
                let (cost_train, _) = engine.cost(&model, &data.train)?;
                let fresh = sampler.draw_many(s.model_samples, stream(tags::TEST_SAMPLES, epoch));
                let (cost_test, _) = engine.cost(&fresh, &data.test)?;
                let grads = if epoch < cfg.epochs {
                    let model_batch =
                        subset(&model, s.batch_size, stream(tags::MODEL_BATCH, epoch));
                    let data_batch =
                        subset(&data.train, s.batch_size, stream(tags::DATA_BATCH, epoch));
                    let (_, state) = engine.cost(&model_batch, &data_batch)?;
                    indices
                        .par_iter()
                        .enumerate()
                        .map(|(k, &idx)| {
                            let seed =
                                derive_seed(cfg.seed, &[tags::SHIFT, epoch as u64, k as u64]);
                            engine.gradient(
                                &params,
                                idx,
                                &model_batch,
                                &data_batch,
                                &state,
                                s.shift_samples,
                                seed,
                            )
                        })
                        .collect::<Result<Vec<f64>>>()?
                } else {
                    Vec::new()
                };
                (cost_train, cost_test, grads)
            }
        };
        epochs.push(EpochRecord {
            epoch,
            cost_train,
            cost_test,
            tv,
            param_hash: params.snapshot_hash(),
        });
        if epoch == cfg.epochs {
            break;
        }
        let (next, delta) = adam_step(&adam, &grads)?;
        adam = next;
        params.apply_update(&delta)?;
        if let Some(fam) = cfg.snap_to {
            for &idx in &indices {
                let snapped = fam.snap(params.get(idx)?);
                params.set(idx, snapped)?;
                if !fam.contains(snapped) {
                    return Err(Error::Numerical(format!(
                        "{idx} left the angle family after snapping"
                    )));
                }
            }
        }
    }
    Ok(TrainingRecord {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: config_echo,
        seeds,
        initial_params: init.clone(),
        final_params: params,
        epochs,
    })
}

/// Exact-expectation gradient of the configured cost at `params`.
pub fn exact_gradient(
    cost: &CostSpec,
    params: &CircuitParams,
    data: &TrainingData,
) -> Result<Vec<f64>> {
    let engine = Engine::build(cost, params.n(), data)?;
    let p = build_distribution(params)?;
    let (_, state) = engine.cost_exact(&p, &data.target)?;
    params
        .trainable_indices()
        .iter()
        .map(|&idx| engine.gradient_exact(params, idx, &data.target, &state))
        .collect()
}

/// Exact-expectation value of the configured cost at `params`.
pub fn exact_cost(cost: &CostSpec, params: &CircuitParams, data: &TrainingData) -> Result<f64> {
    let engine = Engine::build(cost, params.n(), data)?;
    Ok(engine
        .cost_exact(&build_distribution(params)?, &data.target)?
        .0)
}

/// Data, initial circuit and loop settings resolved from a [`RunConfig`].
#[derive(Clone, Debug)]
pub struct PreparedRun {
    pub init: CircuitParams,
    pub data: TrainingData,
    pub dataset: SampleSet,
    pub header: DatasetHeader,
    pub train: TrainConfig,
    pub seeds: SeedRecord,
}

/// Output of [`run_training`].
#[derive(Clone, Debug)]
pub struct TrainingRun {
    pub record: TrainingRecord,
    pub dataset: SampleSet,
    pub header: DatasetHeader,
}

pub(crate) fn run_seeds(master: u64) -> SeedRecord {
    SeedRecord {
        master,
        data: derive_seed(master, &[tags::DATA]),
        init: derive_seed(master, &[tags::INIT]),
        training: derive_seed(master, &[tags::TRAINING]),
    }
}

pub(crate) fn loop_config(cfg: &RunConfig, seed: u64) -> TrainConfig {
    TrainConfig {
        epochs: cfg.epochs,
        seed,
        cost: cfg.cost.clone(),
        optimizer: cfg.optimizer,
        sampling: cfg.sampling,
        snap_to: cfg.model.snap_family(),
    }
}

/// Build the dataset and initial circuit described by `cfg`.
pub fn prepare_training(cfg: &RunConfig) -> Result<PreparedRun> {
    cfg.validate()?;
    let n = cfg.n;
    let seeds = run_seeds(cfg.seed);
    let (target, dataset, header) = match &cfg.data.source {
        DataSource::Target => {
            let spec = cfg.data.target_spec(n)?;
            let dataset = sample_target(&spec, cfg.data.samples, seeds.data)?;
            let header = DatasetHeader {
                n,
                count: dataset.len(),
                seed: seeds.data,
                source: serde_json::json!({"kind": "target", "modes": spec.modes, "fidelity": spec.p}),
            };
            (target_pmf(&spec)?, dataset, header)
        }
        DataSource::File { path } => {
            let (header, dataset) = read_dataset(path)?;
            if dataset.n() != n {
                return Err(crate::error::config_err(
                    "data.source",
                    format!("dataset has {} qubits, config {n}", dataset.n()),
                ));
            }
            if dataset.len() < 2 {
                return Err(Error::TooFewSamples {
                    needed: 2,
                    got: dataset.len(),
                });
            }
            let target = WeightedSupport::from_samples(&dataset)?.to_probability()?;
            (target, dataset, header)
        }
    };
    let n_train = cfg.data.train_size(dataset.len());
    let (train, test) = train_test_split(&dataset, n_train, derive_seed(cfg.seed, &[tags::SPLIT]))?;
    Ok(PreparedRun {
        init: cfg.model.initial_params(n, seeds.init)?,
        data: TrainingData {
            target,
            train,
            test,
        },
        dataset,
        header,
        train: loop_config(cfg, seeds.training),
        seeds,
    })
}

/// Run the experiment described by `cfg`; the record echoes the full config.
pub fn run_training(cfg: &RunConfig) -> Result<TrainingRun> {
    let prep = prepare_training(cfg)?;
    let record = train(
        &prep.train,
        &prep.init,
        &prep.data,
        serde_json::to_value(cfg)?,
        prep.seeds,
    )?;
    Ok(TrainingRun {
        record,
        dataset: prep.dataset,
        header: prep.header,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::TargetSpec;
    use crate::model::random_uniform_init;
    use std::f64::consts::{FRAC_PI_4, PI};

    #[test]
    fn adam_zero_gradient_gives_zero_delta() {
        let s = AdamState::new(3, AdamConfig::default());
        let (_, d) = adam_step(&s, &[0.0; 3]).unwrap();
        assert_eq!(d, vec![0.0; 3]);
        assert!(adam_step(&s, &[0.0; 2]).is_err());
    }

    #[test]
    fn adam_constant_gradient_unit_step() {
        let cfg = AdamConfig {
            learning_rate: 0.05,
            ..AdamConfig::default()
        };
        let mut s = AdamState::new(2, cfg);
        let mut last = vec![];
        for _ in 0..5000 {
            let (next, d) = adam_step(&s, &[0.7, -3.0]).unwrap();
            s = next;
            last = d;
        }
        assert!((last[0] - 0.05).abs() < 1e-8);
        assert!((last[1] + 0.05).abs() < 1e-8);
        // The first step already has unit magnitude thanks to bias correction.
        let (_, d) = adam_step(&AdamState::new(1, cfg), &[0.7]).unwrap();
        assert!((d[0] - 0.05).abs() < 1e-8);
    }

    fn problem(n: usize, seed: u64) -> (CircuitParams, TrainingData) {
        let spec = TargetSpec::random(n, 1, 0.9, seed).unwrap();
        let target = target_pmf(&spec).unwrap();
        let all = sample_target(&spec, 500, seed + 1).unwrap();
        let (train, test) = train_test_split(&all, 400, seed + 2).unwrap();
        let mut init = random_uniform_init(n, 0.0, PI, seed + 3).unwrap();
        for k in 0..n {
            init.set(crate::model::ParamIndex::Gamma(k), FRAC_PI_4)
                .unwrap();
        }
        (
            init,
            TrainingData {
                target,
                train,
                test,
            },
        )
    }

    fn seeds() -> SeedRecord {
        SeedRecord {
            master: 0,
            data: 0,
            init: 0,
            training: 0,
        }
    }

    fn cfg(cost: CostSpec, epochs: usize) -> TrainConfig {
        TrainConfig {
            epochs,
            seed: 11,
            cost,
            optimizer: AdamConfig {
                learning_rate: 0.05,
                ..AdamConfig::default()
            },
            sampling: SamplingSpec::default(),
            snap_to: None,
        }
    }

    #[test]
    fn zero_epochs_records_initial_evaluation_only() {
        let (init, data) = problem(2, 1);
        let r = train(
            &cfg(CostSpec::from_name("mmd").unwrap(), 0),
            &init,
            &data,
            serde_json::Value::Null,
            seeds(),
        )
        .unwrap();
        assert_eq!(r.epochs.len(), 1);
        assert_eq!(r.epochs[0].epoch, 0);
        assert_eq!(r.final_params, init);
    }

    #[test]
    fn runs_are_reproducible() {
        let (init, data) = problem(2, 2);
        let c = cfg(CostSpec::from_name("sinkhorn").unwrap(), 5);
        let a = train(&c, &init, &data, serde_json::Value::Null, seeds()).unwrap();
        let b = train(&c, &init, &data, serde_json::Value::Null, seeds()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.trace_csv().unwrap(), b.trace_csv().unwrap());
        assert!(a
            .trace_csv()
            .unwrap()
            .starts_with("epoch,cost_train,cost_test,tv\n"));
    }

    #[test]
    fn sinkhorn_reduces_tv_on_single_mode_target() {
        let (init, data) = problem(2, 3);
        let r = train(
            &cfg(CostSpec::from_name("sinkhorn").unwrap(), 50),
            &init,
            &data,
            serde_json::Value::Null,
            seeds(),
        )
        .unwrap();
        assert!(
            r.final_tv() < r.initial_tv(),
            "{} -> {}",
            r.initial_tv(),
            r.final_tv()
        );
    }

    #[test]
    fn exact_mmd_cost_decreases_over_windows() {
        let (init, data) = problem(2, 4);
        let mut c = cfg(CostSpec::from_name("mmd").unwrap(), 60);
        c.sampling.expectation = Expectation::Exact;
        c.optimizer.learning_rate = 0.005;
        let r = train(&c, &init, &data, serde_json::Value::Null, seeds()).unwrap();
        for w in r.epochs.windows(11) {
            assert!(
                w[10].cost_train < w[0].cost_train,
                "window at {}",
                w[0].epoch
            );
        }
    }

    #[test]
    fn identity_score_requires_drop_pair() {
        let spec = CostSpec::Stein {
            kernel: KernelSpec::default(),
            score: ScoreSpec::Identity { eta: 0.01 },
            policy: UndefinedScorePolicy::Error,
        };
        assert!(spec.validate().is_err());
    }

    #[test]
    fn hard_angle_snapping_keeps_lattice() {
        let (_, data) = problem(2, 5);
        let fam = AngleFamily::OddMultiple { d: 4 };
        let mut init = crate::model::random_hard_init(2, fam, 9).unwrap();
        for k in 0..2 {
            init.set(crate::model::ParamIndex::Gamma(k), FRAC_PI_4)
                .unwrap();
        }
        let mut c = cfg(CostSpec::from_name("mmd").unwrap(), 5);
        c.snap_to = Some(fam);
        c.optimizer.learning_rate = 0.2;
        let r = train(&c, &init, &data, serde_json::Value::Null, seeds()).unwrap();
        for idx in r.final_params.trainable_indices() {
            assert!(fam.contains(r.final_params.get(idx).unwrap()));
        }
    }
}
