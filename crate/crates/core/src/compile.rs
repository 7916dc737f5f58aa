//! Weak compilation: fit a frozen-mixer QAOA circuit to the output
//! distribution of an IQP circuit.

use std::f64::consts::FRAC_PI_4;

use serde::{Deserialize, Serialize};

use crate::bits::{format_bits, SampleSet};
use crate::config::{Command, RunConfig};
use crate::data::{train_test_split, DatasetHeader};
use crate::error::{Error, Result};
use crate::metrics::tv_distance;
use crate::model::{
    build_distribution, iqp_params, is_iqp, is_qaoa, qaoa_params, CircuitParams, ParamIndex,
};
use crate::rng::{derive_seed, tags};
use crate::sim::sample;
use crate::train::{
    loop_config, run_seeds, train, SeedRecord, TrainConfig, TrainingData, TrainingRecord,
};

/// Mixer angle of the compilation ansatz.
pub const COMPILE_MIXER: f64 = FRAC_PI_4;

#[derive(Clone, Debug)]
pub struct CompileJob {
    pub target: CircuitParams,
    pub ansatz_init: CircuitParams,
    pub train: TrainConfig,
    pub data_samples: usize,
    pub train_size: usize,
    pub seeds: SeedRecord,
    pub split_seed: u64,
}

impl CompileJob {
    pub fn n(&self) -> usize {
        self.target.n()
    }

    pub fn validate(&self) -> Result<()> {
        if !is_iqp(&self.target) {
            return Err(Error::InvalidArgument(
                "compilation target is not an IQP circuit".into(),
            ));
        }
        let a = &self.ansatz_init;
        if a.n() != self.n() {
            return Err(Error::Shape(format!(
                "ansatz has {} qubits, target {}",
                a.n(),
                self.n()
            )));
        }
        if !is_qaoa(a) || a.gamma().iter().any(|&g| (g - COMPILE_MIXER).abs() > 1e-12) {
            return Err(Error::InvalidArgument(
                "ansatz is not a QAOA circuit with mixer pi/4".into(),
            ));
        }
        if (0..self.n()).any(|k| {
            a.is_trainable(ParamIndex::Gamma(k))
                || a.is_trainable(ParamIndex::Delta(k))
                || a.is_trainable(ParamIndex::Sigma(k))
        }) {
            return Err(Error::InvalidArgument(
                "ansatz final layer must stay frozen".into(),
            ));
        }
        if self.data_samples < 2 || self.train_size == 0 || self.train_size >= self.data_samples {
            return Err(Error::InvalidArgument(
                "need a non-empty train and test split".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamRow {
    pub name: String,
    pub target: f64,
    pub initial: f64,
    pub learned: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbRow {
    pub bits: String,
    pub target: f64,
    pub learned: f64,
}

/// Training record plus target-vs-learned comparison tables.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompileReport {
    pub record: TrainingRecord,
    pub target: CircuitParams,
    pub initial_tv: f64,
    pub final_tv: f64,
    pub parameters: Vec<ParamRow>,
    pub probabilities: Vec<ProbRow>,
}

/// Output of [`compile_run`].
#[derive(Clone, Debug)]
pub struct CompileRun {
    pub report: CompileReport,
    pub dataset: SampleSet,
    pub header: DatasetHeader,
}

/// Sample the target circuit, train the ansatz on the samples, and compare.
pub fn compile_run(job: &CompileJob, config_echo: serde_json::Value) -> Result<CompileRun> {
    job.validate()?;
    let target_pv = build_distribution(&job.target)?;
    let dataset = sample(&target_pv, job.data_samples, job.seeds.data)?;
    let (train_set, test_set) = train_test_split(&dataset, job.train_size, job.split_seed)?;
    let data = TrainingData {
        target: target_pv.clone(),
        train: train_set,
        test: test_set,
    };
    let record = train(
        &job.train,
        &job.ansatz_init,
        &data,
        config_echo,
        job.seeds.clone(),
    )?;
    let learned = build_distribution(&record.final_params)?;

    let parameters = record
        .final_params
        .trainable_indices()
        .into_iter()
        .map(|idx| {
            Ok(ParamRow {
                name: idx.to_string(),
                target: job.target.get(idx)?,
                initial: job.ansatz_init.get(idx)?,
                learned: record.final_params.get(idx)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let probabilities = (0..1u64 << job.n())
        .map(|x| ProbRow {
            bits: format_bits(x, job.n()),
            target: target_pv.get(x),
            learned: learned.get(x),
        })
        .collect();
    let header = DatasetHeader {
        n: job.n(),
        count: dataset.len(),
        seed: job.seeds.data,
        source: serde_json::json!({"kind": "iqp", "couplings": job.target.couplings(), "local": job.target.local()}),
    };
    let report = CompileReport {
        initial_tv: record.initial_tv(),
        final_tv: tv_distance(&learned, &target_pv)?,
        target: job.target.clone(),
        parameters,
        probabilities,
        record,
    };
    Ok(CompileRun {
        report,
        dataset,
        header,
    })
}

/// Compilation job described by a materialized config.
pub fn job_from_config(cfg: &RunConfig) -> Result<CompileJob> {
    cfg.validate()?;
    let n = cfg.n;
    let angles =
        cfg.compile.target.clone().ok_or_else(|| {
            crate::error::config_err("compile.target", "target was not materialized")
        })?;
    let target = iqp_params(angles.couplings, angles.local)?;
    let seeds = run_seeds(cfg.seed);
    let init = cfg.model.initial_params(n, seeds.init)?;
    let mut ansatz_init = qaoa_params(
        init.couplings().to_vec(),
        init.local().to_vec(),
        &vec![-COMPILE_MIXER; n],
    )?
    .with_trainable(init.trainable().clone())?;
    for k in 0..n {
        ansatz_init.set_trainable(ParamIndex::Gamma(k), false)?;
    }
    Ok(CompileJob {
        target,
        ansatz_init,
        train: loop_config(cfg, seeds.training),
        data_samples: cfg.data.samples,
        train_size: cfg.data.train_size(cfg.data.samples),
        seeds,
        split_seed: derive_seed(cfg.seed, &[tags::SPLIT]),
    })
}

/// Run the compile command of `cfg`.
pub fn run_compile(cfg: &RunConfig) -> Result<CompileRun> {
    if cfg.command != Command::Compile {
        return Err(crate::error::config_err("command", "expected compile"));
    }
    compile_run(&job_from_config(cfg)?, serde_json::to_value(cfg)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::IqpAngles;
    use crate::train::CostSpec;

    fn config(n: usize, seed: u64, target: Option<IqpAngles>) -> RunConfig {
        let mut cfg = RunConfig::new(n, CostSpec::from_name("sinkhorn").unwrap());
        cfg.command = Command::Compile;
        cfg.seed = seed;
        cfg.epochs = 100;
        cfg.optimizer.learning_rate = 0.05;
        cfg.compile.target = target;
        cfg.materialize().unwrap();
        cfg
    }

    #[test]
    fn job_respects_family_constraints() {
        let job = job_from_config(&config(2, 1, None)).unwrap();
        job.validate().unwrap();
        assert!(is_iqp(&job.target));
        assert!(is_qaoa(&job.ansatz_init));
        let mut bad = job.clone();
        bad.ansatz_init
            .set_trainable(ParamIndex::Gamma(0), true)
            .unwrap();
        assert!(bad.validate().is_err());
        let mut bad = job;
        bad.target = bad.ansatz_init.clone();
        assert!(bad.validate().is_err());
    }

    #[test]
    fn zero_angle_target_is_reachable() {
        let zero = IqpAngles {
            couplings: vec![vec![0.0; 2]; 2],
            local: vec![0.0; 2],
        };
        let report = run_compile(&config(2, 3, Some(zero))).unwrap().report;
        assert!(report.final_tv < 0.05, "final tv {}", report.final_tv);
        for k in 0..2 {
            assert_eq!(report.record.final_params.gamma()[k], COMPILE_MIXER);
            assert_eq!(report.record.final_params.delta()[k], 0.0);
            assert_eq!(report.record.final_params.sigma()[k], 0.0);
        }
        assert_eq!(report.probabilities.len(), 4);
        assert_eq!(report.parameters.len(), 3);
    }
}
