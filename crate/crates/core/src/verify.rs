//! Oracle suites comparing the fast paths against dense linear algebra and
//! finite differences on random instances.

use num_complex::Complex64;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::bits::BitString;
use crate::cost_sinkhorn::SinkhornOptions;
use crate::cost_stein::stein_identity_residual;
use crate::error::{Error, Result};
use crate::kernels::{quantum_kernel, KernelSpec, QuantumMode};
use crate::metrics::random_full_support;
use crate::model::{build_distribution, prob_gradient, CircuitParams, ParamIndex, IQP_ANGLE};
use crate::oracle::{dense_distribution, dense_feature_state, hadamard, ORACLE_MAX_QUBITS};
use crate::rng::{derive_seed, rng_from_seed, tags, Rng};
use crate::sim::{final_layer_gate, sample, ProbabilityVector};
use crate::train::{exact_cost, exact_gradient, CostSpec, TrainingData};

/// Step used by finite-difference checks.
pub const FD_STEP: f64 = 1e-5;

/// Largest deviation of one suite against its tolerance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteResult {
    pub name: String,
    pub cases: usize,
    pub max_deviation: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl SuiteResult {
    fn new(name: &str, cases: usize, max_deviation: f64, tolerance: f64) -> Self {
        Self {
            name: name.to_string(),
            cases,
            max_deviation,
            tolerance,
            passed: max_deviation <= tolerance,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub n: usize,
    pub seed: u64,
    pub suites: Vec<SuiteResult>,
}

impl OracleReport {
    pub fn all_passed(&self) -> bool {
        self.suites.iter().all(|s| s.passed)
    }
}

/// Random circuit with every angle drawn from `[-pi, pi)`.
pub fn random_params(n: usize, rng: &mut Rng) -> Result<CircuitParams> {
    let mut draw = || rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
    let mut j = vec![vec![0.0; n]; n];
    for i in 0..n {
        for k in (i + 1)..n {
            j[i][k] = draw();
            j[k][i] = j[i][k];
        }
    }
    let b = (0..n).map(|_| draw()).collect();
    let gamma = (0..n).map(|_| draw()).collect();
    let delta = (0..n).map(|_| draw()).collect();
    let sigma = (0..n).map(|_| draw()).collect();
    CircuitParams::new(j, b, gamma, delta, sigma)
}

/// Random circuit with an X-only final layer whose mixer is also trainable.
pub fn random_shiftable_params(n: usize, rng: &mut Rng) -> Result<CircuitParams> {
    let mut p = random_params(n, rng)?;
    for k in 0..n {
        p.set(ParamIndex::Delta(k), 0.0)?;
        p.set(ParamIndex::Sigma(k), 0.0)?;
        p.set_trainable(ParamIndex::Gamma(k), true)?;
    }
    Ok(p)
}

/// Random full-support distribution.
pub fn random_pmf(n: usize, rng: &mut Rng) -> Result<ProbabilityVector> {
    random_full_support(n, rng.gen())
}

/// Max elementwise gap between the simulator and the dense oracle.
pub fn distribution_deviation(params: &CircuitParams) -> Result<f64> {
    let fast = build_distribution(params)?;
    let dense = dense_distribution(params)?;
    Ok(fast
        .probs()
        .iter()
        .zip(&dense)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max))
}

/// Max gap between shift-rule probability gradients and central differences.
pub fn shift_rule_deviation(params: &CircuitParams, h: f64) -> Result<f64> {
    let mut worst = 0.0f64;
    for idx in params.trainable_indices() {
        let exact = prob_gradient(params, idx)?;
        let theta = params.get(idx)?;
        let at = |v: f64| -> Result<ProbabilityVector> {
            let mut q = params.clone();
            q.set(idx, v)?;
            build_distribution(&q)
        };
        let (plus, minus) = (at(theta + h)?, at(theta - h)?);
        for (x, g) in exact.iter().enumerate() {
            let fd = (plus.probs()[x] - minus.probs()[x]) / (2.0 * h);
            worst = worst.max((g - fd).abs());
        }
    }
    Ok(worst)
}

/// Gap between the final layer at the IQP angles and `iH`.
pub fn iqp_layer_deviation() -> f64 {
    let gate = final_layer_gate(IQP_ANGLE, 0.0, IQP_ANGLE);
    let h = hadamard();
    let mut worst = 0.0f64;
    for r in 0..2 {
        for c in 0..2 {
            worst = worst.max((gate[r][c] - Complex64::i() * h[(r, c)]).norm());
        }
    }
    worst
}

/// Gap between the exact quantum kernel and dense feature-state overlaps.
pub fn feature_kernel_deviation(n: usize, x: u64, y: u64) -> Result<f64> {
    let fast = quantum_kernel(
        &BitString::new(x, n)?,
        &BitString::new(y, n)?,
        QuantumMode::Exact,
    )?;
    let (a, b) = (dense_feature_state(n, x)?, dense_feature_state(n, y)?);
    Ok((fast - a.dotc(&b).norm_sqr()).abs())
}

/// Largest component of the discrete Stein identity residual.
pub fn stein_identity_deviation(target: &ProbabilityVector, phi: &[Complex64]) -> Result<f64> {
    Ok(stein_identity_residual(target, phi)?
        .iter()
        .map(|r| r.norm())
        .fold(0.0, f64::max))
}

/// Max gap between the exact-expectation cost gradient and central differences of the exact cost.
pub fn cost_gradient_deviation(
    cost: &CostSpec,
    params: &CircuitParams,
    target: &ProbabilityVector,
    h: f64,
) -> Result<f64> {
    let placeholder = sample(target, 8, 0)?;
    let data = TrainingData {
        target: target.clone(),
        train: placeholder.clone(),
        test: placeholder,
    };
    let analytic = exact_gradient(cost, params, &data)?;
    let mut worst = 0.0f64;
    for (idx, g) in params.trainable_indices().into_iter().zip(analytic) {
        let theta = params.get(idx)?;
        let at = |v: f64| -> Result<f64> {
            let mut q = params.clone();
            q.set(idx, v)?;
            exact_cost(cost, &q, &data)
        };
        let fd = (at(theta + h)? - at(theta - h)?) / (2.0 * h);
        worst = worst.max((g - fd).abs());
    }
    Ok(worst)
}

/// Cost specs exercised by the gradient suites, with the tolerance for each.
pub fn gradient_suite_costs() -> Vec<(CostSpec, f64)> {
    let precise = SinkhornOptions {
        max_iters: 20_000,
        tol: 1e-13,
    };
    vec![
        (CostSpec::from_name("mmd").expect("known cost"), 1e-6),
        (CostSpec::from_name("stein").expect("known cost"), 1e-6),
        (
            CostSpec::Sinkhorn {
                epsilon: 0.1,
                options: precise,
            },
            1e-4,
        ),
        (
            CostSpec::Mmd {
                kernel: KernelSpec::Quantum {
                    mode: QuantumMode::Exact,
                },
            },
            1e-6,
        ),
    ]
}

/// Run every oracle suite on random instances of `n` qubits.
pub fn oracle_suite(n: usize, seed: u64) -> Result<OracleReport> {
    if n == 0 || n > ORACLE_MAX_QUBITS {
        return Err(Error::Capacity(format!(
            "oracle suites support 1..={ORACLE_MAX_QUBITS} qubits, got {n}"
        )));
    }
    let mut rng = rng_from_seed(derive_seed(seed, &[tags::BENCH, n as u64]));
    let mut suites = Vec::new();

    let cases = 20;
    let mut worst = 0.0f64;
    for _ in 0..cases {
        worst = worst.max(distribution_deviation(&random_params(n, &mut rng)?)?);
    }
    suites.push(SuiteResult::new(
        "distribution_vs_dense_unitary",
        cases,
        worst,
        1e-10,
    ));

    let cases = 5;
    let mut worst = 0.0f64;
    for _ in 0..cases {
        worst = worst.max(shift_rule_deviation(
            &random_shiftable_params(n, &mut rng)?,
            FD_STEP,
        )?);
    }
    suites.push(SuiteResult::new(
        "shift_rule_vs_finite_difference",
        cases,
        worst,
        1e-6,
    ));

    suites.push(SuiteResult::new(
        "iqp_layer_vs_i_hadamard",
        1,
        iqp_layer_deviation(),
        1e-12,
    ));

    let cases = 10;
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let (x, y) = (rng.gen_range(0..1u64 << n), rng.gen_range(0..1u64 << n));
        worst = worst.max(feature_kernel_deviation(n, x, y)?);
    }
    suites.push(SuiteResult::new(
        "quantum_kernel_vs_dense_feature_map",
        cases,
        worst,
        1e-10,
    ));

    let cases = 20;
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let target = random_pmf(n, &mut rng)?;
        let phi: Vec<Complex64> = (0..1usize << n)
            .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        worst = worst.max(stein_identity_deviation(&target, &phi)?);
    }
    suites.push(SuiteResult::new("stein_identity", cases, worst, 1e-10));

    for (cost, tol) in gradient_suite_costs() {
        let cases = 2;
        let mut worst = 0.0f64;
        for _ in 0..cases {
            let mut params = random_shiftable_params(n, &mut rng)?;
            for k in 0..n {
                params.set_trainable(ParamIndex::Gamma(k), false)?;
            }
            let target = random_pmf(n, &mut rng)?;
            worst = worst.max(cost_gradient_deviation(&cost, &params, &target, FD_STEP)?);
        }
        let name = match &cost {
            CostSpec::Mmd { kernel } => {
                format!("mmd_{}_gradient_vs_finite_difference", kernel.name())
            }
            other => format!("{}_gradient_vs_finite_difference", other.name()),
        };
        suites.push(SuiteResult::new(&name, cases, worst, tol));
    }
    Ok(OracleReport { n, seed, suites })
}
