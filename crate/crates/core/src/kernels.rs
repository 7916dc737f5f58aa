//! Kernels over bitstrings and Gram-matrix assembly.
//!
//! The Gaussian mixture and exponentiated Hamming kernels depend only on the
//! Hamming distance, so evaluation is a table lookup on `popcount(x ^ y)`. The
//! quantum kernel caches feature states and pair values.

use std::f64::consts::FRAC_PI_4;
use std::sync::Arc;

use dashmap::DashMap;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bits::{check_qubits, hamming, BitString};
use crate::error::{Error, Result};
use crate::rng::derive_seed;
use crate::sim::{self, Sampler, StateVector};

pub const DEFAULT_BANDWIDTHS: [f64; 3] = [0.25, 10.0, 1000.0];
pub const DEFAULT_SHOTS: u32 = 1024;

/// How the quantum kernel is evaluated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum QuantumMode {
    Exact,
    /// Estimate `Pr[0^n]` from `shots` measurements.
    Sampled {
        #[serde(default = "default_shots")]
        shots: u32,
        #[serde(default)]
        seed: u64,
    },
}

impl Default for QuantumMode {
    fn default() -> Self {
        QuantumMode::Sampled {
            shots: DEFAULT_SHOTS,
            seed: 0,
        }
    }
}

fn default_shots() -> u32 {
    DEFAULT_SHOTS
}

fn default_bandwidths() -> Vec<f64> {
    DEFAULT_BANDWIDTHS.to_vec()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelSpec {
    Gaussian {
        #[serde(default = "default_bandwidths")]
        bandwidths: Vec<f64>,
    },
    Hamming,
    Quantum {
        #[serde(default)]
        mode: QuantumMode,
    },
}

impl Default for KernelSpec {
    fn default() -> Self {
        KernelSpec::Gaussian {
            bandwidths: DEFAULT_BANDWIDTHS.to_vec(),
        }
    }
}

impl KernelSpec {
    /// Defaults for a kernel given by name.
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "gaussian" => Ok(KernelSpec::default()),
            "hamming" => Ok(KernelSpec::Hamming),
            "quantum" => Ok(KernelSpec::Quantum {
                mode: QuantumMode::default(),
            }),
            other => Err(Error::InvalidArgument(format!("unknown kernel {other:?}"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            KernelSpec::Gaussian { bandwidths } => {
                if bandwidths.is_empty() || bandwidths.iter().any(|s| !(*s > 0.0) || !s.is_finite())
                {
                    return Err(Error::InvalidArgument(
                        "gaussian kernel needs positive bandwidths".into(),
                    ));
                }
            }
            KernelSpec::Quantum {
                mode: QuantumMode::Sampled { shots: 0, .. },
            } => {
                return Err(Error::InvalidArgument(
                    "quantum kernel needs at least one shot".into(),
                ));
            }
            _ => {}
        }
        Ok(())
    }

    pub fn name(&self) -> &'static str {
        match self {
            KernelSpec::Gaussian { .. } => "gaussian",
            KernelSpec::Hamming => "hamming",
            KernelSpec::Quantum { .. } => "quantum",
        }
    }
}

fn gaussian_of_distance(d: u32, bandwidths: &[f64]) -> f64 {
    bandwidths
        .iter()
        .map(|s| (-(d as f64) / (2.0 * s)).exp())
        .sum::<f64>()
        / bandwidths.len() as f64
}

fn hamming_of_distance(d: u32, n: usize) -> f64 {
    (-(d as f64) / n as f64).exp()
}

/// Gaussian mixture `(1/c) sum_i exp(-|x-y|^2 / (2 sigma_i))`.
pub fn gaussian_kernel(x: &BitString, y: &BitString, bandwidths: &[f64]) -> Result<f64> {
    KernelSpec::Gaussian {
        bandwidths: bandwidths.to_vec(),
    }
    .validate()?;
    Ok(gaussian_of_distance(x.hamming(y)?, bandwidths))
}

/// `exp(-H(x, y) / n)`.
pub fn hamming_kernel(x: &BitString, y: &BitString) -> Result<f64> {
    Ok(hamming_of_distance(x.hamming(y)?, x.len()))
}

/// Phase of the feature-map diagonal on basis index `z` for input `x`.
fn feature_phase(n: usize, x: u64, z: u64) -> f64 {
    let xb = |k: usize| ((x >> k) & 1) as f64;
    let mut e = 0.0;
    for l in 0..n {
        let zl = sim::z(z, l);
        e += FRAC_PI_4 * xb(l) * zl;
        for m in (l + 1)..n {
            e += (FRAC_PI_4 - xb(l)) * (FRAC_PI_4 - xb(m)) * zl * sim::z(z, m);
        }
    }
    e
}

fn feature_state_raw(n: usize, x: u64) -> Result<StateVector> {
    let s = sim::init_zero_state(n)?;
    let s = sim::apply_hadamard_all(s);
    let s = sim::apply_diagonal_phases(s, |z| feature_phase(n, x, z));
    let s = sim::apply_hadamard_all(s);
    Ok(sim::apply_diagonal_phases(s, |z| feature_phase(n, x, z)))
}

/// `U_phi(x) H U_phi(x) H |0>`.
pub fn quantum_feature_state(x: &BitString) -> Result<StateVector> {
    feature_state_raw(x.len(), x.bits())
}

/// Run `U_phi(x)^dagger U_phi(y) |0>` and count zeros over `shots` draws.
fn sampled_overlap(n: usize, x: u64, y: u64, shots: u32, seed: u64) -> Result<f64> {
    let (lo, hi) = if x <= y { (x, y) } else { (y, x) };
    let s = feature_state_raw(n, hi)?;
    let s = sim::apply_diagonal_phases(s, |z| -feature_phase(n, lo, z));
    let s = sim::apply_hadamard_all(s);
    let s = sim::apply_diagonal_phases(s, |z| -feature_phase(n, lo, z));
    let s = sim::apply_hadamard_all(s);
    let pv = sim::born_probabilities(&s);
    let sampler = Sampler::new(&pv);
    let draws = sampler.draw_many(shots as usize, derive_seed(seed, &[lo, hi]));
    let zeros = draws.samples().iter().filter(|&&z| z == 0).count();
    Ok(zeros as f64 / shots as f64)
}

/// `|<phi(x)|phi(y)>|^2`, exactly or estimated from shots.
pub fn quantum_kernel(x: &BitString, y: &BitString, mode: QuantumMode) -> Result<f64> {
    x.check_len(y)?;
    match mode {
        QuantumMode::Exact => {
            let a = quantum_feature_state(x)?;
            let b = quantum_feature_state(y)?;
            Ok(a.inner(&b)?.norm_sqr().min(1.0))
        }
        QuantumMode::Sampled { shots, seed } => {
            if shots == 0 {
                return Err(Error::InvalidArgument(
                    "quantum kernel needs at least one shot".into(),
                ));
            }
            sampled_overlap(x.len(), x.bits(), y.bits(), shots, seed)
        }
    }
}

enum Backend {
    ByDistance(Vec<f64>),
    Quantum {
        mode: QuantumMode,
        states: DashMap<u64, Arc<StateVector>>,
        values: DashMap<(u64, u64), f64>,
    },
}

/// A kernel bound to a register size, with caching for repeated pairs.
pub struct Kernel {
    n: usize,
    spec: KernelSpec,
    backend: Backend,
}

impl std::fmt::Debug for Kernel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Kernel")
            .field("n", &self.n)
            .field("spec", &self.spec)
            .finish()
    }
}

impl Kernel {
    pub fn new(spec: &KernelSpec, n: usize) -> Result<Self> {
        check_qubits(n)?;
        spec.validate()?;
        let backend = match spec {
            KernelSpec::Gaussian { bandwidths } => Backend::ByDistance(
                (0..=n as u32)
                    .map(|d| gaussian_of_distance(d, bandwidths))
                    .collect(),
            ),
            KernelSpec::Hamming => {
                Backend::ByDistance((0..=n as u32).map(|d| hamming_of_distance(d, n)).collect())
            }
            KernelSpec::Quantum { mode } => Backend::Quantum {
                mode: *mode,
                states: DashMap::new(),
                values: DashMap::new(),
            },
        };
        Ok(Self {
            n,
            spec: spec.clone(),
            backend,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    /// Kernel value on two basis indices of this register.
    pub fn eval(&self, x: u64, y: u64) -> f64 {
        match &self.backend {
            Backend::ByDistance(table) => table[hamming(x, y) as usize],
            Backend::Quantum {
                mode,
                states,
                values,
            } => {
                let key = if x <= y { (x, y) } else { (y, x) };
                if let Some(v) = values.get(&key) {
                    return *v;
                }
                let v = match *mode {
                    QuantumMode::Exact => {
                        if x == y {
                            1.0
                        } else {
                            let a = self.cached_state(states, key.0);
                            let b = self.cached_state(states, key.1);
                            a.inner(&b).expect("same register").norm_sqr().min(1.0)
                        }
                    }
                    QuantumMode::Sampled { shots, seed } => {
                        sampled_overlap(self.n, key.0, key.1, shots, seed)
                            .expect("register size validated")
                    }
                };
                values.insert(key, v);
                v
            }
        }
    }

    fn cached_state(&self, states: &DashMap<u64, Arc<StateVector>>, x: u64) -> Arc<StateVector> {
        if let Some(s) = states.get(&x) {
            return Arc::clone(&s);
        }
        let s = Arc::new(feature_state_raw(self.n, x).expect("register size validated"));
        states.insert(x, Arc::clone(&s));
        s
    }

    /// `sum_{u,v} a_u b_v k(u, v)` over two weighted point lists.
    pub fn weighted_sum(&self, a: &[(u64, f64)], b: &[(u64, f64)]) -> f64 {
        a.iter()
            .map(|&(x, wa)| wa * b.iter().map(|&(y, wb)| wb * self.eval(x, y)).sum::<f64>())
            .sum()
    }
}

/// Kernel values between two sample lists.
#[derive(Clone, Debug, PartialEq)]
pub struct GramMatrix {
    pub rows: Vec<u64>,
    pub cols: Vec<u64>,
    values: Vec<f64>,
}

impl GramMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols.len() + j]
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows.len(), self.cols.len())
    }

    pub fn to_matrix(&self) -> nalgebra::DMatrix<f64> {
        nalgebra::DMatrix::from_row_slice(self.rows.len(), self.cols.len(), &self.values)
    }
}

/// `values[i][j] = k(rows[i], cols[j])`, assembled in parallel over rows.
pub fn gram(rows: &[u64], cols: &[u64], kernel: &Kernel) -> Result<GramMatrix> {
    if rows.is_empty() || cols.is_empty() {
        return Err(Error::InvalidArgument(
            "gram matrix of an empty list".into(),
        ));
    }
    if rows.iter().chain(cols).any(|&x| x >> kernel.n() != 0) {
        return Err(Error::Shape(format!(
            "sample does not fit in {} bits",
            kernel.n()
        )));
    }
    let values = rows
        .par_iter()
        .flat_map_iter(|&x| cols.iter().map(move |&y| kernel.eval(x, y)))
        .collect();
    Ok(GramMatrix {
        rows: rows.to_vec(),
        cols: cols.to_vec(),
        values,
    })
}
