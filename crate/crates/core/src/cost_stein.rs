//! Discrete kernelized Stein discrepancy.
//!
//! The shift operator on coordinate `i` flips bit `i`; on a binary alphabet
//! it is its own inverse, so the forward and adjoint difference operators
//! coincide: `(Δ_i f)(x) = f(x) - f(¬_i x)`.

use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bits::{flip_bit, format_bits, BitString, SampleSet};
use crate::cost_mmd::{check_kernel, prob_points, shifted_samples, weighted_points, CostValue};
use crate::error::{Error, Result};
use crate::kernels::{Kernel, KernelSpec};
use crate::model::{self, CircuitParams, ParamIndex};
use crate::sim::ProbabilityVector;

pub const DEFAULT_RIDGE: f64 = 0.01;

/// Relative eigenvalue floor below which spectral eigenpairs are dropped.
const EIGEN_FLOOR: f64 = 1e-12;

/// Toggle bit `i` of `x`.
pub fn flip(x: &BitString, i: usize) -> Result<BitString> {
    x.flip(i)
}

/// Default number of Nyström eigenvectors for an `n`-qubit target.
pub fn default_eigenvectors(n: usize) -> usize {
    if n <= 3 {
        3.min(1 << n)
    } else {
        6
    }
}

/// `1 - pi(¬_i x) / pi(x)` for each `i`.
pub fn exact_score(target: &ProbabilityVector, x: &BitString) -> Result<Vec<f64>> {
    if x.len() != target.n() {
        return Err(Error::Shape(format!(
            "bitstring of length {} for {} qubits",
            x.len(),
            target.n()
        )));
    }
    exact_score_raw(target, x.bits())
}

fn exact_score_raw(target: &ProbabilityVector, x: u64) -> Result<Vec<f64>> {
    let px = target.get(x);
    if !(px > 0.0) {
        return Err(Error::ScoreUndefined(format!(
            "{} (zero target probability)",
            format_bits(x, target.n())
        )));
    }
    Ok((0..target.n())
        .map(|i| 1.0 - target.get(flip_bit(x, i)) / px)
        .collect())
}

/// A score estimate `x -> s(x)` in `R^n`.
#[derive(Clone, Debug)]
pub enum ScoreFunction {
    Exact {
        target: ProbabilityVector,
    },
    /// Defined only at the sample points; row `a` of `matrix` is the score of sample `a`.
    Identity {
        n: usize,
        samples: Vec<u64>,
        rows: HashMap<u64, usize>,
        matrix: DMatrix<f64>,
    },
    /// Nyström expansion, defined everywhere.
    Spectral(Arc<SpectralScore>),
}

#[derive(Debug)]
pub struct SpectralScore {
    n: usize,
    kernel: Kernel,
    points: Vec<u64>,
    /// `coeffs[j][k]`: weight of `k(x, points[k])` in the `j`-th eigenfunction.
    coeffs: Vec<Vec<f64>>,
    /// `beta[i][j]`: coefficient of eigenfunction `j` in score component `i`.
    beta: Vec<Vec<f64>>,
    eigenvalues: Vec<f64>,
    sample_count: usize,
}

impl SpectralScore {
    /// `psi_j(x)` for every retained `j`.
    pub fn eigenfunctions(&self, x: u64) -> Vec<f64> {
        let kx: Vec<f64> = self
            .points
            .iter()
            .map(|&y| self.kernel.eval(x, y))
            .collect();
        self.coeffs
            .iter()
            .map(|c| c.iter().zip(&kx).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn sample_count(&self) -> usize {
        self.sample_count
    }

    fn eval(&self, x: u64) -> Vec<f64> {
        let psi = self.eigenfunctions(x);
        self.beta
            .iter()
            .map(|b| b.iter().zip(&psi).map(|(a, p)| a * p).sum())
            .collect()
    }
}

impl ScoreFunction {
    pub fn n(&self) -> usize {
        match self {
            ScoreFunction::Exact { target } => target.n(),
            ScoreFunction::Identity { n, .. } => *n,
            ScoreFunction::Spectral(s) => s.n,
        }
    }

    pub fn method(&self) -> &'static str {
        match self {
            ScoreFunction::Exact { .. } => "exact",
            ScoreFunction::Identity { .. } => "identity",
            ScoreFunction::Spectral(_) => "spectral",
        }
    }

    /// Score at basis index `x`.
    pub fn eval(&self, x: u64) -> Result<Vec<f64>> {
        match self {
            ScoreFunction::Exact { target } => exact_score_raw(target, x),
            ScoreFunction::Identity {
                n, rows, matrix, ..
            } => match rows.get(&x) {
                Some(&r) => Ok(matrix.row(r).iter().copied().collect()),
                None => Err(Error::ScoreUndefined(format!(
                    "{} (identity score has no out-of-sample extension)",
                    format_bits(x, *n)
                ))),
            },
            ScoreFunction::Spectral(s) => Ok(s.eval(x)),
        }
    }

    /// The `M x n` score matrix of an identity estimate.
    pub fn identity_matrix(&self) -> Option<&DMatrix<f64>> {
        match self {
            ScoreFunction::Identity { matrix, .. } => Some(matrix),
            _ => None,
        }
    }
}

/// `E_pi[s_i phi - Δ_i phi]` for each `i`, by full enumeration.
pub fn stein_identity_residual(
    target: &ProbabilityVector,
    phi: &[Complex64],
) -> Result<Vec<Complex64>> {
    let n = target.n();
    if phi.len() != 1 << n {
        return Err(Error::Shape(format!(
            "test function has {} entries for {n} qubits",
            phi.len()
        )));
    }
    let mut out = vec![Complex64::new(0.0, 0.0); n];
    for (x, px) in target.support() {
        let s = exact_score_raw(target, x)?;
        for i in 0..n {
            let delta = phi[x as usize] - phi[flip_bit(x, i) as usize];
            out[i] += px * (s[i] * phi[x as usize] - delta);
        }
    }
    Ok(out)
}

/// Stein kernel from precomputed scores `sx = s(x)`, `sy = s(y)`.
pub fn stein_kernel_with_scores(x: u64, y: u64, sx: &[f64], sy: &[f64], kernel: &Kernel) -> f64 {
    let k = kernel.eval(x, y);
    let mut value = 0.0;
    for i in 0..sx.len() {
        let (fx, fy) = (flip_bit(x, i), flip_bit(y, i));
        let k_x_fy = kernel.eval(x, fy);
        let k_fx_y = kernel.eval(fx, y);
        let k_fx_fy = kernel.eval(fx, fy);
        value += sx[i] * sy[i] * k;
        value -= sx[i] * (k - k_x_fy);
        value -= (k - k_fx_y) * sy[i];
        value += k - k_x_fy - k_fx_y + k_fx_fy;
    }
    value
}

/// Stein kernel `k_pi(x, y)` for a score function and base kernel.
pub fn stein_kernel(
    x: &BitString,
    y: &BitString,
    score: &ScoreFunction,
    kernel: &Kernel,
) -> Result<f64> {
    x.check_len(y)?;
    check_kernel(kernel, x.len())?;
    if score.n() != x.len() {
        return Err(Error::Shape(format!(
            "score on {} qubits, inputs have {}",
            score.n(),
            x.len()
        )));
    }
    let (sx, sy) = (score.eval(x.bits())?, score.eval(y.bits())?);
    Ok(stein_kernel_with_scores(
        x.bits(),
        y.bits(),
        &sx,
        &sy,
        kernel,
    ))
}

/// What to do when the score is undefined at an encountered sample.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UndefinedScorePolicy {
    #[default]
    Error,
    DropPair,
}

fn scores_for(
    points: &[(u64, f64)],
    score: &ScoreFunction,
    policy: UndefinedScorePolicy,
) -> Result<Vec<Option<Vec<f64>>>> {
    points
        .iter()
        .map(|&(x, _)| match score.eval(x) {
            Ok(s) => Ok(Some(s)),
            Err(e @ Error::ScoreUndefined(_)) => match policy {
                UndefinedScorePolicy::Error => Err(e),
                UndefinedScorePolicy::DropPair => Ok(None),
            },
            Err(e) => Err(e),
        })
        .collect()
}

/// `sum_{u,v} a_u b_v k_pi(u, v)` normalized over the pairs kept.
fn stein_weighted_sum(
    a: &[(u64, f64)],
    b: &[(u64, f64)],
    score: &ScoreFunction,
    kernel: &Kernel,
    policy: UndefinedScorePolicy,
) -> Result<f64> {
    let (sa, sb) = (scores_for(a, score, policy)?, scores_for(b, score, policy)?);
    let (mut total, mut mass) = (0.0, 0.0);
    for (&(x, wx), sx) in a.iter().zip(&sa) {
        let Some(sx) = sx else { continue };
        for (&(y, wy), sy) in b.iter().zip(&sb) {
            let Some(sy) = sy else { continue };
            total += wx * wy * stein_kernel_with_scores(x, y, sx, sy, kernel);
            mass += wx * wy;
        }
    }
    if mass == 0.0 {
        return Err(Error::ScoreUndefined(
            "every sample pair was dropped".into(),
        ));
    }
    Ok(total / mass)
}

fn check_score(score: &ScoreFunction, kernel: &Kernel, n: usize) -> Result<()> {
    check_kernel(kernel, n)?;
    if score.n() != n {
        return Err(Error::Shape(format!(
            "score on {} qubits, samples on {n}",
            score.n()
        )));
    }
    Ok(())
}

/// Mean Stein kernel over all ordered pairs of model samples.
pub fn stein_cost(
    model: &SampleSet,
    score: &ScoreFunction,
    kernel: &Kernel,
    policy: UndefinedScorePolicy,
) -> Result<CostValue> {
    if model.is_empty() {
        return Err(Error::TooFewSamples { needed: 1, got: 0 });
    }
    check_score(score, kernel, model.n())?;
    let x = weighted_points(model);
    let value = stein_weighted_sum(&x, &x, score, kernel, policy)?;
    Ok(CostValue {
        value,
        n_model_samples: model.len(),
        n_data_samples: 0,
    })
}

/// `sum_{x,y} p(x) p(y) k_pi(x, y)`.
pub fn stein_cost_exact(
    p: &ProbabilityVector,
    score: &ScoreFunction,
    kernel: &Kernel,
) -> Result<f64> {
    check_score(score, kernel, p.n())?;
    let x = prob_points(p);
    stein_weighted_sum(&x, &x, score, kernel, UndefinedScorePolicy::Error)
}

/// Sampled gradient: shifted samples in one slot, model samples in the other.
#[allow(clippy::too_many_arguments)]
pub fn stein_gradient(
    params: &CircuitParams,
    idx: ParamIndex,
    model: &SampleSet,
    score: &ScoreFunction,
    kernel: &Kernel,
    shift_samples: usize,
    seed: u64,
    policy: UndefinedScorePolicy,
) -> Result<f64> {
    check_score(score, kernel, params.n())?;
    let (a, b) = shifted_samples(params, idx, shift_samples, seed)?;
    let (a, b, x) = (
        weighted_points(&a),
        weighted_points(&b),
        weighted_points(model),
    );
    stein_gradient_terms(&a, &b, &x, score, kernel, policy)
}

fn stein_gradient_terms(
    a: &[(u64, f64)],
    b: &[(u64, f64)],
    x: &[(u64, f64)],
    score: &ScoreFunction,
    kernel: &Kernel,
    policy: UndefinedScorePolicy,
) -> Result<f64> {
    Ok(stein_weighted_sum(a, x, score, kernel, policy)?
        - stein_weighted_sum(b, x, score, kernel, policy)?
        + stein_weighted_sum(x, a, score, kernel, policy)?
        - stein_weighted_sum(x, b, score, kernel, policy)?)
}

/// Gradient with every expectation taken exactly.
pub fn stein_gradient_exact(
    params: &CircuitParams,
    idx: ParamIndex,
    score: &ScoreFunction,
    kernel: &Kernel,
) -> Result<f64> {
    let p = model::build_distribution(params)?;
    check_score(score, kernel, p.n())?;
    let (plus, minus) = model::shifted_distributions(params, idx)?;
    stein_gradient_terms(
        &prob_points(&plus),
        &prob_points(&minus),
        &prob_points(&p),
        score,
        kernel,
        UndefinedScorePolicy::Error,
    )
}

/// Ridge-regression score at the sample points (rows = samples).
pub fn identity_score(samples: &SampleSet, base: &KernelSpec, eta: f64) -> Result<ScoreFunction> {
    let m = samples.len();
    if m < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: m });
    }
    identity_score_weighted(
        samples.n(),
        samples.samples(),
        &vec![1.0 / m as f64; m],
        base,
        eta,
    )
}

/// Ridge-regression score with explicit point weights.
///
/// Solves `(K diag(w) + (eta/M) I) G = D` with
/// `D[a][b] = sum_i w_i (k(x_a, x_i) - k(x_a, ¬_b x_i))`. Uniform weights
/// `1/M` give `G = M (K + eta I)^{-1} <Δ, K>`.
pub fn identity_score_weighted(
    n: usize,
    points: &[u64],
    weights: &[f64],
    base: &KernelSpec,
    eta: f64,
) -> Result<ScoreFunction> {
    let m = points.len();
    if m < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: m });
    }
    if weights.len() != m {
        return Err(Error::Shape(format!(
            "{m} points with {} weights",
            weights.len()
        )));
    }
    if !(eta > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "ridge coefficient must be positive, got {eta}"
        )));
    }
    let kernel = Kernel::new(base, n)?;
    let mut a = DMatrix::<f64>::zeros(m, m);
    let mut d = DMatrix::<f64>::zeros(m, n);
    for r in 0..m {
        for c in 0..m {
            let k = kernel.eval(points[r], points[c]);
            a[(r, c)] = k * weights[c];
            for b in 0..n {
                d[(r, b)] += weights[c] * (k - kernel.eval(points[r], flip_bit(points[c], b)));
            }
        }
        a[(r, r)] += eta / m as f64;
    }
    let matrix = a
        .lu()
        .solve(&d)
        .filter(|g| g.iter().all(|v| v.is_finite()))
        .ok_or_else(|| Error::Numerical("identity-score system is singular".into()))?;
    let mut rows = HashMap::new();
    for (r, &x) in points.iter().enumerate() {
        rows.entry(x).or_insert(r);
    }
    Ok(ScoreFunction::Identity {
        n,
        samples: points.to_vec(),
        rows,
        matrix,
    })
}

/// Nyström spectral score estimate from samples, defined on all inputs.
pub fn spectral_score(
    samples: &SampleSet,
    base: &KernelSpec,
    eigenvectors: usize,
) -> Result<ScoreFunction> {
    let m = samples.len();
    if eigenvectors == 0 {
        return Err(Error::InvalidArgument(
            "spectral score needs at least one eigenvector".into(),
        ));
    }
    if eigenvectors > m {
        return Err(Error::InvalidArgument(format!(
            "{eigenvectors} eigenvectors requested from {m} samples"
        )));
    }
    let n = samples.n();
    let kernel = Kernel::new(base, n)?;
    // The M x M Gram matrix has the same nonzero spectrum as C^½ K_u C^½ over
    // the distinct points with multiplicities C.
    let pts = weighted_points(samples);
    let counts: Vec<f64> = pts.iter().map(|&(_, w)| w * m as f64).collect();
    let points: Vec<u64> = pts.iter().map(|&(x, _)| x).collect();
    let u = points.len();
    let mut b = DMatrix::<f64>::zeros(u, u);
    for r in 0..u {
        for c in 0..u {
            b[(r, c)] = counts[r].sqrt() * kernel.eval(points[r], points[c]) * counts[c].sqrt();
        }
    }
    let eig = SymmetricEigen::new(b);
    let mut order: Vec<usize> = (0..u).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[j]
            .partial_cmp(&eig.eigenvalues[i])
            .expect("finite eigenvalues")
    });
    let lead = eig.eigenvalues[order[0]];
    if !(lead > 0.0) {
        return Err(Error::Numerical(format!(
            "leading Gram eigenvalue {lead} is not positive"
        )));
    }
    let sqrt_m = (m as f64).sqrt();
    let mut coeffs = Vec::new();
    let mut eigenvalues = Vec::new();
    for &j in order.iter().take(eigenvectors) {
        let lambda = eig.eigenvalues[j];
        if lambda <= EIGEN_FLOOR * lead {
            break;
        }
        let w = eig.eigenvectors.column(j);
        coeffs.push(
            (0..u)
                .map(|k| sqrt_m * counts[k].sqrt() * w[k] / lambda)
                .collect::<Vec<f64>>(),
        );
        eigenvalues.push(lambda);
    }
    let mut spectral = SpectralScore {
        n,
        kernel,
        points,
        coeffs,
        beta: Vec::new(),
        eigenvalues,
        sample_count: m,
    };
    let psi_at: Vec<Vec<f64>> = spectral
        .points
        .iter()
        .map(|&x| spectral.eigenfunctions(x))
        .collect();
    let jn = spectral.coeffs.len();
    let mut beta = vec![vec![0.0; jn]; n];
    for (k, &x) in spectral.points.iter().enumerate() {
        let wk = counts[k] / m as f64;
        for (i, row) in beta.iter_mut().enumerate() {
            let psi_flip = spectral.eigenfunctions(flip_bit(x, i));
            for j in 0..jn {
                row[j] += wk * (psi_at[k][j] - psi_flip[j]);
            }
        }
    }
    spectral.beta = beta;
    Ok(ScoreFunction::Spectral(Arc::new(spectral)))
}

/// How the target score is obtained during training.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum ScoreSpec {
    Exact,
    Identity {
        #[serde(default = "default_ridge")]
        eta: f64,
    },
    /// `None` picks [`default_eigenvectors`] for the register size.
    Spectral {
        #[serde(default)]
        eigenvectors: Option<usize>,
    },
}

fn default_ridge() -> f64 {
    DEFAULT_RIDGE
}

impl ScoreSpec {
    pub fn name(&self) -> &'static str {
        match self {
            ScoreSpec::Exact => "exact",
            ScoreSpec::Identity { .. } => "identity",
            ScoreSpec::Spectral { .. } => "spectral",
        }
    }
}
