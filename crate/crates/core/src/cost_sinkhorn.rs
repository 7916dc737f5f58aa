//! Entropically regularized optimal transport with the Hamming cost, computed
//! with log-domain Sinkhorn iterations, plus an exact LP oracle.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::bits::{hamming, SampleSet};
use crate::cost_mmd::{shifted_samples, weighted_points, CostValue};
use crate::error::{Error, Result};
use crate::model::{self, CircuitParams, ParamIndex};
use crate::sim::ProbabilityVector;

pub use crate::data::WeightedSupport;

pub const DEFAULT_EPSILON: f64 = 0.1;

/// Largest support size the exact OT oracle accepts.
pub const EXACT_OT_MAX_SUPPORT: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SinkhornOptions {
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for SinkhornOptions {
    fn default() -> Self {
        Self {
            max_iters: 5000,
            tol: 1e-9,
        }
    }
}

impl SinkhornOptions {
    /// Iteration budget for a given `eps`; small `eps` gets proportionally more.
    pub fn budget(&self, eps: f64) -> usize {
        if eps < DEFAULT_EPSILON {
            self.max_iters
                .saturating_mul((DEFAULT_EPSILON / eps).ceil() as usize)
        } else {
            self.max_iters
        }
    }
}

/// A measure given either by samples, an exact distribution or a support.
#[derive(Clone, Copy, Debug)]
pub enum Measure<'a> {
    Samples(&'a SampleSet),
    Exact(&'a ProbabilityVector),
    Support(&'a WeightedSupport),
}

impl Measure<'_> {
    pub fn to_support(&self) -> Result<WeightedSupport> {
        match self {
            Measure::Samples(s) => WeightedSupport::from_samples(s),
            Measure::Exact(p) => Ok(WeightedSupport::from_probability(p)),
            Measure::Support(w) => Ok((*w).clone()),
        }
    }

    fn count(&self) -> usize {
        match self {
            Measure::Samples(s) => s.len(),
            _ => 0,
        }
    }
}

/// Hamming (l1) cost between two point lists.
pub fn cost_matrix(xs: &[u64], ys: &[u64]) -> DMatrix<f64> {
    DMatrix::from_fn(xs.len(), ys.len(), |i, j| hamming(xs[i], ys[j]) as f64)
}

/// Dual and autocorrelation potentials.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Potentials {
    pub f: Vec<f64>,
    pub g: Vec<f64>,
    pub s: Vec<f64>,
    pub t: Vec<f64>,
    pub iterations_used: usize,
    pub converged: bool,
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + values.map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// `-eps * LSE_k(logw_k + pot_k/eps - cost(k)/eps)`.
fn soft_min(logw: &[f64], pot: &[f64], cost: impl Fn(usize) -> f64, eps: f64) -> f64 {
    -eps * log_sum_exp((0..logw.len()).map(|k| logw[k] + pot[k] / eps - cost(k) / eps))
}

struct Problem {
    log_p: Vec<f64>,
    log_q: Vec<f64>,
    c_pq: DMatrix<f64>,
    c_pp: DMatrix<f64>,
    c_qq: DMatrix<f64>,
}

fn max_change(old: &[f64], new: &[f64]) -> f64 {
    old.iter()
        .zip(new)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}

impl Problem {
    /// One sweep of all four updates; returns the largest potential change.
    fn sweep(&self, pot: &mut Potentials, eps: f64) -> f64 {
        let (np, nq) = (self.log_p.len(), self.log_q.len());
        let f: Vec<f64> = (0..np)
            .map(|i| soft_min(&self.log_q, &pot.g, |k| self.c_pq[(i, k)], eps))
            .collect();
        let g: Vec<f64> = (0..nq)
            .map(|j| soft_min(&self.log_p, &f, |k| self.c_pq[(k, j)], eps))
            .collect();
        let s: Vec<f64> = (0..np)
            .map(|i| 0.5 * (pot.s[i] + soft_min(&self.log_p, &pot.s, |k| self.c_pp[(i, k)], eps)))
            .collect();
        let t: Vec<f64> = (0..nq)
            .map(|j| 0.5 * (pot.t[j] + soft_min(&self.log_q, &pot.t, |k| self.c_qq[(j, k)], eps)))
            .collect();
        let change = max_change(&pot.f, &f)
            .max(max_change(&pot.g, &g))
            .max(max_change(&pot.s, &s))
            .max(max_change(&pot.t, &t));
        pot.f = f;
        pot.g = g;
        pot.s = s;
        pot.t = t;
        change
    }
}

fn check_eps(eps: f64) -> Result<()> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "regularization must be positive, got {eps}"
        )));
    }
    Ok(())
}

/// Log-domain Sinkhorn potentials for `(p, q)`.
///
/// For `eps < 0.1` the iteration is warm-started through a geometric sequence
/// of larger regularizations, which leaves the fixed point unchanged.
pub fn sinkhorn_potentials(
    p: &WeightedSupport,
    q: &WeightedSupport,
    eps: f64,
    opts: SinkhornOptions,
) -> Result<Potentials> {
    check_eps(eps)?;
    if p.n() != q.n() {
        return Err(Error::Shape(format!(
            "supports on {} and {} qubits",
            p.n(),
            q.n()
        )));
    }
    let problem = Problem {
        log_p: p.weights().iter().map(|w| w.ln()).collect(),
        log_q: q.weights().iter().map(|w| w.ln()).collect(),
        c_pq: cost_matrix(p.points(), q.points()),
        c_pp: cost_matrix(p.points(), p.points()),
        c_qq: cost_matrix(q.points(), q.points()),
    };
    let mut pot = Potentials {
        f: vec![0.0; p.len()],
        g: vec![0.0; q.len()],
        s: vec![0.0; p.len()],
        t: vec![0.0; q.len()],
        iterations_used: 0,
        converged: false,
    };
    let budget = opts.budget(eps);
    let mut schedule = Vec::new();
    if eps < DEFAULT_EPSILON {
        let mut e = p.n() as f64;
        while e > eps {
            schedule.push(e);
            e *= 0.5;
        }
    }
    schedule.push(eps);
    let last = schedule.len() - 1;
    for (stage, &e) in schedule.iter().enumerate() {
        let stage_tol = if stage == last {
            opts.tol
        } else {
            opts.tol.max(1e-6 * e)
        };
        loop {
            if pot.iterations_used >= budget {
                break;
            }
            let change = problem.sweep(&mut pot, e);
            pot.iterations_used += 1;
            if !change.is_finite() {
                return Err(Error::Numerical("Sinkhorn potentials diverged".into()));
            }
            if change < stage_tol {
                if stage == last {
                    pot.converged = true;
                }
                break;
            }
        }
    }
    Ok(pot)
}

/// Converged potentials together with the measures that produced them.
#[derive(Clone, Debug)]
pub struct SinkhornSolution {
    pub p: WeightedSupport,
    pub q: WeightedSupport,
    pub eps: f64,
    pub potentials: Potentials,
}

impl SinkhornSolution {
    pub fn solve(
        p: WeightedSupport,
        q: WeightedSupport,
        eps: f64,
        opts: SinkhornOptions,
    ) -> Result<Self> {
        let potentials = sinkhorn_potentials(&p, &q, eps, opts)?;
        Ok(Self {
            p,
            q,
            eps,
            potentials,
        })
    }

    /// Debiased divergence `sum p (f - s) + sum q (g - t)`.
    pub fn divergence(&self) -> f64 {
        let pot = &self.potentials;
        let a: f64 = self
            .p
            .weights()
            .iter()
            .zip(pot.f.iter().zip(&pot.s))
            .map(|(w, (f, s))| w * (f - s))
            .sum();
        let b: f64 = self
            .q
            .weights()
            .iter()
            .zip(pot.g.iter().zip(&pot.t))
            .map(|(w, (g, t))| w * (g - t))
            .sum();
        a + b
    }

    /// Regularized transport cost `sum p f + sum q g`.
    pub fn regularized_cost(&self) -> f64 {
        let pot = &self.potentials;
        let a: f64 = self
            .p
            .weights()
            .iter()
            .zip(&pot.f)
            .map(|(w, f)| w * f)
            .sum();
        let b: f64 = self
            .q
            .weights()
            .iter()
            .zip(&pot.g)
            .map(|(w, g)| w * g)
            .sum();
        a + b
    }

    /// Transport plan `p_i q_j exp((f_i + g_j - C_ij) / eps)`.
    pub fn plan(&self) -> DMatrix<f64> {
        let c = cost_matrix(self.p.points(), self.q.points());
        let pot = &self.potentials;
        DMatrix::from_fn(self.p.len(), self.q.len(), |i, j| {
            self.p.weights()[i]
                * self.q.weights()[j]
                * ((pot.f[i] + pot.g[j] - c[(i, j)]) / self.eps).exp()
        })
    }

    /// Derivative of the divergence with respect to model probability at `x`,
    /// extended off the model support.
    pub fn gradient_potential(&self, x: u64) -> f64 {
        let eps = self.eps;
        let log_q: Vec<f64> = self.q.weights().iter().map(|w| w.ln()).collect();
        let log_p: Vec<f64> = self.p.weights().iter().map(|w| w.ln()).collect();
        let cross = soft_min(
            &log_q,
            &self.potentials.g,
            |k| hamming(x, self.q.points()[k]) as f64,
            eps,
        );
        let auto = soft_min(
            &log_p,
            &self.potentials.s,
            |k| hamming(x, self.p.points()[k]) as f64,
            eps,
        );
        cross - auto
    }
}

/// Divergence value plus convergence diagnostics.
#[derive(Clone, Debug)]
pub struct SinkhornCost {
    pub cost: CostValue,
    pub converged: bool,
    pub solution: SinkhornSolution,
}

/// Debiased Sinkhorn divergence between two measures.
pub fn sinkhorn_divergence(
    x: Measure<'_>,
    y: Measure<'_>,
    eps: f64,
    opts: SinkhornOptions,
) -> Result<SinkhornCost> {
    let solution = SinkhornSolution::solve(x.to_support()?, y.to_support()?, eps, opts)?;
    let cost = CostValue {
        value: solution.divergence(),
        n_model_samples: x.count(),
        n_data_samples: y.count(),
    };
    Ok(SinkhornCost {
        cost,
        converged: solution.potentials.converged,
        solution,
    })
}

/// Regularized OT cost `OT_eps(p, q)`.
pub fn regularized_ot(
    p: &WeightedSupport,
    q: &WeightedSupport,
    eps: f64,
    opts: SinkhornOptions,
) -> Result<f64> {
    Ok(SinkhornSolution::solve(p.clone(), q.clone(), eps, opts)?.regularized_cost())
}

/// Exact optimal transport cost under the Hamming metric, via a transportation LP.
pub fn exact_ot(p: &WeightedSupport, q: &WeightedSupport) -> Result<f64> {
    exact_ot_with_cost(p, q, &cost_matrix(p.points(), q.points()))
}

/// Exact optimal transport for an explicit cost matrix.
pub fn exact_ot_with_cost(
    p: &WeightedSupport,
    q: &WeightedSupport,
    cost: &DMatrix<f64>,
) -> Result<f64> {
    use minilp::{ComparisonOp, LinearExpr, OptimizationDirection, Problem};

    let (np, nq) = (p.len(), q.len());
    if np > EXACT_OT_MAX_SUPPORT || nq > EXACT_OT_MAX_SUPPORT {
        return Err(Error::Capacity(format!(
            "exact OT limited to supports of {EXACT_OT_MAX_SUPPORT} points"
        )));
    }
    if cost.shape() != (np, nq) {
        return Err(Error::Shape(format!(
            "cost matrix {:?} for supports {np}x{nq}",
            cost.shape()
        )));
    }
    let mut lp = Problem::new(OptimizationDirection::Minimize);
    let vars: Vec<Vec<_>> = (0..np)
        .map(|i| {
            (0..nq)
                .map(|j| lp.add_var(cost[(i, j)], (0.0, f64::INFINITY)))
                .collect()
        })
        .collect();
    for i in 0..np {
        let mut e = LinearExpr::empty();
        vars[i].iter().for_each(|&v| e.add(v, 1.0));
        lp.add_constraint(e, ComparisonOp::Eq, p.weights()[i]);
    }
    // One column constraint is implied by the others and the total mass.
    for j in 0..nq.saturating_sub(1) {
        let mut e = LinearExpr::empty();
        vars.iter().for_each(|row| e.add(row[j], 1.0));
        lp.add_constraint(e, ComparisonOp::Eq, q.weights()[j]);
    }
    let sol = lp
        .solve()
        .map_err(|e| Error::Numerical(format!("transport LP failed: {e}")))?;
    Ok(sol.objective())
}

/// Sampled parameter-shift gradient using the epoch's solution.
pub fn sinkhorn_gradient(
    params: &CircuitParams,
    idx: ParamIndex,
    solution: &SinkhornSolution,
    shift_samples: usize,
    seed: u64,
) -> Result<f64> {
    let (a, b) = shifted_samples(params, idx, shift_samples, seed)?;
    let mean = |s: &SampleSet| {
        weighted_points(s)
            .iter()
            .map(|&(x, w)| w * solution.gradient_potential(x))
            .sum::<f64>()
    };
    Ok(mean(&a) - mean(&b))
}

/// Gradient with exact shifted distributions.
pub fn sinkhorn_gradient_exact(
    params: &CircuitParams,
    idx: ParamIndex,
    solution: &SinkhornSolution,
) -> Result<f64> {
    let grad = model::prob_gradient(params, idx)?;
    Ok(grad
        .iter()
        .enumerate()
        .filter(|(_, d)| **d != 0.0)
        .map(|(x, d)| d * solution.gradient_potential(x as u64))
        .sum())
}

/// Upper bound `2 eps log(e^2 L D / (n eps))` on `OT_eps - OT_0` with `L = D = n`,
/// or `None` when `eps > n e^2`.
pub fn regularization_gap_bound(eps: f64, n: usize) -> Option<f64> {
    let nf = n as f64;
    let e2 = std::f64::consts::E.powi(2);
    if eps > nf * e2 {
        return None;
    }
    Some(2.0 * eps * (e2 * nf * nf / (nf * eps)).ln())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_support(n: usize, seed: u64) -> WeightedSupport {
        let mut rng = crate::rng::rng_from_seed(seed);
        let pv = ProbabilityVector::from_weights(
            n,
            (0..1 << n).map(|_| rng.gen_range(0.05..1.0)).collect(),
        )
        .unwrap();
        WeightedSupport::from_probability(&pv)
    }

    #[test]
    fn cost_matrix_hand_values() {
        let c = cost_matrix(&[0b000, 0b101], &[0b000, 0b111, 0b101]);
        assert_eq!(c[(0, 0)], 0.0);
        assert_eq!(c[(0, 1)], 3.0);
        assert_eq!(c[(0, 2)], 2.0);
        assert_eq!(c[(1, 2)], 0.0);
    }

    #[test]
    fn single_point_supports() {
        let d = WeightedSupport::new(2, vec![1], vec![1.0]).unwrap();
        let pot = sinkhorn_potentials(&d, &d, 0.1, SinkhornOptions::default()).unwrap();
        assert!(pot
            .f
            .iter()
            .chain(&pot.g)
            .chain(&pot.s)
            .chain(&pot.t)
            .all(|v| v.abs() < 1e-12));
        assert!(
            regularized_ot(&d, &d, 0.1, SinkhornOptions::default())
                .unwrap()
                .abs()
                < 1e-12
        );
        assert!(sinkhorn_potentials(&d, &d, 0.0, SinkhornOptions::default()).is_err());
    }

    #[test]
    fn plan_has_requested_marginals() {
        let (p, q) = (random_support(3, 1), random_support(3, 2));
        for eps in [0.05, 0.1, 1.0] {
            let sol =
                SinkhornSolution::solve(p.clone(), q.clone(), eps, SinkhornOptions::default())
                    .unwrap();
            assert!(sol.potentials.converged);
            let plan = sol.plan();
            for i in 0..p.len() {
                assert!((plan.row(i).sum() - p.weights()[i]).abs() < 1e-6);
            }
            for j in 0..q.len() {
                assert!((plan.column(j).sum() - q.weights()[j]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn divergence_invariant_under_relabeling() {
        let (p, q) = (random_support(2, 3), random_support(2, 4));
        let rev = |w: &WeightedSupport| {
            WeightedSupport::new(
                w.n(),
                w.points().iter().rev().copied().collect(),
                w.weights().iter().rev().copied().collect(),
            )
            .unwrap()
        };
        let opts = SinkhornOptions::default();
        let a = sinkhorn_divergence(Measure::Support(&p), Measure::Support(&q), 0.2, opts)
            .unwrap()
            .cost
            .value;
        let b = sinkhorn_divergence(
            Measure::Support(&rev(&p)),
            Measure::Support(&rev(&q)),
            0.2,
            opts,
        )
        .unwrap()
        .cost
        .value;
        assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn potential_extension_agrees_on_support() {
        let (p, q) = (random_support(2, 5), random_support(2, 6));
        let sol = SinkhornSolution::solve(
            p.clone(),
            q,
            0.3,
            SinkhornOptions {
                max_iters: 100_000,
                tol: 1e-13,
            },
        )
        .unwrap();
        for (i, &x) in p.points().iter().enumerate() {
            let want = sol.potentials.f[i] - sol.potentials.s[i];
            assert!((sol.gradient_potential(x) - want).abs() < 1e-8);
        }
    }

    #[test]
    fn exact_ot_trivial_cases() {
        let p = random_support(2, 7);
        assert!(exact_ot(&p, &p).unwrap().abs() < 1e-12);
        let a = WeightedSupport::new(3, vec![0b001], vec![1.0]).unwrap();
        let b = WeightedSupport::new(3, vec![0b110], vec![1.0]).unwrap();
        assert!((exact_ot(&a, &b).unwrap() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn exact_ot_on_two_points_by_hand() {
        // Moving 0.3 mass across distance 1 on n = 1.
        let p = WeightedSupport::new(1, vec![0, 1], vec![0.8, 0.2]).unwrap();
        let q = WeightedSupport::new(1, vec![0, 1], vec![0.5, 0.5]).unwrap();
        assert!((exact_ot(&p, &q).unwrap() - 0.3).abs() < 1e-12);
    }

    #[test]
    fn log_domain_is_stable_at_small_eps() {
        for n in 1..=4 {
            let (p, q) = (
                random_support(n, 10 + n as u64),
                random_support(n, 20 + n as u64),
            );
            let pot = sinkhorn_potentials(&p, &q, 0.01, SinkhornOptions::default()).unwrap();
            assert!(pot
                .f
                .iter()
                .chain(&pot.g)
                .chain(&pot.s)
                .chain(&pot.t)
                .all(|v| v.is_finite()));
        }
    }

    #[test]
    fn gap_bound_applicability() {
        assert!(regularization_gap_bound(0.1, 2).unwrap() > 0.0);
        assert!(regularization_gap_bound(2.0 * 7.39 + 0.1, 2).is_none());
    }

    #[test]
    fn large_epsilon_tends_to_half_negative_cost_mmd() {
        for seed in 0..5 {
            let p =
                ProbabilityVector::from_weights(2, vec![0.1, 0.4, 0.3, 0.2 + 0.05 * seed as f64])
                    .unwrap();
            let q =
                ProbabilityVector::from_weights(2, vec![0.3, 0.2, 0.1 + 0.1 * seed as f64, 0.4])
                    .unwrap();
            let d: Vec<f64> = p
                .probs()
                .iter()
                .zip(q.probs())
                .map(|(a, b)| a - b)
                .collect();
            let mut mmd = 0.0;
            for (x, dx) in d.iter().enumerate() {
                for (y, dy) in d.iter().enumerate() {
                    mmd -= dx * dy * (x ^ y).count_ones() as f64;
                }
            }
            let s = sinkhorn_divergence(
                Measure::Exact(&p),
                Measure::Exact(&q),
                1e4,
                SinkhornOptions::default(),
            )
            .unwrap();
            assert!(
                (s.cost.value - 0.5 * mmd).abs() < 1e-3,
                "seed {seed}: {} vs {}",
                s.cost.value,
                0.5 * mmd
            );
        }
    }
}
