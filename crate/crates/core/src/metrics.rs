//! Benchmark measures and the inequality harness.

use serde::{Deserialize, Serialize};

use crate::cost_mmd::mmd_exact;
use crate::cost_sinkhorn::{
    exact_ot, regularization_gap_bound, regularized_ot, SinkhornOptions, WeightedSupport,
};
use rand::Rng as _;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernels::Kernel;
use crate::rng::{derive_seed, rng_from_seed, tags};
use crate::sim::ProbabilityVector;

/// Returned by [`kl_divergence`] when absolute continuity fails.
pub const KL_INFINITY: f64 = f64::INFINITY;

/// Slack for inequalities whose sides come from exact arithmetic.
const EXACT_SLACK: f64 = 1e-9;
/// Slack for inequalities involving an iterative Sinkhorn value.
const SINKHORN_SLACK: f64 = 1e-7;

/// `(1/2) sum |p - pi|`.
pub fn tv_distance(p: &ProbabilityVector, target: &ProbabilityVector) -> Result<f64> {
    p.check_same_n(target)?;
    Ok(0.5
        * p.probs()
            .iter()
            .zip(target.probs())
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>())
}

/// `sum pi log(pi / p)`, or [`KL_INFINITY`] if `pi` has mass where `p` has none.
pub fn kl_divergence(target: &ProbabilityVector, p: &ProbabilityVector) -> Result<f64> {
    p.check_same_n(target)?;
    let mut total = 0.0;
    for (&a, &b) in target.probs().iter().zip(p.probs()) {
        if a == 0.0 {
            continue;
        }
        if b == 0.0 {
            return Ok(KL_INFINITY);
        }
        total += a * (a / b).ln();
    }
    Ok(total.max(0.0))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundStatus {
    Holds,
    Violated,
    NotApplicable,
}

/// One checked inequality `lhs <= rhs`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub status: BoundStatus,
}

impl BoundCheck {
    fn new(name: &str, lhs: f64, rhs: f64, slack: f64) -> Self {
        let status = if lhs <= rhs + slack {
            BoundStatus::Holds
        } else {
            BoundStatus::Violated
        };
        Self {
            name: name.to_string(),
            lhs,
            rhs,
            status,
        }
    }

    fn not_applicable(name: &str, lhs: f64) -> Self {
        Self {
            name: name.to_string(),
            lhs,
            rhs: f64::NAN,
            status: BoundStatus::NotApplicable,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub tv: f64,
    pub kl: Option<f64>,
    pub bound_checks: Vec<BoundCheck>,
}

impl MetricReport {
    pub fn all_hold(&self) -> bool {
        self.bound_checks
            .iter()
            .all(|c| c.status != BoundStatus::Violated)
    }
}

/// Evaluate the Pinsker, MMD, OT and regularization-gap inequalities for one pair.
pub fn bound_harness(
    p: &ProbabilityVector,
    target: &ProbabilityVector,
    kernel: &Kernel,
    eps: f64,
    opts: SinkhornOptions,
) -> Result<MetricReport> {
    let n = p.n();
    let tv = tv_distance(p, target)?;
    let kl = kl_divergence(target, p)?;
    let mmd = mmd_exact(p, target, kernel)?.max(0.0);
    let (ps, qs) = (
        WeightedSupport::from_probability(p),
        WeightedSupport::from_probability(target),
    );
    let ot0 = exact_ot(&ps, &qs)?;
    let ot_eps = regularized_ot(&ps, &qs, eps, opts)?;
    let gap = ot_eps - ot0;

    let mut checks = vec![
        BoundCheck::new("tv_le_sqrt_half_kl", tv, (kl / 2.0).sqrt(), EXACT_SLACK),
        BoundCheck::new("sqrt_mmd_le_tv", mmd.sqrt(), tv, EXACT_SLACK),
        BoundCheck::new("tv_le_ot0", tv, ot0, EXACT_SLACK),
        BoundCheck::new("ot0_le_n_tv", ot0, n as f64 * tv, EXACT_SLACK),
        BoundCheck::new("ot_eps_minus_ot0_nonnegative", 0.0, gap, SINKHORN_SLACK),
    ];
    checks.push(match regularization_gap_bound(eps, n) {
        Some(bound) => BoundCheck::new("ot_eps_minus_ot0_le_gap_bound", gap, bound, SINKHORN_SLACK),
        None => BoundCheck::not_applicable("ot_eps_minus_ot0_le_gap_bound", gap),
    });
    Ok(MetricReport {
        tv,
        kl: Some(kl),
        bound_checks: checks,
    })
}

/// Per-inequality tally across many random pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundSummary {
    pub name: String,
    pub holds: usize,
    pub violated: usize,
    pub not_applicable: usize,
    /// Largest `lhs - rhs` over applicable pairs; negative when every pair has room.
    pub worst_margin: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub n: usize,
    pub pairs: usize,
    pub seed: u64,
    pub epsilon: f64,
    pub kernel: String,
    pub summaries: Vec<BoundSummary>,
}

impl BenchReport {
    pub fn all_hold(&self) -> bool {
        self.summaries.iter().all(|s| s.violated == 0)
    }
}

/// Random full-support distribution with Dirichlet(1) weights floored away from zero.
pub fn random_full_support(n: usize, seed: u64) -> Result<ProbabilityVector> {
    let mut rng = rng_from_seed(seed);
    let weights = (0..1usize << n)
        .map(|_| 1e-3 - rng.gen_range(f64::MIN_POSITIVE..1.0f64).ln())
        .collect();
    ProbabilityVector::from_weights(n, weights)
}

/// Run [`bound_harness`] on `pairs` random full-support pairs and tally the outcomes.
pub fn bench(
    n: usize,
    pairs: usize,
    seed: u64,
    eps: f64,
    kernel: &Kernel,
    opts: SinkhornOptions,
) -> Result<BenchReport> {
    if pairs == 0 {
        return Err(Error::InvalidArgument(
            "bench needs at least one pair".into(),
        ));
    }
    if kernel.n() != n {
        return Err(Error::Shape(format!(
            "kernel is for {} qubits, bench for {n}",
            kernel.n()
        )));
    }
    let reports = (0..pairs)
        .into_par_iter()
        .map(|i| {
            let p = random_full_support(n, derive_seed(seed, &[tags::BENCH, i as u64, 0]))?;
            let q = random_full_support(n, derive_seed(seed, &[tags::BENCH, i as u64, 1]))?;
            bound_harness(&p, &q, kernel, eps, opts)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut summaries: Vec<BoundSummary> = reports[0]
        .bound_checks
        .iter()
        .map(|c| BoundSummary {
            name: c.name.clone(),
            holds: 0,
            violated: 0,
            not_applicable: 0,
            worst_margin: f64::NEG_INFINITY,
        })
        .collect();
    for r in &reports {
        for (s, c) in summaries.iter_mut().zip(&r.bound_checks) {
            match c.status {
                BoundStatus::Holds => s.holds += 1,
                BoundStatus::Violated => s.violated += 1,
                BoundStatus::NotApplicable => s.not_applicable += 1,
            }
            if c.status != BoundStatus::NotApplicable {
                s.worst_margin = s.worst_margin.max(c.lhs - c.rhs);
            }
        }
    }
    Ok(BenchReport {
        n,
        pairs,
        seed,
        epsilon: eps,
        kernel: kernel.spec().name().to_string(),
        summaries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::KernelSpec;
    use proptest::prelude::*;
    use rand::Rng;

    fn pv(n: usize, v: &[f64]) -> ProbabilityVector {
        ProbabilityVector::new(n, v.to_vec()).unwrap()
    }

    fn random_pmf(n: usize, seed: u64) -> ProbabilityVector {
        let mut rng = crate::rng::rng_from_seed(seed);
        ProbabilityVector::from_weights(n, (0..1 << n).map(|_| rng.gen_range(0.01..1.0)).collect())
            .unwrap()
    }

    #[test]
    fn tv_hand_values() {
        assert_eq!(
            tv_distance(&pv(1, &[0.9, 0.1]), &pv(1, &[0.9, 0.1])).unwrap(),
            0.0
        );
        assert!(
            (tv_distance(&pv(1, &[0.9, 0.1]), &pv(1, &[0.5, 0.5])).unwrap() - 0.4).abs() < 1e-15
        );
        assert_eq!(
            tv_distance(&pv(1, &[1.0, 0.0]), &pv(1, &[0.0, 1.0])).unwrap(),
            1.0
        );
        assert!(tv_distance(&pv(1, &[1.0, 0.0]), &ProbabilityVector::uniform(2).unwrap()).is_err());
    }

    #[test]
    fn kl_sentinel_and_zero() {
        let p = random_pmf(2, 1);
        assert_eq!(kl_divergence(&p, &p).unwrap(), 0.0);
        assert_eq!(
            kl_divergence(&pv(1, &[0.5, 0.5]), &pv(1, &[1.0, 0.0])).unwrap(),
            KL_INFINITY
        );
        assert!(kl_divergence(&pv(1, &[1.0, 0.0]), &pv(1, &[0.5, 0.5]))
            .unwrap()
            .is_finite());
    }

    #[test]
    fn harness_identical_pair_all_zero() {
        let p = random_pmf(2, 3);
        let k = Kernel::new(&KernelSpec::default(), 2).unwrap();
        let r = bound_harness(&p, &p, &k, 0.1, SinkhornOptions::default()).unwrap();
        assert!(r.all_hold());
        assert_eq!(r.tv, 0.0);
        for c in &r.bound_checks[..4] {
            assert!(c.lhs.abs() < 1e-9 && c.rhs.abs() < 1e-9, "{c:?}");
        }
    }

    #[test]
    fn harness_random_pair_holds() {
        let k = Kernel::new(&KernelSpec::default(), 2).unwrap();
        let r = bound_harness(
            &random_pmf(2, 4),
            &random_pmf(2, 5),
            &k,
            0.1,
            SinkhornOptions::default(),
        )
        .unwrap();
        assert!(r.all_hold(), "{r:?}");
    }

    #[test]
    fn harness_marks_large_eps_not_applicable() {
        let k = Kernel::new(&KernelSpec::default(), 2).unwrap();
        let r = bound_harness(
            &random_pmf(2, 4),
            &random_pmf(2, 5),
            &k,
            20.0,
            SinkhornOptions::default(),
        )
        .unwrap();
        let last = r.bound_checks.last().unwrap();
        assert_eq!(last.status, BoundStatus::NotApplicable);
        assert!(r.all_hold());
    }

    #[test]
    fn bench_tallies_every_pair() {
        let k = Kernel::new(&KernelSpec::default(), 2).unwrap();
        let r = bench(2, 20, 7, 0.1, &k, SinkhornOptions::default()).unwrap();
        assert!(r.all_hold(), "{r:?}");
        for s in &r.summaries {
            assert_eq!(s.holds + s.violated + s.not_applicable, 20);
        }
        assert_eq!(
            r,
            bench(2, 20, 7, 0.1, &k, SinkhornOptions::default()).unwrap()
        );
    }

    proptest! {
        #[test]
        fn tv_is_a_metric(n in 1usize..=3, a in any::<u64>(), b in any::<u64>(), c in any::<u64>()) {
            let (p, q, r) = (random_pmf(n, a), random_pmf(n, b), random_pmf(n, c));
            let pq = tv_distance(&p, &q).unwrap();
            prop_assert!((pq - tv_distance(&q, &p).unwrap()).abs() < 1e-15);
            prop_assert!(tv_distance(&p, &p).unwrap() < 1e-12);
            prop_assert!(pq <= tv_distance(&p, &r).unwrap() + tv_distance(&r, &q).unwrap() + 1e-12);
            prop_assert!((0.0..=1.0).contains(&pq));
        }

        #[test]
        fn pinsker(n in 1usize..=3, a in any::<u64>(), b in any::<u64>()) {
            let (p, q) = (random_pmf(n, a), random_pmf(n, b));
            prop_assert!(tv_distance(&p, &q).unwrap() <= (kl_divergence(&q, &p).unwrap() / 2.0).sqrt() + 1e-12);
        }
    }
}
