//! Maximum mean discrepancy: exact value, unbiased estimator and
//! parameter-shift gradient.

use serde::{Deserialize, Serialize};

use crate::bits::SampleSet;
use crate::error::{Error, Result};
use crate::kernels::Kernel;
use crate::model::{self, CircuitParams, ParamIndex};
use crate::rng::derive_seed;
use crate::sim::{self, ProbabilityVector};

/// A cost estimate and the sample counts behind it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostValue {
    pub value: f64,
    pub n_model_samples: usize,
    pub n_data_samples: usize,
}

/// Distinct points with normalized multiplicities.
pub(crate) fn weighted_points(samples: &SampleSet) -> Vec<(u64, f64)> {
    let mut sorted = samples.samples().to_vec();
    sorted.sort_unstable();
    let total = sorted.len() as f64;
    let mut out: Vec<(u64, f64)> = Vec::new();
    for x in sorted {
        match out.last_mut() {
            Some((y, w)) if *y == x => *w += 1.0,
            _ => out.push((x, 1.0)),
        }
    }
    out.iter_mut().for_each(|(_, w)| *w /= total);
    out
}

pub(crate) fn prob_points(pv: &ProbabilityVector) -> Vec<(u64, f64)> {
    pv.support().collect()
}

pub(crate) fn check_kernel(kernel: &Kernel, n: usize) -> Result<()> {
    if kernel.n() != n {
        return Err(Error::Shape(format!(
            "kernel built for {} qubits, data has {n}",
            kernel.n()
        )));
    }
    Ok(())
}

/// `sum_{x,y} k(x,y) [p(x)p(y) + pi(x)pi(y) - 2 p(x)pi(y)]`.
pub fn mmd_exact(
    p: &ProbabilityVector,
    target: &ProbabilityVector,
    kernel: &Kernel,
) -> Result<f64> {
    p.check_same_n(target)?;
    check_kernel(kernel, p.n())?;
    let diff: Vec<(u64, f64)> = p
        .probs()
        .iter()
        .zip(target.probs())
        .enumerate()
        .filter(|(_, (a, b))| a != b)
        .map(|(x, (a, b))| (x as u64, a - b))
        .collect();
    Ok(kernel.weighted_sum(&diff, &diff))
}

/// Off-diagonal mean of `k` over ordered pairs of distinct sample positions.
fn off_diagonal_mean(points: &[(u64, f64)], m: usize, kernel: &Kernel) -> f64 {
    let full = kernel.weighted_sum(points, points) * (m * m) as f64;
    let diag: f64 = points
        .iter()
        .map(|&(x, w)| w * m as f64 * kernel.eval(x, x))
        .sum();
    (full - diag) / (m * (m - 1)) as f64
}

/// Unbiased U-statistic estimate of the MMD.
pub fn mmd_estimate(model: &SampleSet, data: &SampleSet, kernel: &Kernel) -> Result<CostValue> {
    for s in [model, data] {
        if s.len() < 2 {
            return Err(Error::TooFewSamples {
                needed: 2,
                got: s.len(),
            });
        }
    }
    if model.n() != data.n() {
        return Err(Error::Shape(format!(
            "model samples on {} qubits, data on {}",
            model.n(),
            data.n()
        )));
    }
    check_kernel(kernel, model.n())?;
    let (xp, yp) = (weighted_points(model), weighted_points(data));
    let value = off_diagonal_mean(&xp, model.len(), kernel)
        + off_diagonal_mean(&yp, data.len(), kernel)
        - 2.0 * kernel.weighted_sum(&xp, &yp);
    Ok(CostValue {
        value,
        n_model_samples: model.len(),
        n_data_samples: data.len(),
    })
}

/// Samples from the `(+, -)` shifted circuits for one parameter.
pub(crate) fn shifted_samples(
    params: &CircuitParams,
    idx: ParamIndex,
    count: usize,
    seed: u64,
) -> Result<(SampleSet, SampleSet)> {
    let (plus, minus) = model::shifted_distributions(params, idx)?;
    Ok((
        sim::sample(&plus, count, derive_seed(seed, &[0]))?,
        sim::sample(&minus, count, derive_seed(seed, &[1]))?,
    ))
}

/// Sampled parameter-shift gradient. `a` samples come from the `+` circuit.
pub fn mmd_gradient(
    params: &CircuitParams,
    idx: ParamIndex,
    model: &SampleSet,
    data: &SampleSet,
    kernel: &Kernel,
    shift_samples: usize,
    seed: u64,
) -> Result<f64> {
    check_kernel(kernel, params.n())?;
    let (a, b) = shifted_samples(params, idx, shift_samples, seed)?;
    let (a, b) = (weighted_points(&a), weighted_points(&b));
    let (x, y) = (weighted_points(model), weighted_points(data));
    Ok(2.0 * kernel.weighted_sum(&a, &x)
        - 2.0 * kernel.weighted_sum(&b, &x)
        - 2.0 * kernel.weighted_sum(&a, &y)
        + 2.0 * kernel.weighted_sum(&b, &y))
}

/// Gradient with every expectation taken exactly.
pub fn mmd_gradient_exact(
    params: &CircuitParams,
    idx: ParamIndex,
    target: &ProbabilityVector,
    kernel: &Kernel,
) -> Result<f64> {
    let p = model::build_distribution(params)?;
    p.check_same_n(target)?;
    check_kernel(kernel, p.n())?;
    let (plus, minus) = model::shifted_distributions(params, idx)?;
    let (a, b) = (prob_points(&plus), prob_points(&minus));
    let (x, y) = (prob_points(&p), prob_points(target));
    Ok(2.0 * kernel.weighted_sum(&a, &x)
        - 2.0 * kernel.weighted_sum(&b, &x)
        - 2.0 * kernel.weighted_sum(&a, &y)
        + 2.0 * kernel.weighted_sum(&b, &y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::KernelSpec;

    fn gauss(n: usize, s: &[f64]) -> Kernel {
        Kernel::new(
            &KernelSpec::Gaussian {
                bandwidths: s.to_vec(),
            },
            n,
        )
        .unwrap()
    }

    #[test]
    fn exact_mmd_hand_value() {
        let p = ProbabilityVector::new(1, vec![1.0, 0.0]).unwrap();
        let q = ProbabilityVector::new(1, vec![0.0, 1.0]).unwrap();
        let k = gauss(1, &[1.0]);
        let want = 2.0 * (1.0 - (-0.5f64).exp());
        assert!((mmd_exact(&p, &q, &k).unwrap() - want).abs() < 1e-15);
        assert!((mmd_exact(&q, &p, &k).unwrap() - want).abs() < 1e-15);
        assert_eq!(mmd_exact(&p, &p, &k).unwrap(), 0.0);
    }

    #[test]
    fn estimator_zero_on_identical_one_hot_samples() {
        let x = SampleSet::new(2, vec![3; 6]).unwrap();
        let k = gauss(2, &[0.25, 10.0, 1000.0]);
        assert_eq!(mmd_estimate(&x, &x, &k).unwrap().value, 0.0);
    }

    #[test]
    fn estimator_needs_two_samples() {
        let x = SampleSet::new(2, vec![3]).unwrap();
        let k = gauss(2, &[1.0]);
        assert!(matches!(
            mmd_estimate(&x, &x, &k),
            Err(Error::TooFewSamples { .. })
        ));
    }

    #[test]
    fn estimator_can_be_negative() {
        let k = gauss(2, &[0.25, 10.0, 1000.0]);
        let found = (0..200u64).any(|seed| {
            let p = ProbabilityVector::uniform(2).unwrap();
            let x = sim::sample(&p, 3, seed).unwrap();
            let y = sim::sample(&p, 3, seed + 1000).unwrap();
            mmd_estimate(&x, &y, &k).unwrap().value < 0.0
        });
        assert!(found);
    }

    #[test]
    fn estimator_matches_naive_pair_loops() {
        let k = gauss(3, &[0.25, 10.0, 1000.0]);
        let x = SampleSet::new(3, vec![0, 1, 1, 5, 7]).unwrap();
        let y = SampleSet::new(3, vec![2, 2, 6, 0]).unwrap();
        let (xs, ys) = (x.samples(), y.samples());
        let mut xx = 0.0;
        for i in 0..xs.len() {
            for j in 0..xs.len() {
                if i != j {
                    xx += k.eval(xs[i], xs[j]);
                }
            }
        }
        let mut yy = 0.0;
        for i in 0..ys.len() {
            for j in 0..ys.len() {
                if i != j {
                    yy += k.eval(ys[i], ys[j]);
                }
            }
        }
        let xy: f64 = xs
            .iter()
            .flat_map(|&a| ys.iter().map(move |&b| (a, b)))
            .map(|(a, b)| k.eval(a, b))
            .sum();
        let want = xx / 20.0 + yy / 12.0 - 2.0 * xy / 20.0;
        assert!((mmd_estimate(&x, &y, &k).unwrap().value - want).abs() < 1e-12);
    }
}
