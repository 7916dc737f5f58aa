//! Dense statevector simulation of the Ising Born machine circuit.
//!
//! Basis index bit `k` holds qubit `k`; the Z eigenvalue of bit value `x_k` is
//! `(-1)^{x_k}`. Global phases are kept.

use num_complex::Complex64;

use crate::bits::{check_qubits, SampleSet};
use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

pub type Gate = [[Complex64; 2]; 2];

/// A normalized vector of `2^n` amplitudes.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    n: usize,
    amps: Vec<Complex64>,
}

impl StateVector {
    /// Wrap amplitudes, checking length and norm (within 1e-10).
    pub fn new(n: usize, amps: Vec<Complex64>) -> Result<Self> {
        check_qubits(n)?;
        if amps.len() != 1 << n {
            return Err(Error::Shape(format!(
                "{} amplitudes for {n} qubits",
                amps.len()
            )));
        }
        let norm: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
        if (norm - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidArgument(format!(
                "state norm {norm} is not 1"
            )));
        }
        Ok(Self { n, amps })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn inner(&self, other: &Self) -> Result<Complex64> {
        if self.n != other.n {
            return Err(Error::Shape(format!(
                "inner product of {} and {} qubits",
                self.n, other.n
            )));
        }
        Ok(self
            .amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a.conj() * b)
            .sum())
    }
}

/// An exact distribution over `{0,1}^n`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbabilityVector {
    n: usize,
    probs: Vec<f64>,
}

impl ProbabilityVector {
    /// Wrap probabilities, checking length, signs and normalization (within 1e-9).
    pub fn new(n: usize, probs: Vec<f64>) -> Result<Self> {
        check_qubits(n)?;
        if probs.len() != 1 << n {
            return Err(Error::Shape(format!(
                "{} probabilities for {n} qubits",
                probs.len()
            )));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::InvalidArgument(
                "probabilities must be finite and nonnegative".into(),
            ));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "probabilities sum to {total}"
            )));
        }
        Ok(Self { n, probs })
    }

    /// Normalize nonnegative weights.
    pub fn from_weights(n: usize, weights: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::InvalidArgument(
                "weights must have positive finite sum".into(),
            ));
        }
        Self::new(n, weights.into_iter().map(|w| w / total).collect())
    }

    pub fn uniform(n: usize) -> Result<Self> {
        check_qubits(n)?;
        let d = 1usize << n;
        Ok(Self {
            n,
            probs: vec![1.0 / d as f64; d],
        })
    }

    pub fn point_mass(n: usize, x: u64) -> Result<Self> {
        check_qubits(n)?;
        if x >> n != 0 {
            return Err(Error::InvalidArgument(format!(
                "index {x} does not fit in {n} bits"
            )));
        }
        let mut probs = vec![0.0; 1 << n];
        probs[x as usize] = 1.0;
        Ok(Self { n, probs })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn get(&self, x: u64) -> f64 {
        self.probs[x as usize]
    }

    /// Indices with nonzero probability.
    pub fn support(&self) -> impl Iterator<Item = (u64, f64)> + '_ {
        self.probs
            .iter()
            .enumerate()
            .filter(|(_, p)| **p > 0.0)
            .map(|(x, p)| (x as u64, *p))
    }

    pub(crate) fn check_same_n(&self, other: &Self) -> Result<()> {
        if self.n != other.n {
            return Err(Error::Shape(format!(
                "distributions on {} and {} qubits",
                self.n, other.n
            )));
        }
        Ok(())
    }
}

pub fn init_zero_state(n: usize) -> Result<StateVector> {
    check_qubits(n)?;
    let mut amps = vec![Complex64::new(0.0, 0.0); 1 << n];
    amps[0] = Complex64::new(1.0, 0.0);
    Ok(StateVector { n, amps })
}

/// `|+>^n`: every amplitude equals `2^{-n/2}`.
pub fn init_plus_state(n: usize) -> Result<StateVector> {
    check_qubits(n)?;
    let a = (0.5f64).powf(n as f64 / 2.0);
    Ok(StateVector {
        n,
        amps: vec![Complex64::new(a, 0.0); 1 << n],
    })
}

/// Multiply amplitude `x` by `exp(i * phase(x))`.
pub fn apply_diagonal_phases(mut state: StateVector, phase: impl Fn(u64) -> f64) -> StateVector {
    for (x, a) in state.amps.iter_mut().enumerate() {
        *a *= Complex64::from_polar(1.0, phase(x as u64));
    }
    state
}

#[inline]
pub(crate) fn z(x: u64, k: usize) -> f64 {
    if (x >> k) & 1 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Ising energy `sum_{i<j} J_ij z_i z_j + sum_k b_k z_k` of basis index `x`.
pub fn ising_phase(x: u64, couplings: &[Vec<f64>], local: &[f64]) -> f64 {
    let n = local.len();
    let mut e = 0.0;
    for i in 0..n {
        let zi = z(x, i);
        e += local[i] * zi;
        for j in (i + 1)..n {
            let jij = couplings[i][j];
            if jij != 0.0 {
                e += jij * zi * z(x, j);
            }
        }
    }
    e
}

pub(crate) fn check_couplings(n: usize, couplings: &[Vec<f64>]) -> Result<()> {
    if couplings.len() != n || couplings.iter().any(|row| row.len() != n) {
        return Err(Error::Shape(format!("coupling matrix must be {n}x{n}")));
    }
    for i in 0..n {
        if couplings[i][i] != 0.0 {
            return Err(Error::InvalidArgument(format!(
                "coupling diagonal entry ({i},{i}) is nonzero"
            )));
        }
        for j in (i + 1)..n {
            if couplings[i][j] != couplings[j][i] {
                return Err(Error::InvalidArgument(format!(
                    "coupling matrix not symmetric at ({i},{j})"
                )));
            }
        }
    }
    Ok(())
}

/// Apply `exp(i(sum_{i<j} J_ij Z_i Z_j + sum_k b_k Z_k))`.
pub fn apply_ising_diagonal(
    state: StateVector,
    couplings: &[Vec<f64>],
    local: &[f64],
) -> Result<StateVector> {
    let n = state.n;
    check_couplings(n, couplings)?;
    if local.len() != n {
        return Err(Error::Shape(format!(
            "{} local fields for {n} qubits",
            local.len()
        )));
    }
    Ok(apply_diagonal_phases(state, |x| {
        ising_phase(x, couplings, local)
    }))
}

/// `cos|v| I + i sin|v| (v/|v|)·(X, Y, Z)` with `v = (gamma, delta, sigma)`.
pub fn final_layer_gate(gamma: f64, delta: f64, sigma: f64) -> Gate {
    let theta = (gamma * gamma + delta * delta + sigma * sigma).sqrt();
    let one = Complex64::new(1.0, 0.0);
    let zero = Complex64::new(0.0, 0.0);
    if theta == 0.0 {
        return [[one, zero], [zero, one]];
    }
    let (s, c) = theta.sin_cos();
    let (vx, vy, vz) = (gamma / theta, delta / theta, sigma / theta);
    [
        [Complex64::new(c, s * vz), Complex64::new(s * vy, s * vx)],
        [Complex64::new(-s * vy, s * vx), Complex64::new(c, -s * vz)],
    ]
}

pub fn hadamard_gate() -> Gate {
    let h = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    [[h, h], [h, -h]]
}

/// Apply a 2x2 gate to qubit `k`.
pub fn apply_single_qubit(mut state: StateVector, k: usize, gate: &Gate) -> Result<StateVector> {
    if k >= state.n {
        return Err(Error::InvalidArgument(format!(
            "qubit {k} out of range for {} qubits",
            state.n
        )));
    }
    let stride = 1usize << k;
    let len = state.amps.len();
    let mut base = 0;
    while base < len {
        for lo in base..base + stride {
            let hi = lo + stride;
            let (a0, a1) = (state.amps[lo], state.amps[hi]);
            state.amps[lo] = gate[0][0] * a0 + gate[0][1] * a1;
            state.amps[hi] = gate[1][0] * a0 + gate[1][1] * a1;
        }
        base += 2 * stride;
    }
    Ok(state)
}

pub fn apply_hadamard_all(mut state: StateVector) -> StateVector {
    let h = hadamard_gate();
    for k in 0..state.n {
        state = apply_single_qubit(state, k, &h).expect("qubit index in range");
    }
    state
}

/// Apply the per-qubit final layer.
pub fn apply_final_layer(
    mut state: StateVector,
    gamma: &[f64],
    delta: &[f64],
    sigma: &[f64],
) -> Result<StateVector> {
    let n = state.n;
    if gamma.len() != n || delta.len() != n || sigma.len() != n {
        return Err(Error::Shape(format!(
            "final layer lengths ({}, {}, {}) for {n} qubits",
            gamma.len(),
            delta.len(),
            sigma.len()
        )));
    }
    for k in 0..n {
        if gamma[k] == 0.0 && delta[k] == 0.0 && sigma[k] == 0.0 {
            continue;
        }
        state = apply_single_qubit(state, k, &final_layer_gate(gamma[k], delta[k], sigma[k]))?;
    }
    Ok(state)
}

pub fn born_probabilities(state: &StateVector) -> ProbabilityVector {
    let probs: Vec<f64> = state.amps.iter().map(|a| a.norm_sqr()).collect();
    let total: f64 = probs.iter().sum();
    ProbabilityVector {
        n: state.n,
        probs: probs.into_iter().map(|p| p / total).collect(),
    }
}

/// Inverse-CDF sampler over a fixed distribution.
pub struct Sampler {
    n: usize,
    cumulative: Vec<f64>,
}

impl Sampler {
    pub fn new(pv: &ProbabilityVector) -> Self {
        let mut acc = 0.0;
        let cumulative = pv
            .probs
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        Self {
            n: pv.n,
            cumulative,
        }
    }

    pub fn draw(&self, rng: &mut impl rand::Rng) -> u64 {
        let total = *self.cumulative.last().expect("nonempty distribution");
        let u = rng.gen::<f64>() * total;
        let idx = self.cumulative.partition_point(|&c| c <= u);
        // Skip trailing zero-probability outcomes hit by round-off.
        let mut idx = idx.min(self.cumulative.len() - 1);
        while idx > 0 && self.cumulative[idx] == self.cumulative[idx - 1] {
            idx -= 1;
        }
        idx as u64
    }

    pub fn draw_many(&self, count: usize, seed: u64) -> SampleSet {
        let mut rng = rng_from_seed(seed);
        let samples = (0..count).map(|_| self.draw(&mut rng)).collect();
        SampleSet::new(self.n, samples).expect("sampler indices fit")
    }
}

/// Draw `count` i.i.d. bitstrings from `pv`.
pub fn sample(pv: &ProbabilityVector, count: usize, seed: u64) -> Result<SampleSet> {
    if count == 0 {
        return Err(Error::InvalidArgument(
            "sample count must be at least 1".into(),
        ));
    }
    Ok(Sampler::new(pv).draw_many(count, seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn plus_state_is_uniform() {
        let s = init_plus_state(1).unwrap();
        assert!((s.amplitudes()[0].re - 1.0 / 2f64.sqrt()).abs() < 1e-15);
        let s = init_plus_state(2).unwrap();
        assert!(s
            .amplitudes()
            .iter()
            .all(|a| (a.re - 0.5).abs() < 1e-15 && a.im == 0.0));
        let s = init_plus_state(3).unwrap();
        assert!((s.norm_sqr() - 1.0).abs() < 1e-12);
        assert!(matches!(init_plus_state(0), Err(Error::Capacity(_))));
        assert!(matches!(init_plus_state(25), Err(Error::Capacity(_))));
    }

    #[test]
    fn ising_phase_on_single_qubit() {
        let s = init_plus_state(1).unwrap();
        let out = apply_ising_diagonal(s, &[vec![0.0]], &[FRAC_PI_2]).unwrap();
        let a = 1.0 / 2f64.sqrt();
        assert!((out.amplitudes()[0] - c(0.0, a)).norm() < 1e-15);
        assert!((out.amplitudes()[1] - c(0.0, -a)).norm() < 1e-15);
    }

    #[test]
    fn zero_parameters_are_identity() {
        let s = init_plus_state(2).unwrap();
        let j = vec![vec![0.0; 2]; 2];
        let out = apply_ising_diagonal(s.clone(), &j, &[0.0, 0.0]).unwrap();
        assert_eq!(out, s);
        let out = apply_final_layer(s.clone(), &[0.0; 2], &[0.0; 2], &[0.0; 2]).unwrap();
        assert_eq!(out, s);
    }

    #[test]
    fn shape_errors() {
        let s = init_plus_state(2).unwrap();
        assert!(matches!(
            apply_ising_diagonal(s.clone(), &[vec![0.0]], &[0.0, 0.0]),
            Err(Error::Shape(_))
        ));
        assert!(matches!(
            apply_final_layer(s, &[0.0], &[0.0; 2], &[0.0; 2]),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn iqp_gate_is_i_hadamard() {
        let a = PI / (2.0 * 2f64.sqrt());
        let g = final_layer_gate(a, 0.0, a);
        let h = hadamard_gate();
        for r in 0..2 {
            for col in 0..2 {
                assert!((g[r][col] - c(0.0, 1.0) * h[r][col]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn qubit_zero_is_least_significant() {
        // X on qubit 0 of |00> gives index 1, which prints as "10".
        let x = [[c(0.0, 0.0), c(1.0, 0.0)], [c(1.0, 0.0), c(0.0, 0.0)]];
        let s = apply_single_qubit(init_zero_state(2).unwrap(), 0, &x).unwrap();
        let p = born_probabilities(&s);
        assert_eq!(p.probs(), &[0.0, 1.0, 0.0, 0.0]);
        assert_eq!(crate::bits::format_bits(1, 2), "10");
    }

    #[test]
    fn born_probabilities_of_basis_state() {
        let mut amps = vec![c(0.0, 0.0); 4];
        amps[2] = c(1.0, 0.0);
        let p = born_probabilities(&StateVector::new(2, amps).unwrap());
        assert_eq!(p.probs(), &[0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn sampling_one_hot_and_determinism() {
        let pv = ProbabilityVector::point_mass(2, 3).unwrap();
        assert_eq!(sample(&pv, 5, 1).unwrap().samples(), &[3; 5]);
        let pv = ProbabilityVector::new(2, vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        assert_eq!(sample(&pv, 50, 9).unwrap(), sample(&pv, 50, 9).unwrap());
        assert!(sample(&pv, 0, 9).is_err());
    }

    #[test]
    fn sampling_never_returns_zero_probability_outcomes() {
        let pv = ProbabilityVector::new(2, vec![0.5, 0.5, 0.0, 0.0]).unwrap();
        let s = sample(&pv, 10_000, 3).unwrap();
        assert!(s.samples().iter().all(|&x| x < 2));
    }

    #[test]
    fn uniform_sampling_concentrates() {
        let pv = ProbabilityVector::uniform(2).unwrap();
        let n = 100_000;
        let s = sample(&pv, n, 42).unwrap();
        let sigma = (0.25f64 * 0.75 / n as f64).sqrt();
        for x in 0..4 {
            let f = s.samples().iter().filter(|&&y| y == x).count() as f64 / n as f64;
            assert!((f - 0.25).abs() < 4.0 * sigma, "outcome {x}: {f}");
        }
    }
}
