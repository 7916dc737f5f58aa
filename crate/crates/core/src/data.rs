//! Target distributions, sampling, empirical distributions and dataset files.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::bits::{check_qubits, format_bits, hamming, parse_bits, BitString, SampleSet};
use crate::error::{Error, Result};
use crate::rng::rng_from_seed;
use crate::sim::ProbabilityVector;

/// Default per-bit fidelity of the mode mixture.
pub const DEFAULT_FIDELITY: f64 = 0.9;

/// Mixture of product-Bernoulli bumps centred on a few modes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetSpec {
    pub n: usize,
    pub modes: Vec<BitString>,
    pub p: f64,
}

impl TargetSpec {
    pub fn new(n: usize, modes: Vec<BitString>, p: f64) -> Result<Self> {
        let spec = Self { n, modes, p };
        spec.validate()?;
        Ok(spec)
    }

    /// `count` distinct modes drawn uniformly at random.
    pub fn random(n: usize, count: usize, p: f64, seed: u64) -> Result<Self> {
        check_qubits(n)?;
        if count == 0 || count > 1 << n {
            return Err(Error::InvalidArgument(format!(
                "cannot draw {count} distinct modes on {n} bits"
            )));
        }
        let mut rng = rng_from_seed(seed);
        let mut chosen: Vec<u64> = Vec::with_capacity(count);
        while chosen.len() < count {
            let x = rng.gen_range(0..1u64 << n);
            if !chosen.contains(&x) {
                chosen.push(x);
            }
        }
        let modes = chosen
            .into_iter()
            .map(|x| BitString::new(x, n))
            .collect::<Result<_>>()?;
        Self::new(n, modes, p)
    }

    /// Default mode count `min(2^{n-1}, 5)`.
    pub fn default_mode_count(n: usize) -> usize {
        (1usize << (n.saturating_sub(1)).min(8)).min(5)
    }

    pub fn validate(&self) -> Result<()> {
        check_qubits(self.n)?;
        if self.modes.is_empty() {
            return Err(Error::InvalidArgument(
                "target needs at least one mode".into(),
            ));
        }
        if let Some(m) = self.modes.iter().find(|m| m.len() != self.n) {
            return Err(Error::Shape(format!(
                "mode {m} has length {} but n = {}",
                m.len(),
                self.n
            )));
        }
        if !(self.p > 0.0 && self.p <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "fidelity p = {} outside (0, 1]",
                self.p
            )));
        }
        Ok(())
    }
}

/// Exact mixture pmf.
pub fn target_pmf(spec: &TargetSpec) -> Result<ProbabilityVector> {
    spec.validate()?;
    let n = spec.n;
    let t = spec.modes.len() as f64;
    let probs = (0..1u64 << n)
        .map(|y| {
            spec.modes
                .iter()
                .map(|m| {
                    let d = hamming(m.bits(), y) as i32;
                    spec.p.powi(n as i32 - d) * (1.0 - spec.p).powi(d)
                })
                .sum::<f64>()
                / t
        })
        .collect();
    ProbabilityVector::from_weights(n, probs)
}

/// Pick a mode uniformly, then flip each bit with probability `1 - p`.
pub fn sample_target(spec: &TargetSpec, count: usize, seed: u64) -> Result<SampleSet> {
    spec.validate()?;
    if count == 0 {
        return Err(Error::InvalidArgument(
            "sample count must be at least 1".into(),
        ));
    }
    let mut rng = rng_from_seed(seed);
    let samples = (0..count)
        .map(|_| {
            let mut x = spec.modes[rng.gen_range(0..spec.modes.len())].bits();
            for k in 0..spec.n {
                if rng.gen::<f64>() >= spec.p {
                    x ^= 1 << k;
                }
            }
            x
        })
        .collect();
    SampleSet::new(spec.n, samples)
}

/// Counts per observed bitstring.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmpiricalDist {
    pub n: usize,
    pub counts: BTreeMap<BitString, usize>,
    pub total: usize,
}

pub fn empirical(samples: &SampleSet) -> Result<EmpiricalDist> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument(
            "empirical distribution of an empty sample".into(),
        ));
    }
    let mut counts = BTreeMap::new();
    for b in samples.bitstrings() {
        *counts.entry(b).or_insert(0) += 1;
    }
    Ok(EmpiricalDist {
        n: samples.n(),
        counts,
        total: samples.len(),
    })
}

/// Distinct points with positive weights summing to one.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedSupport {
    n: usize,
    points: Vec<u64>,
    weights: Vec<f64>,
}

impl WeightedSupport {
    pub fn new(n: usize, points: Vec<u64>, weights: Vec<f64>) -> Result<Self> {
        check_qubits(n)?;
        if points.is_empty() || points.len() != weights.len() {
            return Err(Error::Shape(format!(
                "{} points with {} weights",
                points.len(),
                weights.len()
            )));
        }
        if weights.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
            return Err(Error::InvalidArgument(
                "support weights must be positive".into(),
            ));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "support weights sum to {total}"
            )));
        }
        let mut sorted = points.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidArgument(
                "support points must be distinct".into(),
            ));
        }
        if points.iter().any(|&x| x >> n != 0) {
            return Err(Error::InvalidArgument(format!(
                "support point does not fit in {n} bits"
            )));
        }
        Ok(Self { n, points, weights })
    }

    pub fn from_probability(pv: &ProbabilityVector) -> Self {
        let (points, weights) = pv.support().unzip();
        Self {
            n: pv.n(),
            points,
            weights,
        }
    }

    pub fn from_samples(samples: &SampleSet) -> Result<Self> {
        Ok(to_weighted_support(&empirical(samples)?))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn points(&self) -> &[u64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u64, f64)> + '_ {
        self.points
            .iter()
            .copied()
            .zip(self.weights.iter().copied())
    }

    pub fn to_probability(&self) -> Result<ProbabilityVector> {
        let mut probs = vec![0.0; 1 << self.n];
        for (x, w) in self.iter() {
            probs[x as usize] = w;
        }
        ProbabilityVector::new(self.n, probs)
    }
}

pub fn to_weighted_support(dist: &EmpiricalDist) -> WeightedSupport {
    let total = dist.total as f64;
    let (points, weights) = dist
        .counts
        .iter()
        .map(|(b, c)| (b.bits(), *c as f64 / total))
        .unzip();
    WeightedSupport {
        n: dist.n,
        points,
        weights,
    }
}

/// Seeded shuffle, then the first `n_train` go to training and the rest to test.
pub fn train_test_split(
    samples: &SampleSet,
    n_train: usize,
    seed: u64,
) -> Result<(SampleSet, SampleSet)> {
    if n_train > samples.len() {
        return Err(Error::InvalidArgument(format!(
            "training split {n_train} exceeds {} samples",
            samples.len()
        )));
    }
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.shuffle(&mut rng_from_seed(seed));
    Ok((
        samples.select(&order[..n_train]),
        samples.select(&order[n_train..]),
    ))
}

/// Header line of a dataset file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub n: usize,
    pub count: usize,
    pub seed: u64,
    pub source: serde_json::Value,
}

const HEADER_PREFIX: &str = "# bornforge-dataset ";

/// Write a header line followed by one bitstring per line.
pub fn write_dataset(path: &Path, header: &DatasetHeader, samples: &SampleSet) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "{HEADER_PREFIX}{}", serde_json::to_string(header)?)?;
    for &x in samples.samples() {
        writeln!(w, "{}", format_bits(x, samples.n()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_dataset(path: &Path) -> Result<(DatasetHeader, SampleSet)> {
    let r = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut lines = r.lines();
    let first = lines
        .next()
        .ok_or_else(|| Error::Parse("empty dataset file".into()))??;
    let json = first
        .strip_prefix(HEADER_PREFIX)
        .ok_or_else(|| Error::Parse("dataset file lacks header line".into()))?;
    let header: DatasetHeader = serde_json::from_str(json)?;
    let mut samples = Vec::with_capacity(header.count);
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let (x, len) = parse_bits(&line)?;
        if len != header.n {
            return Err(Error::Shape(format!(
                "line {line:?} has length {len}, header says {}",
                header.n
            )));
        }
        samples.push(x);
    }
    if samples.len() != header.count {
        return Err(Error::Parse(format!(
            "header count {} but {} samples",
            header.count,
            samples.len()
        )));
    }
    let set = SampleSet::new(header.n, samples)?;
    Ok((header, set))
}
