//! Circuit parameters, the output distribution, parameter-shift circuits and
//! named sub-families.

use std::f64::consts::{FRAC_PI_4, FRAC_PI_8, PI};
use std::fmt;

use rand::Rng as _;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bits::check_qubits;
use crate::error::{Error, Result};
use crate::rng::rng_from_seed;
use crate::sim::{self, ProbabilityVector, StateVector};

/// Shift magnitude for gates of the form `exp(i theta P)` with `P^2 = 1`.
pub const PARAM_SHIFT: f64 = FRAC_PI_4;

/// Final-layer angle that turns each qubit's gate into `iH`.
pub const IQP_ANGLE: f64 = PI / (2.0 * std::f64::consts::SQRT_2);

/// One entry of the parameter set.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamIndex {
    Coupling(usize, usize),
    Local(usize),
    Gamma(usize),
    Delta(usize),
    Sigma(usize),
}

impl fmt::Display for ParamIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamIndex::Coupling(i, j) => write!(f, "j[{i},{j}]"),
            ParamIndex::Local(k) => write!(f, "b[{k}]"),
            ParamIndex::Gamma(k) => write!(f, "gamma[{k}]"),
            ParamIndex::Delta(k) => write!(f, "delta[{k}]"),
            ParamIndex::Sigma(k) => write!(f, "sigma[{k}]"),
        }
    }
}

/// Direction of a parameter shift.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Shift {
    Plus,
    Minus,
}

impl Shift {
    pub fn sign(self) -> f64 {
        match self {
            Shift::Plus => 1.0,
            Shift::Minus => -1.0,
        }
    }
}

/// Which entries gradient descent updates.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainableMask {
    pub j: Vec<Vec<bool>>,
    pub b: Vec<bool>,
    pub gamma: Vec<bool>,
    pub delta: Vec<bool>,
    pub sigma: Vec<bool>,
}

impl TrainableMask {
    /// Couplings and local fields trainable, final layer frozen.
    pub fn ising(n: usize) -> Self {
        let j = (0..n).map(|i| (0..n).map(|k| i != k).collect()).collect();
        Self {
            j,
            b: vec![true; n],
            gamma: vec![false; n],
            delta: vec![false; n],
            sigma: vec![false; n],
        }
    }

    pub fn all(n: usize) -> Self {
        Self {
            gamma: vec![true; n],
            delta: vec![true; n],
            sigma: vec![true; n],
            ..Self::ising(n)
        }
    }

    fn validate(&self, n: usize) -> Result<()> {
        let ok = self.j.len() == n
            && self.j.iter().all(|r| r.len() == n)
            && [&self.b, &self.gamma, &self.delta, &self.sigma]
                .iter()
                .all(|v| v.len() == n);
        if !ok {
            return Err(Error::Shape(format!(
                "trainable mask does not match {n} qubits"
            )));
        }
        for i in 0..n {
            if self.j[i][i] {
                return Err(Error::InvalidArgument(format!(
                    "diagonal coupling ({i},{i}) marked trainable"
                )));
            }
            for k in (i + 1)..n {
                if self.j[i][k] != self.j[k][i] {
                    return Err(Error::InvalidArgument(format!(
                        "coupling mask not symmetric at ({i},{k})"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn get(&self, idx: ParamIndex) -> bool {
        match idx {
            ParamIndex::Coupling(i, j) => self.j[i][j],
            ParamIndex::Local(k) => self.b[k],
            ParamIndex::Gamma(k) => self.gamma[k],
            ParamIndex::Delta(k) => self.delta[k],
            ParamIndex::Sigma(k) => self.sigma[k],
        }
    }

    pub fn set(&mut self, idx: ParamIndex, on: bool) {
        match idx {
            ParamIndex::Coupling(i, j) => {
                self.j[i][j] = on;
                self.j[j][i] = on;
            }
            ParamIndex::Local(k) => self.b[k] = on,
            ParamIndex::Gamma(k) => self.gamma[k] = on,
            ParamIndex::Delta(k) => self.delta[k] = on,
            ParamIndex::Sigma(k) => self.sigma[k] = on,
        }
    }
}

/// Every parameter index on `n` qubits in flat order: couplings (i<j,
/// row-major), locals, gamma, delta, sigma.
pub fn all_indices(n: usize) -> Vec<ParamIndex> {
    let mut out = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            out.push(ParamIndex::Coupling(i, j));
        }
    }
    out.extend((0..n).map(ParamIndex::Local));
    out.extend((0..n).map(ParamIndex::Gamma));
    out.extend((0..n).map(ParamIndex::Delta));
    out.extend((0..n).map(ParamIndex::Sigma));
    out
}

/// The full parameter set of an Ising Born machine.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams", into = "RawParams")]
pub struct CircuitParams {
    n: usize,
    j: Vec<Vec<f64>>,
    b: Vec<f64>,
    gamma: Vec<f64>,
    delta: Vec<f64>,
    sigma: Vec<f64>,
    trainable: TrainableMask,
}

#[derive(Serialize, Deserialize)]
struct RawParams {
    n: usize,
    j: Vec<Vec<f64>>,
    b: Vec<f64>,
    gamma: Vec<f64>,
    delta: Vec<f64>,
    sigma: Vec<f64>,
    #[serde(default)]
    trainable: Option<TrainableMask>,
}

impl TryFrom<RawParams> for CircuitParams {
    type Error = Error;

    fn try_from(raw: RawParams) -> Result<Self> {
        if raw.b.len() != raw.n {
            return Err(Error::Shape(format!(
                "{} local fields for n = {}",
                raw.b.len(),
                raw.n
            )));
        }
        let p = CircuitParams::new(raw.j, raw.b, raw.gamma, raw.delta, raw.sigma)?;
        match raw.trainable {
            Some(mask) => p.with_trainable(mask),
            None => Ok(p),
        }
    }
}

impl From<CircuitParams> for RawParams {
    fn from(p: CircuitParams) -> Self {
        RawParams {
            n: p.n,
            j: p.j,
            b: p.b,
            gamma: p.gamma,
            delta: p.delta,
            sigma: p.sigma,
            trainable: Some(p.trainable),
        }
    }
}

impl CircuitParams {
    /// Validate and wrap a parameter set; couplings and locals trainable.
    pub fn new(
        j: Vec<Vec<f64>>,
        b: Vec<f64>,
        gamma: Vec<f64>,
        delta: Vec<f64>,
        sigma: Vec<f64>,
    ) -> Result<Self> {
        let n = b.len();
        check_qubits(n)?;
        sim::check_couplings(n, &j)?;
        if gamma.len() != n || delta.len() != n || sigma.len() != n {
            return Err(Error::Shape(format!(
                "final layer vectors must have length {n}"
            )));
        }
        let all = j
            .iter()
            .flatten()
            .chain(&b)
            .chain(&gamma)
            .chain(&delta)
            .chain(&sigma);
        if all.clone().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("angles must be finite".into()));
        }
        Ok(Self {
            n,
            j,
            b,
            gamma,
            delta,
            sigma,
            trainable: TrainableMask::ising(n),
        })
    }

    pub fn zeros(n: usize) -> Result<Self> {
        check_qubits(n)?;
        Self::new(
            vec![vec![0.0; n]; n],
            vec![0.0; n],
            vec![0.0; n],
            vec![0.0; n],
            vec![0.0; n],
        )
    }

    pub fn with_trainable(mut self, mask: TrainableMask) -> Result<Self> {
        mask.validate(self.n)?;
        self.trainable = mask;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn couplings(&self) -> &[Vec<f64>] {
        &self.j
    }

    pub fn local(&self) -> &[f64] {
        &self.b
    }

    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }

    pub fn delta(&self) -> &[f64] {
        &self.delta
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn trainable(&self) -> &TrainableMask {
        &self.trainable
    }

    pub fn set_trainable(&mut self, idx: ParamIndex, on: bool) -> Result<()> {
        self.check_index(idx)?;
        self.trainable.set(idx, on);
        Ok(())
    }

    /// Force couplings outside `edges` to zero and freeze them.
    pub fn restrict_couplings(&mut self, edges: &[(usize, usize)]) -> Result<()> {
        for &(i, j) in edges {
            if i == j || i >= self.n || j >= self.n {
                return Err(Error::InvalidArgument(format!("bad edge ({i},{j})")));
            }
        }
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                if !edges
                    .iter()
                    .any(|&(a, b)| (a, b) == (i, j) || (a, b) == (j, i))
                {
                    self.j[i][j] = 0.0;
                    self.j[j][i] = 0.0;
                    self.trainable.set(ParamIndex::Coupling(i, j), false);
                }
            }
        }
        Ok(())
    }

    fn check_index(&self, idx: ParamIndex) -> Result<()> {
        let n = self.n;
        let ok = match idx {
            ParamIndex::Coupling(i, j) => i < j && j < n,
            ParamIndex::Local(k)
            | ParamIndex::Gamma(k)
            | ParamIndex::Delta(k)
            | ParamIndex::Sigma(k) => k < n,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "parameter index {idx} out of range for {n} qubits"
            )))
        }
    }

    pub fn get(&self, idx: ParamIndex) -> Result<f64> {
        self.check_index(idx)?;
        Ok(match idx {
            ParamIndex::Coupling(i, j) => self.j[i][j],
            ParamIndex::Local(k) => self.b[k],
            ParamIndex::Gamma(k) => self.gamma[k],
            ParamIndex::Delta(k) => self.delta[k],
            ParamIndex::Sigma(k) => self.sigma[k],
        })
    }

    pub fn set(&mut self, idx: ParamIndex, value: f64) -> Result<()> {
        self.check_index(idx)?;
        if !value.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "non-finite value for {idx}"
            )));
        }
        match idx {
            ParamIndex::Coupling(i, j) => {
                self.j[i][j] = value;
                self.j[j][i] = value;
            }
            ParamIndex::Local(k) => self.b[k] = value,
            ParamIndex::Gamma(k) => self.gamma[k] = value,
            ParamIndex::Delta(k) => self.delta[k] = value,
            ParamIndex::Sigma(k) => self.sigma[k] = value,
        }
        Ok(())
    }

    pub fn is_trainable(&self, idx: ParamIndex) -> bool {
        self.check_index(idx).is_ok() && self.trainable.get(idx)
    }

    /// Trainable indices in flat order.
    pub fn trainable_indices(&self) -> Vec<ParamIndex> {
        all_indices(self.n)
            .into_iter()
            .filter(|&i| self.trainable.get(i))
            .collect()
    }

    pub fn trainable_values(&self) -> Vec<f64> {
        self.trainable_indices()
            .into_iter()
            .map(|i| self.get(i).expect("index in range"))
            .collect()
    }

    /// `theta <- theta - delta` over the trainable entries.
    pub fn apply_update(&mut self, delta: &[f64]) -> Result<()> {
        let idx = self.trainable_indices();
        if idx.len() != delta.len() {
            return Err(Error::Shape(format!(
                "{} updates for {} trainable parameters",
                delta.len(),
                idx.len()
            )));
        }
        for (i, d) in idx.into_iter().zip(delta) {
            let v = self.get(i)? - d;
            self.set(i, v)?;
        }
        Ok(())
    }

    /// Final statevector of the circuit on `|+>^n`.
    pub fn state(&self) -> Result<StateVector> {
        let s = sim::init_plus_state(self.n)?;
        let s = sim::apply_ising_diagonal(s, &self.j, &self.b)?;
        sim::apply_final_layer(s, &self.gamma, &self.delta, &self.sigma)
    }

    /// Hex SHA-256 over the little-endian bytes of every angle in flat order.
    pub fn snapshot_hash(&self) -> String {
        let mut h = Sha256::new();
        for idx in all_indices(self.n) {
            h.update(self.get(idx).expect("index in range").to_le_bytes());
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Output distribution of the circuit.
pub fn build_distribution(params: &CircuitParams) -> Result<ProbabilityVector> {
    Ok(sim::born_probabilities(&params.state()?))
}

fn check_shiftable(params: &CircuitParams, idx: ParamIndex) -> Result<()> {
    let k = match idx {
        ParamIndex::Coupling(..) | ParamIndex::Local(_) => return Ok(()),
        ParamIndex::Gamma(k) | ParamIndex::Delta(k) | ParamIndex::Sigma(k) => k,
    };
    let comps = [params.gamma[k], params.delta[k], params.sigma[k]];
    let own = match idx {
        ParamIndex::Gamma(_) => 0,
        ParamIndex::Delta(_) => 1,
        _ => 2,
    };
    if comps.iter().enumerate().any(|(c, v)| c != own && *v != 0.0) {
        return Err(Error::NotShiftable(idx.to_string()));
    }
    Ok(())
}

/// Copy of `params` with entry `idx` moved by `sign * PARAM_SHIFT`.
pub fn shifted_params(
    params: &CircuitParams,
    idx: ParamIndex,
    sign: Shift,
) -> Result<CircuitParams> {
    params.check_index(idx)?;
    if !params.trainable.get(idx) {
        return Err(Error::NotTrainable(idx.to_string()));
    }
    check_shiftable(params, idx)?;
    let mut out = params.clone();
    out.set(idx, params.get(idx)? + sign.sign() * PARAM_SHIFT)?;
    Ok(out)
}

/// The two shifted distributions `(p+, p-)`.
pub fn shifted_distributions(
    params: &CircuitParams,
    idx: ParamIndex,
) -> Result<(ProbabilityVector, ProbabilityVector)> {
    let plus = build_distribution(&shifted_params(params, idx, Shift::Plus)?)?;
    let minus = build_distribution(&shifted_params(params, idx, Shift::Minus)?)?;
    Ok((plus, minus))
}

/// `d p(x) / d theta_idx`, computed as `p+(x) - p-(x)`.
pub fn prob_gradient(params: &CircuitParams, idx: ParamIndex) -> Result<Vec<f64>> {
    let (plus, minus) = shifted_distributions(params, idx)?;
    Ok(plus
        .probs()
        .iter()
        .zip(minus.probs())
        .map(|(a, b)| a - b)
        .collect())
}

fn check_ising_inputs(j: &[Vec<f64>], b: &[f64]) -> Result<usize> {
    let n = b.len();
    check_qubits(n)?;
    sim::check_couplings(n, j)?;
    Ok(n)
}

/// IQP circuit: final layer `iH` on every qubit.
pub fn iqp_params(j: Vec<Vec<f64>>, b: Vec<f64>) -> Result<CircuitParams> {
    let n = check_ising_inputs(&j, &b)?;
    CircuitParams::new(j, b, vec![IQP_ANGLE; n], vec![0.0; n], vec![IQP_ANGLE; n])
}

/// Depth-one QAOA circuit: final layer `exp(-i gamma_k X)`.
pub fn qaoa_params(j: Vec<Vec<f64>>, b: Vec<f64>, gamma: &[f64]) -> Result<CircuitParams> {
    let n = check_ising_inputs(&j, &b)?;
    if gamma.len() != n {
        return Err(Error::Shape(format!(
            "{} mixer angles for {n} qubits",
            gamma.len()
        )));
    }
    CircuitParams::new(
        j,
        b,
        gamma.iter().map(|g| -g).collect(),
        vec![0.0; n],
        vec![0.0; n],
    )
}

pub fn is_iqp(p: &CircuitParams) -> bool {
    p.delta.iter().all(|&d| d == 0.0)
        && p.gamma == p.sigma
        && p.gamma.iter().all(|&g| (g - IQP_ANGLE).abs() < 1e-12)
}

pub fn is_qaoa(p: &CircuitParams) -> bool {
    p.delta.iter().all(|&d| d == 0.0) && p.sigma.iter().all(|&s| s == 0.0)
}

/// Angle families tied to classical-simulation hardness arguments.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum AngleFamily {
    /// Uniform over `{0, pi/8, ..., 7pi/8}`.
    Grid8,
    /// Odd multiples `(2l+1) pi / (8d)` in `[0, 2pi)`.
    OddMultiple { d: u32 },
    /// `2 pi nu` with `nu` uniform in `[0, 1)`.
    Irrational,
}

impl AngleFamily {
    pub fn validate(&self) -> Result<()> {
        match self {
            AngleFamily::OddMultiple { d: 0 } => Err(Error::InvalidArgument(
                "odd-multiple family needs d >= 1".into(),
            )),
            _ => Ok(()),
        }
    }

    pub fn draw(&self, rng: &mut impl rand::Rng) -> f64 {
        match *self {
            AngleFamily::Grid8 => rng.gen_range(0..8) as f64 * FRAC_PI_8,
            AngleFamily::OddMultiple { d } => {
                let l = rng.gen_range(0..8 * d as u64);
                (2 * l + 1) as f64 * PI / (8.0 * d as f64)
            }
            AngleFamily::Irrational => 2.0 * PI * rng.gen::<f64>(),
        }
    }

    /// Nearest member of the family (identity for the irrational family).
    pub fn snap(&self, v: f64) -> f64 {
        match *self {
            AngleFamily::Grid8 => (v / FRAC_PI_8).round() * FRAC_PI_8,
            AngleFamily::OddMultiple { d } => {
                let unit = PI / (8.0 * d as f64);
                let l = ((v / unit - 1.0) / 2.0).round();
                (2.0 * l + 1.0) * unit
            }
            AngleFamily::Irrational => v,
        }
    }

    pub fn contains(&self, v: f64) -> bool {
        match *self {
            AngleFamily::Grid8 => {
                let r = v / FRAC_PI_8;
                (r - r.round()).abs() < 1e-9
            }
            AngleFamily::OddMultiple { d } => {
                let r = v / (PI / (8.0 * d as f64));
                (r - r.round()).abs() < 1e-9 && (r.round() as i64).rem_euclid(2) == 1
            }
            AngleFamily::Irrational => v.is_finite(),
        }
    }
}

/// Draw couplings and locals from a hardness family; final layer zero.
pub fn random_hard_init(n: usize, family: AngleFamily, seed: u64) -> Result<CircuitParams> {
    family.validate()?;
    random_ising(n, seed, |rng| family.draw(rng))
}

/// Couplings and locals uniform in `[low, high)`; final layer zero.
pub fn random_uniform_init(n: usize, low: f64, high: f64, seed: u64) -> Result<CircuitParams> {
    if !(low < high) {
        return Err(Error::InvalidArgument(format!(
            "empty angle range [{low}, {high})"
        )));
    }
    random_ising(n, seed, |rng| rng.gen_range(low..high))
}

fn random_ising(
    n: usize,
    seed: u64,
    mut draw: impl FnMut(&mut crate::rng::Rng) -> f64,
) -> Result<CircuitParams> {
    check_qubits(n)?;
    let mut rng = rng_from_seed(seed);
    let mut j = vec![vec![0.0; n]; n];
    for i in 0..n {
        for k in (i + 1)..n {
            let v = draw(&mut rng);
            j[i][k] = v;
            j[k][i] = v;
        }
    }
    let b = (0..n).map(|_| draw(&mut rng)).collect();
    CircuitParams::new(j, b, vec![0.0; n], vec![0.0; n], vec![0.0; n])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_params(n: usize, seed: u64) -> CircuitParams {
        let mut p = random_uniform_init(n, -PI, PI, seed).unwrap();
        let mut rng = rng_from_seed(seed + 100);
        for k in 0..n {
            p.set(ParamIndex::Gamma(k), rng.gen_range(-PI..PI)).unwrap();
            p.set(ParamIndex::Delta(k), rng.gen_range(-PI..PI)).unwrap();
            p.set(ParamIndex::Sigma(k), rng.gen_range(-PI..PI)).unwrap();
        }
        p
    }

    #[test]
    fn zero_params_give_uniform() {
        let p = build_distribution(&CircuitParams::zeros(3).unwrap()).unwrap();
        assert!(p.probs().iter().all(|&x| (x - 0.125).abs() < 1e-15));
    }

    #[test]
    fn iqp_without_phases_is_point_mass() {
        // H applied to |+> returns |0>, so the output concentrates on 00.
        let p = iqp_params(vec![vec![0.0; 2]; 2], vec![0.0; 2]).unwrap();
        let d = build_distribution(&p).unwrap();
        assert!((d.get(0) - 1.0).abs() < 1e-12);
        assert!(p.delta().iter().all(|&d| d == 0.0));
        assert!(is_iqp(&p));
    }

    #[test]
    fn constructors_are_fixed_points() {
        let j = vec![vec![0.0, 0.3], vec![0.3, 0.0]];
        let p = iqp_params(j.clone(), vec![0.1, 0.2]).unwrap();
        let q = iqp_params(p.couplings().to_vec(), p.local().to_vec()).unwrap();
        assert_eq!(p, q);
        let p = qaoa_params(j, vec![0.1, 0.2], &[FRAC_PI_4, FRAC_PI_4]).unwrap();
        assert!(is_qaoa(&p));
        let back: Vec<f64> = p.gamma().iter().map(|g| -g).collect();
        let q = qaoa_params(p.couplings().to_vec(), p.local().to_vec(), &back).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn qaoa_with_zero_mixer_is_uniform() {
        let j = vec![vec![0.0, 1.1], vec![1.1, 0.0]];
        let p = qaoa_params(j, vec![0.4, -0.7], &[0.0, 0.0]).unwrap();
        let d = build_distribution(&p).unwrap();
        assert!(d.probs().iter().all(|&x| (x - 0.25).abs() < 1e-12));
    }

    #[test]
    fn qaoa_mixer_gate_closed_form() {
        // Methods default: mixer pi/4 gives exp(-i pi/4 X) on each qubit.
        let p = qaoa_params(vec![vec![0.0]], vec![0.0], &[FRAC_PI_4]).unwrap();
        let g = sim::final_layer_gate(p.gamma()[0], p.delta()[0], p.sigma()[0]);
        let c = FRAC_PI_4.cos();
        assert!((g[0][0].re - c).abs() < 1e-15 && g[0][0].im.abs() < 1e-15);
        assert!((g[0][1].im + c).abs() < 1e-15 && g[0][1].re.abs() < 1e-15);
        assert!((g[1][0].im + c).abs() < 1e-15);
    }

    #[test]
    fn shift_and_unshift_round_trip() {
        let p = CircuitParams::zeros(2).unwrap();
        let s = shifted_params(&p, ParamIndex::Local(0), Shift::Plus).unwrap();
        assert_eq!(s.local()[0], PARAM_SHIFT);
        assert_eq!(s.local()[1], 0.0);
        let mut s = s.clone().with_trainable(TrainableMask::ising(2)).unwrap();
        s = shifted_params(&s, ParamIndex::Local(0), Shift::Minus).unwrap();
        assert_eq!(s, p);
    }

    #[test]
    fn shifting_frozen_or_mixed_axis_errors() {
        let p = CircuitParams::zeros(2).unwrap();
        assert!(matches!(
            shifted_params(&p, ParamIndex::Gamma(0), Shift::Plus),
            Err(Error::NotTrainable(_))
        ));
        let mut p = p.with_trainable(TrainableMask::all(2)).unwrap();
        assert!(shifted_params(&p, ParamIndex::Gamma(0), Shift::Plus).is_ok());
        p.set(ParamIndex::Sigma(0), 0.3).unwrap();
        assert!(matches!(
            shifted_params(&p, ParamIndex::Gamma(0), Shift::Plus),
            Err(Error::NotShiftable(_))
        ));
    }

    #[test]
    fn single_qubit_local_gradient_closed_form() {
        // With b and gamma only, p(0) = 1/2 + 1/2 sin(2 gamma) sin(2 b) for exp(i b Z) then exp(i gamma X).
        let gamma = 0.37;
        let mut p = qaoa_params(vec![vec![0.0]], vec![0.0], &[-gamma]).unwrap();
        for b in [0.0, 0.2, 1.1] {
            p.set(ParamIndex::Local(0), b).unwrap();
            let d = build_distribution(&p).unwrap();
            assert!((d.get(0) - (0.5 + 0.5 * (2.0 * gamma).sin() * (2.0 * b).sin())).abs() < 1e-12);
            let g = prob_gradient(&p, ParamIndex::Local(0)).unwrap();
            let analytic = (2.0 * gamma).sin() * (2.0 * b).cos();
            assert!((g[0] - analytic).abs() < 1e-12);
            assert!((g[1] + analytic).abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_entries_sum_to_zero() {
        let p = random_params(3, 4);
        for idx in p.trainable_indices() {
            let g = prob_gradient(&p, idx).unwrap();
            assert!(g.iter().sum::<f64>().abs() < 1e-12);
        }
    }

    #[test]
    fn hard_families_draw_members() {
        let p = random_hard_init(4, AngleFamily::Grid8, 1).unwrap();
        for idx in p.trainable_indices() {
            let v = p.get(idx).unwrap();
            assert!(AngleFamily::Grid8.contains(v) && v >= 0.0 && v < PI);
        }
        let fam = AngleFamily::OddMultiple { d: 1 };
        let p = random_hard_init(4, fam, 2).unwrap();
        for idx in p.trainable_indices() {
            let r = p.get(idx).unwrap() / FRAC_PI_8;
            assert!((r - r.round()).abs() < 1e-12 && r.round() as i64 % 2 == 1);
        }
        let p = random_hard_init(4, AngleFamily::Irrational, 3).unwrap();
        for idx in p.trainable_indices() {
            let v = p.get(idx).unwrap();
            assert!((0.0..2.0 * PI).contains(&v));
        }
        assert!(random_hard_init(2, AngleFamily::OddMultiple { d: 0 }, 0).is_err());
    }

    #[test]
    fn odd_multiple_snap_lands_on_lattice() {
        let fam = AngleFamily::OddMultiple { d: 2 };
        for v in [-1.3, 0.0, 0.05, 0.4, 2.9, 7.7] {
            let s = fam.snap(v);
            assert!(fam.contains(s), "{v} -> {s}");
            assert!((s - v).abs() <= PI / 16.0 + 1e-12);
        }
    }

    #[test]
    fn serde_round_trip_uses_documented_field_names() {
        let p = random_params(3, 9);
        let text = serde_json::to_string(&p).unwrap();
        for f in ["\"j\"", "\"b\"", "\"gamma\"", "\"delta\"", "\"sigma\""] {
            assert!(text.contains(f));
        }
        let back: CircuitParams = serde_json::from_str(&text).unwrap();
        assert_eq!(back, p);
        let asym =
            r#"{"n":2,"j":[[0,1],[2,0]],"b":[0,0],"gamma":[0,0],"delta":[0,0],"sigma":[0,0]}"#;
        assert!(serde_json::from_str::<CircuitParams>(asym).is_err());
    }

    #[test]
    fn restrict_couplings_zeroes_and_freezes() {
        let mut p = random_params(3, 1);
        p.restrict_couplings(&[(0, 1), (1, 2)]).unwrap();
        assert_eq!(p.couplings()[0][2], 0.0);
        assert!(!p.is_trainable(ParamIndex::Coupling(0, 2)));
        assert!(p.is_trainable(ParamIndex::Coupling(1, 2)));
    }

    #[test]
    fn flat_order_is_couplings_locals_then_final_layer() {
        let idx = all_indices(3);
        assert_eq!(
            &idx[..3],
            &[
                ParamIndex::Coupling(0, 1),
                ParamIndex::Coupling(0, 2),
                ParamIndex::Coupling(1, 2)
            ]
        );
        assert_eq!(idx[3], ParamIndex::Local(0));
        assert_eq!(idx[6], ParamIndex::Gamma(0));
        assert_eq!(idx.len(), 3 + 4 * 3);
    }
}
