//! Reference implementations used to check the fast paths: dense Kronecker
//! products, truncated matrix-exponential series and finite differences.
//!
//! These build full `2^n x 2^n` operators and are only meant for small `n`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::bits::check_qubits;
use crate::error::{Error, Result};
use crate::model::CircuitParams;

pub const ORACLE_MAX_QUBITS: usize = 8;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn pauli_x() -> DMatrix<Complex64> {
    DMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)])
}

pub fn pauli_y() -> DMatrix<Complex64> {
    DMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(0.0, -1.0), c(0.0, 1.0), c(0.0, 0.0)])
}

pub fn pauli_z() -> DMatrix<Complex64> {
    DMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-1.0, 0.0)])
}

pub fn hadamard() -> DMatrix<Complex64> {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    DMatrix::from_row_slice(2, 2, &[c(h, 0.0), c(h, 0.0), c(h, 0.0), c(-h, 0.0)])
}

/// `ops[n-1] ⊗ ... ⊗ ops[0]`, so `ops[k]` acts on qubit `k` (bit `k` of the index).
pub fn kron_qubits(ops: &[DMatrix<Complex64>]) -> DMatrix<Complex64> {
    let mut out = DMatrix::from_element(1, 1, c(1.0, 0.0));
    for op in ops.iter().rev() {
        out = out.kronecker(op);
    }
    out
}

/// Operator acting as `op` on qubit `k` and identity elsewhere.
pub fn embed(n: usize, k: usize, op: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let ops: Vec<_> = (0..n)
        .map(|q| {
            if q == k {
                op.clone()
            } else {
                DMatrix::identity(2, 2)
            }
        })
        .collect();
    kron_qubits(&ops)
}

/// Matrix exponential by summing the Taylor series until terms vanish.
pub fn expm_series(a: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let dim = a.nrows();
    // Scale so the series converges quickly, then square back.
    let norm: f64 = a.iter().map(|z| z.norm()).sum();
    let squarings = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as u32
    } else {
        0
    };
    let scaled = a / c(2f64.powi(squarings as i32), 0.0);
    let mut sum = DMatrix::<Complex64>::identity(dim, dim);
    let mut term = DMatrix::<Complex64>::identity(dim, dim);
    for k in 1..200 {
        term = &term * &scaled / c(k as f64, 0.0);
        sum += &term;
        if term.iter().map(|z| z.norm()).sum::<f64>() < 1e-20 {
            break;
        }
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum
}

/// Diagonal Ising unitary from its Hamiltonian via eigendecomposition.
pub fn dense_ising_unitary(n: usize, couplings: &[Vec<f64>], local: &[f64]) -> DMatrix<Complex64> {
    let dim = 1 << n;
    let mut h = DMatrix::<Complex64>::zeros(dim, dim);
    let z = pauli_z();
    for i in 0..n {
        h += embed(n, i, &z) * c(local[i], 0.0);
        for j in (i + 1)..n {
            h += embed(n, i, &z) * embed(n, j, &z) * c(couplings[i][j], 0.0);
        }
    }
    // The Hamiltonian is diagonal, so its eigenvalues are the diagonal entries.
    DMatrix::from_diagonal(&DVector::from_iterator(
        dim,
        (0..dim).map(|x| Complex64::from_polar(1.0, h[(x, x)].re)),
    ))
}

/// Per-qubit final layer built from series exponentials of `i(gX + dY + sZ)`.
pub fn dense_final_layer(gamma: &[f64], delta: &[f64], sigma: &[f64]) -> DMatrix<Complex64> {
    let ops: Vec<_> = (0..gamma.len())
        .map(|k| {
            let gen = pauli_x() * c(gamma[k], 0.0)
                + pauli_y() * c(delta[k], 0.0)
                + pauli_z() * c(sigma[k], 0.0);
            expm_series(&(gen * c(0.0, 1.0)))
        })
        .collect();
    kron_qubits(&ops)
}

fn check_oracle_size(n: usize) -> Result<()> {
    check_qubits(n)?;
    if n > ORACLE_MAX_QUBITS {
        return Err(Error::Capacity(format!(
            "dense oracle limited to {ORACLE_MAX_QUBITS} qubits"
        )));
    }
    Ok(())
}

fn zero_ket(n: usize) -> DVector<Complex64> {
    let mut v = DVector::zeros(1 << n);
    v[0] = c(1.0, 0.0);
    v
}

/// Full circuit as a dense matrix product applied to `|0>`.
pub fn dense_state(params: &CircuitParams) -> Result<DVector<Complex64>> {
    let n = params.n();
    check_oracle_size(n)?;
    let h_all = kron_qubits(&vec![hadamard(); n]);
    let uz = dense_ising_unitary(n, params.couplings(), params.local());
    let uf = dense_final_layer(params.gamma(), params.delta(), params.sigma());
    Ok(uf * uz * h_all * zero_ket(n))
}

pub fn dense_distribution(params: &CircuitParams) -> Result<Vec<f64>> {
    Ok(dense_state(params)?.iter().map(|a| a.norm_sqr()).collect())
}

/// Feature-map state `U H U H |0>` built from dense operators.
pub fn dense_feature_state(n: usize, x: u64) -> Result<DVector<Complex64>> {
    check_oracle_size(n)?;
    let q = std::f64::consts::FRAC_PI_4;
    let xb = |k: usize| ((x >> k) & 1) as f64;
    let dim = 1 << n;
    let z = pauli_z();
    let mut gen = DMatrix::<Complex64>::zeros(dim, dim);
    for l in 0..n {
        gen += embed(n, l, &z) * c(q * xb(l), 0.0);
        for m in (l + 1)..n {
            gen += embed(n, l, &z) * embed(n, m, &z) * c((q - xb(l)) * (q - xb(m)), 0.0);
        }
    }
    let u = expm_series(&(gen * c(0.0, 1.0)));
    let h_all = kron_qubits(&vec![hadamard(); n]);
    Ok(&u * &h_all * &u * &h_all * zero_ket(n))
}

/// Central finite difference `(f(x+h) - f(x-h)) / 2h`.
pub fn central_difference(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn series_exponential_of_pauli_matches_closed_form() {
        let t = 0.83;
        let e = expm_series(&(pauli_x() * c(0.0, t)));
        assert!((e[(0, 0)] - c(t.cos(), 0.0)).norm() < 1e-14);
        assert!((e[(0, 1)] - c(0.0, t.sin())).norm() < 1e-14);
    }

    #[test]
    fn kron_puts_qubit_zero_in_low_bit() {
        let op = embed(2, 0, &pauli_x());
        // X on qubit 0 maps index 0 to index 1.
        assert_eq!(op[(1, 0)], c(1.0, 0.0));
        assert_eq!(op[(2, 0)], c(0.0, 0.0));
    }
}
