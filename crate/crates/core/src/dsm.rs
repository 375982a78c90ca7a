//! Doubly-stochastic matrices: Sinkhorn generation from random costs,
//! balancing of arbitrary positive matrices, and structural diagnostics.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::rng::TrialRng;

/// Tolerance on row/column sums for matrices accepted as experiment inputs.
pub const EXPERIMENT_TOL: f64 = 1e-6;

/// Kernel entries below this are treated as underflow.
const UNDERFLOW_FLOOR: f64 = 1e-300;

/// A square nonnegative matrix whose row and column sums are certified to
/// lie within `stochastic_tol` of one.
#[derive(Clone, Debug, PartialEq)]
pub struct StochasticMatrix {
    matrix: DenseMatrix,
    stochastic_tol: f64,
}

impl StochasticMatrix {
    /// Checks the invariants and records the achieved deviation.
    pub fn certify(matrix: DenseMatrix, tol: f64) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::NotSquare { rows: matrix.rows(), cols: matrix.cols() });
        }
        if let Some(i) = matrix.as_slice().iter().position(|&v| v < 0.0) {
            let n = matrix.cols();
            return Err(Error::NotPositive { row: i / n, col: i % n, value: matrix.as_slice()[i] });
        }
        let deviation = stochastic_deviation(&matrix);
        if deviation > tol {
            return Err(Error::NotDoublyStochastic { deviation, tol });
        }
        Ok(StochasticMatrix { matrix, stochastic_tol: deviation })
    }

    pub fn uniform(n: usize) -> Self {
        Self::certify(DenseMatrix::uniform(n), 1e-12).expect("uniform matrix is doubly stochastic")
    }

    pub fn identity(n: usize) -> Self {
        StochasticMatrix { matrix: DenseMatrix::identity(n), stochastic_tol: 0.0 }
    }

    pub fn permutation(perm: &[usize]) -> Self {
        StochasticMatrix { matrix: DenseMatrix::permutation(perm), stochastic_tol: 0.0 }
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> DenseMatrix {
        self.matrix
    }

    pub fn n(&self) -> usize {
        self.matrix.rows()
    }

    /// Max absolute deviation of any row or column sum from one.
    pub fn stochastic_tol(&self) -> f64 {
        self.stochastic_tol
    }

    /// `(1 - weight) U + weight M`, with `U` the uniform matrix. The detail
    /// part of `M` is scaled by `weight`, so `σ₂` scales by the same factor.
    /// Entries stay nonnegative for `weight ∈ [0, 1]`.
    pub fn blend_with_uniform(&self, weight: f64) -> Result<Self> {
        let n = self.n();
        let u = 1.0 / n as f64;
        let data = self.matrix.as_slice().iter().map(|&m| u + weight * (m - u)).collect();
        Self::certify(DenseMatrix::from_row_major(n, n, data)?, self.stochastic_tol + 1e-12)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SinkhornConfig {
    pub n: usize,
    pub temperature: f64,
    pub iterations: usize,
    pub seed: u64,
}

impl SinkhornConfig {
    pub fn new(n: usize, temperature: f64, seed: u64) -> Self {
        SinkhornConfig { n, temperature, iterations: 200, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidDimension { n: 0, reason: "matrix dimension must be positive" });
        }
        if !(self.temperature > 0.0) || !self.temperature.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "temperature must be positive and finite, got {}",
                self.temperature
            )));
        }
        if self.iterations == 0 {
            return Err(Error::InvalidParameter("sinkhorn iterations must be at least 1".into()));
        }
        Ok(())
    }
}

/// Draws `d_ij ~ U[0,1)` row-major from the stream seeded by `cfg.seed`.
pub fn sample_cost(n: usize, seed: u64) -> DenseMatrix {
    let mut rng = TrialRng::from_seed(seed);
    let data = (0..n * n).map(|_| rng.uniform()).collect();
    DenseMatrix::from_row_major(n, n, data).expect("uniform costs are finite")
}

/// Random cost, Gibbs kernel `exp(-d/T)`, then exactly `K` row/column passes.
pub fn sinkhorn_generate(cfg: &SinkhornConfig) -> Result<StochasticMatrix> {
    cfg.validate()?;
    let cost = sample_cost(cfg.n, cfg.seed);
    sinkhorn_from_cost(&cost, cfg.temperature, cfg.iterations)
}

/// Fixed-iteration Sinkhorn on the kernel of an explicit cost matrix.
pub fn sinkhorn_from_cost(cost: &DenseMatrix, temperature: f64, iterations: usize) -> Result<StochasticMatrix> {
    if !cost.is_square() {
        return Err(Error::NotSquare { rows: cost.rows(), cols: cost.cols() });
    }
    let kernel = gibbs_kernel(cost, temperature)?;
    let mut a = kernel;
    for _ in 0..iterations {
        normalize_rows(&mut a);
        normalize_cols(&mut a);
    }
    let deviation = stochastic_deviation(&a);
    Ok(StochasticMatrix { matrix: a, stochastic_tol: deviation })
}

pub fn gibbs_kernel(cost: &DenseMatrix, temperature: f64) -> Result<DenseMatrix> {
    if !(temperature > 0.0) {
        return Err(Error::InvalidParameter(format!("temperature must be positive, got {temperature}")));
    }
    let data: Vec<f64> = cost.as_slice().iter().map(|d| (-d / temperature).exp()).collect();
    let min = data.iter().copied().fold(f64::INFINITY, f64::min);
    if min < UNDERFLOW_FLOOR {
        return Err(Error::NumericUnderflow { temperature, min });
    }
    DenseMatrix::from_row_major(cost.rows(), cost.cols(), data)
}

/// Sinkhorn balancing with early stopping. The deviation is checked before
/// each full row+column pass; an input that is already balanced comes back
/// untouched.
pub fn sinkhorn_balance(a: &DenseMatrix, max_iters: usize, tol: f64) -> Result<StochasticMatrix> {
    Ok(sinkhorn_balance_traced(a, max_iters, tol)?.0)
}

/// As [`sinkhorn_balance`], also returning the deviation observed before
/// each pass and after the last one.
pub fn sinkhorn_balance_traced(a: &DenseMatrix, max_iters: usize, tol: f64) -> Result<(StochasticMatrix, Vec<f64>)> {
    if !a.is_square() {
        return Err(Error::NotSquare { rows: a.rows(), cols: a.cols() });
    }
    let n = a.cols();
    if let Some(i) = a.as_slice().iter().position(|&v| !(v > 0.0)) {
        return Err(Error::NotPositive { row: i / n, col: i % n, value: a.as_slice()[i] });
    }
    let mut m = a.clone();
    let mut trace = Vec::new();
    let mut deviation = stochastic_deviation(&m);
    trace.push(deviation);
    for _ in 0..max_iters {
        if deviation <= tol {
            break;
        }
        normalize_rows(&mut m);
        normalize_cols(&mut m);
        deviation = stochastic_deviation(&m);
        trace.push(deviation);
    }
    Ok((StochasticMatrix { matrix: m, stochastic_tol: deviation }, trace))
}

fn normalize_rows(a: &mut DenseMatrix) {
    for r in 0..a.rows() {
        let row = a.row_mut(r);
        let s: f64 = row.iter().sum();
        row.iter_mut().for_each(|v| *v /= s);
    }
}

fn normalize_cols(a: &mut DenseMatrix) {
    let sums = a.col_sums();
    for r in 0..a.rows() {
        for (v, s) in a.row_mut(r).iter_mut().zip(&sums) {
            *v /= s;
        }
    }
}

/// Max over rows and columns of `|sum - 1|`.
pub fn stochastic_deviation(m: &DenseMatrix) -> f64 {
    m.row_sums()
        .into_iter()
        .chain(m.col_sums())
        .fold(0.0, |acc, s| acc.max((s - 1.0).abs()))
}

/// True iff all entries are `>= -tol` and every row/column sum is within
/// `tol` of one. The second value is the max sum deviation.
pub fn is_doubly_stochastic(m: &DenseMatrix, tol: f64) -> (bool, f64) {
    let deviation = stochastic_deviation(m);
    let nonneg = m.as_slice().iter().all(|&v| v >= -tol);
    (m.is_square() && nonneg && deviation <= tol, deviation)
}

/// Shannon entropy `-Σ m_ij ln m_ij` in nats, with `0 ln 0 = 0`.
pub fn entropy(m: &StochasticMatrix) -> f64 {
    -m.matrix()
        .as_slice()
        .iter()
        .filter(|&&v| v > 0.0)
        .map(|&v| v * v.ln())
        .sum::<f64>()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Primitivity {
    pub primitive: bool,
    /// Smallest `k` with `A^k` entrywise positive, when one exists.
    pub exponent: Option<usize>,
}

/// Wielandt test on the sparsity pattern: a nonnegative `n x n` matrix is
/// primitive iff `A^k > 0` for some `k <= (n-1)^2 + 1`.
pub fn is_primitive(m: &DenseMatrix) -> Primitivity {
    assert!(m.is_square(), "primitivity needs a square matrix");
    let n = m.rows();
    let pattern = BoolMatrix::from_pattern(m);
    let limit = (n - 1) * (n - 1) + 1;
    let mut power = pattern.clone();
    for k in 1..=limit {
        if power.all_set() {
            return Primitivity { primitive: true, exponent: Some(k) };
        }
        if k < limit {
            power = power.mul(&pattern);
        }
    }
    Primitivity { primitive: false, exponent: None }
}

/// Row-bitset boolean matrix.
#[derive(Clone, PartialEq, Eq)]
struct BoolMatrix {
    n: usize,
    words: usize,
    bits: Vec<u64>,
}

impl BoolMatrix {
    fn from_pattern(m: &DenseMatrix) -> Self {
        let n = m.rows();
        let words = n.div_ceil(64);
        let mut bits = vec![0u64; n * words];
        for r in 0..n {
            for (c, &v) in m.row(r).iter().enumerate() {
                if v > 0.0 {
                    bits[r * words + c / 64] |= 1 << (c % 64);
                }
            }
        }
        BoolMatrix { n, words, bits }
    }

    fn row(&self, r: usize) -> &[u64] {
        &self.bits[r * self.words..(r + 1) * self.words]
    }

    fn get(&self, r: usize, c: usize) -> bool {
        self.row(r)[c / 64] >> (c % 64) & 1 == 1
    }

    fn mul(&self, other: &BoolMatrix) -> BoolMatrix {
        let mut out = vec![0u64; self.bits.len()];
        for r in 0..self.n {
            let dst = &mut out[r * self.words..(r + 1) * self.words];
            for k in 0..self.n {
                if self.get(r, k) {
                    for (d, s) in dst.iter_mut().zip(other.row(k)) {
                        *d |= s;
                    }
                }
            }
        }
        BoolMatrix { n: self.n, words: self.words, bits: out }
    }

    fn all_set(&self) -> bool {
        let tail = self.n % 64;
        let last_mask = if tail == 0 { u64::MAX } else { (1u64 << tail) - 1 };
        (0..self.n).all(|r| {
            let row = self.row(r);
            row[..self.words - 1].iter().all(|&w| w == u64::MAX) && row[self.words - 1] & last_mask == last_mask
        })
    }
}

/// Formats a value with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    format!("{v:.16e}")
}

/// Matrix CSV: a first line holding `n`, then `n` lines of `n` entries.
pub fn write_matrix_csv<W: Write>(m: &DenseMatrix, mut out: W) -> Result<()> {
    if !m.is_square() {
        return Err(Error::NotSquare { rows: m.rows(), cols: m.cols() });
    }
    writeln!(out, "{}", m.rows())?;
    for r in 0..m.rows() {
        let line: Vec<String> = m.row(r).iter().map(|&v| fmt_f64(v)).collect();
        writeln!(out, "{}", line.join(","))?;
    }
    Ok(())
}

pub fn read_matrix_csv<R: BufRead>(input: R) -> Result<DenseMatrix> {
    let mut lines = input.lines().filter(|l| l.as_ref().map_or(true, |s| !s.trim().is_empty()));
    let header = lines.next().ok_or_else(|| Error::Parse("empty matrix file".into()))??;
    let n: usize = header
        .trim()
        .parse()
        .map_err(|_| Error::Parse(format!("expected dimension on first line, got {header:?}")))?;
    if n == 0 {
        return Err(Error::Parse("matrix dimension must be positive".into()));
    }
    let mut data = Vec::with_capacity(n * n);
    for r in 0..n {
        let line = lines
            .next()
            .ok_or_else(|| Error::Parse(format!("expected {n} rows, found {r}")))??;
        let row: Vec<f64> = line
            .split(',')
            .map(|t| t.trim().parse::<f64>().map_err(|_| Error::Parse(format!("bad entry {t:?} in row {r}"))))
            .collect::<Result<_>>()?;
        if row.len() != n {
            return Err(Error::Parse(format!("row {r} has {} entries, expected {n}", row.len())));
        }
        data.extend(row);
    }
    DenseMatrix::from_row_major(n, n, data)
}

/// Max entrywise distance from the uniform matrix `(1/n) 1 1ᵀ`.
pub fn uniform_matrix_deviation(m: &DenseMatrix) -> f64 {
    let u = 1.0 / m.rows() as f64;
    m.as_slice().iter().fold(0.0, |acc, v| acc.max((v - u).abs()))
}

/// Whether `M 1 = 1` and `Mᵀ 1 = 1` hold to `tol`.
pub fn preserves_ones(m: &DenseMatrix, tol: f64) -> bool {
    m.row_sums().into_iter().chain(m.col_sums()).all(|s| (s - 1.0).abs() <= tol)
}
