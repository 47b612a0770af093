//! Dense reference implementations and the comparison harness.
//!
//! Nothing here touches the interpreter or the generators: every result is
//! computed with plain loops over [`Matrix`] so it can certify them.

pub mod fuzz;

use serde::Serialize;
use thiserror::Error;

use crate::flatten::{AttentionSpec, Matrix};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("matrix is singular")]
    Singular,
}

pub type Result<T> = std::result::Result<T, OracleError>;

fn shape_err(what: &str, a: &Matrix, b: &Matrix) -> OracleError {
    OracleError::Shape(format!(
        "{what}: {}x{} and {}x{}",
        a.rows(),
        a.cols(),
        b.rows(),
        b.cols()
    ))
}

pub fn ref_transpose(a: &Matrix) -> Matrix {
    Matrix::from_fn(a.cols(), a.rows(), |i, j| a.get(j, i))
}

/// Classical triple loop.
pub fn ref_matmul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols() != b.rows() {
        return Err(shape_err("matmul", a, b));
    }
    let mut out = Matrix::zeros(a.rows(), b.cols());
    for i in 0..a.rows() {
        for j in 0..b.cols() {
            let mut acc = 0.0;
            for t in 0..a.cols() {
                acc += a.get(i, t) * b.get(t, j);
            }
            out.set(i, j, acc);
        }
    }
    Ok(out)
}

/// Row-wise softmax with max subtraction. With `keep_cols`, only the first
/// columns are normalized and the rest are set to zero.
pub fn ref_softmax_rows(a: &Matrix, keep_cols: Option<usize>) -> Matrix {
    let keep = keep_cols.unwrap_or(a.cols()).min(a.cols());
    let mut out = Matrix::zeros(a.rows(), a.cols());
    for i in 0..a.rows() {
        let row = &a.row(i)[..keep];
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|x| (x - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        for (j, e) in exps.iter().enumerate() {
            out.set(i, j, e / total);
        }
    }
    out
}

/// Softmax without stabilization, used to cross-check [`ref_softmax_rows`].
pub fn ref_softmax_rows_naive(a: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(a.rows(), a.cols());
    for i in 0..a.rows() {
        let total: f64 = a.row(i).iter().map(|x| x.exp()).sum();
        for j in 0..a.cols() {
            out.set(i, j, a.get(i, j).exp() / total);
        }
    }
    out
}

fn scores(a: &Matrix, x: &Matrix, scaled: bool) -> Result<Matrix> {
    if x.cols() != a.rows() || a.rows() != a.cols() {
        return Err(shape_err("scores", x, a));
    }
    let mut s = ref_matmul(&ref_matmul(x, a)?, &ref_transpose(x))?;
    if scaled {
        let f = 1.0 / (a.rows() as f64).sqrt();
        s = Matrix::from_fn(s.rows(), s.cols(), |i, j| s.get(i, j) * f);
    }
    Ok(s)
}

/// `softmax(X A Xᵀ [/√d]) X V`.
pub fn ref_softmax_attention(a: &Matrix, v: &Matrix, x: &Matrix, scaled: bool) -> Result<Matrix> {
    let p = ref_softmax_rows(&scores(a, x, scaled)?, None);
    ref_matmul(&p, &ref_matmul(x, v)?)
}

pub fn ref_softmax_attention_naive(
    a: &Matrix,
    v: &Matrix,
    x: &Matrix,
    scaled: bool,
) -> Result<Matrix> {
    let p = ref_softmax_rows_naive(&scores(a, x, scaled)?);
    ref_matmul(&p, &ref_matmul(x, v)?)
}

pub fn ref_relu(a: &Matrix) -> Matrix {
    Matrix::from_fn(a.rows(), a.cols(), |i, j| a.get(i, j).max(0.0))
}

/// `ReLU(softmax(X A Xᵀ) X V W₁) W₂` for a single head.
pub fn ref_encoder(
    a: &Matrix,
    v: &Matrix,
    w1: &Matrix,
    w2: &Matrix,
    x: &Matrix,
    scaled: bool,
) -> Result<Matrix> {
    let y = ref_softmax_attention(a, v, x, scaled)?;
    ref_matmul(&ref_relu(&ref_matmul(&y, w1)?), w2)
}

/// Per-head attention (and shared feed-forward, when the spec has one),
/// stacked head after head.
pub fn ref_multi_head(spec: &AttentionSpec, xs: &[Matrix], scaled: bool) -> Result<Vec<Matrix>> {
    if xs.len() != spec.head_count() {
        return Err(OracleError::Shape(format!(
            "{} inputs for {} heads",
            xs.len(),
            spec.head_count()
        )));
    }
    spec.heads()
        .iter()
        .zip(xs)
        .map(|(h, x)| match (&spec.w1, &spec.w2) {
            (Some(w1), Some(w2)) => ref_encoder(&h.a, &h.v, w1, w2, x, scaled),
            _ => ref_softmax_attention(&h.a, &h.v, x, scaled),
        })
        .collect()
}

/// `(X W_Q)(X W_K)ᵀ X V`.
pub fn ref_linear_attention(x: &Matrix, wq: &Matrix, wk: &Matrix, v: &Matrix) -> Result<Matrix> {
    let q = ref_matmul(x, wq)?;
    let k = ref_matmul(x, wk)?;
    ref_matmul(&ref_matmul(&q, &ref_transpose(&k))?, &ref_matmul(x, v)?)
}

/// `softmax((X W_Q)(E X W_K)ᵀ) F X V`.
pub fn ref_linformer(
    x: &Matrix,
    wq: &Matrix,
    wk: &Matrix,
    e: &Matrix,
    f: &Matrix,
    v: &Matrix,
) -> Result<Matrix> {
    let q = ref_matmul(x, wq)?;
    let ek = ref_matmul(e, &ref_matmul(x, wk)?)?;
    let p = ref_softmax_rows(&ref_matmul(&q, &ref_transpose(&ek))?, None);
    ref_matmul(&p, &ref_matmul(f, &ref_matmul(x, v)?)?)
}

/// Each adjacent pair sorted descending.
pub fn ref_maxmin(xs: &[f64]) -> Vec<f64> {
    xs.chunks(2)
        .flat_map(|p| match p {
            [a, b] if a < b => vec![*b, *a],
            other => other.to_vec(),
        })
        .collect()
}

fn check3(a: &Matrix) -> Result<()> {
    if a.shape() != (3, 3) {
        return Err(OracleError::Shape(format!(
            "expected 3x3, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    Ok(())
}

/// Signed cofactors from the 2×2 minors.
pub fn ref_cofactor3(a: &Matrix) -> Result<Matrix> {
    check3(a)?;
    let mut out = Matrix::zeros(3, 3);
    for i in 0..3 {
        for j in 0..3 {
            let rows: Vec<usize> = (0..3).filter(|&r| r != i).collect();
            let cols: Vec<usize> = (0..3).filter(|&c| c != j).collect();
            let minor = a.get(rows[0], cols[0]) * a.get(rows[1], cols[1])
                - a.get(rows[0], cols[1]) * a.get(rows[1], cols[0]);
            let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
            out.set(i, j, sign * minor);
        }
    }
    Ok(out)
}

/// Cofactor expansion along the first row.
pub fn ref_det3(a: &Matrix) -> Result<f64> {
    let c = ref_cofactor3(a)?;
    Ok((0..3).map(|j| a.get(0, j) * c.get(0, j)).sum())
}

/// Six-term permutation expansion.
pub fn ref_det3_leibniz(a: &Matrix) -> Result<f64> {
    check3(a)?;
    const PERMS: [([usize; 3], f64); 6] = [
        ([0, 1, 2], 1.0),
        ([1, 2, 0], 1.0),
        ([2, 0, 1], 1.0),
        ([0, 2, 1], -1.0),
        ([2, 1, 0], -1.0),
        ([1, 0, 2], -1.0),
    ];
    Ok(PERMS
        .iter()
        .map(|(p, s)| s * a.get(0, p[0]) * a.get(1, p[1]) * a.get(2, p[2]))
        .sum())
}

/// Adjugate over determinant.
pub fn ref_inverse3(a: &Matrix) -> Result<Matrix> {
    let det = ref_det3(a)?;
    if det == 0.0 {
        return Err(OracleError::Singular);
    }
    let c = ref_cofactor3(a)?;
    Ok(Matrix::from_fn(3, 3, |i, j| c.get(j, i) / det))
}

/// Gauss–Jordan elimination with partial pivoting, any square order.
pub fn ref_inverse_gauss(a: &Matrix) -> Result<Matrix> {
    let n = a.rows();
    if a.cols() != n {
        return Err(OracleError::Shape("inverse needs a square matrix".into()));
    }
    let mut m: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut row = a.row(i).to_vec();
            row.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            row
        })
        .collect();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&x, &y| m[x][col].abs().total_cmp(&m[y][col].abs()))
            .expect("non-empty range");
        if m[pivot][col] == 0.0 {
            return Err(OracleError::Singular);
        }
        m.swap(col, pivot);
        let p = m[col][col];
        for v in m[col].iter_mut() {
            *v /= p;
        }
        for r in 0..n {
            if r != col {
                let factor = m[r][col];
                if factor != 0.0 {
                    for c in 0..2 * n {
                        m[r][c] -= factor * m[col][c];
                    }
                }
            }
        }
    }
    Ok(Matrix::from_fn(n, n, |i, j| m[i][n + j]))
}

/// Below this magnitude the error is measured absolutely.
pub const ABS_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Mismatch {
    pub position: usize,
    pub expected: f64,
    pub actual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub max_abs_error: f64,
    pub max_rel_error: f64,
    pub first_mismatch: Option<Mismatch>,
    pub tolerance: f64,
    pub exact: bool,
    pub pass: bool,
}

/// Elementwise comparison. Exact mode requires equal values; otherwise each
/// element must be within `tolerance` relative error, or absolute error when
/// the expected magnitude is below [`ABS_FLOOR`].
pub fn compare(
    expected: &[f64],
    actual: &[f64],
    tolerance: f64,
    exact: bool,
) -> Result<ComparisonReport> {
    if expected.len() != actual.len() {
        return Err(OracleError::Shape(format!(
            "{} expected values, {} actual",
            expected.len(),
            actual.len()
        )));
    }
    let mut report = ComparisonReport {
        max_abs_error: 0.0,
        max_rel_error: 0.0,
        first_mismatch: None,
        tolerance,
        exact,
        pass: true,
    };
    for (position, (&e, &a)) in expected.iter().zip(actual).enumerate() {
        let abs = (e - a).abs();
        let rel = if e.abs() >= ABS_FLOOR {
            abs / e.abs()
        } else {
            abs
        };
        report.max_abs_error = report.max_abs_error.max(abs);
        report.max_rel_error = report.max_rel_error.max(rel);
        let ok = if exact { e == a } else { rel <= tolerance };
        if !ok || abs.is_nan() {
            report.pass = false;
            report.first_mismatch.get_or_insert(Mismatch {
                position,
                expected: e,
                actual: a,
            });
        }
    }
    Ok(report)
}

pub fn compare_matrices(
    expected: &Matrix,
    actual: &Matrix,
    tolerance: f64,
    exact: bool,
) -> Result<ComparisonReport> {
    if expected.shape() != actual.shape() {
        return Err(shape_err("compare", expected, actual));
    }
    compare(expected.data(), actual.data(), tolerance, exact)
}
