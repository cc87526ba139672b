//! Dense least-squares helpers for small design matrices.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative Schur-complement threshold below which a column counts as a
/// linear combination of the columns before it.
const COLLINEARITY_TOL: f64 = 1e-10;

/// Check a Gram matrix `XᵀWX` for collinear columns, naming each column
/// that is (numerically) spanned by the ones before it.
pub fn check_rank(gram: &DMatrix<f64>, names: &[String]) -> Result<()> {
    let p = gram.nrows();
    let mut kept: Vec<usize> = Vec::new();
    let mut collinear = Vec::new();
    for j in 0..p {
        let d = gram[(j, j)];
        if !(d > 0.0) {
            collinear.push(names[j].clone());
            continue;
        }
        let residual = if kept.is_empty() {
            d
        } else {
            let block = DMatrix::from_fn(kept.len(), kept.len(), |a, b| gram[(kept[a], kept[b])]);
            let col = DVector::from_fn(kept.len(), |a, _| gram[(kept[a], j)]);
            match block.cholesky() {
                Some(ch) => d - col.dot(&ch.solve(&col)),
                None => 0.0,
            }
        };
        if residual <= COLLINEARITY_TOL * d {
            collinear.push(names[j].clone());
        } else {
            kept.push(j);
        }
    }
    if collinear.is_empty() {
        Ok(())
    } else {
        Err(Error::RankDeficient { columns: collinear })
    }
}

/// Ordinary least squares via the normal equations.
pub fn ols(rows: &[Vec<f64>], y: &[f64], names: &[String]) -> Result<Vec<f64>> {
    let p = names.len();
    let mut gram = DMatrix::<f64>::zeros(p, p);
    let mut rhs = DVector::<f64>::zeros(p);
    for (r, &yi) in rows.iter().zip(y) {
        for a in 0..p {
            rhs[a] += r[a] * yi;
            for b in a..p {
                gram[(a, b)] += r[a] * r[b];
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            gram[(a, b)] = gram[(b, a)];
        }
    }
    check_rank(&gram, names)?;
    let ch = gram.cholesky().ok_or_else(|| Error::RankDeficient {
        columns: names.to_vec(),
    })?;
    Ok(ch.solve(&rhs).iter().copied().collect())
}
