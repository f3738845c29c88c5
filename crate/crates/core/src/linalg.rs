//! Dense symmetric-indefinite LDLᵀ factorization with Bunch-Kaufman pivoting.
//!
//! Factors a symmetric matrix A as P A Pᵀ = L D Lᵀ where L is unit lower
//! triangular, D is block diagonal with 1×1 and 2×2 blocks, and P is a
//! permutation. By Sylvester's law of inertia the signs of D's eigenvalues
//! give the inertia of A, which is what the step computation needs to decide
//! whether the KKT matrix has the right eigenvalue signature. The factors are
//! reused to solve linear systems.
//!
//! The implementation is dense and targets small saddle-point systems
//! (a few hundred rows); no blocking or sparsity is attempted.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Bunch-Kaufman pivot threshold, (1 + √17)/8.
const ALPHA: f64 = 0.6403882032022076;

/// One diagonal block of the factor D.
#[derive(Debug, Clone, Copy)]
pub enum Pivot {
    /// 1×1 block `d` occupying one row.
    Single(f64),
    /// Symmetric 2×2 block [[d11, d21], [d21, d22]] occupying two rows.
    Double { d11: f64, d21: f64, d22: f64 },
}

/// Signature of a symmetric matrix: eigenvalue counts by sign.
///
/// Positive eigenvalues of D smaller than the supplied threshold are counted
/// separately as `weak` so callers can demand a quantitatively positive
/// definite block, not just a sign pattern.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Inertia {
    pub positive: usize,
    pub negative: usize,
    pub zero: usize,
    /// Positive but below the strictness threshold.
    pub weak: usize,
}

/// Factorization P A Pᵀ = L D Lᵀ of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct LdlFactors {
    dim: usize,
    /// Unit lower triangular factor (diagonal implicitly one).
    l: DMatrix<f64>,
    /// Block-diagonal pivots in row order.
    pivots: Vec<Pivot>,
    /// Starting row of each pivot, parallel to `pivots`.
    pivot_rows: Vec<usize>,
    /// perm[i] = original index moved to permuted position i.
    perm: Vec<usize>,
}

impl LdlFactors {
    /// Factor a symmetric matrix. Only the values of `a` are read; the caller
    /// is responsible for symmetry (the lower triangle is trusted where the
    /// two differ by rounding).
    pub fn factor(a: &DMatrix<f64>) -> Result<LdlFactors> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::InvalidArgument(format!(
                "ldl: matrix is {}x{}, expected square",
                a.nrows(),
                a.ncols()
            )));
        }
        if a.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("ldl input"));
        }

        let mut w = a.clone();
        // Work on an exactly symmetric copy so row/column swaps stay consistent.
        for i in 0..n {
            for j in 0..i {
                let s = 0.5 * (w[(i, j)] + w[(j, i)]);
                w[(i, j)] = s;
                w[(j, i)] = s;
            }
        }

        let mut l = DMatrix::<f64>::identity(n, n);
        let mut perm: Vec<usize> = (0..n).collect();
        let mut pivots = Vec::with_capacity(n);
        let mut pivot_rows = Vec::with_capacity(n);

        let mut k = 0;
        while k < n {
            let pivot_is_double = if k + 1 == n {
                false
            } else {
                // Largest subdiagonal entry of column k.
                let (mut lambda, mut r) = (0.0_f64, k + 1);
                for i in k + 1..n {
                    let v = w[(i, k)].abs();
                    if v > lambda {
                        lambda = v;
                        r = i;
                    }
                }
                let akk = w[(k, k)].abs();
                if akk >= ALPHA * lambda {
                    false
                } else {
                    // Largest off-diagonal entry of column r within the trailing block.
                    let mut sigma = 0.0_f64;
                    for i in k..n {
                        if i != r {
                            sigma = sigma.max(w[(i, r)].abs());
                        }
                    }
                    if akk * sigma >= ALPHA * lambda * lambda {
                        false
                    } else if w[(r, r)].abs() >= ALPHA * sigma {
                        swap_sym(&mut w, &mut l, &mut perm, k, r, k);
                        false
                    } else {
                        swap_sym(&mut w, &mut l, &mut perm, k + 1, r, k);
                        true
                    }
                }
            };

            if !pivot_is_double {
                let d = w[(k, k)];
                pivots.push(Pivot::Single(d));
                pivot_rows.push(k);
                if d != 0.0 {
                    for i in k + 1..n {
                        let m = w[(i, k)] / d;
                        l[(i, k)] = m;
                        if m != 0.0 {
                            for j in k + 1..=i {
                                let upd = m * w[(j, k)];
                                w[(i, j)] -= upd;
                                if i != j {
                                    w[(j, i)] = w[(i, j)];
                                }
                            }
                        }
                    }
                }
                // d == 0 with a nonzero column is excluded by the pivot choice;
                // a fully zero column contributes a zero eigenvalue and no update.
                k += 1;
            } else {
                let d11 = w[(k, k)];
                let d21 = w[(k + 1, k)];
                let d22 = w[(k + 1, k + 1)];
                let det = d11 * d22 - d21 * d21;
                if det == 0.0 {
                    return Err(Error::Internal(
                        "ldl: singular 2x2 pivot selected".into(),
                    ));
                }
                pivots.push(Pivot::Double { d11, d21, d22 });
                pivot_rows.push(k);
                let (i11, i21, i22) = (d22 / det, -d21 / det, d11 / det);
                for i in k + 2..n {
                    let (a1, a2) = (w[(i, k)], w[(i, k + 1)]);
                    let m1 = a1 * i11 + a2 * i21;
                    let m2 = a1 * i21 + a2 * i22;
                    l[(i, k)] = m1;
                    l[(i, k + 1)] = m2;
                    for j in k + 2..=i {
                        let upd = m1 * w[(j, k)] + m2 * w[(j, k + 1)];
                        w[(i, j)] -= upd;
                        if i != j {
                            w[(j, i)] = w[(i, j)];
                        }
                    }
                }
                k += 2;
            }
        }

        Ok(LdlFactors {
            dim: n,
            l,
            pivots,
            pivot_rows,
            perm,
        })
    }

    /// Eigenvalue sign counts of D (equivalently of A). Positive eigenvalues
    /// below `strict_tol` are reported as `weak`.
    pub fn inertia(&self, strict_tol: f64) -> Inertia {
        let mut out = Inertia {
            positive: 0,
            negative: 0,
            zero: 0,
            weak: 0,
        };
        let mut classify = |ev: f64| {
            if ev >= strict_tol {
                out.positive += 1;
            } else if ev > 0.0 {
                out.weak += 1;
            } else if ev < 0.0 {
                out.negative += 1;
            } else {
                out.zero += 1;
            }
        };
        for p in &self.pivots {
            match *p {
                Pivot::Single(d) => classify(d),
                Pivot::Double { d11, d21, d22 } => {
                    let tr = d11 + d22;
                    let det = d11 * d22 - d21 * d21;
                    let disc = (tr * tr - 4.0 * det).max(0.0).sqrt();
                    classify(0.5 * (tr + disc));
                    classify(0.5 * (tr - disc));
                }
            }
        }
        out
    }

    /// Solve A x = b with the stored factors.
    pub fn solve(&self, b: &DVector<f64>) -> Result<DVector<f64>> {
        let n = self.dim;
        if b.len() != n {
            return Err(Error::InvalidArgument(format!(
                "ldl solve: rhs has length {}, expected {}",
                b.len(),
                n
            )));
        }
        // z = P b
        let mut z = DVector::<f64>::zeros(n);
        for i in 0..n {
            z[i] = b[self.perm[i]];
        }
        // L y = z (unit lower)
        for i in 0..n {
            let mut s = z[i];
            for j in 0..i {
                s -= self.l[(i, j)] * z[j];
            }
            z[i] = s;
        }
        // D w = y
        for (p, &row) in self.pivots.iter().zip(&self.pivot_rows) {
            match *p {
                Pivot::Single(d) => {
                    if d == 0.0 {
                        return Err(Error::Internal("ldl: singular pivot in solve".into()));
                    }
                    z[row] /= d;
                }
                Pivot::Double { d11, d21, d22 } => {
                    let det = d11 * d22 - d21 * d21;
                    let (b1, b2) = (z[row], z[row + 1]);
                    z[row] = (d22 * b1 - d21 * b2) / det;
                    z[row + 1] = (-d21 * b1 + d11 * b2) / det;
                }
            }
        }
        // Lᵀ t = w
        for i in (0..n).rev() {
            let mut s = z[i];
            for j in i + 1..n {
                s -= self.l[(j, i)] * z[j];
            }
            z[i] = s;
        }
        // x = Pᵀ t
        let mut x = DVector::<f64>::zeros(n);
        for i in 0..n {
            x[self.perm[i]] = z[i];
        }
        Ok(x)
    }
}

/// Symmetric row/column interchange i ↔ j of the working matrix, mirrored in
/// the already-computed columns of L (columns `< k`) and in the permutation.
fn swap_sym(
    w: &mut DMatrix<f64>,
    l: &mut DMatrix<f64>,
    perm: &mut [usize],
    i: usize,
    j: usize,
    k: usize,
) {
    if i == j {
        return;
    }
    let n = w.nrows();
    for c in 0..n {
        w.swap((i, c), (j, c));
    }
    for r in 0..n {
        w.swap((r, i), (r, j));
    }
    for c in 0..k {
        l.swap((i, c), (j, c));
    }
    perm.swap(i, j);
}

/// λ_min of a symmetric matrix via nalgebra's symmetric eigensolver.
pub fn min_eigenvalue_sym(a: &DMatrix<f64>) -> f64 {
    a.clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .fold(f64::INFINITY, |m, &v| m.min(v))
}
