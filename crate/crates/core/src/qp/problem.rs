use serde::{Deserialize, Serialize};

use super::linalg::Cholesky;
use super::sparse::SparseMatrix;
use super::QpError;

/// Diagnostic tag for a variable column: the symbol it stands for and, for
/// time-indexed quantities, the slot.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VarTag {
    pub symbol: String,
    pub slot: Option<usize>,
}

impl VarTag {
    pub fn new(symbol: impl Into<String>, slot: Option<usize>) -> Self {
        Self {
            symbol: symbol.into(),
            slot,
        }
    }
}

/// `a x = b`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EqConstraints {
    pub a: SparseMatrix,
    pub b: Vec<f64>,
}

/// `lo <= c x <= hi`; either side may be infinite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IneqConstraints {
    pub c: SparseMatrix,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

/// Convex QP in the form
///
/// ```text
/// minimize    ½ xᵀ quad x + linᵀ x + offset
/// subject to  eq.a x = eq.b
///             ineq.lo <= ineq.c x <= ineq.hi
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QpProblem {
    pub n: usize,
    pub quad: SparseMatrix,
    pub lin: Vec<f64>,
    pub offset: f64,
    pub eq: EqConstraints,
    pub ineq: IneqConstraints,
    pub names: Vec<VarTag>,
}

impl QpProblem {
    /// Unconstrained problem with zero objective over `n` variables.
    pub fn new(n: usize) -> Self {
        Self {
            n,
            quad: SparseMatrix::zeros(n, n),
            lin: vec![0.0; n],
            offset: 0.0,
            eq: EqConstraints {
                a: SparseMatrix::zeros(0, n),
                b: Vec::new(),
            },
            ineq: IneqConstraints {
                c: SparseMatrix::zeros(0, n),
                lo: Vec::new(),
                hi: Vec::new(),
            },
            names: (0..n).map(|i| VarTag::new(format!("x{i}"), None)).collect(),
        }
    }

    pub fn n_eq(&self) -> usize {
        self.eq.b.len()
    }

    pub fn n_ineq(&self) -> usize {
        self.ineq.lo.len()
    }

    pub fn add_eq(&mut self, row: Vec<(usize, f64)>, rhs: f64) -> usize {
        self.eq.a.push_row(row);
        self.eq.b.push(rhs);
        self.eq.b.len() - 1
    }

    pub fn add_ineq(&mut self, row: Vec<(usize, f64)>, lo: f64, hi: f64) -> usize {
        self.ineq.c.push_row(row);
        self.ineq.lo.push(lo);
        self.ineq.hi.push(hi);
        self.ineq.lo.len() - 1
    }

    /// Adds `v` to the symmetric pair `(i, j)` and `(j, i)` of `quad`
    /// (once on the diagonal).
    pub fn add_quad_sym(&mut self, i: usize, j: usize, v: f64) {
        self.quad.add(i, j, v);
        if i != j {
            self.quad.add(j, i, v);
        }
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        let px = self.quad.mul(x);
        let quad: f64 = px.iter().zip(x).map(|(a, b)| a * b).sum();
        let lin: f64 = self.lin.iter().zip(x).map(|(a, b)| a * b).sum();
        0.5 * quad + lin + self.offset
    }

    /// Checks dimensions, symmetry and positive semidefiniteness of `quad`.
    ///
    /// PSD is tested per connected block of the sparsity pattern by a Cholesky
    /// factorization of the block shifted by `1e-8 · ‖quad‖`. Success means the
    /// smallest eigenvalue is above the negative shift.
    pub fn validate(&self) -> Result<(), QpError> {
        let n = self.n;
        let dim = |what: &'static str, got: usize, want: usize| {
            if got == want {
                Ok(())
            } else {
                Err(QpError::Dimension { what, got, want })
            }
        };
        dim("quad rows", self.quad.nrows(), n)?;
        dim("quad cols", self.quad.ncols(), n)?;
        dim("lin", self.lin.len(), n)?;
        dim("eq cols", self.eq.a.ncols(), n)?;
        dim("eq rhs", self.eq.b.len(), self.eq.a.nrows())?;
        dim("ineq cols", self.ineq.c.ncols(), n)?;
        dim("ineq lo", self.ineq.lo.len(), self.ineq.c.nrows())?;
        dim("ineq hi", self.ineq.hi.len(), self.ineq.c.nrows())?;
        dim("names", self.names.len(), n)?;
        if let Some(i) = (0..self.n_ineq()).find(|&i| self.ineq.lo[i] > self.ineq.hi[i]) {
            return Err(QpError::InvertedBounds { row: i });
        }
        let finite = self.lin.iter().chain(&self.eq.b).all(|v| v.is_finite())
            && self.quad.iter().all(|(_, _, v)| v.is_finite())
            && self.eq.a.iter().all(|(_, _, v)| v.is_finite())
            && self.ineq.c.iter().all(|(_, _, v)| v.is_finite())
            && self.ineq.lo.iter().chain(&self.ineq.hi).all(|v| !v.is_nan());
        if !finite {
            return Err(QpError::NonFinite);
        }
        if !self.quad.is_symmetric(1e-12) {
            return Err(QpError::NotSymmetric);
        }
        self.check_psd()
    }

    fn check_psd(&self) -> Result<(), QpError> {
        let scale = self.quad.max_abs();
        if scale == 0.0 {
            return Ok(());
        }
        let shift = 1e-8 * scale * (self.n as f64).sqrt().max(1.0);
        for block in connected_blocks(&self.quad) {
            if block.len() == 1 {
                if self.quad.get(block[0], block[0]) < -shift {
                    return Err(QpError::NotPsd);
                }
                continue;
            }
            let k = block.len();
            let mut pos = vec![usize::MAX; self.n];
            for (li, &gi) in block.iter().enumerate() {
                pos[gi] = li;
            }
            let mut dense = vec![0.0; k * k];
            for (li, &gi) in block.iter().enumerate() {
                for &(gj, v) in self.quad.row(gi) {
                    dense[li * k + pos[gj]] = v;
                }
                dense[li * k + li] += shift;
            }
            if Cholesky::factor(k, dense).is_none() {
                return Err(QpError::NotPsd);
            }
        }
        Ok(())
    }
}

/// Groups variables whose quadratic terms are coupled. Variables without any
/// quadratic entry are omitted.
fn connected_blocks(m: &SparseMatrix) -> Vec<Vec<usize>> {
    let n = m.nrows();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    let mut used = vec![false; n];
    for (i, j, _) in m.iter() {
        used[i] = true;
        used[j] = true;
        let (a, b) = (find(&mut parent, i), find(&mut parent, j));
        if a != b {
            parent[a.max(b)] = a.min(b);
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for i in (0..n).filter(|&i| used[i]) {
        let r = find(&mut parent, i);
        groups.entry(r).or_default().push(i);
    }
    groups.into_values().collect()
}
