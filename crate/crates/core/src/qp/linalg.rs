//! Dense factorizations used by the splitting solver and the polish step.

/// Lower-triangular Cholesky factor of a symmetric positive definite matrix,
/// stored row-major.
#[derive(Debug, Clone)]
pub struct Cholesky {
    n: usize,
    l: Vec<f64>,
}

impl Cholesky {
    /// Factors the dense row-major matrix `a`. Only the lower triangle is read.
    /// Returns `None` when a pivot is not strictly positive.
    pub fn factor(n: usize, mut a: Vec<f64>) -> Option<Self> {
        assert_eq!(a.len(), n * n);
        for j in 0..n {
            let (head, tail) = a.split_at_mut(j * n);
            let row_j = &mut tail[..n];
            for k in 0..j {
                let row_k = &head[k * n..k * n + k];
                let s = dot(&row_j[..k], row_k);
                row_j[k] = (row_j[k] - s) / head[k * n + k];
            }
            let d = row_j[j] - dot(&row_j[..j], &row_j[..j]);
            if !(d > 0.0) || !d.is_finite() {
                return None;
            }
            row_j[j] = d.sqrt();
            for v in &mut row_j[j + 1..] {
                *v = 0.0;
            }
        }
        Some(Self { n, l: a })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solves `L Lᵀ x = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.n;
        for i in 0..n {
            let row = &self.l[i * n..i * n + i];
            b[i] = (b[i] - dot(row, &b[..i])) / self.l[i * n + i];
        }
        for i in (0..n).rev() {
            b[i] /= self.l[i * n + i];
            let bi = b[i];
            let row = &self.l[i * n..i * n + i];
            for (bk, lk) in b[..i].iter_mut().zip(row) {
                *bk -= lk * bi;
            }
        }
    }
}

/// `L D Lᵀ` factorization without pivoting, valid for quasi-definite
/// matrices such as regularized KKT systems.
#[derive(Debug, Clone)]
pub struct Ldlt {
    n: usize,
    l: Vec<f64>,
    d: Vec<f64>,
}

impl Ldlt {
    pub fn factor(n: usize, mut a: Vec<f64>) -> Option<Self> {
        assert_eq!(a.len(), n * n);
        let mut d = vec![0.0; n];
        // scratch holds L[j][k] * D[k] for the current row j
        let mut scratch = vec![0.0; n];
        for j in 0..n {
            let (head, tail) = a.split_at_mut(j * n);
            let row_j = &mut tail[..n];
            for k in 0..j {
                let row_k = &head[k * n..k * n + k];
                let s = dot(&scratch[..k], row_k);
                scratch[k] = row_j[k] - s;
                row_j[k] = scratch[k] / d[k];
            }
            let dj = row_j[j] - dot(&scratch[..j], &row_j[..j]);
            if dj == 0.0 || !dj.is_finite() {
                return None;
            }
            d[j] = dj;
            row_j[j] = 1.0;
            for v in &mut row_j[j + 1..] {
                *v = 0.0;
            }
        }
        Some(Self { n, l: a, d })
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.n;
        for i in 0..n {
            let row = &self.l[i * n..i * n + i];
            b[i] -= dot(row, &b[..i]);
        }
        for (bi, di) in b.iter_mut().zip(&self.d) {
            *bi /= di;
        }
        for i in (0..n).rev() {
            let bi = b[i];
            let row = &self.l[i * n..i * n + i];
            for (bk, lk) in b[..i].iter_mut().zip(row) {
                *bk -= lk * bi;
            }
        }
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    // four accumulators keep the loop vectorizable while staying deterministic
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = c * 4;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in chunks * 4..a.len() {
        s += a[i] * b[i];
    }
    s
}

pub fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}
