use serde::{Deserialize, Serialize};

use super::kkt::{evaluate, KktResiduals, KktScales};
use super::linalg::{norm_inf, Cholesky, Ldlt};
use super::sparse::SparseMatrix;
use super::{Duals, QpError, QpProblem, QpSolution, QpStatus};

const RHO_MIN: f64 = 1e-6;
const RHO_MAX: f64 = 1e6;
const RHO_EQ_FACTOR: f64 = 1e3;
const SCALING_MIN: f64 = 1e-4;
const SCALING_MAX: f64 = 1e4;
const CHECK_EVERY: usize = 10;
const POLISH_DELTA: f64 = 1e-7;
const POLISH_REFINE: usize = 25;
const POLISH_PASSES: usize = 4;
const POLISH_ROUNDS: usize = 5;
/// Relative residual below which the active set read off the iterate is
/// considered worth polishing.
const POLISH_TRIGGER: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QpSettings {
    /// Relative KKT tolerance for declaring optimality.
    pub tol: f64,
    pub max_iter: usize,
    /// Initial splitting step (the ADMM penalty of the solver itself).
    pub step: f64,
    pub sigma: f64,
    /// Over-relaxation factor in (0, 2).
    pub relaxation: f64,
    /// Iterations between step rebalancing checks.
    pub adapt_interval: usize,
    pub scaling_iters: usize,
    pub polish: bool,
    /// Threshold for the primal infeasibility certificate.
    pub infeasibility_tol: f64,
}

impl Default for QpSettings {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 200_000,
            step: 0.1,
            sigma: 1e-6,
            relaxation: 1.6,
            adapt_interval: 100,
            scaling_iters: 10,
            polish: true,
            infeasibility_tol: 1e-5,
        }
    }
}

/// One-shot solve.
pub fn solve_qp(p: &QpProblem, settings: &QpSettings) -> Result<QpSolution, QpError> {
    let mut solver = QpSolver::new(p.clone(), *settings)?;
    Ok(solver.solve())
}

/// Active state of a stacked constraint row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Active {
    Free,
    Lower,
    Upper,
    Fixed,
}

struct PolishFactor {
    signature: Vec<Active>,
    rows: Vec<usize>,
    ldlt: Ldlt,
}

/// Reusable solver. The matrices are fixed at construction; the linear cost
/// may be replaced between solves, and the last iterate and factorizations
/// are kept as a warm start.
pub struct QpSolver {
    problem: QpProblem,
    settings: QpSettings,
    n: usize,
    m: usize,
    n_eq: usize,
    // stacked original constraints [eq; ineq]
    a: SparseMatrix,
    l: Vec<f64>,
    u: Vec<f64>,
    // scaled data
    ps: SparseMatrix,
    qs: Vec<f64>,
    as_: SparseMatrix,
    ls: Vec<f64>,
    us: Vec<f64>,
    d: Vec<f64>,
    e: Vec<f64>,
    cost_scale: f64,
    rho: f64,
    row_rho: Vec<f64>,
    factor: Option<Cholesky>,
    // scaled iterate
    x: Vec<f64>,
    z: Vec<f64>,
    y: Vec<f64>,
    polish_factor: Option<PolishFactor>,
    last_signature: Option<Vec<Active>>,
}

impl QpSolver {
    pub fn new(problem: QpProblem, settings: QpSettings) -> Result<Self, QpError> {
        problem.validate()?;
        let n = problem.n;
        let n_eq = problem.n_eq();
        let a = problem.eq.a.vstack(&problem.ineq.c);
        let m = a.nrows();
        let mut l = problem.eq.b.clone();
        l.extend_from_slice(&problem.ineq.lo);
        let mut u = problem.eq.b.clone();
        u.extend_from_slice(&problem.ineq.hi);

        let mut solver = Self {
            n,
            m,
            n_eq,
            ps: problem.quad.clone(),
            qs: problem.lin.clone(),
            as_: a.clone(),
            ls: l.clone(),
            us: u.clone(),
            a,
            l,
            u,
            d: vec![1.0; n],
            e: vec![1.0; m],
            cost_scale: 1.0,
            rho: settings.step.clamp(RHO_MIN, RHO_MAX),
            row_rho: vec![0.0; m],
            factor: None,
            x: vec![0.0; n],
            z: vec![0.0; m],
            y: vec![0.0; m],
            polish_factor: None,
            last_signature: None,
            problem,
            settings,
        };
        solver.equilibrate();
        solver.update_row_rho();
        solver.refactor()?;
        Ok(solver)
    }

    pub fn problem(&self) -> &QpProblem {
        &self.problem
    }

    /// Replaces the linear cost and objective offset; matrices and warm start
    /// are kept.
    pub fn set_lin(&mut self, lin: &[f64], offset: f64) -> Result<(), QpError> {
        if lin.len() != self.n {
            return Err(QpError::Dimension {
                what: "lin",
                got: lin.len(),
                want: self.n,
            });
        }
        if lin.iter().any(|v| !v.is_finite()) {
            return Err(QpError::NonFinite);
        }
        self.problem.lin.copy_from_slice(lin);
        self.problem.offset = offset;
        for j in 0..self.n {
            self.qs[j] = self.cost_scale * self.d[j] * lin[j];
        }
        Ok(())
    }

    /// Modified Ruiz equilibration of the KKT matrix followed by cost scaling.
    fn equilibrate(&mut self) {
        let (n, m) = (self.n, self.m);
        for _ in 0..self.settings.scaling_iters {
            let mut col = vec![0.0f64; n];
            for (i, j, v) in self.ps.iter() {
                let _ = i;
                col[j] = col[j].max(v.abs());
            }
            let mut row = vec![0.0f64; m];
            for (i, j, v) in self.as_.iter() {
                col[j] = col[j].max(v.abs());
                row[i] = row[i].max(v.abs());
            }
            let dv: Vec<f64> = col.iter().map(|&c| scaling_factor(c)).collect();
            let ev: Vec<f64> = row.iter().map(|&r| scaling_factor(r)).collect();
            self.ps.scale_entries(|i, j, v| v * dv[i] * dv[j]);
            self.as_.scale_entries(|i, j, v| v * ev[i] * dv[j]);
            for j in 0..n {
                self.qs[j] *= dv[j];
                self.d[j] *= dv[j];
            }
            for i in 0..m {
                self.e[i] *= ev[i];
            }

            let mut pcol = vec![0.0f64; n];
            for (_, j, v) in self.ps.iter() {
                pcol[j] = pcol[j].max(v.abs());
            }
            let mean = if n > 0 {
                pcol.iter().sum::<f64>() / n as f64
            } else {
                0.0
            };
            let gamma = 1.0 / scaling_clamp(mean.max(norm_inf(&self.qs)));
            self.ps.scale_entries(|_, _, v| v * gamma);
            for q in &mut self.qs {
                *q *= gamma;
            }
            self.cost_scale *= gamma;
        }
        for i in 0..m {
            self.ls[i] = self.l[i] * self.e[i];
            self.us[i] = self.u[i] * self.e[i];
        }
    }

    fn update_row_rho(&mut self) {
        for i in 0..self.m {
            self.row_rho[i] = if self.l[i] == self.u[i] {
                RHO_EQ_FACTOR * self.rho
            } else if self.l[i].is_infinite() && self.u[i].is_infinite() {
                RHO_MIN
            } else {
                self.rho
            };
        }
    }

    /// Factors `P + σI + Aᵀ R A` in scaled space.
    fn refactor(&mut self) -> Result<(), QpError> {
        let n = self.n;
        let mut k = vec![0.0; n * n];
        for (i, j, v) in self.ps.iter() {
            k[i * n + j] += v;
        }
        for i in 0..n {
            k[i * n + i] += self.settings.sigma;
        }
        for r in 0..self.m {
            let rr = self.row_rho[r];
            let row = self.as_.row(r);
            for &(i, vi) in row {
                for &(j, vj) in row {
                    if j <= i {
                        k[i * n + j] += rr * vi * vj;
                    }
                }
            }
        }
        self.factor = Some(Cholesky::factor(n, k).ok_or(QpError::Factorization)?);
        Ok(())
    }

    fn to_original(&self) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let x: Vec<f64> = self.x.iter().zip(&self.d).map(|(v, d)| v * d).collect();
        let z: Vec<f64> = self.z.iter().zip(&self.e).map(|(v, e)| v / e).collect();
        let y: Vec<f64> = self
            .y
            .iter()
            .zip(&self.e)
            .map(|(v, e)| v * e / self.cost_scale)
            .collect();
        (x, z, y)
    }

    fn load_original(&mut self, x: &[f64], y: &[f64]) {
        let ax = self.a.mul(x);
        for j in 0..self.n {
            self.x[j] = x[j] / self.d[j];
        }
        for i in 0..self.m {
            self.z[i] = ax[i].clamp(self.l[i], self.u[i]) * self.e[i];
            self.y[i] = y[i] * self.cost_scale / self.e[i];
        }
    }

    fn split_duals(&self, y: &[f64]) -> Duals {
        Duals {
            eq: y[..self.n_eq].to_vec(),
            ineq: y[self.n_eq..].to_vec(),
        }
    }

    fn residuals(&self, x: &[f64], y: &[f64]) -> (KktResiduals, KktScales) {
        evaluate(&self.problem, x, &y[..self.n_eq], &y[self.n_eq..])
    }

    fn finish(&self, x: Vec<f64>, y: Vec<f64>, status: QpStatus, iterations: usize, polished: bool) -> QpSolution {
        let (res, _) = self.residuals(&x, &y);
        let objective = self.problem.objective(&x);
        QpSolution {
            duals: self.split_duals(&y),
            x,
            status,
            iterations,
            residuals: res,
            objective,
            polished,
        }
    }

    pub fn solve(&mut self) -> QpSolution {
        let tol = self.settings.tol;
        let polish = self.settings.polish;

        // the previous active set is usually still right after a cost update
        if polish {
            if let Some(sig) = self.last_signature.clone() {
                if let Some(sol) = self.try_polish(&sig, 0) {
                    return sol;
                }
            }
        }

        let (n, m) = (self.n, self.m);
        let alpha = self.settings.relaxation;
        let sigma = self.settings.sigma;
        let mut rhs = vec![0.0; n];
        let mut xt = vec![0.0; n];
        let mut zt = vec![0.0; m];
        let mut y_prev = vec![0.0; m];
        let mut tmp = vec![0.0; m];
        let mut best: Option<(f64, Vec<f64>, Vec<f64>)> = None;
        let mut failed_signature: Option<Vec<Active>> = None;

        for k in 1..=self.settings.max_iter {
            y_prev.copy_from_slice(&self.y);

            for j in 0..n {
                rhs[j] = sigma * self.x[j] - self.qs[j];
            }
            for i in 0..m {
                tmp[i] = self.row_rho[i] * self.z[i] - self.y[i];
            }
            self.as_.mul_t_add(&tmp, &mut rhs);
            xt.copy_from_slice(&rhs);
            self.factor
                .as_ref()
                .expect("factor present after construction")
                .solve_in_place(&mut xt);
            self.as_.mul_vec(&xt, &mut zt);
            for j in 0..n {
                self.x[j] = alpha * xt[j] + (1.0 - alpha) * self.x[j];
            }
            for i in 0..m {
                let zr = alpha * zt[i] + (1.0 - alpha) * self.z[i];
                let zn = (zr + self.y[i] / self.row_rho[i]).clamp(self.ls[i], self.us[i]);
                self.y[i] += self.row_rho[i] * (zr - zn);
                self.z[i] = zn;
            }

            let adapt = self.settings.adapt_interval > 0 && k % self.settings.adapt_interval == 0;
            if k % CHECK_EVERY != 0 && k != self.settings.max_iter && !adapt {
                continue;
            }

            let (x, z, y) = self.to_original();
            let ax = self.a.mul(&x);
            let r_prim = ax.iter().zip(&z).fold(0.0f64, |acc, (a, b)| acc.max((a - b).abs()));
            let mut grad = self.problem.quad.mul(&x);
            for j in 0..n {
                grad[j] += self.problem.lin[j];
            }
            let px_norm = norm_inf(&grad);
            self.a.mul_t_add(&y, &mut grad);
            let r_dual = norm_inf(&grad);
            let mut aty = vec![0.0; n];
            self.a.mul_t_add(&y, &mut aty);
            let p_scale = 1f64.max(norm_inf(&ax)).max(norm_inf(&z));
            let d_scale = 1f64.max(px_norm).max(norm_inf(&aty)).max(norm_inf(&self.problem.lin));
            let metric = (r_prim / p_scale).max(r_dual / d_scale);

            if best.as_ref().is_none_or(|(b, _, _)| metric < *b) {
                best = Some((metric, x.clone(), y.clone()));
            }

            if r_prim <= tol * p_scale && r_dual <= tol * d_scale {
                let sig = self.signature(&z, &y);
                if polish {
                    if let Some(sol) = self.try_polish(&sig, k) {
                        return sol;
                    }
                }
                self.last_signature = Some(sig);
                let (res, scales) = self.residuals(&x, &y);
                if res.within(&scales, tol) {
                    return self.finish(x, y, QpStatus::Optimal, k, false);
                }
            }

            if polish && metric <= POLISH_TRIGGER {
                let sig = self.signature(&z, &y);
                if failed_signature.as_ref() != Some(&sig) {
                    if let Some(sol) = self.try_polish(&sig, k) {
                        return sol;
                    }
                    failed_signature = Some(sig);
                }
            }

            if self.infeasibility_certificate(&y_prev) {
                self.last_signature = None;
                return self.finish(x, y, QpStatus::Infeasible, k, false);
            }

            if adapt {
                self.adapt_step();
            }
        }

        let (_, x, y) = best.unwrap_or_else(|| {
            let (x, _, y) = self.to_original();
            (f64::INFINITY, x, y)
        });
        self.finish(x, y, QpStatus::MaxIter, self.settings.max_iter, false)
    }

    fn signature(&self, z: &[f64], y: &[f64]) -> Vec<Active> {
        (0..self.m)
            .map(|i| {
                if self.l[i] == self.u[i] {
                    Active::Fixed
                } else if self.l[i].is_finite() && z[i] - self.l[i] < -y[i] {
                    Active::Lower
                } else if self.u[i].is_finite() && self.u[i] - z[i] < y[i] {
                    Active::Upper
                } else {
                    Active::Free
                }
            })
            .collect()
    }

    /// Solves the equality-constrained QP on the guessed active set and
    /// accepts the result only if it satisfies the full KKT test.
    ///
    /// A failed candidate gets a few rounds of active-set correction: violated
    /// free rows are added, rows whose multiplier has the wrong sign are
    /// dropped.
    fn try_polish(&mut self, sig: &[Active], iterations: usize) -> Option<QpSolution> {
        let tol = self.settings.tol;
        let mut sig = sig.to_vec();
        let (x_hat, _, y_hat) = self.to_original();
        for _ in 0..POLISH_ROUNDS {
            let (x, y) = self.polish_candidate(&sig, &x_hat, &y_hat)?;
            let (res, scales) = self.residuals(&x, &y);
            if res.within(&scales, tol) {
                self.last_signature = Some(sig);
                self.load_original(&x, &y);
                return Some(self.finish(x, y, QpStatus::Optimal, iterations, true));
            }
            let ax = self.a.mul(&x);
            let p_thr = tol * scales.primal;
            let d_thr = tol * scales.dual;
            let mut changed = false;
            for i in 0..self.m {
                let next = match sig[i] {
                    Active::Free if ax[i] < self.l[i] - p_thr => Active::Lower,
                    Active::Free if ax[i] > self.u[i] + p_thr => Active::Upper,
                    Active::Lower if y[i] > d_thr => Active::Free,
                    Active::Upper if y[i] < -d_thr => Active::Free,
                    s => s,
                };
                changed |= next != sig[i];
                sig[i] = next;
            }
            if !changed {
                break;
            }
        }
        None
    }

    /// Solves the reduced KKT system by iterative refinement on a regularized
    /// factor. The first solve is proximal around the ADMM iterate
    /// `(x_hat, y_hat)`, so directions the active set leaves undetermined
    /// (non-unique primal or dependent rows) stay close to that iterate
    /// instead of drifting to an arbitrary minimum-norm point.
    fn polish_candidate(&mut self, sig: &[Active], x_hat: &[f64], y_hat: &[f64]) -> Option<(Vec<f64>, Vec<f64>)> {
        let n = self.n;
        let reuse = self.polish_factor.as_ref().is_some_and(|f| f.signature == sig);
        if !reuse {
            let rows: Vec<usize> = (0..self.m).filter(|&i| sig[i] != Active::Free).collect();
            let dim = n + rows.len();
            let mut k = vec![0.0; dim * dim];
            for (i, j, v) in self.problem.quad.iter() {
                k[i * dim + j] += v;
            }
            for i in 0..n {
                k[i * dim + i] += POLISH_DELTA;
            }
            for (r, &row) in rows.iter().enumerate() {
                let ri = n + r;
                for &(j, v) in self.a.row(row) {
                    k[ri * dim + j] = v;
                    k[j * dim + ri] = v;
                }
                k[ri * dim + ri] = -POLISH_DELTA;
            }
            let ldlt = Ldlt::factor(dim, k)?;
            self.polish_factor = Some(PolishFactor {
                signature: sig.to_vec(),
                rows,
                ldlt,
            });
        }
        let pf = self.polish_factor.as_ref().expect("polish factor just set");
        let rows = &pf.rows;
        let dim = n + rows.len();
        let mut rhs = vec![0.0; dim];
        for j in 0..n {
            rhs[j] = -self.problem.lin[j];
        }
        for (r, &row) in rows.iter().enumerate() {
            rhs[n + r] = match sig[row] {
                Active::Upper => self.u[row],
                _ => self.l[row],
            };
        }
        // Proximal passes: each solves the regularized system, whose matrix is
        // exactly the factored one, anchored at the previous pass. Refinement
        // only removes factorization error.
        let base = rhs;
        let mut anchor_x = x_hat.to_vec();
        let mut anchor_y: Vec<f64> = rows.iter().map(|&row| y_hat[row]).collect();
        let mut sol = vec![0.0; dim];
        for _ in 0..POLISH_PASSES {
            let mut rhs = base.clone();
            for j in 0..n {
                rhs[j] += POLISH_DELTA * anchor_x[j];
            }
            for r in 0..rows.len() {
                rhs[n + r] -= POLISH_DELTA * anchor_y[r];
            }
            sol.copy_from_slice(&rhs);
            pf.ldlt.solve_in_place(&mut sol);
            for _ in 0..POLISH_REFINE {
                let (xs, ys) = sol.split_at(n);
                let mut r = vec![0.0; dim];
                let px = self.problem.quad.mul(xs);
                for j in 0..n {
                    r[j] = rhs[j] - px[j] - POLISH_DELTA * xs[j];
                }
                for (ri, &row) in rows.iter().enumerate() {
                    let mut ax = 0.0;
                    for &(j, v) in self.a.row(row) {
                        r[j] -= v * ys[ri];
                        ax += v * xs[j];
                    }
                    r[n + ri] = rhs[n + ri] - ax + POLISH_DELTA * ys[ri];
                }
                if norm_inf(&r) <= 1e-15 * (1.0 + norm_inf(&rhs)) {
                    break;
                }
                pf.ldlt.solve_in_place(&mut r);
                for (s, d) in sol.iter_mut().zip(&r) {
                    *s += d;
                }
            }
            let step = sol[..n]
                .iter()
                .zip(&anchor_x)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max);
            anchor_x.copy_from_slice(&sol[..n]);
            anchor_y.copy_from_slice(&sol[n..]);
            if step <= 1e-13 * (1.0 + norm_inf(&anchor_x)) {
                break;
            }
        }
        if sol.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let x = sol[..n].to_vec();
        let mut y = vec![0.0; self.m];
        for (r, &row) in rows.iter().enumerate() {
            y[row] = sol[n + r];
        }
        Some((x, y))
    }

    fn infeasibility_certificate(&self, y_prev: &[f64]) -> bool {
        let dy: Vec<f64> = (0..self.m)
            .map(|i| (self.y[i] - y_prev[i]) * self.e[i] / self.cost_scale)
            .collect();
        let norm = norm_inf(&dy);
        if !(norm > 1e-30) {
            return false;
        }
        let eps = self.settings.infeasibility_tol;
        let mut aty = vec![0.0; self.n];
        self.a.mul_t_add(&dy, &mut aty);
        if norm_inf(&aty) > eps * norm {
            return false;
        }
        let mut support = 0.0;
        for i in 0..self.m {
            let v = dy[i];
            if v.abs() <= eps * norm {
                continue;
            }
            let bound = if v > 0.0 { self.u[i] } else { self.l[i] };
            if bound.is_infinite() {
                return false;
            }
            support += bound * v;
        }
        support < -eps * norm
    }

    fn adapt_step(&mut self) {
        let n = self.n;
        let ax = self.as_.mul(&self.x);
        let r_prim = ax
            .iter()
            .zip(&self.z)
            .fold(0.0f64, |acc, (a, b)| acc.max((a - b).abs()));
        let px = self.ps.mul(&self.x);
        let mut aty = vec![0.0; n];
        self.as_.mul_t_add(&self.y, &mut aty);
        let r_dual = (0..n)
            .map(|j| (px[j] + self.qs[j] + aty[j]).abs())
            .fold(0.0f64, f64::max);
        let prim_norm = norm_inf(&ax).max(norm_inf(&self.z)).max(1e-30);
        let dual_norm = norm_inf(&px).max(norm_inf(&aty)).max(norm_inf(&self.qs)).max(1e-30);
        let ratio = (r_prim / prim_norm) / (r_dual / dual_norm).max(1e-30);
        if !ratio.is_finite() || ratio <= 0.0 {
            return;
        }
        let new_rho = (self.rho * ratio.sqrt()).clamp(RHO_MIN, RHO_MAX);
        if new_rho > 5.0 * self.rho || new_rho < self.rho / 5.0 {
            let old = self.rho;
            self.rho = new_rho;
            self.update_row_rho();
            if self.refactor().is_err() {
                self.rho = old;
                self.update_row_rho();
                let _ = self.refactor();
            }
        }
    }
}

fn scaling_clamp(v: f64) -> f64 {
    if v < SCALING_MIN {
        1.0
    } else {
        v.min(SCALING_MAX)
    }
}

fn scaling_factor(norm: f64) -> f64 {
    1.0 / scaling_clamp(norm).sqrt()
}
