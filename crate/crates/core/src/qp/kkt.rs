use serde::{Deserialize, Serialize};

use super::linalg::norm_inf;
use super::{QpError, QpProblem, QpSolution};

/// Optimality residuals of a primal/dual pair, all in the infinity norm.
///
/// - `primal`: largest equality or inequality violation.
/// - `dual`: stationarity `‖quad x + lin + Aᵀ y_eq + Cᵀ y_ineq‖`, also covering
///   multipliers that push against an infinite bound.
/// - `comp`: largest `|y_i| · slack_i` over inequality rows, where the slack is
///   measured against the bound that the sign of `y_i` selects.
///
/// Sign convention: a positive inequality multiplier belongs to the upper
/// bound, a negative one to the lower bound.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct KktResiduals {
    pub primal: f64,
    pub dual: f64,
    pub comp: f64,
}

/// Magnitudes used to turn residuals into relative tests.
#[derive(Debug, Clone, Copy)]
pub(crate) struct KktScales {
    pub primal: f64,
    pub dual: f64,
}

impl KktResiduals {
    pub(crate) fn within(&self, scales: &KktScales, tol: f64) -> bool {
        self.primal <= tol * scales.primal
            && self.dual <= tol * scales.dual
            && self.comp <= tol * scales.dual.max(scales.primal)
    }
}

pub fn kkt_residuals(p: &QpProblem, s: &QpSolution) -> Result<KktResiduals, QpError> {
    check_len("x", s.x.len(), p.n)?;
    check_len("eq duals", s.duals.eq.len(), p.n_eq())?;
    check_len("ineq duals", s.duals.ineq.len(), p.n_ineq())?;
    Ok(evaluate(p, &s.x, &s.duals.eq, &s.duals.ineq).0)
}

fn check_len(what: &'static str, got: usize, want: usize) -> Result<(), QpError> {
    if got == want {
        Ok(())
    } else {
        Err(QpError::Dimension { what, got, want })
    }
}

pub(crate) fn evaluate(p: &QpProblem, x: &[f64], y_eq: &[f64], y_in: &[f64]) -> (KktResiduals, KktScales) {
    let ax = p.eq.a.mul(x);
    let cx = p.ineq.c.mul(x);
    let mut primal: f64 = 0.0;
    for (v, b) in ax.iter().zip(&p.eq.b) {
        primal = primal.max((v - b).abs());
    }
    for ((v, lo), hi) in cx.iter().zip(&p.ineq.lo).zip(&p.ineq.hi) {
        primal = primal.max(lo - v).max(v - hi);
    }

    let px = p.quad.mul(x);
    let mut aty = vec![0.0; p.n];
    p.eq.a.mul_t_add(y_eq, &mut aty);
    p.ineq.c.mul_t_add(y_in, &mut aty);
    let mut dual: f64 = 0.0;
    for i in 0..p.n {
        dual = dual.max((px[i] + p.lin[i] + aty[i]).abs());
    }

    let mut comp: f64 = 0.0;
    for i in 0..p.n_ineq() {
        let y = y_in[i];
        let (bound, v) = (if y > 0.0 { p.ineq.hi[i] } else { p.ineq.lo[i] }, cx[i]);
        if y == 0.0 {
            continue;
        }
        if bound.is_infinite() {
            dual = dual.max(y.abs());
        } else {
            comp = comp.max(y.abs() * (bound - v).abs());
        }
    }

    let primal_scale = 1f64.max(norm_inf(&ax)).max(norm_inf(&cx)).max(norm_inf(&p.eq.b));
    let dual_scale = 1f64.max(norm_inf(&px)).max(norm_inf(&p.lin)).max(norm_inf(&aty));
    (
        KktResiduals { primal, dual, comp },
        KktScales {
            primal: primal_scale,
            dual: dual_scale,
        },
    )
}
