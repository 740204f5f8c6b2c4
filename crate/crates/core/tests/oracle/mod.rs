//! Random small QPs and an exhaustive active-set oracle for them.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use vpp_core::qp::QpProblem;

/// A half-space `a·x <= b` (finite side of an inequality row).
pub struct HalfSpace {
    a: Vec<f64>,
    b: f64,
}

pub struct Instance {
    pub problem: QpProblem,
    halfspaces: Vec<HalfSpace>,
    eqs: Vec<(Vec<f64>, f64)>,
}

pub fn random_instance(rng: &mut ChaCha8Rng) -> Instance {
    let n = rng.gen_range(1..=10);
    let rank = rng.gen_range(1..=n + 2).min(n + 2);
    let m: Vec<f64> = (0..rank * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mm = DMatrix::from_row_slice(rank, n, &m);
    let quad = mm.transpose() * &mm;
    let lin: DVector<f64> = if rank >= n {
        DVector::from_fn(n, |_, _| rng.gen_range(-2.0..2.0))
    } else {
        // keep the objective bounded below when quad is singular
        let w = DVector::from_fn(n, |_, _| rng.gen_range(-2.0..2.0));
        &quad * w
    };
    let x0: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();

    let mut p = QpProblem::new(n);
    for i in 0..n {
        for j in 0..n {
            let v = quad[(i, j)];
            if v != 0.0 {
                p.quad.add(i, j, v);
            }
        }
    }
    p.lin = lin.iter().copied().collect();

    let n_eq = if n > 1 { rng.gen_range(0..=1.min(n - 1)) } else { 0 };
    let mut eqs = Vec::new();
    for _ in 0..n_eq {
        let a: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b: f64 = a.iter().zip(&x0).map(|(u, v)| u * v).sum();
        p.add_eq(a.iter().copied().enumerate().collect(), b);
        eqs.push((a, b));
    }

    let budget = rng.gen_range(1..=10);
    let mut halfspaces = Vec::new();
    while halfspaces.len() < budget {
        let a: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let ax: f64 = a.iter().zip(&x0).map(|(u, v)| u * v).sum();
        let slack = |rng: &mut ChaCha8Rng| {
            if rng.gen_bool(0.2) {
                0.0
            } else {
                rng.gen_range(0.0..1.0)
            }
        };
        let row: Vec<(usize, f64)> = a.iter().copied().enumerate().collect();
        if halfspaces.len() + 2 <= budget && rng.gen_bool(0.3) {
            let (lo, hi) = (ax - slack(rng), ax + slack(rng));
            p.add_ineq(row, lo, hi);
            halfspaces.push(HalfSpace { a: a.clone(), b: hi });
            halfspaces.push(HalfSpace {
                a: a.iter().map(|v| -v).collect(),
                b: -lo,
            });
        } else if rng.gen_bool(0.5) {
            let hi = ax + slack(rng);
            p.add_ineq(row, f64::NEG_INFINITY, hi);
            halfspaces.push(HalfSpace { a, b: hi });
        } else {
            let lo = ax - slack(rng);
            p.add_ineq(row, lo, f64::INFINITY);
            halfspaces.push(HalfSpace {
                a: a.iter().map(|v| -v).collect(),
                b: -lo,
            });
        }
    }
    Instance {
        problem: p,
        halfspaces,
        eqs,
    }
}

/// Minimum over all active subsets of the stationary point of the
/// equality-constrained subproblem, restricted to feasible candidates.
pub fn brute_force(inst: &Instance) -> f64 {
    let p = &inst.problem;
    let n = p.n;
    let quad = DMatrix::from_row_slice(n, n, &p.quad.to_dense());
    let m = inst.halfspaces.len();
    let mut best = f64::INFINITY;
    for mask in 0u32..(1 << m) {
        let mut rows: Vec<(&[f64], f64)> = inst.eqs.iter().map(|(a, b)| (a.as_slice(), *b)).collect();
        for (k, h) in inst.halfspaces.iter().enumerate() {
            if mask & (1 << k) != 0 {
                rows.push((&h.a, h.b));
            }
        }
        let k = rows.len();
        let dim = n + k;
        let mut kkt = DMatrix::<f64>::zeros(dim, dim);
        let mut rhs = DVector::<f64>::zeros(dim);
        kkt.view_mut((0, 0), (n, n)).copy_from(&quad);
        for i in 0..n {
            rhs[i] = -p.lin[i];
        }
        for (r, (a, b)) in rows.iter().enumerate() {
            for j in 0..n {
                kkt[(n + r, j)] = a[j];
                kkt[(j, n + r)] = a[j];
            }
            rhs[n + r] = *b;
        }
        let sol = match kkt.clone().lu().solve(&rhs) {
            Some(s) if s.iter().all(|v| v.is_finite()) => s,
            _ => match kkt.clone().svd(true, true).solve(&rhs, 1e-10) {
                Ok(s) => s,
                Err(_) => continue,
            },
        };
        if (&kkt * &sol - &rhs).amax() > 1e-8 {
            continue;
        }
        let x: Vec<f64> = sol.iter().take(n).copied().collect();
        let feasible = inst.eqs.iter().all(|(a, b)| (dot(a, &x) - b).abs() <= 1e-8)
            && inst.halfspaces.iter().all(|h| dot(&h.a, &x) <= h.b + 1e-8);
        if feasible {
            best = best.min(p.objective(&x));
        }
    }
    best
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| u * v).sum()
}
