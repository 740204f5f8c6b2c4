//! Random small QPs checked against exhaustive active-set enumeration.

mod oracle;

use oracle::{brute_force, random_instance};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vpp_core::qp::{kkt_residuals, solve_qp, QpSettings, QpStatus};

#[test]
fn matches_active_set_enumeration_on_random_qps() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0001);
    let settings = QpSettings::default();
    let mut worst_rel: f64 = 0.0;
    let mut worst_kkt: f64 = 0.0;
    for case in 0..200 {
        let inst = random_instance(&mut rng);
        let oracle = brute_force(&inst);
        assert!(oracle.is_finite(), "case {case}: oracle found no feasible point");
        let sol = solve_qp(&inst.problem, &settings).unwrap();
        assert_eq!(sol.status, QpStatus::Optimal, "case {case}");
        let rel = (sol.objective - oracle).abs() / oracle.abs().max(1.0);
        assert!(rel <= 1e-6, "case {case}: solver {} oracle {oracle}", sol.objective);
        let r = kkt_residuals(&inst.problem, &sol).unwrap();
        let k = r.primal.max(r.dual).max(r.comp);
        assert!(
            k <= 1e-8,
            "case {case}: kkt {r:?} polished {} iters {} n {} y {:?} {:?}",
            sol.polished,
            sol.iterations,
            inst.problem.n,
            sol.duals,
            sol.x
        );
        worst_rel = worst_rel.max(rel);
        worst_kkt = worst_kkt.max(k);
    }
    eprintln!("worst relative gap {worst_rel:.3e}, worst KKT residual {worst_kkt:.3e}");
}

#[test]
fn scaling_cost_keeps_argmin() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0002);
    let settings = QpSettings::default();
    for _ in 0..30 {
        let inst = random_instance(&mut rng);
        let base = solve_qp(&inst.problem, &settings).unwrap();
        let factor = rng.gen_range(0.01..100.0);
        let mut scaled = inst.problem.clone();
        scaled.quad.scale_entries(|_, _, v| v * factor);
        scaled.lin.iter_mut().for_each(|v| *v *= factor);
        let s = solve_qp(&scaled, &settings).unwrap();
        assert_eq!(s.status, QpStatus::Optimal);
        let obj_base = inst.problem.objective(&base.x);
        let obj_scaled = inst.problem.objective(&s.x);
        // the argmin may be non-unique when quad is singular; compare values
        assert!((obj_base - obj_scaled).abs() <= 1e-7 * obj_base.abs().max(1.0));
    }
}

#[test]
fn solves_are_bit_identical() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0003);
    for _ in 0..20 {
        let inst = random_instance(&mut rng);
        let a = solve_qp(&inst.problem, &QpSettings::default()).unwrap();
        let b = solve_qp(&inst.problem, &QpSettings::default()).unwrap();
        assert_eq!(a.iterations, b.iterations);
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a.x), bits(&b.x));
        assert_eq!(bits(&a.duals.ineq), bits(&b.duals.ineq));
    }
}
