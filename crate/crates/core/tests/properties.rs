use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::SeedableRng;

use chaintraj::bundle::{builtin_text, BasisBundle};
use chaintraj::instances::{random_problem, InstanceOptions};
use chaintraj::model::{constraint_segment_count, segment_count};
use chaintraj::oracle::{double_integrator_reference, simulate_piecewise};
use chaintraj::planner::{reconstruct_times, solve_triangular, ParamEnv};
use chaintraj::poly::roots::roots_all;
use chaintraj::poly::{integrate_piecewise, real_nonneg_roots, Env, Symbol};
use chaintraj::{
    builtin_bundle, check_plan, condition_count, enumerate_profile_types, plan, switching_sequence,
    tie_map, validate_problem, BoundaryConditions, Bounds, ChainSpec, CheckTolerances,
    PlannerOptions, ProfileType, Sign,
};

#[test]
fn segment_counts() {
    for n in 1..=8 {
        assert_eq!(segment_count(n), (1 << n) - 1);
        assert_eq!(constraint_segment_count(n), (1 << (n - 1)) - 1);
    }
}

#[test]
fn switching_sequence_symmetry() {
    for n in 1..=8 {
        let p = switching_sequence(n, Sign::Positive).unwrap();
        let m = switching_sequence(n, Sign::Negative).unwrap();
        // reversal maps the sequence onto itself up to the parity of the order
        let parity = if n % 2 == 1 { 1 } else { -1 };
        let rev: Vec<i8> = p.sigma.iter().rev().map(|s| s * parity).collect();
        assert_eq!(rev, p.sigma, "order {n}");
        let neg: Vec<i32> = p.constraint_map.iter().map(|b| -b).collect();
        assert_eq!(m.constraint_map, neg);
    }
}

#[test]
fn profile_enumeration_is_complete() {
    for n in 1..=4 {
        let all = enumerate_profile_types(n);
        let nx = (1usize << (n - 1)) - 1;
        assert_eq!(all.len(), 1 << nx);
        let mut keys: Vec<String> = all.iter().map(|p| p.to_string()).collect();
        keys.sort();
        keys.dedup();
        assert_eq!(keys.len(), 1 << nx);
        for p in &all {
            let tm = tie_map(n, p).unwrap();
            assert_eq!(
                condition_count(n, p),
                tm.free.len(),
                "order {n} profile {p}"
            );
        }
    }
}

#[test]
fn bundles_round_trip_byte_identically() {
    for n in 1..=4 {
        let text = builtin_text(n).unwrap();
        let b = BasisBundle::from_json_str(text).unwrap();
        assert_eq!(b.to_canonical_string(), text);
    }
}

fn relative_residual(coeffs: &[f64], r: f64) -> f64 {
    let mut v = 0.0;
    let mut mag = 0.0;
    for c in coeffs {
        v = v * r + c;
        mag = mag * r.abs() + c.abs();
    }
    v.abs() / mag.max(f64::MIN_POSITIVE)
}

#[test]
fn unconstrained_order_three_system_is_solved_accurately() {
    let bundle = builtin_bundle(3).unwrap();
    let entry = bundle.profile(&ProfileType::unconstrained(3)).unwrap();
    let system = entry.system.as_ref().unwrap();
    let opts = PlannerOptions::default();
    let mut rng = StdRng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    let mut solved = 0;
    for _ in 0..10_000 {
        let p = random_problem(&mut rng, 3, &InstanceOptions::unconstrained());
        for sign in Sign::both() {
            let mut env = ParamEnv::new(&p, sign);
            if entry.guards.iter().any(|g| g.fires(&env, 1e-6)) {
                continue;
            }
            for a in solve_triangular(system, &mut env, &opts, 10.0) {
                for &(k, v) in &a {
                    env.set_time(k, v);
                }
                for e in &system.entries {
                    let coeffs: Vec<f64> = e
                        .coeffs
                        .iter()
                        .map(|c| c.eval(&env as &dyn Env).unwrap())
                        .collect();
                    let r = env.get(Symbol::T(e.unknown)).unwrap();
                    if coeffs.iter().any(|c| *c != 0.0) {
                        worst = worst.max(relative_residual(&coeffs, r));
                    }
                }
                env.clear_times();
                solved += 1;
            }
        }
    }
    assert!(solved > 1000);
    assert!(worst <= 1e-8, "worst relative residual {worst:e}");
}

#[test]
fn guard_is_load_bearing() {
    // on the manifold 2 umax x0_2 = x0_3^2 the back-substitution entries of the
    // default system vanish identically at the true t7; off it they do not
    let bundle = builtin_bundle(3).unwrap();
    let entry = bundle.profile(&ProfileType::unconstrained(3)).unwrap();
    let system = entry.system.as_ref().unwrap();
    let opts = PlannerOptions::default();
    for (x3, delta) in [(1.0, 1e-13), (0.7, -1e-13), (2.0, 0.0), (1.0, 0.3)] {
        let x2 = x3 * x3 / 2.0 + delta;
        let p = validate_problem(
            ChainSpec::new(3).unwrap(),
            Bounds::input_only(3, -1.0, 1.0),
            BoundaryConditions::new(vec![-2.0, x2, x3], vec![2.0, 0.0, 0.0]),
        )
        .unwrap();
        let mut env = ParamEnv::new(&p, Sign::Positive);
        let on_manifold = delta.abs() < 1e-12;
        assert_eq!(entry.guards[0].fires(&env, opts.guard_tol), on_manifold);
        let eval = |e: &chaintraj::bundle::Entry, env: &ParamEnv| -> Vec<f64> {
            e.coeffs
                .iter()
                .map(|c| c.eval(env as &dyn Env).unwrap())
                .collect()
        };
        let uni = eval(&system.entries[0], &env);
        let t7 = *real_nonneg_roots(&uni, opts.eps_im, opts.eps_t)
            .last()
            .unwrap();
        env.set_time(system.entries[0].unknown, t7);
        let next = eval(&system.entries[1], &env);
        let size = next.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if on_manifold {
            assert!(size < 1e-9, "{next:?}");
        } else {
            assert!(size > 1e-3, "{next:?}");
        }
    }
}

#[test]
fn double_integrator_classification_agrees() {
    let mut rng = StdRng::seed_from_u64(9);
    let opts = InstanceOptions {
        state_bound_probability: 0.7,
        ..InstanceOptions::default()
    };
    let mut compared = 0;
    for _ in 0..2000 {
        let p = random_problem(&mut rng, 2, &opts);
        let r = double_integrator_reference(p.x0(), p.xf(), &p.bounds).unwrap();
        let pl = plan(&p, &PlannerOptions::default()).unwrap();
        let cruise = pl.times[1] - pl.times[0];
        if cruise.abs() < 1e-6 * (1.0 + pl.duration) {
            continue;
        }
        compared += 1;
        assert_eq!(pl.profile.active_count() == 1, r.cruise);
    }
    assert!(compared > 500);
}

#[test]
fn plan_then_check_passes() {
    let mut rng = StdRng::seed_from_u64(17);
    for n in [2, 3] {
        for _ in 0..500 {
            let p = random_problem(&mut rng, n, &InstanceOptions::default());
            let pl = plan(&p, &PlannerOptions::default()).unwrap();
            let r = check_plan(&pl, &p, &CheckTolerances::default());
            assert!(r.pass, "{:?}", r.failures);
        }
    }
}

#[test]
fn rk4_refinement_is_stable() {
    // RK4 is exact per step for nilpotent chains up to order four, so halving
    // the step only changes rounding
    let mut rng = StdRng::seed_from_u64(23);
    for n in [2, 3, 4] {
        let opts = if n == 4 {
            InstanceOptions::unconstrained()
        } else {
            InstanceOptions::default()
        };
        for _ in 0..200 {
            let p = random_problem(&mut rng, n, &opts);
            let pl = plan(&p, &PlannerOptions::default()).unwrap();
            let a = simulate_piecewise(p.x0(), &pl.times, &pl.trajectory.u_values, 4);
            let b = simulate_piecewise(p.x0(), &pl.times, &pl.trajectory.u_values, 8);
            let tol = 1e-12 * (1.0 + p.scale()) * (1.0 + pl.duration).powi(n as i32);
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() < tol, "{x} vs {y}");
            }
        }
    }
}

#[test]
fn small_faults_are_detected_at_the_large_scale() {
    let mut rng = StdRng::seed_from_u64(29);
    let mut detected = [0usize; 2];
    let total = 300;
    for k in 0..total {
        let p = random_problem(&mut rng, 3, &InstanceOptions::default());
        let pl = plan(&p, &PlannerOptions::default()).unwrap();
        for (slot, eps) in [1e-3, 1e-5].into_iter().enumerate() {
            let mut bad = pl.clone();
            let j = k % bad.times.len();
            bad.times[j] += eps;
            if !check_plan(&bad, &p, &CheckTolerances::default()).pass {
                detected[slot] += 1;
            }
        }
    }
    assert!(detected[0] as f64 >= 0.99 * total as f64, "{detected:?}");
    assert!(detected[1] <= detected[0]);
}

fn coeffs_from_roots(roots: &[f64], lead: f64) -> Vec<f64> {
    let mut c = vec![lead];
    for r in roots {
        let mut next = c.clone();
        next.push(0.0);
        for k in 0..c.len() {
            next[k + 1] -= r * c[k];
        }
        c = next;
    }
    c
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn root_residuals(coeffs in prop::collection::vec(-10.0f64..10.0, 2..8)) {
        prop_assume!(coeffs[0].abs() > 1e-3);
        let d = coeffs.len() - 1;
        let max = coeffs.iter().fold(0.0f64, |m, c| m.max(c.abs()));
        for z in roots_all(&coeffs).unwrap() {
            if z.im.abs() > 1e-8 * (1.0 + z.re.abs()) {
                continue;
            }
            let r = z.re;
            let v = coeffs.iter().fold(0.0, |acc, c| acc * r + c);
            prop_assert!(v.abs() <= 1e-9 * max * r.abs().max(1.0).powi(d as i32), "p({r}) = {v}");
        }
    }

    #[test]
    fn roots_are_scale_invariant(roots in prop::collection::vec(0.05f64..20.0, 1..6), s in 1e-3f64..1e3) {
        let c = coeffs_from_roots(&roots, 1.5);
        let scaled: Vec<f64> = c.iter().map(|v| v * s).collect();
        let a = real_nonneg_roots(&c, 1e-8, 1e-9);
        let b = real_nonneg_roots(&scaled, 1e-8, 1e-9);
        prop_assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= 1e-9 * (1.0 + x.abs()));
        }
    }

    #[test]
    fn trajectories_are_consistent(
        n in 2usize..=4,
        x0 in prop::collection::vec(-5.0f64..5.0, 4),
        spans in prop::collection::vec(0.0f64..2.0, 15),
        umax in 0.1f64..5.0,
        umin in -5.0f64..-0.1,
    ) {
        let x0 = &x0[..n];
        let pat = switching_sequence(n, Sign::Positive).unwrap();
        let mut t = 0.0;
        let times: Vec<f64> = spans[..pat.sigma.len()].iter().map(|s| { t += s; t }).collect();
        let traj = integrate_piecewise(x0, &pat.sigma, &times, umin, umax).unwrap();
        for d in traj.continuity_defects() {
            prop_assert!(d <= 1e-10);
        }
        let total = traj.duration();
        let h = 1e-6;
        for k in 1..50 {
            let tk = total * k as f64 / 50.0;
            if times.iter().any(|b| (b - tk).abs() < 10.0 * h) {
                continue;
            }
            let (a, _) = traj.eval(tk - h);
            let (b, _) = traj.eval(tk + h);
            let (mid, _) = traj.eval(tk);
            for i in 0..n - 1 {
                let fd = (b[i] - a[i]) / (2.0 * h);
                prop_assert!((fd - mid[i + 1]).abs() <= 1e-6 * (1.0 + mid[i + 1].abs() + mid[i].abs()));
            }
        }
        for k in 0..=20 {
            let tk = total * k as f64 / 20.0;
            let cut: Vec<f64> = times.iter().map(|t| t.min(tk)).collect();
            let want = simulate_piecewise(x0, &cut, &traj.u_values, 4);
            let (got, _) = traj.eval(tk);
            for (a, b) in got.iter().zip(&want) {
                prop_assert!((a - b).abs() <= 1e-8 * (1.0 + b.abs()));
            }
        }
    }

    #[test]
    fn validation_is_idempotent(
        x0 in prop::collection::vec(-10.0f64..10.0, 3),
        xf in prop::collection::vec(-10.0f64..10.0, 3),
        u in (0.1f64..10.0, 0.1f64..10.0),
        b in (0.1f64..10.0, 0.1f64..10.0),
    ) {
        let bounds = Bounds::input_only(3, -u.0, u.1).with_state(2, -b.0, b.1);
        if let Ok(p) = validate_problem(ChainSpec::new(3).unwrap(), bounds, BoundaryConditions::new(x0, xf)) {
            prop_assert_eq!(p.revalidate().unwrap(), p);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn plans_are_ordered_and_reach_the_target(seed in any::<u64>(), n in 1usize..=3) {
        let mut rng = StdRng::seed_from_u64(seed);
        let p = random_problem(&mut rng, n, &InstanceOptions::default());
        let pl = plan(&p, &PlannerOptions::default()).unwrap();
        let mut prev = 0.0;
        for t in &pl.times {
            prop_assert!(*t >= prev);
            prev = *t;
        }
        prop_assert_eq!(pl.duration, *pl.times.last().unwrap());
        let end = pl.trajectory.final_state();
        for (x, f) in end.iter().zip(p.xf()) {
            prop_assert!((x - f).abs() <= 1e-7 * (1.0 + f.abs() + p.scale()));
        }
        let tm = tie_map(n, &pl.profile).unwrap();
        let free: Vec<(usize, f64)> = tm.free.iter().map(|&k| (k, pl.times[k - 1])).collect();
        prop_assert_eq!(reconstruct_times(&free, &tm), pl.times.clone());
    }
}
