//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits with a
//! failure status if any criterion fails.

use std::time::Instant;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use chaintraj::bundle::Selection;
use chaintraj::cli::{self, run_bench};
use chaintraj::document::PlanDocument;
use chaintraj::instances::{random_problem, InstanceOptions};
use chaintraj::oracle::{bisection_t_oracle, bisection_upper_bound, double_integrator_reference};
use chaintraj::planner::ParamEnv;
use chaintraj::poly::Env;
use chaintraj::{
    builtin_bundle, check_plan, condition_count, plan, switching_sequence, validate_problem,
    BoundaryConditions, Bounds, ChainSpec, CheckTolerances, PlannerOptions, ProfileType, Sign,
    ValidatedProblem,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn problem(bounds: Bounds, x0: Vec<f64>, xf: Vec<f64>) -> Option<ValidatedProblem> {
    let n = x0.len();
    validate_problem(
        ChainSpec::new(n).ok()?,
        bounds,
        BoundaryConditions::new(x0, xf),
    )
    .ok()
}

fn worked_example() -> Outcome {
    let start = Instant::now();
    let p = problem(
        Bounds::symmetric(3, 1.0),
        vec![-2.0, 0.5, 1.0],
        vec![2.0, 0.0, 0.0],
    )
    .unwrap();
    let opts = PlannerOptions::default();
    let Ok(plan) = plan(&p, &opts) else {
        return outcome(false, "planning failed");
    };
    let report = check_plan(&plan, &p, &CheckTolerances::default());
    let elapsed = start.elapsed().as_secs_f64();

    let entry = builtin_bundle(3)
        .unwrap()
        .profile(&ProfileType::unconstrained(3))
        .unwrap();
    let env = ParamEnv::new(&p, Sign::Positive);
    let divisor_zero = entry
        .guards
        .first()
        .map(|g| {
            g.divisors
                .iter()
                .all(|d| d.eval(&env as &dyn Env) == Ok(0.0))
        })
        .unwrap_or(false);
    let fired = matches!(
        entry.select(&env, opts.guard_tol),
        Selection::Auxiliary { guard: 0, .. }
    );

    let (t1, t3, t7) = (plan.times[0], plan.times[2], plan.times[6]);
    let exact = (400.0f64 / 3.0).cbrt() - 1.0;
    let rounded =
        (t1 - 0.28).abs() <= 5e-3 && (t3 - 2.83).abs() <= 5e-3 && (t7 - 4.11).abs() <= 5e-3;
    let closed = (t7 - exact).abs() <= 1e-9;
    let pass = rounded
        && closed
        && divisor_zero
        && fired
        && plan.guard == Some(0)
        && report.pass
        && elapsed < 1.0;
    outcome(
        pass,
        format!(
            "t1={t1:.6} t3={t3:.6} t7={t7:.10} |t7-exact|={:.1e} guard_fired={fired} divisor_zero={divisor_zero} check={} runtime={:.3}s",
            (t7 - exact).abs(),
            report.pass,
            elapsed
        ),
    )
}

fn algorithm_one() -> Outcome {
    let p = switching_sequence(3, Sign::Positive).unwrap();
    let pass =
        p.sigma == vec![1, 0, -1, 0, -1, 0, 1] && p.constraint_map == vec![4, 3, -4, 2, -4, -3, 4];
    outcome(
        pass,
        format!("sigma={:?} B={:?}", p.sigma, p.constraint_map),
    )
}

fn condition_identity() -> Outcome {
    let mut pass = true;
    for n in 1..=8usize {
        let sum: usize = (2..n).map(|k| (1usize << (k - 2)) * (n - k)).sum();
        let lhs = n + ((1usize << (n - 1)) - 1) + sum;
        let all = ProfileType::new(vec![true; (1 << (n - 1)) - 1]);
        pass &= lhs == (1 << n) - 1 && condition_count(n, &all) == lhs;
    }
    outcome(pass, "n = 1..8")
}

fn random_suite() -> Outcome {
    let start = Instant::now();
    let tol = CheckTolerances::default();
    let mut failures = 0;
    let (mut worst_term, mut worst_bound, mut worst_cont) = (0.0f64, 0.0f64, 0.0f64);
    for n in [2, 3] {
        let mut rng = StdRng::seed_from_u64(100 + n as u64);
        for _ in 0..10_000 {
            let p = random_problem(&mut rng, n, &InstanceOptions::default());
            let scale = p.scale();
            match plan(&p, &PlannerOptions::default()) {
                Ok(pl) => {
                    let r = check_plan(&pl, &p, &tol);
                    for (i, e) in r.terminal_error.iter().enumerate() {
                        worst_term = worst_term.max(e / (1.0 + p.xf()[i].abs() + scale));
                    }
                    worst_bound = worst_bound.max(
                        r.max_bound_violation
                            .iter()
                            .fold(0.0, |m, v| m.max(v / scale)),
                    );
                    worst_cont =
                        worst_cont.max(r.continuity_defects.iter().fold(0.0, |m, v| m.max(*v)));
                    if !r.pass {
                        failures += 1;
                    }
                }
                Err(_) => failures += 1,
            }
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    let pass = failures == 0
        && worst_term <= 1e-7
        && worst_bound <= 1e-6
        && worst_cont <= 1e-10
        && elapsed < 60.0;
    outcome(
        pass,
        format!(
            "2x10^4 instances, failures={failures} terminal={worst_term:.1e} bound={worst_bound:.1e} continuity={worst_cont:.1e} runtime={elapsed:.1}s"
        ),
    )
}

fn double_integrator_optimality() -> Outcome {
    let mut rng = StdRng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    let mut failures = 0;
    let kinds = [
        InstanceOptions::default(),
        InstanceOptions::unconstrained(),
        InstanceOptions {
            symmetric: true,
            ..InstanceOptions::default()
        },
        InstanceOptions {
            state_bound_probability: 1.0,
            ..InstanceOptions::default()
        },
    ];
    for k in 0..10_000 {
        let p = random_problem(&mut rng, 2, &kinds[k % kinds.len()]);
        let reference = double_integrator_reference(p.x0(), p.xf(), &p.bounds);
        match (plan(&p, &PlannerOptions::default()), reference) {
            (Ok(pl), Ok(r)) => worst = worst.max((pl.duration - r.duration).abs()),
            _ => failures += 1,
        }
    }
    outcome(
        failures == 0 && worst <= 1e-9,
        format!("10^4 instances, max |T - T_ref| = {worst:.1e}, failures={failures}"),
    )
}

fn triple_integrator_optimality() -> Outcome {
    let mut rng = StdRng::seed_from_u64(11);
    let mut outside = 0;
    let mut failures = 0;
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let p = random_problem(&mut rng, 3, &InstanceOptions::unconstrained());
        let Ok(pl) = plan(&p, &PlannerOptions::default()) else {
            failures += 1;
            continue;
        };
        let hi = bisection_upper_bound(&p, pl.duration);
        match bisection_t_oracle(p.x0(), p.xf(), &p.bounds, 0.0, hi, 1e-4) {
            Ok((lo, hi)) => {
                if pl.duration < lo || pl.duration > hi {
                    outside += 1;
                    worst = worst.max((pl.duration - lo).abs().min((pl.duration - hi).abs()));
                }
            }
            Err(_) => failures += 1,
        }
    }
    outcome(
        outside == 0 && failures == 0,
        format!("200 instances, outside bracket={outside} (worst distance {worst:.1e}), failures={failures}"),
    )
}

fn mirror_even(x: &[f64]) -> Vec<f64> {
    x.iter()
        .enumerate()
        .map(|(i, v)| if i % 2 == 1 { -v } else { *v })
        .collect()
}

fn properties() -> Outcome {
    let opts = PlannerOptions::default();
    let mut rng = StdRng::seed_from_u64(21);
    let (mut reversal, mut spatial, mut temporal, mut monotone) = (0, 0, 0, 0);
    let (mut w_rev, mut w_sp, mut w_tm, mut w_mono) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let mut skipped = 0;
    let count = 1000;
    for n in [2, 3] {
        let sym = InstanceOptions {
            symmetric: true,
            ..InstanceOptions::default()
        };
        for _ in 0..count {
            // time reversal with symmetric bounds
            let p = random_problem(&mut rng, n, &sym);
            let q = problem(p.bounds.clone(), mirror_even(p.xf()), mirror_even(p.x0())).unwrap();
            let (a, b) = (plan(&p, &opts).unwrap(), plan(&q, &opts).unwrap());
            let e = (a.duration - b.duration).abs() / (1.0 + a.duration);
            w_rev = w_rev.max(e);
            reversal += (e > 1e-8) as usize;

            // spatial scaling
            let p = random_problem(&mut rng, n, &InstanceOptions::default());
            let s: f64 = rng.random_range(0.1f64.ln()..10f64.ln()).exp();
            let b = &p.bounds;
            let sb = Bounds {
                u_min: b.u_min * s,
                u_max: b.u_max * s,
                x_min: b.x_min.iter().map(|v| v * s).collect(),
                x_max: b.x_max.iter().map(|v| v * s).collect(),
            };
            let sc = |x: &[f64]| x.iter().map(|v| v * s).collect::<Vec<_>>();
            let q = problem(sb, sc(p.x0()), sc(p.xf())).unwrap();
            let (a, c) = (plan(&p, &opts).unwrap(), plan(&q, &opts).unwrap());
            let e = a
                .times
                .iter()
                .zip(&c.times)
                .map(|(x, y)| (x - y).abs() / (1.0 + a.duration))
                .fold(0.0, f64::max);
            w_sp = w_sp.max(e);
            spatial += (e > 1e-9) as usize;

            // temporal scaling: t -> lambda t
            let lam: f64 = rng.random_range(0.5..2.0);
            let tb = Bounds {
                u_min: b.u_min / lam.powi(n as i32),
                u_max: b.u_max / lam.powi(n as i32),
                x_min: b
                    .x_min
                    .iter()
                    .enumerate()
                    .map(|(i, v)| v / lam.powi(i as i32))
                    .collect(),
                x_max: b
                    .x_max
                    .iter()
                    .enumerate()
                    .map(|(i, v)| v / lam.powi(i as i32))
                    .collect(),
            };
            let tc = |x: &[f64]| {
                x.iter()
                    .enumerate()
                    .map(|(i, v)| v / lam.powi(i as i32))
                    .collect::<Vec<_>>()
            };
            let q = problem(tb, tc(p.x0()), tc(p.xf())).unwrap();
            let c = plan(&q, &opts).unwrap();
            let e = a
                .times
                .iter()
                .zip(&c.times)
                .map(|(x, y)| (lam * x - y).abs() / (1.0 + c.duration))
                .fold(0.0, f64::max);
            w_tm = w_tm.max(e);
            temporal += (e > 1e-8) as usize;

            // shrinking u_max
            let f: f64 = rng.random_range(0.5..1.0);
            let mut mb = b.clone();
            mb.u_max *= f;
            match problem(mb, p.x0().to_vec(), p.xf().to_vec()) {
                Some(q) if q.warnings.is_empty() => {
                    let c = plan(&q, &opts).unwrap();
                    let drop = a.duration - c.duration;
                    w_mono = w_mono.max(drop);
                    monotone += (drop > 1e-9 * (1.0 + a.duration)) as usize;
                }
                _ => skipped += 1,
            }
        }
    }
    let pass = reversal == 0 && spatial == 0 && temporal == 0 && monotone == 0;
    outcome(
        pass,
        format!(
            "{} instances per property: reversal {reversal} ({w_rev:.1e}), spatial {spatial} ({w_sp:.1e}), temporal {temporal} ({w_tm:.1e}), monotone {monotone} (max drop {w_mono:.1e}, {skipped} skipped)",
            2 * count
        ),
    )
}

fn performance() -> Outcome {
    let opts = PlannerOptions::default();
    let inst = InstanceOptions::default();
    let s2 = run_bench(2, 10_000, 1, &inst, builtin_bundle(2).unwrap(), &opts);
    let s3 = run_bench(3, 10_000, 1, &inst, builtin_bundle(3).unwrap(), &opts);
    let (m2, m3) = (s2.median_us.unwrap(), s3.median_us.unwrap());
    outcome(
        m2 < 1000.0 && m3 < 5000.0 && s2.failures == 0 && s3.failures == 0,
        format!(
            "median n=2 {m2:.1}us (p95 {:.1}us), n=3 {m3:.1}us (p95 {:.1}us), failures {}+{}",
            s2.p95_us.unwrap(),
            s3.p95_us.unwrap(),
            s2.failures,
            s3.failures
        ),
    )
}

fn fault_injection() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("plan.json");
    let mut rng = StdRng::seed_from_u64(31);
    let mut flagged = 0;
    let total = 1000;
    for k in 0..total {
        let n = 2 + k % 2;
        let p = random_problem(&mut rng, n, &InstanceOptions::default());
        let pl = plan(&p, &PlannerOptions::default()).unwrap();
        let mut doc = PlanDocument::new(&pl, &p, "acceptance");
        let j = rng.random_range(0..doc.times.len());
        doc.times[j] += if rng.random_bool(0.5) { 1e-3 } else { -1e-3 };
        std::fs::write(&path, doc.to_json()).unwrap();
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = cli::run(
            ["chaintraj", "check", path.to_str().unwrap()],
            &mut out,
            &mut err,
        );
        flagged += (code == cli::EXIT_CHECK) as usize;
    }
    let rate = flagged as f64 / total as f64;
    outcome(
        rate >= 0.99,
        format!(
            "{flagged}/{total} perturbed plans flagged ({:.1}%)",
            rate * 100.0
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("worked example", worked_example),
        ("switching sequence golden", algorithm_one),
        ("condition-count identity", condition_identity),
        ("random-instance suite", random_suite),
        ("n=2 optimality", double_integrator_optimality),
        ("n=3 unconstrained optimality", triple_integrator_optimality),
        ("property suite", properties),
        ("performance", performance),
        ("fault injection", fault_injection),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        let o = f();
        println!(
            "{} {name}: {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        failed += (!o.pass) as usize;
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
