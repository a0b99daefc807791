//! Acceptance criteria 1-9. Runs without the libtest harness so that every
//! criterion prints one PASS/FAIL line; exits non-zero if any fails.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use bargain_core::dynamics::{self, estimate_rate, DynamicsConfig, Trajectory};
use bargain_core::elementary::{build, from_reduced, to_reduced, ElementaryInstance, ElementarySpec};
use bargain_core::graph::{Edge, ExchangeNetwork, Market, Matching};
use bargain_core::linalg::Vector;
use bargain_core::linear_model::{
    build_bicycle, build_blossom, build_cycle, build_path, default_linearization_horizon, detect_linearization,
    fixed_point, linear_step, loop_sum_closed_form, path_matrix, LinearModel, LoopCase, ModelError,
};
use bargain_core::scan::{random_reduced, run_scan, RowFlag, ScanPlan};
use bargain_core::spectral::{
    asymptotic_time, bicycle_spectrum, blossom_spectrum, cycle_spectrum, path_spectrum, spectrum_for,
    symmetric_eigen_oracle, verify_eigen_det,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
/// Name, check, runtime budget in seconds.
type Criterion = (&'static str, fn() -> Outcome, u64);

fn check(cond: bool, msg: String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg)
    }
}

fn sup(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

fn sorted_desc(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(|a, b| b.total_cmp(a));
    v
}

fn reduced_trajectory(inst: &ElementaryInstance, traj: &Trajectory) -> Trajectory {
    Trajectory {
        states: traj
            .states
            .iter()
            .map(|s| to_reduced(inst, &inst.market.state(s.clone()).unwrap()).unwrap())
            .collect(),
        converged: traj.converged,
        steps_taken: traj.steps_taken,
    }
}

fn criterion_1() -> Outcome {
    let mut worst = 0.0_f64;
    for n in 1..=50 {
        let oracle = symmetric_eigen_oracle(&path_matrix(n)).map_err(|e| e.to_string())?;
        worst = worst.max(sup(&oracle, &sorted_desc(path_spectrum(n).values())));
        if n >= 2 {
            let a = build_cycle(n, 1.0).unwrap().a;
            let oracle = symmetric_eigen_oracle(&a).map_err(|e| e.to_string())?;
            worst = worst.max(sup(&oracle, &sorted_desc(cycle_spectrum(n).values())));
        }
    }
    check(worst <= 1e-9, format!("max deviation {worst:e} > 1e-9"))?;
    Ok(format!("max |closed form - Jacobi| = {worst:.2e}"))
}

fn criterion_2() -> Outcome {
    let mut worst = 0.0_f64;
    for n in 1..=6 {
        for m in 2..=7 {
            let a = build_blossom(n, m, LoopCase::Case1, 1.0).unwrap().a;
            let r = blossom_spectrum(n, m);
            check(r.eigenvalues.len() == n + m, format!("blossom ({n},{m}) count"))?;
            for e in &r.eigenvalues {
                worst = worst.max(verify_eigen_det(&a, e.value));
            }
        }
    }
    let mut minus_one_checked = 0;
    let mut worst_vec = 0.0_f64;
    for l in 2..=5 {
        for n in 1..=5 {
            for m in 2..=5 {
                let model = build_bicycle(l, n, m, (LoopCase::Case1, LoopCase::Case1), 1.0).unwrap();
                let r = bicycle_spectrum(l, n, m);
                let dim = l + n + m;
                check(r.eigenvalues.len() == dim, format!("bicycle ({l},{n},{m}) count"))?;
                for e in &r.eigenvalues {
                    worst = worst.max(verify_eigen_det(&model.a, e.value));
                }
                let has_minus_one = r.values().contains(&-1.0);
                check(
                    has_minus_one == (l % 2 == 0 && m % 2 == 0),
                    format!("bicycle ({l},{n},{m}): -1 present = {has_minus_one}"),
                )?;
                if has_minus_one {
                    let v = Vector::from_fn(dim, |i, _| if i % 2 == 0 { 1.0 } else { -1.0 });
                    let res = (&model.base_a * &v + &v).amax();
                    worst_vec = worst_vec.max(res);
                    minus_one_checked += 1;
                }
            }
        }
    }
    check(worst <= 1e-8, format!("max det residual {worst:e} > 1e-8"))?;
    check(worst_vec <= 1e-12, format!("|A0 v + v| = {worst_vec:e} > 1e-12"))?;
    Ok(format!(
        "max det residual {worst:.2e}; -1 eigenvector residual {worst_vec:.1e} on {minus_one_checked} even/even bicycles"
    ))
}

fn criterion_3() -> Outcome {
    let mut notes = Vec::new();
    for n in [8usize, 16, 32] {
        let spec = ElementarySpec::Path { n, x_plus: 0.0, x_minus: 0.0 };
        let r_exact = -(PI / (n + 1) as f64).cos().ln();
        let t_exact = spectrum_for(&spec, 1.0).unwrap().time;
        check((t_exact - 1.0 / r_exact).abs() < 1e-9 * t_exact, format!("n={n}: spectral T"))?;
        let t_asym = 2.0 * (n * n) as f64 / (PI * PI);
        if n == 32 {
            let ratio = t_exact / t_asym;
            check((ratio - 1.0).abs() <= 0.10, format!("n=32: T_exact/T_asym = {ratio}"))?;
            notes.push(format!("T_exact/T_asym(32) = {ratio:.3}"));
        }
        let inst = build(&spec).unwrap();
        let x0 = from_reduced(&inst, &random_reduced(n, 2024)).unwrap();
        let cfg = DynamicsConfig::new(1.0, 1e-14, 100_000).unwrap();
        let traj = reduced_trajectory(&inst, &dynamics::simulate(&inst.market, &x0, &cfg));
        let x_star = fixed_point(&build_path(n, 0.0, 0.0, 1.0).unwrap()).unwrap();
        let fit = estimate_rate(&traj, &x_star, 1.0).map_err(|e| format!("n={n}: {e}"))?;
        let rel = (fit.rate / r_exact - 1.0).abs();
        check(rel <= 0.10, format!("n={n}: R_emp {} vs {r_exact} ({rel:.3})", fit.rate))?;
        notes.push(format!("n={n} R_emp/R = {:.4}", fit.rate / r_exact));
    }
    Ok(notes.join(", "))
}

fn criterion_4() -> Outcome {
    let cfg = DynamicsConfig::new(0.5, 1e-13, 200_000).unwrap();
    let plan = ScanPlan::new("cycle:n=*", vec![8, 16, 32], cfg, 7).map_err(|e| e.to_string())?;
    let summary = run_scan(&plan).map_err(|e| e.to_string())?;
    let last = summary.rows.last().unwrap();
    let target = 32.0 * 32.0 / (2.0 * 0.5 * PI * PI);
    let t_emp = last.t_empirical.ok_or("n=32 has no empirical time")?;
    let rel = (t_emp / target - 1.0).abs();
    check(rel <= 0.20, format!("alpha=0.5 n=32: T_emp {t_emp} vs {target}"))?;

    let cfg = DynamicsConfig::new(1.0, 1e-13, 5_000).unwrap();
    let plan = ScanPlan::new("cycle:n=*", vec![4, 8, 16, 32], cfg, 7).map_err(|e| e.to_string())?;
    for row in run_scan(&plan).map_err(|e| e.to_string())?.rows {
        check(row.flag == RowFlag::NonConvergent, format!("{}: not flagged", row.spec))?;
        check(row.period_two_tail, format!("{}: no period-2 tail", row.spec))?;
    }
    // the alternating start of the dynamics section
    let inst = build(&ElementarySpec::Cycle { n: 4 }).unwrap();
    let x0 = from_reduced(&inst, &[1.0, 0.0, 1.0, 0.0]).unwrap();
    let traj = dynamics::simulate(&inst.market, &x0, &cfg);
    let k = traj.states.len();
    check(!traj.converged, "n=4 from (1,0,1,0) converged".into())?;
    let two = sup(&traj.states[k - 1], &traj.states[k - 3]);
    let one = sup(&traj.states[k - 1], &traj.states[k - 2]);
    check(two <= 1e-10 && one > 1e-3, format!("(1,0,1,0): |dx2| {two:e}, |dx1| {one:e}"))?;
    Ok(format!("alpha=0.5 n=32 T_emp/T_asym = {:.4}; even cycles at alpha=1 flagged with period-2 tails", t_emp / target))
}

fn criterion_5() -> Outcome {
    let (n, m) = (3usize, 4usize);
    let inst = build(&ElementarySpec::Blossom { n, m }).unwrap();
    // no early stop: every run covers t = 0..=200
    let cfg = DynamicsConfig::new(1.0, f64::MIN_POSITIVE, 200).unwrap();
    let loop_sum = |v: &[f64]| -> Vec<f64> {
        let x0 = from_reduced(&inst, v).unwrap();
        let traj = reduced_trajectory(&inst, &dynamics::simulate(&inst.market, &x0, &cfg));
        traj.states.iter().map(|s| s[n] + s[n + m - 1]).collect()
    };
    let mut worst = 0.0_f64;
    let mut worst_autonomy = 0.0_f64;
    for seed in 0..10u64 {
        let v = random_reduced(n + m, 500 + seed);
        let sums = loop_sum(&v);
        check(sums.len() == 201, format!("seed {seed}: stopped after {} steps", sums.len() - 1))?;
        for (t, s) in sums.iter().enumerate() {
            let closed = loop_sum_closed_form(m, &v[n..], t as u32).unwrap();
            worst = worst.max((s - closed).abs());
        }
        let mut other = random_reduced(n + m, 900 + seed);
        other[n..].copy_from_slice(&v[n..]);
        worst_autonomy = worst_autonomy.max(sup(&sums, &loop_sum(&other)));
    }
    check(worst <= 1e-11, format!("closed form deviation {worst:e}"))?;
    check(worst_autonomy <= 1e-12, format!("stem dependence {worst_autonomy:e}"))?;
    Ok(format!("|s_sim - s_closed| <= {worst:.1e}, |s(x0) - s(x0')| <= {worst_autonomy:.1e}"))
}

/// Runs to `t0`, then compares 100 nonlinear steps with the settled model.
fn linear_tail_gap(inst: &ElementaryInstance, seed: u64) -> Result<(usize, f64), String> {
    let x0 = from_reduced(inst, &random_reduced(inst.dim(), seed)).unwrap();
    let cfg = DynamicsConfig::new(1.0, 1e-12, default_linearization_horizon(&inst.spec)).unwrap();
    let report = detect_linearization(inst, &x0, &cfg).map_err(|e| e.to_string())?;
    let model = LinearModel::for_spec(&inst.spec, &report.settled_case, 1.0).unwrap();
    let mut x = x0;
    for _ in 0..report.t0 {
        x = dynamics::step(&inst.market, &x, 1.0);
    }
    let mut worst = 0.0_f64;
    for _ in 0..100 {
        let v = to_reduced(inst, &x).unwrap();
        x = dynamics::step(&inst.market, &x, 1.0);
        let nonlinear = to_reduced(inst, &x).unwrap();
        worst = worst.max(sup(&nonlinear, &linear_step(&model, &v).unwrap()));
    }
    Ok((report.t0, worst))
}

fn criterion_6() -> Outcome {
    const C: f64 = 1.0;
    let mut worst_gap = 0.0_f64;
    let mut max_t0 = 0;
    for spec in [ElementarySpec::Blossom { n: 3, m: 4 }, ElementarySpec::Bicycle { l: 3, n: 2, m: 5 }] {
        let inst = build(&spec).unwrap();
        for seed in 0..10 {
            let (t0, gap) = linear_tail_gap(&inst, 7000 + seed)?;
            worst_gap = worst_gap.max(gap);
            max_t0 = max_t0.max(t0);
        }
    }
    check(worst_gap <= 1e-14, format!("nonlinear vs linear after T0: {worst_gap:e}"))?;

    let mut ratios = Vec::new();
    for m in [4usize, 8, 16] {
        let n = 3;
        let spec = ElementarySpec::Blossom { n, m };
        let inst = build(&spec).unwrap();
        let cfg = DynamicsConfig::new(1.0, 1e-12, default_linearization_horizon(&spec)).unwrap();
        let mut worst = 0usize;
        for seed in 0..50u64 {
            for sign in [1.0, -1.0] {
                let mut v = random_reduced(n + m, seed);
                let y_m = 1.0 + sign * 1e-3 - v[n];
                if !(0.0..=1.0).contains(&y_m) {
                    continue;
                }
                v[n + m - 1] = y_m;
                let x0 = from_reduced(&inst, &v).unwrap();
                let report = detect_linearization(&inst, &x0, &cfg).map_err(|e| format!("m={m}: {e}"))?;
                worst = worst.max(report.t0);
            }
        }
        let ratio = worst as f64 / (m * m) as f64;
        check(ratio <= C, format!("m={m}: T0 = {worst} > {C} m^2"))?;
        ratios.push(format!("{ratio:.3}"));
    }
    Ok(format!(
        "post-T0 gap {worst_gap:.1e} (max random T0 {max_t0}); adversarial max T0/m^2 for m=4,8,16: {} (C = {C})",
        ratios.join(", ")
    ))
}

fn criterion_7() -> Outcome {
    let x = fixed_point(&build_path(2, 0.0, 0.0, 1.0).unwrap()).unwrap();
    check(sup(&x, &[2.0 / 3.0, 1.0 / 3.0]) <= 1e-12, format!("path fixed point {x:?}"))?;

    let (n, m) = (3usize, 4usize);
    let spec = ElementarySpec::Blossom { n, m };
    let inst = build(&spec).unwrap();
    let cfg = DynamicsConfig::new(1.0, 1e-14, 100_000).unwrap();
    let mut notes = Vec::new();
    for (case, start) in [(LoopCase::Case1, 0.0), (LoopCase::Case2, 1.0)] {
        let model = build_blossom(n, m, case, 1.0).unwrap();
        let fp = fixed_point(&model).unwrap();
        let invariance = sup(&linear_step(&model, &fp).unwrap(), &fp);
        check(invariance <= 1e-12, format!("{case:?}: |A x* + b - x*| = {invariance:e}"))?;
        let x0 = from_reduced(&inst, &vec![start; n + m]).unwrap();
        let traj = dynamics::simulate(&inst.market, &x0, &cfg);
        let limit = to_reduced(&inst, &inst.market.state(traj.last().to_vec()).unwrap()).unwrap();
        let dist = sup(&limit, &fp);
        check(dist <= 1e-8, format!("{case:?}: limit off by {dist:e}"))?;
        notes.push(format!("{case:?} limit within {dist:.1e}"));
    }

    check(
        matches!(fixed_point(&build_cycle(5, 1.0).unwrap()), Err(ModelError::SingularSystem { .. })),
        "cycle fixed point not singular".into(),
    )?;
    for n in [3usize, 5, 7, 9] {
        let inst = build(&ElementarySpec::Cycle { n }).unwrap();
        let v0 = random_reduced(n, 11 + n as u64);
        let mean = v0.iter().sum::<f64>() / n as f64;
        let traj = dynamics::simulate(&inst.market, &from_reduced(&inst, &v0).unwrap(), &cfg);
        let limit = to_reduced(&inst, &inst.market.state(traj.last().to_vec()).unwrap()).unwrap();
        let dist = sup(&limit, &vec![mean; n]);
        check(dist <= 1e-8, format!("odd cycle n={n}: limit off the average by {dist:e}"))?;
    }
    notes.push("odd cycles converge to the average".into());
    Ok(notes.join(", "))
}

fn criterion_8() -> Outcome {
    let cfg = DynamicsConfig::new(1.0, 1e-13, 200_000).unwrap();
    let mut notes = Vec::new();
    for (sizes, formula) in [(vec![5, 9, 17], "2m^2"), (vec![4, 8, 16], "2(2n+m)^2")] {
        let plan = ScanPlan::new("blossom:n=2,m=*", sizes, cfg, 99).map_err(|e| e.to_string())?;
        let summary = run_scan(&plan).map_err(|e| e.to_string())?;
        let row = summary.rows.last().unwrap();
        let m = row.size;
        let spec = ElementarySpec::Blossom { n: 2, m };
        let target = asymptotic_time(&spec, 1.0).unwrap();
        let expected = if m % 2 == 1 {
            2.0 * (m * m) as f64 / (PI * PI)
        } else {
            2.0 * ((4 + m) * (4 + m)) as f64 / (PI * PI)
        };
        check((target - expected).abs() < 1e-9, format!("m={m}: asymptotic_time {target} vs {expected}"))?;
        let t_emp = row.t_empirical.ok_or(format!("m={m}: no empirical time ({})", row.note))?;
        let ratio = t_emp / target;
        check((ratio - 1.0).abs() <= 0.25, format!("m={m}: T_emp/{formula} = {ratio:.3}"))?;
        notes.push(format!("m={m}: T_emp/{formula} = {ratio:.3}"));
    }
    Ok(notes.join(", "))
}

fn random_network(rng: &mut ChaCha8Rng) -> (Market, Vec<f64>, f64) {
    let nodes = rng.gen_range(2..=12);
    let mut edges = Vec::new();
    let mut seen = BTreeMap::new();
    for u in 0..nodes {
        for v in (u + 1)..nodes {
            if rng.gen_bool(0.4) {
                let w = rng.gen_range(0.0..3.0);
                seen.insert((u, v), w);
                edges.push(Edge::new(u, v, w));
            }
        }
    }
    // greedy random matching over the edges
    let mut order: Vec<usize> = (0..edges.len()).collect();
    for i in (1..order.len()).rev() {
        order.swap(i, rng.gen_range(0..=i));
    }
    let mut used = vec![false; nodes];
    let mut pairs = Vec::new();
    for i in order {
        let e = edges[i];
        if !used[e.u] && !used[e.v] && rng.gen_bool(0.8) {
            used[e.u] = true;
            used[e.v] = true;
            pairs.push((e.u, e.v));
        }
    }
    let w_max = edges.iter().map(|e| e.weight).fold(0.0, f64::max);
    let mut x: Vec<f64> = (0..nodes).map(|_| rng.gen_range(0.0..=w_max)).collect();
    for &(u, v) in &pairs {
        let w = seen[&(u.min(v), u.max(v))];
        x[u] = rng.gen_range(0.0..=w);
        x[v] = w - x[u];
    }
    let market = Market::new(ExchangeNetwork::new(nodes, edges, BTreeMap::new()), Matching::new(pairs)).unwrap();
    (market, x, w_max)
}

fn criterion_9() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst_pair = 0.0_f64;
    let mut steps = 0usize;
    for _ in 0..100 {
        let (market, x0, w_max) = random_network(&mut rng);
        let mut x = market.state(x0).unwrap();
        for _ in 0..10_000 {
            x = dynamics::step(&market, &x, 0.7);
            steps += 1;
            for &(u, v) in market.matching().pairs() {
                let w = market.matched_weight(u);
                worst_pair = worst_pair.max((x[u] + x[v] - w).abs());
            }
            if let Some(bad) = x.values().iter().find(|&&v| !(0.0..=w_max).contains(&v)) {
                return Err(format!("value {bad} outside [0, {w_max}]"));
            }
        }
    }
    check(worst_pair <= 1e-12, format!("pair sum drift {worst_pair:e}"))?;
    Ok(format!("{steps} steps, max pair-sum drift {worst_pair:.1e}, all states in range"))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("path/cycle spectra vs Jacobi oracle", criterion_1, 5),
        ("blossom/bicycle spectra vs determinant residual", criterion_2, 30),
        ("path convergence time", criterion_3, 20),
        ("cycle convergence time and periodic tail", criterion_4, 20),
        ("loop-sum closed form and autonomy", criterion_5, 5),
        ("linearization time", criterion_6, 60),
        ("fixed points", criterion_7, 10),
        ("blossom convergence-time branches", criterion_8, 120),
        ("matched-pair conservation", criterion_9, 30),
    ];
    let mut failed = 0;
    for (i, (name, run, budget)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let mut outcome = run();
        let elapsed = start.elapsed();
        if outcome.is_ok() && elapsed > Duration::from_secs(*budget) {
            outcome = Err(format!("took {:.1}s, budget {budget}s", elapsed.as_secs_f64()));
        }
        match outcome {
            Ok(detail) => println!("criterion {}: PASS {name} ({:.2}s): {detail}", i + 1, elapsed.as_secs_f64()),
            Err(detail) => {
                failed += 1;
                println!("criterion {}: FAIL {name} ({:.2}s): {detail}", i + 1, elapsed.as_secs_f64());
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
