//! Acceptance suite: one test per criterion, each printing a pass/fail
//! line (visible with `--nocapture`) and asserting at the stated
//! tolerance. Budgets are asserted with wide margins; run with
//! `cargo test --test acceptance -- --nocapture` to see the report.

// violation counters negate comparisons so NaNs would count as failures
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;
use robustcmu_core::adversary::{rn_exponent_poisson, AdversaryStrategy, BrownianRnAccumulator};
use robustcmu_core::curve::{check_optimality_oracle, random_instance, Curve, CurveTable};
use robustcmu_core::harness::{build_family, prelimit_value, quantile, FamilyKind};
use robustcmu_core::limit_game::{
    estimate_game_cost, estimate_value, path_cost, simulate_f_reflected_driven, CostEstimate,
};
use robustcmu_core::model::{CostModel, Discount, DivergenceModel, ModelBundle, SystemConfig};
use robustcmu_core::prelimit::{
    audit_event_log, audit_identity, collapse_metric, estimate_qcp_cost, simulate_system,
    simulate_trajectory, Policy, PrelimitParams,
};
use robustcmu_core::rng::{stream_rng, LIMIT_NOISE_STREAM};
use robustcmu_core::skorokhod::{reflect, regulator, PathKind, SampledPath};
use robustcmu_core::Scalar;
use std::time::Instant;

const DELTA: f64 = 0.1;
const BOUND: f64 = 2.0;

fn report(num: u32, name: &str, failures: &[String], elapsed_s: f64, budget_s: f64) {
    let mut all = failures.to_vec();
    if elapsed_s >= budget_s {
        all.push(format!(
            "runtime {elapsed_s:.1}s exceeded budget {budget_s}s"
        ));
    }
    if all.is_empty() {
        println!("[acceptance] criterion {num} ({name}): PASS ({elapsed_s:.1}s)");
    } else {
        println!(
            "[acceptance] criterion {num} ({name}): FAIL ({elapsed_s:.1}s) — {}",
            all.join("; ")
        );
    }
    assert!(
        all.is_empty(),
        "criterion {num} ({name}): {}",
        all.join("; ")
    );
}

fn reference_bundle() -> ModelBundle<f64> {
    let system = SystemConfig::new(
        vec![0.5, 0.5],
        vec![1.0, 1.0],
        vec![0.0, 0.0],
        vec![1.0, 1.0],
        vec![0.0, 0.0],
    )
    .unwrap();
    let cost = CostModel::new(vec![1.0, 1.0], vec![2.0, 2.0]).unwrap();
    let divergence = DivergenceModel::new(vec![1.0; 2], vec![1.0; 2], 2.0).unwrap();
    let discount = Discount::exponential(1.0).unwrap();
    ModelBundle::new(system, cost, divergence, discount).unwrap()
}

fn asymmetric_bundle() -> ModelBundle<f64> {
    let system = SystemConfig::new(
        vec![0.5, 0.5],
        vec![1.0, 1.0],
        vec![0.0, 0.0],
        vec![1.0, 1.0],
        vec![0.0, 0.0],
    )
    .unwrap();
    let cost = CostModel::new(vec![1.0, 2.0], vec![2.0, 2.0]).unwrap();
    let divergence = DivergenceModel::new(vec![1.0; 2], vec![1.0; 2], 2.0).unwrap();
    let discount = Discount::exponential(1.0).unwrap();
    ModelBundle::new(system, cost, divergence, discount).unwrap()
}

fn single_class_bundle() -> ModelBundle<f64> {
    // mu_hat = 0 keeps theta^n equal to theta at every scale, which is what
    // makes the single-class collapse metric a pure curve-accuracy control
    let system = SystemConfig::new(vec![1.0], vec![1.0], vec![-0.5], vec![0.0], vec![0.0]).unwrap();
    let cost = CostModel::new(vec![1.0], vec![2.0]).unwrap();
    let divergence = DivergenceModel::new(vec![1.0], vec![1.0], 2.0).unwrap();
    let discount = Discount::exponential(1.0).unwrap();
    ModelBundle::new(system, cost, divergence, discount).unwrap()
}

fn reference_family() -> Vec<AdversaryStrategy<f64>> {
    build_family(&FamilyKind::Full, 2, DELTA, BOUND, &[-1.0, 0.0, 1.0]).unwrap()
}

fn zero_strategy() -> AdversaryStrategy<f64> {
    AdversaryStrategy::zero(DELTA, BOUND).unwrap()
}

fn joint_se(a: &CostEstimate<f64>, b: &CostEstimate<f64>) -> f64 {
    (a.std_error.powi(2) + b.std_error.powi(2)).sqrt()
}

fn random_step_path(rng: &mut ChaCha12Rng, points: usize) -> (Vec<f64>, Vec<f64>) {
    let mut times = Vec::with_capacity(points);
    let mut values = Vec::with_capacity(points);
    let mut t = 0.0;
    let mut v: f64 = rng.random_range(-1.0..1.0);
    for k in 0..points {
        if k > 0 {
            t += rng.random_range(0.01..0.1);
            v += 0.3 * f64::standard_normal(rng);
            if rng.random_range(0.0..1.0) < 0.05 {
                v += rng.random_range(-2.0..2.0); // occasional big jump
            }
        }
        times.push(t);
        values.push(v);
    }
    (times, values)
}

#[test]
fn criterion_1_skorokhod_suite() {
    let start = Instant::now();
    let mut failures = Vec::new();
    let mut rng = ChaCha12Rng::seed_from_u64(0xC1);

    // 1000 random step paths as 500 pairs on common grids
    let mut nonneg_bad = 0usize;
    let mut additivity_bad = 0usize;
    let mut lipschitz_bad = 0usize;
    for _ in 0..500 {
        let (times, v1) = random_step_path(&mut rng, 200);
        let mut v2 = Vec::with_capacity(200);
        let mut v = rng.random_range(-1.0..1.0);
        for k in 0..200 {
            if k > 0 {
                v += 0.3 * f64::standard_normal(&mut rng);
            }
            v2.push(v);
        }
        let l1 = SampledPath::new(times.clone(), v1, PathKind::Step).unwrap();
        let l2 = SampledPath::new(times, v2, PathKind::Step).unwrap();
        for l in [&l1, &l2] {
            let r = reflect(l);
            let y = regulator(l);
            for k in 0..l.len() {
                if !(r.values()[k] >= 0.0) {
                    nonneg_bad += 1;
                }
                // bit-exact: Gamma[l] = l + regulator
                if r.values()[k] != l.values()[k] + y.values()[k] {
                    additivity_bad += 1;
                }
            }
        }
        let r1 = reflect(&l1);
        let r2 = reflect(&l2);
        let mut sup_gamma: f64 = 0.0;
        let mut sup_l: f64 = 0.0;
        for k in 0..l1.len() {
            sup_gamma = sup_gamma.max((r1.values()[k] - r2.values()[k]).abs());
            sup_l = sup_l.max((l1.values()[k] - l2.values()[k]).abs());
            if sup_gamma > 2.0 * sup_l {
                lipschitz_bad += 1;
            }
        }
    }
    if nonneg_bad > 0 {
        failures.push(format!("{nonneg_bad} negative reflected values"));
    }
    if additivity_bad > 0 {
        failures.push(format!(
            "{additivity_bad} points with Gamma != l + regulator"
        ));
    }
    if lipschitz_bad > 0 {
        failures.push(format!("{lipschitz_bad} Lipschitz-2 violations"));
    }

    // minimality against 100 random dominating (l, y) pairs
    let mut minimality_bad = 0usize;
    for _ in 0..100 {
        let (times, values) = random_step_path(&mut rng, 200);
        let l = SampledPath::new(times, values, PathKind::Step).unwrap();
        let r = reflect(&l);
        let base = regulator(&l);
        let mut slack = 0.0;
        for k in 0..l.len() {
            slack += rng.random_range(0.0..0.05);
            let y = base.values()[k] + slack;
            if !(l.values()[k] + y >= r.values()[k]) {
                minimality_bad += 1;
            }
        }
    }
    if minimality_bad > 0 {
        failures.push(format!("{minimality_bad} minimality violations"));
    }

    report(
        1,
        "skorokhod suite",
        &failures,
        start.elapsed().as_secs_f64(),
        5.0,
    );
}

#[test]
fn criterion_2_curve_suite() {
    let start = Instant::now();
    let mut failures = Vec::new();
    let mut rng = ChaCha12Rng::seed_from_u64(0xC2);

    let mut feas_worst: f64 = 0.0;
    let mut index_worst: f64 = 0.0;
    let mut oracle_worst = f64::NEG_INFINITY;
    for case in 0..100 {
        let classes = 1 + (rng.next_u64() % 4) as usize;
        let (system, cost) = random_instance::<f64, _>(classes, &mut rng).unwrap();
        let curve = Curve::new(&system, &cost);
        let w = 10.0 * f64::unit_open(&mut rng);
        let sol = curve.solve(w);
        let (feas, index) = curve.residuals(&sol);
        feas_worst = feas_worst.max(feas / (1.0 + w));
        index_worst = index_worst.max(index / (1.0 + sol.eta));
        if feas > 1e-10 * (1.0 + w) {
            failures.push(format!("case {case}: feasibility residual {feas}"));
        }
        if index > 1e-10 * (1.0 + sol.eta) {
            failures.push(format!("case {case}: index residual {index}"));
        }
        let violation = check_optimality_oracle(&system, &cost, &sol, 10_000, &mut rng);
        oracle_worst = oracle_worst.max(violation);
        if violation > 1e-9 {
            failures.push(format!("case {case}: oracle violation {violation}"));
        }
    }

    // monotonicity of w -> C_i(f_i(w)) on random pairs, zero violations
    let mut mono_bad = 0usize;
    for _ in 0..20 {
        let classes = 1 + (rng.next_u64() % 4) as usize;
        let (system, cost) = random_instance::<f64, _>(classes, &mut rng).unwrap();
        let curve = Curve::new(&system, &cost);
        for _ in 0..10 {
            let w1 = 8.0 * f64::unit_open(&mut rng);
            let w2 = w1 + rng.random_range(1e-3..5.0);
            let f1 = curve.solve(w1).f;
            let f2 = curve.solve(w2).f;
            for i in 0..classes {
                if cost.cost_i(i, f2[i]) < cost.cost_i(i, f1[i]) {
                    mono_bad += 1;
                }
            }
        }
    }
    if mono_bad > 0 {
        failures.push(format!("{mono_bad} monotonicity violations"));
    }

    if failures.is_empty() {
        println!(
            "  worst residuals: feasibility {feas_worst:.2e}, index {index_worst:.2e}, oracle {oracle_worst:.2e}"
        );
    }
    report(
        2,
        "curve suite",
        &failures,
        start.elapsed().as_secs_f64(),
        30.0,
    );
}

#[test]
fn criterion_3_measure_change_suite() {
    let start = Instant::now();
    let mut failures = Vec::new();
    let model = reference_bundle();
    let zero = zero_strategy();

    // zero adversary: divergence exactly zero in both systems
    let horizon = model.discount.effective_horizon();
    let table = CurveTable::with_default_range(&model.system, &model.cost, 1024, horizon);
    let lim = estimate_game_cost(&model, &table, &zero, horizon, 0.02, 16, 0xC3);
    if lim.divergence.iter().any(|&d| d != 0.0) {
        failures.push("limit divergence not exactly zero under the zero strategy".into());
    }
    let params = PrelimitParams::new(16, Policy::CmuPreemptive, horizon);
    let pre = estimate_qcp_cost(&model, &zero, &params, 16, 0xC3).unwrap();
    if pre.divergence.iter().any(|&d| d != 0.0) {
        failures.push("prelimit divergence not exactly zero under the zero strategy".into());
    }

    // Brownian martingale identity E^P[exp l(T)] = 1 within 3 SE, 10^4 reps
    let c = 0.5f64;
    let steps = 1000usize;
    let h = 1.0 / steps as f64;
    let reps = 10_000usize;
    let mut sum = 0.0;
    let mut sumsq = 0.0;
    for rep in 0..reps {
        let mut rng = stream_rng(0xC3B, rep as u64, LIMIT_NOISE_STREAM);
        let mut acc = BrownianRnAccumulator::new();
        for _ in 0..steps {
            let db = h.sqrt() * f64::standard_normal(&mut rng);
            acc.step(c, db, h);
        }
        let s = acc.sample();
        // under the reference measure the exponent is H - G
        let v = (s.martingale - s.compensator).exp();
        sum += v;
        sumsq += v * v;
    }
    let mean = sum / reps as f64;
    let var = (sumsq / reps as f64 - mean * mean).max(0.0);
    let se = (var / reps as f64).sqrt();
    if (mean - 1.0).abs() > 3.0 * se {
        failures.push(format!("martingale identity: mean {mean}, se {se}"));
    }

    // Poisson exponent matches the closed form bit for bit on constant
    // intensity streams
    let mut rng = ChaCha12Rng::seed_from_u64(0xC3C);
    for case in 0..50 {
        let r = rng.random_range(0.5..3.0);
        let psi_val = rng.random_range(0.5..3.0);
        let t_end = rng.random_range(1.0..10.0);
        let n_events = rng.random_range(0..40usize);
        let mut events: Vec<f64> = (0..n_events)
            .map(|_| rng.random_range(0.0..t_end))
            .collect();
        events.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let psi = SampledPath::new(vec![0.0], vec![psi_val], PathKind::Step).unwrap();
        let exp = rn_exponent_poisson(&events, &psi, r, &[t_end]).unwrap();
        let closed = n_events as f64 * (psi_val / r).ln() - (psi_val - r) * t_end;
        if exp.log_ratio[0] != closed || exp.log_ratio[0].exp() != closed.exp() {
            failures.push(format!(
                "case {case}: exponent {} differs from closed form {closed}",
                exp.log_ratio[0]
            ));
        }
    }

    report(
        3,
        "measure-change suite",
        &failures,
        start.elapsed().as_secs_f64(),
        60.0,
    );
}

#[test]
fn criterion_4_queue_correctness() {
    let start = Instant::now();
    let mut failures = Vec::new();
    let model = reference_bundle();
    let family = reference_family();
    let policies = [
        Policy::CmuPreemptive,
        Policy::CmuNonpreemptive,
        Policy::StaticPriority(vec![0, 1]),
        Policy::FixedFraction,
    ];
    let scales = [1u64, 4, 16, 64, 256];

    // identity reconstruction and allocation audits on 100 random runs
    let mut identity_worst: f64 = 0.0;
    for run in 0..100u64 {
        let n = scales[(run % 5) as usize];
        let policy = policies[(run % 4) as usize].clone();
        let strategy = &family[(run % family.len() as u64) as usize];
        let params = PrelimitParams {
            n,
            policy,
            horizon: 5.0,
            output_points: 400,
            event_cap: 10_000_000,
        };
        let (log, traj) = simulate_system(&model, strategy, &params, 0xC400 + run).unwrap();
        let resid = audit_identity(&traj, &model.system);
        identity_worst = identity_worst.max(resid);
        if resid > 1e-9 {
            failures.push(format!("run {run}: identity residual {resid}"));
        }
        let audit = audit_event_log(&log);
        if !audit.clean() {
            failures.push(format!("run {run}: allocation audit {audit:?}"));
        }
    }

    // chi-square goodness of fit of arrival counts at the 1% level:
    // A^n_1(2.0) ~ Poisson(16) at n = 16 under the zero adversary
    let reps = 10_000usize;
    let t_end = 2.0f64;
    let lambda_n_t = 16.0f64;
    let zero = zero_strategy();
    let params = PrelimitParams {
        n: 16,
        policy: Policy::CmuPreemptive,
        horizon: t_end,
        output_points: 2,
        event_cap: 1_000_000,
    };
    let mut counts: Vec<u64> = Vec::with_capacity(reps);
    for rep in 0..reps {
        let traj = simulate_trajectory(&model, &zero, &params, 0xC4F, rep as u64).unwrap();
        let last = traj.grid_len() - 1;
        counts.push(traj.arrivals[last * 2]); // class 1
    }
    let (chi2, dof) = poisson_chi_square(&counts, lambda_n_t);
    let crit = {
        use statrs::distribution::{ChiSquared, ContinuousCDF};
        ChiSquared::new(dof as f64).unwrap().inverse_cdf(0.99)
    };
    if chi2 >= crit {
        failures.push(format!(
            "arrival GOF rejected at 1%: chi2 {chi2:.2} >= {crit:.2} with {dof} dof"
        ));
    }

    if failures.is_empty() {
        println!("  worst identity residual {identity_worst:.2e}; GOF chi2 {chi2:.2} < {crit:.2} ({dof} dof)");
    }
    report(
        4,
        "queue correctness",
        &failures,
        start.elapsed().as_secs_f64(),
        120.0,
    );
}

/// Chi-square statistic of observed counts against Poisson(mean), with
/// tail bins merged so every expected count is at least 5.
fn poisson_chi_square(counts: &[u64], mean: f64) -> (f64, usize) {
    use statrs::distribution::{Discrete, Poisson};
    let dist = Poisson::new(mean).unwrap();
    let n = counts.len() as f64;
    let max_k = 4 * mean as usize;
    // bin boundaries with expected >= 5
    let mut bins: Vec<(usize, usize, f64)> = Vec::new(); // [lo, hi], expected
    let mut lo = 0usize;
    let mut acc = 0.0f64;
    for k in 0..=max_k {
        acc += dist.pmf(k as u64) * n;
        if acc >= 5.0 {
            bins.push((lo, k, acc));
            lo = k + 1;
            acc = 0.0;
        }
    }
    // remaining upper tail joins the last bin
    let tail = n - bins.iter().map(|b| b.2).sum::<f64>() - acc;
    if let Some(last) = bins.last_mut() {
        last.1 = usize::MAX;
        last.2 += acc + tail.max(0.0);
    }
    let mut chi2 = 0.0;
    for &(lo, hi, expected) in &bins {
        let observed = counts
            .iter()
            .filter(|&&c| (c as usize) >= lo && (c as usize) <= hi)
            .count() as f64;
        chi2 += (observed - expected).powi(2) / expected;
    }
    (chi2, bins.len().saturating_sub(1))
}

#[test]
fn criterion_5_value_convergence_trend() {
    let start = Instant::now();
    let mut failures = Vec::new();
    let model = reference_bundle();
    let family = reference_family();
    let seed = 0xC5u64;
    let horizon = model.discount.effective_horizon();
    let step = 1e-3 * horizon;
    let prelimit_reps = 2000usize;
    let limit_reps = 4000usize;

    let table = CurveTable::with_default_range(&model.system, &model.cost, 4096, horizon);
    let search = estimate_value(
        &model,
        &table,
        &family,
        family.len(),
        horizon,
        step,
        limit_reps,
        seed,
    );
    let limit = search.best_estimate().clone();
    println!(
        "  V_hat(limit) = {:.4} (SE {:.4}) by '{}'",
        limit.mean,
        limit.std_error,
        search.best_strategy().id()
    );

    let n_grid = [16u64, 64, 256];
    let mut gaps: Vec<(u64, f64, f64)> = Vec::new(); // (n, gap, gap SE)
    for &n in &n_grid {
        let params = PrelimitParams {
            n,
            policy: Policy::CmuPreemptive,
            horizon,
            output_points: 2000,
            event_cap: 10_000_000,
        };
        let (best, estimates) =
            prelimit_value(&model, &family, &params, prelimit_reps, seed).unwrap();
        let v_n = &estimates[best];
        let gap = (v_n.mean - limit.mean).abs();
        let gap_se = joint_se(v_n, &limit);
        println!(
            "  n={n}: V_hat^n = {:.4} (SE {:.4}) by '{}', gap = {:.4} (SE {:.4})",
            v_n.mean,
            v_n.std_error,
            family[best].id(),
            gap,
            gap_se
        );
        gaps.push((n, gap, gap_se));
    }

    // non-increasing up to 2 joint standard errors
    for w in gaps.windows(2) {
        let (n0, g0, s0) = w[0];
        let (n1, g1, s1) = w[1];
        let allowance = 2.0 * (s0 * s0 + s1 * s1).sqrt();
        if g1 > g0 + allowance {
            failures.push(format!(
                "gap increased from n={n0} ({g0:.4}) to n={n1} ({g1:.4}) beyond {allowance:.4}"
            ));
        }
    }
    // the n=256 gap sits below the n=16 gap by at least one joint SE
    let (_, g16, s16) = gaps[0];
    let (_, g256, s256) = gaps[2];
    let one_se = (s16 * s16 + s256 * s256).sqrt();
    if !(g16 - g256 >= one_se) {
        failures.push(format!(
            "n=256 gap {g256:.4} not below n=16 gap {g16:.4} by one joint SE {one_se:.4}"
        ));
    }

    report(
        5,
        "value convergence trend",
        &failures,
        start.elapsed().as_secs_f64(),
        1800.0,
    );
}

#[test]
fn criterion_6_state_space_collapse_trend() {
    let start = Instant::now();
    let mut failures = Vec::new();

    // reference config: median collapse metric strictly decreasing from
    // n=16 to n=256 with 200 replications per scale
    let model = reference_bundle();
    let zero = zero_strategy();
    let horizon = model.discount.effective_horizon();
    let table = CurveTable::with_default_range(&model.system, &model.cost, 4096, horizon);
    let reps = 200usize;
    let mut medians = Vec::new();
    for &n in &[16u64, 64, 256] {
        let params = PrelimitParams {
            n,
            policy: Policy::CmuPreemptive,
            horizon,
            output_points: 2000,
            event_cap: 10_000_000,
        };
        let mut metrics: Vec<f64> = (0..reps as u64)
            .map(|rep| {
                let traj = simulate_trajectory(&model, &zero, &params, 0xC6, rep).unwrap();
                collapse_metric(&traj, &table, &model.system)
            })
            .collect();
        let med = quantile(&mut metrics, 0.5);
        let q90 = quantile(&mut metrics, 0.9);
        println!("  n={n}: median collapse {med:.4}, q90 {q90:.4} ({reps} reps)");
        medians.push((n, med));
    }
    if !(medians[2].1 < medians[0].1) {
        failures.push(format!(
            "median at n=256 ({:.4}) not strictly below n=16 ({:.4})",
            medians[2].1, medians[0].1
        ));
    }

    // single-class control: the metric reads as pure curve error
    let control = single_class_bundle();
    let ctrl_table = CurveTable::with_default_range(&control.system, &control.cost, 4096, horizon);
    for &n in &[16u64, 64, 256] {
        let params = PrelimitParams {
            n,
            policy: Policy::CmuPreemptive,
            horizon,
            output_points: 2000,
            event_cap: 10_000_000,
        };
        for rep in 0..50u64 {
            let traj = simulate_trajectory(&control, &zero, &params, 0xC61, rep).unwrap();
            let m = collapse_metric(&traj, &ctrl_table, &control.system);
            if m > 1e-8 {
                failures.push(format!("single-class metric {m:.2e} at n={n}"));
                break;
            }
        }
    }

    report(
        6,
        "state-space collapse trend",
        &failures,
        start.elapsed().as_secs_f64(),
        600.0,
    );
}

#[test]
fn criterion_7_policy_dominance() {
    let start = Instant::now();
    let mut failures = Vec::new();
    let seed = 0xC5u64; // same seeds as the convergence criterion
    let reps = 2000usize;

    // the worst constant adversary from the convergence search at n=256 on
    // the reference config (the constant subfamily includes the zero point)
    let reference = reference_bundle();
    let horizon = reference.discount.effective_horizon();
    let constants: Vec<AdversaryStrategy<f64>> = reference_family()
        .into_iter()
        .filter(|s| s.is_zero() || s.id().starts_with("const"))
        .collect();
    let params_ref = PrelimitParams {
        n: 256,
        policy: Policy::CmuPreemptive,
        horizon,
        output_points: 2000,
        event_cap: 10_000_000,
    };
    let (best, _) = prelimit_value(&reference, &constants, &params_ref, reps, seed).unwrap();
    let worst = constants[best].clone();
    println!("  worst constant adversary at n=256: '{}'", worst.id());

    // dominance in the asymmetric config under that adversary
    let model = asymmetric_bundle();
    let mut estimates = Vec::new();
    for policy in [
        Policy::CmuPreemptive,
        Policy::StaticPriority(vec![0, 1]),
        Policy::StaticPriority(vec![1, 0]),
    ] {
        let params = PrelimitParams {
            n: 256,
            policy: policy.clone(),
            horizon,
            output_points: 2000,
            event_cap: 10_000_000,
        };
        let est = estimate_qcp_cost(&model, &worst, &params, reps, seed).unwrap();
        println!(
            "  {}: J_hat = {:.4} (SE {:.4})",
            policy.name(),
            est.mean,
            est.std_error
        );
        estimates.push((policy, est));
    }
    let cmu = &estimates[0].1;
    for (policy, est) in &estimates[1..] {
        let sep = joint_se(cmu, est);
        if !(cmu.mean <= est.mean - 2.0 * sep) {
            failures.push(format!(
                "cmu ({:.4}) not below {} ({:.4}) by 2 joint SEs ({:.4})",
                cmu.mean,
                policy.name(),
                est.mean,
                sep
            ));
        }
    }

    report(
        7,
        "policy dominance",
        &failures,
        start.elapsed().as_secs_f64(),
        900.0,
    );
}

#[test]
fn criterion_8_discretization_consistency() {
    let start = Instant::now();
    let mut failures = Vec::new();
    let model = reference_bundle();
    let horizon = model.discount.effective_horizon();
    let table = CurveTable::with_default_range(&model.system, &model.cost, 4096, horizon);
    let strategy = AdversaryStrategy::constant(DELTA, BOUND, vec![1.0, 1.0, -1.0, -1.0]).unwrap();

    // limit game at step h and h/2 on refined increments of the same
    // Brownian paths: the fine normals drive both runs
    let h = 0.02f64;
    let reps = 1000usize;
    let fine_steps = (horizon / (h / 2.0)).round() as usize;
    let streams = 4usize;
    let mut coarse_samples = Vec::with_capacity(reps);
    let mut fine_samples = Vec::with_capacity(reps);
    for rep in 0..reps {
        let mut rng = stream_rng(0xC8, rep as u64, LIMIT_NOISE_STREAM);
        let mut z = vec![0.0f64; fine_steps * streams];
        for v in z.iter_mut() {
            *v = f64::standard_normal(&mut rng);
        }
        let fine =
            simulate_f_reflected_driven(&model, &table, &strategy, horizon, h / 2.0, |k, s| {
                z[k * streams + s]
            });
        fine_samples.push(path_cost(&model, &fine, horizon));
        let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
        let coarse = simulate_f_reflected_driven(&model, &table, &strategy, horizon, h, |k, s| {
            (z[2 * k * streams + s] + z[(2 * k + 1) * streams + s]) * inv_sqrt2
        });
        coarse_samples.push(path_cost(&model, &coarse, horizon));
    }
    let mean_se = |samples: &[(f64, f64, Vec<f64>)]| {
        let n = samples.len() as f64;
        let mean = samples.iter().map(|s| s.0).sum::<f64>() / n;
        let var = samples.iter().map(|s| (s.0 - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (mean, (var / n).sqrt())
    };
    let (mc, sc) = mean_se(&coarse_samples);
    let (mf, sf) = mean_se(&fine_samples);
    let jse = (sc * sc + sf * sf).sqrt();
    println!(
        "  limit step {h} vs {}: {mc:.4} vs {mf:.4} (joint SE {jse:.4})",
        h / 2.0
    );
    if (mc - mf).abs() > 3.0 * jse {
        failures.push(format!(
            "limit costs at h and h/2 differ by {:.4} > 3 joint SEs ({jse:.4})",
            (mc - mf).abs()
        ));
    }

    // prelimit output grids 2000 vs 4000 on the same event paths: holding
    // component within 1e-3 relative
    let zero = zero_strategy();
    let reps = 500usize;
    let mut holding = [0.0f64; 2];
    for (slot, points) in [(0usize, 2000usize), (1, 4000)] {
        let params = PrelimitParams {
            n: 256,
            policy: Policy::CmuPreemptive,
            horizon,
            output_points: points,
            event_cap: 10_000_000,
        };
        let est = estimate_qcp_cost(&model, &zero, &params, reps, 0xC8F).unwrap();
        holding[slot] = est.holding;
    }
    let rel = (holding[0] - holding[1]).abs() / holding[1].abs();
    println!(
        "  prelimit holding at 2000 vs 4000 grid points: {:.6} vs {:.6} (rel {rel:.2e})",
        holding[0], holding[1]
    );
    if rel > 1e-3 {
        failures.push(format!("holding components differ by {rel:.2e} relative"));
    }

    report(
        8,
        "discretization consistency",
        &failures,
        start.elapsed().as_secs_f64(),
        600.0,
    );
}
