//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero when any criterion fails.

use hybridfuse::alloc::{
    allocate, allocate_dp_oracle, build_fi_table, AllocError, AllocationResult, BudgetMode, ErrorHistogram, FiTable,
    Sense,
};
use hybridfuse::config::ExperimentConfig;
use hybridfuse::design::{design_objective, objective_gradient, DesignProblem, DesignSettings, PsoSettings};
use hybridfuse::detection::{fisher_information, quantized_fisher};
use hybridfuse::experiment::{
    optimized_quantizer, run_design, run_landscape, run_roc, run_sweep, score_moments_h0, LandscapeReport, RocPoint,
};
use hybridfuse::model::{ChannelSpec, CodewordMapping, NetworkConfig, QuantizerSpec, SignalParams};
use hybridfuse::Execution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

struct Verdict {
    pass: bool,
    detail: String,
}

impl Verdict {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self { pass, detail: detail.into() }
    }
}

fn exec() -> Execution {
    Execution::default()
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed())
}

fn fmt_vec(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.5}")).collect();
    format!("({})", parts.join(", "))
}

fn within(v: &[f64], target: &[f64], tol: f64) -> bool {
    v.len() == target.len() && v.iter().zip(target).all(|(a, b)| (a - b).abs() <= tol)
}

fn c1_single_peak() -> Verdict {
    let config = ExperimentConfig::preset("quantizer-2bit").unwrap();
    let (report, dt) = timed(|| run_design(&config, exec()).unwrap());
    let target = [-1.0, 0.0, 1.0];
    let row = |m: &str| report.rows.iter().find(|r| r.method == m).expect("method present");
    let (bgda, pso) = (row("bgda"), row("pso"));
    let bgda_ok = within(&bgda.thresholds, &target, 0.01);
    let pso_ok = within(&pso.thresholds, &target, 0.05);
    let fast = dt < Duration::from_secs(10);
    Verdict::new(
        bgda_ok && pso_ok && fast,
        format!(
            "bgda {} [{}], pso {} [{}], {:.2?}",
            fmt_vec(&bgda.thresholds),
            if bgda_ok { "ok" } else { "outside +-0.01" },
            fmt_vec(&pso.thresholds),
            if pso_ok { "ok" } else { "outside +-0.05" },
            dt
        ),
    )
}

fn landscape_check(report: &LandscapeReport) -> (bool, String) {
    let cell = 0.05;
    let peaks = &report.local_maxima;
    let near = |t1: f64, t3: f64| peaks.iter().any(|p| (p.tau1 - t1).abs() <= cell && (p.tau3 - t3).abs() <= cell);
    let best_peak = peaks.iter().map(|p| p.objective).fold(f64::NEG_INFINITY, f64::max);
    let pso = report.designs.iter().map(|d| d.objective).fold(f64::NEG_INFINITY, f64::max);
    let ok = peaks.len() == 2 && near(-0.2384, 0.2384) && near(-4.237, 4.237) && pso >= best_peak - 1e-4;
    let listed: Vec<String> =
        peaks.iter().map(|p| format!("({:.4}, {:.4})={:.6}", p.tau1, p.tau3, p.objective)).collect();
    (ok, format!("{} maxima [{}], pso {:.6}", peaks.len(), listed.join(" "), pso))
}

fn c2_two_peaks() -> Verdict {
    let mut config = ExperimentConfig::preset("landscape-2bit").unwrap();
    let default_mapping = config.design.mapping;
    let (natural, dt) = timed(|| run_landscape(&config, exec()).unwrap());
    let (natural_ok, natural_msg) = landscape_check(&natural);
    config.design.mapping = CodewordMapping::Gray;
    let gray = run_landscape(&config, exec()).unwrap();
    let (gray_ok, gray_msg) = landscape_check(&gray);
    let default_ok = match default_mapping {
        CodewordMapping::NaturalBinary => natural_ok,
        CodewordMapping::Gray => gray_ok,
    };
    let fast = dt < Duration::from_secs(60);
    Verdict::new(
        default_ok && fast,
        format!("natural: {natural_msg}; gray: {gray_msg}; default {default_mapping:?}; {dt:.2?}"),
    )
}

fn c3_closed_form() -> Verdict {
    let one_bit = QuantizerSpec::new(1, vec![0.0]).unwrap();
    let fi = quantized_fisher(&one_bit, &ChannelSpec::new(0.0).unwrap(), 1.0);
    let target = 2.0 / std::f64::consts::PI;
    let mut ok = (fi - target).abs() <= 1e-9;
    let mut detail = format!("1-bit {fi:.12} vs 2/pi {target:.12}");
    for (mu, s2) in [(20usize, 1.0), (20, 2.0), (7, 0.3)] {
        let params = SignalParams::new(0.25, s2, 0.5).unwrap();
        let net =
            NetworkConfig::homogeneous(params, one_bit.clone(), ChannelSpec::new(0.0).unwrap(), 0, mu, 32).unwrap();
        let got = fisher_information(&net);
        ok &= got == mu as f64 / s2;
        detail.push_str(&format!("; Mu={mu} s2={s2}: {got}"));
    }
    Verdict::new(ok, detail)
}

fn c4_score_variance() -> Verdict {
    let mut ok = true;
    let mut parts = Vec::new();
    for s2 in [1.0, 2.0] {
        for p_e in [0.0, 0.2] {
            let params = SignalParams::new(0.25, s2, 0.5).unwrap();
            let q = optimized_quantizer(3, p_e, s2, &DesignSettings::default()).unwrap();
            let net = NetworkConfig::homogeneous(params, q, ChannelSpec::new(p_e).unwrap(), 80, 20, 32).unwrap();
            let fi = fisher_information(&net);
            let (_, var) = score_moments_h0(&net, 1_000_000, 17, exec());
            let rel = var / fi - 1.0;
            ok &= rel.abs() <= 0.02;
            parts.push(format!("s2={s2} pe={p_e}: var/FI-1={rel:+.4}"));
        }
    }
    Verdict::new(ok, parts.join("; "))
}

fn pd_at<'a>(points: &'a [RocPoint], detector: &str, pfa: f64) -> &'a RocPoint {
    points
        .iter()
        .find(|p| p.detector == detector && (p.pfa_target - pfa).abs() < 1e-12)
        .unwrap_or_else(|| panic!("missing {detector} at {pfa}"))
}

fn ordered(points: &[RocPoint], hi: &str, lo: &str, grid: &[f64]) -> Result<(), String> {
    for &pfa in grid {
        let (a, b) = (pd_at(points, hi, pfa).pd_mc, pd_at(points, lo, pfa).pd_mc);
        if a < b - 0.01 {
            return Err(format!("{hi} {a:.4} < {lo} {b:.4} at pfa {pfa}"));
        }
    }
    Ok(())
}

fn c5_roc() -> Verdict {
    let mut ok = true;
    let mut parts = Vec::new();
    let start = Instant::now();
    for (preset, orders) in
        [("roc-clean", vec![("3b-fp", "3b"), ("3b", "fp")]), ("roc-noisy", vec![("3b-fp", "r-3b-fp"), ("3b", "1b")])]
    {
        let config = ExperimentConfig::preset(preset).unwrap();
        assert_eq!(config.trials, 5000);
        let report = run_roc(&config, exec()).unwrap();
        let mut worst: f64 = 0.0;
        for pfa in [0.05, 0.1, 0.2, 0.5] {
            let p = pd_at(&report.points, "3b-fp", pfa);
            worst = worst.max((p.pd_mc - p.pd_theory.expect("hybrid has theory")).abs());
        }
        ok &= worst <= 0.02;
        parts.push(format!("{preset}: max |pd_mc-pd_theory| {worst:.4}"));
        for (hi, lo) in orders {
            if let Err(e) = ordered(&report.points, hi, lo, &config.roc.pfa_grid) {
                ok = false;
                parts.push(e);
            }
        }
    }
    let dt = start.elapsed();
    ok &= dt < Duration::from_secs(300);
    parts.push(format!("{dt:.2?}"));
    Verdict::new(ok, parts.join("; "))
}

fn same_outcome(
    ilp: &Result<AllocationResult, AllocError>,
    dp: &Result<AllocationResult, AllocError>,
    hist: &ErrorHistogram,
    budget: u64,
    l0: u32,
    mode: BudgetMode,
) -> Result<(), String> {
    match (ilp, dp) {
        (Ok(a), Ok(b)) => {
            if (a.total_fi - b.total_fi).abs() > 1e-9 {
                return Err(format!("objective {} vs {}", a.total_fi, b.total_fi));
            }
            if !a.satisfies_constraints(hist, budget, l0, mode) || !b.satisfies_constraints(hist, budget, l0, mode) {
                return Err("constraint violation".into());
            }
            Ok(())
        }
        (Err(AllocError::Infeasible), Err(AllocError::Infeasible)) => Ok(()),
        (a, b) => Err(format!("ilp {:?} vs dp {:?}", a.as_ref().err(), b.as_ref().err())),
    }
}

fn random_instance(rng: &mut ChaCha8Rng) -> (ErrorHistogram, FiTable, u64, u32, BudgetMode, Sense) {
    let n = rng.random_range(1..=4usize);
    let levels = rng.random_range(1..=3usize);
    let mut counts: Vec<u64> = (0..n).map(|_| rng.random_range(0..=60u64 / n as u64)).collect();
    if counts.iter().all(|&c| c == 0) {
        counts[0] = 1;
    }
    let m: u64 = counts.iter().sum();
    let mut eps: Vec<f64> = (0..n).map(|i| i as f64 * 0.05 + rng.random_range(0.0..0.04)).collect();
    eps[0] = 0.0;
    let freqs: Vec<f64> = counts.iter().map(|&c| c as f64 / m as f64).collect();
    let hist = ErrorHistogram::from_frequencies(eps, freqs, m).unwrap();

    let gamma0 = 1.0;
    let mut gamma = vec![vec![0.0; n]; levels];
    for c in 0..n {
        let mut v: f64 = rng.random_range(0.05..0.3);
        for row in gamma.iter_mut() {
            v += rng.random_range(0.0..0.25);
            row[c] = v.min(0.95) * (1.0 - 0.15 * c as f64);
        }
    }
    let table = FiTable { gamma, gamma0 };
    let budget = rng.random_range(0..=200u64);
    let l0 = rng.random_range(levels as u32 + 1..=40);
    let mode = if rng.random_bool(0.5) { BudgetMode::Exact } else { BudgetMode::AtMost };
    let sense = if rng.random_bool(0.5) { Sense::MaximizeFI } else { Sense::MinimizeFI };
    (hist, table, budget, l0, mode, sense)
}

fn c6_ilp_vs_dp() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut failures = Vec::new();
    let (mut feasible, mut infeasible) = (0, 0);
    for i in 0..100 {
        let (hist, table, budget, l0, mode, sense) = random_instance(&mut rng);
        let ilp = allocate(&hist, &table, budget, l0, mode, sense);
        let dp = allocate_dp_oracle(&hist, &table, budget, l0, mode, sense);
        if ilp.is_ok() {
            feasible += 1;
        } else {
            infeasible += 1;
        }
        if let Err(e) = same_outcome(&ilp, &dp, &hist, budget, l0, mode) {
            failures.push(format!("random #{i}: {e}"));
        }
    }

    let config = ExperimentConfig::preset("sweep-exact").unwrap();
    let a = &config.allocation;
    let settings =
        DesignSettings { pso: PsoSettings { seed: config.seed, ..config.design.pso }, bgda: config.design.bgda };
    let uniform = vec![1.0 / a.epsilons.len() as f64; a.epsilons.len()];
    let base = ErrorHistogram::from_frequencies(a.epsilons.clone(), uniform, 0).unwrap();
    let table = &build_fi_table(&base, a.levels, config.signal.sigma_n2, &settings, exec()).unwrap();
    let mut fixed = 0;
    for case in &config.sweep.cases {
        for m in config.sweep.m_values() {
            for sense in [Sense::MaximizeFI, Sense::MinimizeFI] {
                let hist = ErrorHistogram::from_frequencies(a.epsilons.clone(), case.freqs.clone(), m).unwrap();
                let ilp = allocate(&hist, table, a.budget, a.l0, a.budget_mode, sense);
                let dp = allocate_dp_oracle(&hist, table, a.budget, a.l0, a.budget_mode, sense);
                if let Err(e) = same_outcome(&ilp, &dp, &hist, a.budget, a.l0, a.budget_mode) {
                    failures.push(format!("{} M={m} {sense}: {e}", case.name));
                }
                fixed += 1;
            }
        }
    }
    let dt = start.elapsed();
    let fast = dt < Duration::from_secs(60);
    let mut detail = format!(
        "random {feasible} feasible + {infeasible} infeasible, {fixed} C1/C2 sweep instances ({:?} mode), {dt:.2?}",
        a.budget_mode
    );
    if !failures.is_empty() {
        detail.push_str(&format!("; {} mismatches, first: {}", failures.len(), failures[0]));
    }
    Verdict::new(failures.is_empty() && fast, detail)
}

fn c7_sweep_gain() -> Verdict {
    let report = run_sweep(&ExperimentConfig::preset("sweep-exact").unwrap(), exec()).unwrap();
    let mut ok = true;
    let mut parts = Vec::new();
    let mut gaps = Vec::new();
    for case in ["C1", "C2"] {
        let pd = |m: u64, sense: Sense| {
            report
                .points
                .iter()
                .find(|p| p.case == case && p.m_total == m && p.sense == sense)
                .and_then(|p| p.pd_theory)
        };
        let ms: Vec<u64> = report.points.iter().filter(|p| p.case == case).map(|p| p.m_total).collect();
        let (mut strict, mut sum, mut count) = (0, 0.0, 0);
        let mut ms = ms;
        ms.dedup();
        for m in ms {
            match (pd(m, Sense::MaximizeFI), pd(m, Sense::MinimizeFI)) {
                (Some(hi), Some(lo)) => {
                    if hi < lo {
                        ok = false;
                        parts.push(format!("{case} M={m}: max {hi:.6} < min {lo:.6}"));
                    }
                    if hi > lo {
                        strict += 1;
                    }
                    sum += hi - lo;
                    count += 1;
                }
                (None, None) => {}
                _ => {
                    ok = false;
                    parts.push(format!("{case} M={m}: feasibility differs between senses"));
                }
            }
        }
        ok &= strict >= 1;
        let mean = if count > 0 { sum / count as f64 } else { 0.0 };
        gaps.push(mean);
        parts.push(format!("{case}: {count} feasible points, {strict} strict, mean gap {mean:.4}"));
    }
    ok &= gaps[1] > gaps[0];
    Verdict::new(ok, parts.join("; "))
}

fn c8_gradient() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for bits in [2u32, 3] {
        let problem = DesignProblem::new(bits, 0.0, 1.0).unwrap();
        let k = problem.dimension();
        for _ in 0..100 {
            let mut t: Vec<f64> = (0..k).map(|_| rng.random_range(-3.0..3.0)).collect();
            t.sort_by(f64::total_cmp);
            let g = objective_gradient(&t, &problem).unwrap();
            let h = 1e-5;
            let fd: Vec<f64> = (0..k)
                .map(|i| {
                    let (mut up, mut dn) = (t.clone(), t.clone());
                    up[i] += h;
                    dn[i] -= h;
                    (design_objective(&up, &problem).unwrap() - design_objective(&dn, &problem).unwrap()) / (2.0 * h)
                })
                .collect();
            let num = g.iter().zip(&fd).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            let den = fd.iter().map(|x| x.abs()).fold(0.0, f64::max).max(1e-12);
            worst = worst.max(num / den);
            checked += 1;
        }
    }
    Verdict::new(worst <= 1e-5, format!("{checked} vectors, worst relative error {worst:.2e}"))
}

fn c9_determinism() -> Verdict {
    let bin = env!("CARGO_BIN_EXE_hybridfuse");
    let dir = tempfile::tempdir().unwrap();
    let presets = [
        ("quantizer-2bit", "design-quantizer"),
        ("landscape-2bit", "fi-landscape"),
        ("roc-clean", "roc"),
        ("roc-noisy", "roc"),
        ("sweep-exact", "sweep"),
        ("allocate", "allocate"),
    ];
    let mut ok = true;
    let mut parts = Vec::new();
    for (preset, sub) in presets {
        for format in ["csv", "json"] {
            let mut outputs = Vec::new();
            for run in 0..2 {
                let out = dir.path().join(format!("{preset}-{run}.{format}"));
                let status = Command::new(bin)
                    .args([sub, "--preset", preset, "--format", format, "--out"])
                    .arg(&out)
                    .status()
                    .expect("binary runs");
                if !status.success() {
                    ok = false;
                    parts.push(format!("{preset} {format} exited {status}"));
                }
                let mut bytes = std::fs::read(&out).unwrap_or_default();
                let side = dir.path().join(format!("{preset}-{run}.breakdown.{format}"));
                if let Ok(extra) = std::fs::read(side) {
                    bytes.extend(extra);
                }
                outputs.push(bytes);
            }
            if outputs[0].is_empty() || outputs[0] != outputs[1] {
                ok = false;
                parts.push(format!("{preset} {format} differs"));
            }
        }
    }
    if ok {
        parts.push(format!("{} presets x csv/json identical", presets.len()));
    }
    Verdict::new(ok, parts.join("; "))
}

fn main() -> ExitCode {
    type Check = fn() -> Verdict;
    let criteria: [(u32, &str, Check); 9] = [
        (1, "single-peak quantizer (q=2, Pe=0)", c1_single_peak),
        (2, "two-peak FI landscape (Pe=0.2)", c2_two_peaks),
        (3, "closed-form Fisher information", c3_closed_form),
        (4, "score variance equals FI under H0", c4_score_variance),
        (5, "theory/MC ROC agreement and ordering", c5_roc),
        (6, "branch-and-bound matches DP oracle", c6_ilp_vs_dp),
        (7, "max-FI allocation beats min-FI", c7_sweep_gain),
        (8, "analytic gradient vs finite differences", c8_gradient),
        (9, "byte-identical preset reruns", c9_determinism),
    ];
    let mut failed = 0;
    for (n, title, check) in criteria {
        let v = check();
        if !v.pass {
            failed += 1;
        }
        println!("criterion {n} {}: {title} | {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
