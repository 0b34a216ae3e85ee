//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails.

use std::process::Command;
use std::time::{Duration, Instant};

use cdpre::analysis::{connects, mzone_bound, mzone_escape_frequency};
use cdpre::dynamics::exact::{fixtures, oracle_check};
use cdpre::dynamics::{dominance_check, evolve_bernoulli, evolve_cdpre, evolve_intermediate};
use cdpre::env::{sample_clocks, sample_environment};
use cdpre::estimate::{
    decay_fit, simon_lieb_check, theta_table, threshold_scan, verify_block_combinatorics, DecayFamily,
};
use cdpre::osss::{exploration_window, osss_check, revealment_table, run_tk};
use cdpre::stats::tally_replicates;
use cdpre::{ConstraintDist, Error, Model, SeedSpec, StreamLabel, Vertex, Window};

type Check = (&'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn within(limit_secs: u64, elapsed: Duration) -> bool {
    elapsed <= Duration::from_secs(limit_secs)
}

fn oracle() -> Outcome {
    let start = Instant::now();
    let rows = oracle_check(&[0.2, 0.5, 0.8], 100_000, 1).unwrap();
    let failed: Vec<String> =
        rows.iter().filter(|r| !r.pass).map(|r| format!("{}/{}@{}", r.fixture, r.event, r.t)).collect();
    let worst = rows
        .iter()
        .map(|r| (r.estimate - r.exact).abs() / r.sigma.max(f64::MIN_POSITIVE))
        .filter(|z| z.is_finite())
        .fold(0.0, f64::max);
    let fast = within(60, start.elapsed());
    outcome(
        failed.is_empty() && fast && fixtures().len() == 6,
        format!("{} events, worst |z| = {worst:.2}, failures {failed:?}, under 60 s: {fast}", rows.len()),
    )
}

fn dominance() -> Outcome {
    let start = Instant::now();
    let mut total = 0;
    let mut compared = 0;
    for rho in [[0.0, 0.0, 0.0, 1.0], [0.0, 0.0, 0.5, 0.5]] {
        let dist = ConstraintDist::new(rho).unwrap();
        for row in dominance_check(&dist, 16, &[0.3, 0.6, 0.9], 10_000, 2).unwrap() {
            total += row.violations.total();
            compared += row.replicates * row.edges_per_replicate;
        }
    }
    let fast = within(120, start.elapsed());
    outcome(total == 0 && fast, format!("{total} violations over {compared} edge comparisons, under 120 s: {fast}"))
}

fn degree_cap_and_monotonicity() -> Outcome {
    let window = Window::centered(16);
    let laws = [[0.0, 0.0, 0.0, 1.0], [0.0, 0.0, 0.5, 0.5], [0.25, 0.25, 0.25, 0.25]];
    let reps = 2_000;
    let (cap, order): (u64, u64) = tally_replicates(reps * laws.len() as u64, |i, acc: &mut (u64, u64)| {
        let dist = ConstraintDist::new(laws[(i % 3) as usize]).unwrap();
        let seed = SeedSpec::new(3, i, StreamLabel::Constraints);
        let env = sample_environment(&dist, window, seed);
        let clocks = sample_clocks(window, seed.with_stream(StreamLabel::Clocks));
        let early = evolve_cdpre(&env, &clocks, 0.3).unwrap();
        let late = evolve_cdpre(&env, &clocks, 0.6).unwrap();
        let full = evolve_cdpre(&env, &clocks, 1.0).unwrap();
        for cfg in [&early, &late, &full] {
            acc.0 += window
                .vertices()
                .filter(|v| cfg.open_degree(*v) > usize::from(env.kappa(*v).unwrap()))
                .count() as u64;
        }
        acc.1 += u64::from(!early.is_below(&late));
        let b_early = evolve_bernoulli(&clocks, 0.3).unwrap();
        acc.1 += u64::from(!b_early.is_below(&evolve_bernoulli(&clocks, 0.6).unwrap()));
    });
    outcome(
        cap == 0 && order == 0,
        format!("{} replicates on B(16): {cap} degree excesses, {order} order violations", reps * 3),
    )
}

fn mzone() -> Outcome {
    let start = Instant::now();
    let n = 10_000;
    let est = mzone_escape_frequency(7, 1.0, n, 4).unwrap();
    let limit = 0.5786 + 3.0 * (0.25 / n as f64).sqrt();
    let fast = within(60, start.elapsed());
    outcome(
        est.estimate <= limit && fast && (mzone_bound(7) - 0.5786).abs() < 1e-4,
        format!("escape {:.4} +- {:.4}, limit {limit:.4}, under 60 s: {fast}", est.estimate, est.stderr),
    )
}

fn blocks() -> Outcome {
    let r = verify_block_combinatorics(1_000_000, 5).unwrap();
    let p = r.reduced_analog.estimate();
    outcome(
        r.block_edge_count == 49 && r.a_count == 6 && r.p_c_denominator == 13_983_816 && (p - 0.1).abs() <= 0.001,
        format!(
            "|E| = {}, |A| = {}, P(C) = 1/{}, bottom-2-of-5 = {p:.5}",
            r.block_edge_count, r.a_count, r.p_c_denominator
        ),
    )
}

fn exploration() -> Outcome {
    let n = 10;
    let window = exploration_window(n);
    let mut mismatches = 0;
    let mut unrevealed = 0;
    let mut other = 0;
    for (ti, t) in [0.2, 0.45, 0.7].into_iter().enumerate() {
        let (m, u, o): (u64, u64, u64) = tally_replicates(1_000, |rep, acc: &mut (u64, u64, u64)| {
            let clocks = sample_clocks(window, SeedSpec::new(6 + ti as u64, rep, StreamLabel::Clocks));
            let (full, _) = evolve_intermediate(&clocks, t, &window).unwrap();
            let truth = connects(&full, Vertex::ORIGIN, n).unwrap();
            for k in 1..=n {
                match run_tk(&clocks, t, k, n) {
                    Ok((bit, _)) => acc.0 += u64::from(bit != truth),
                    Err(Error::UnrevealedRead(_)) => acc.1 += 1,
                    Err(_) => acc.2 += 1,
                }
            }
        });
        mismatches += m;
        unrevealed += u;
        other += o;
    }
    outcome(
        mismatches == 0 && unrevealed == 0 && other == 0,
        format!("30000 runs: {mismatches} wrong bits, {unrevealed} unrevealed reads, {other} other errors"),
    )
}

fn osss() -> Outcome {
    let start = Instant::now();
    let c = osss_check(0.45, 8, 4, 10_000, 7).unwrap();
    let fast = within(600, start.elapsed());
    outcome(
        c.holds && c.determination_mismatches == 0 && fast,
        format!(
            "Var {:.4} <= sum {:.4} + 3 * {:.4}, under 10 min: {fast}",
            c.variance, c.rhs, c.sigma
        ),
    )
}

fn threshold() -> Outcome {
    let grid: Vec<f64> = (40..=64).map(|i| f64::from(i) / 100.0).collect();
    let reps = 2_000;
    let b = threshold_scan(Model::Bernoulli, None, 64, &grid, reps, 0, 8).unwrap();
    let dist = ConstraintDist::point_mass(3);
    let c = threshold_scan(Model::Cdpre, Some(&dist), 64, &grid, reps, 8, 8).unwrap();
    match (b.crossing, c.crossing) {
        (Some(tb), Some(tc)) => outcome(
            (tb - 0.5).abs() <= 0.03 && tc > tb,
            format!("bernoulli crosses at {tb:.4}, cdpre at {tc:.4} ({reps} paired replicates)"),
        ),
        (tb, tc) => outcome(false, format!("missing crossing: bernoulli {tb:?}, cdpre {tc:?}")),
    }
}

fn decay() -> Outcome {
    let ns = [4, 8, 12, 16, 20];
    let reps = 100_000;
    let b = theta_table(Model::Bernoulli, None, 0.3, &ns, reps, 0, 9).unwrap();
    let dist = ConstraintDist::point_mass(3);
    let c = theta_table(Model::Cdpre, Some(&dist), 0.3, &ns, reps, 8, 9).unwrap();
    let decreasing = |table: &cdpre::estimate::ThetaTable| {
        table.rows.windows(2).all(|w| {
            let sigma = (w[0].stderr.powi(2) + w[1].stderr.powi(2)).sqrt();
            w[1].theta_hat < w[0].theta_hat + 2.0 * sigma
        })
    };
    let fb = decay_fit(&b, DecayFamily::PureExponential, 0.0, None).unwrap();
    let fc = decay_fit(&c, DecayFamily::PureExponential, 0.0, None).unwrap();
    let sigma = (fb.alpha_stderr.powi(2) + fc.alpha_stderr.powi(2)).sqrt();
    outcome(
        decreasing(&b) && decreasing(&c) && fb.r_squared >= 0.95 && fc.r_squared >= 0.95
            && fc.alpha_hat >= fb.alpha_hat - 2.0 * sigma,
        format!(
            "bernoulli alpha {:.4} (r2 {:.4}, zero rows {:?}), cdpre alpha {:.4} (r2 {:.4}, zero rows {:?})",
            fb.alpha_hat, fb.r_squared, fb.excluded, fc.alpha_hat, fc.r_squared, fc.excluded
        ),
    )
}

fn simon_lieb() -> Outcome {
    let table = theta_table(Model::Bernoulli, None, 0.3, &[4, 12, 16], 100_000, 0, 10).unwrap();
    let s = simon_lieb_check(&table, 16, 1).unwrap();
    outcome(
        s.holds && s.scale == 4,
        format!("theta_16 {:.2e} <= 32 theta_4 theta_12 = {:.4e} + 3 * {:.2e}", s.theta_n_hat, s.product_term, s.sigma),
    )
}

fn running_sum_matches_exploration() -> Outcome {
    let (t, n, reps, seed) = (0.45, 6, 2_000, 11);
    let ns: Vec<u64> = (1..=n).collect();
    let table = theta_table(Model::Intermediate, None, t, &ns, reps, 1, seed).unwrap();
    let report = revealment_table(t, n, reps, seed).unwrap();
    let (a, b) = (table.prefix_sum(n), report.s_n);
    outcome((a - b).abs() <= 1e-9, format!("sum of theta_k = {a:.6}, S_n from T_k = {b:.6}"))
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let theta_csv = dir.path().join("theta.csv");
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"model":"bernoulli","t":0.3,"n":[1,2,3,4,5],"reps":3000,"seed":12}"#).unwrap();
    let exe = env!("CARGO_BIN_EXE_cdpre");
    let run = |threads: &str, args: &[&str]| -> Option<Vec<u8>> {
        let out = Command::new(exe).args(["--threads", threads]).args(args).output().ok()?;
        out.status.success().then_some(out.stdout)
    };
    let cfg = cfg.to_str().unwrap();
    let theta = run("1", &["--config", cfg, "theta"]);
    if let Some(bytes) = &theta {
        std::fs::write(&theta_csv, bytes).unwrap();
    }
    let commands: Vec<Vec<&str>> = vec![
        vec!["--config", cfg, "theta"],
        vec!["theta", "--model", "cdpre", "--rho", "0,0.2,0.3,0.5", "--t", "0.5", "--n", "2,4", "--reps", "500"],
        vec!["dominance", "--rho", "0,0,0.5,0.5", "--t", "0.3,0.9", "--n", "6", "--reps", "200"],
        vec!["oracle-check", "--t", "0.2,0.8", "--reps", "5000"],
        vec!["mzone", "--m", "4", "--t", "1", "--reps", "1000"],
        vec!["covariance", "--model", "cdpre", "--rho", "0,0,0,1", "--m", "2", "--n", "6", "--t", "0.4", "--reps", "500"],
        vec!["osss", "--t", "0.45", "--n", "4", "--k", "2", "--reps", "300", "--all-k"],
        vec!["scan", "--model", "intermediate", "--n", "6", "--reps", "300"],
        vec!["blocks", "--reps", "20000"],
        vec!["fit", "--input", theta_csv.to_str().unwrap(), "--simon-lieb", "4"],
        vec!["susceptibility", "--model", "cdpre", "--rho", "0,0,0,1", "--t", "0.4", "--box-n", "6", "--reps", "300"],
    ];
    let mut differing = Vec::new();
    for args in &commands {
        let a = run("1", args);
        let b = run("4", args);
        let c = run("4", args);
        if a.is_none() || a != b || b != c {
            differing.push(args[0..2].join(" "));
        }
    }
    outcome(
        theta.is_some() && differing.is_empty(),
        format!("{} invocations rerun at 1 and 4 threads, differing: {differing:?}", commands.len()),
    )
}

fn main() {
    let checks: [Check; 12] = [
        ("1 oracle equivalence", oracle),
        ("2 pathwise dominance", dominance),
        ("3 degree cap and monotonicity", degree_cap_and_monotonicity),
        ("4 influence zone bound", mzone),
        ("5 block combinatorics", blocks),
        ("6 exploration correctness", exploration),
        ("7 OSSS margin", osss),
        ("8 threshold crossing", threshold),
        ("9 decay", decay),
        ("10 Simon-Lieb term", simon_lieb),
        ("11 determinism", determinism),
        ("running sum of theta", running_sum_matches_exploration),
    ];
    let mut failures = 0;
    for (name, check) in checks {
        let start = Instant::now();
        let o = check();
        failures += usize::from(!o.pass);
        println!(
            "{} [{name}] {} ({:.1} s)",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            start.elapsed().as_secs_f64()
        );
    }
    println!("{} of {} checks passed", checks.len() - failures, checks.len());
    if failures > 0 {
        std::process::exit(1);
    }
}
