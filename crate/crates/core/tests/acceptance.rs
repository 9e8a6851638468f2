//! Acceptance gate: runs every criterion, prints one PASS/FAIL line each and
//! exits nonzero if any fails.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::Rng;

use regboot::bootstrap::{assemble_sample, normalized_statistic, reduced_statistic};
use regboot::harness::config::ExperimentConfig;
use regboot::harness::experiments::{
    clt_experiment, coupling_check, prepare_chain, schedule_of, tail_and_moment_check, trajectory_with_returns,
};
use regboot::regeneration::{block_statistics, extract_blocks, regeneration_diagnostics, return_times};
use regboot::schedule::{alpha_window, block_count};
use regboot::simulator::{sample_infinite_order_trajectory, ChainSource};
use regboot::{Error, Kernel, Observable, SeedSpec, Symbol, Trajectory};

type Outcome = Result<String, String>;
/// CSV and JSON bytes of one run.
type Outputs = (Vec<u8>, Vec<u8>);
type Criterion = (&'static str, fn() -> Outcome, Duration);

fn check(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

/// Exact identities of the block statistics and the bootstrap statistic.
fn criterion_1() -> Outcome {
    let mut rng = SeedSpec::new(1001, 0).rng();
    let mut worst_var = 0.0f64;
    for config in 0..1000 {
        let m = rng.gen_range(1..=5);
        let alphabet = rng.gen_range(2..=4);
        let lengths: Vec<usize> = (0..m).map(|_| rng.gen_range(1..=12)).collect();
        let symbols: Vec<Symbol> = (0..lengths.iter().sum::<usize>())
            .map(|_| rng.gen_range(0..alphabet) as Symbol)
            .collect();
        let values: Vec<f64> = (0..alphabet).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let f = Observable::new(values.clone()).map_err(|e| e.to_string())?;
        let mu = rng.gen_range(-3.0..3.0);
        let mut blocks: Vec<&[Symbol]> = Vec::with_capacity(m);
        let mut start = 0;
        for &d in &lengths {
            blocks.push(&symbols[start..start + d]);
            start += d;
        }
        let stats = block_statistics(&blocks, &f, Some(mu)).map_err(|e| e.to_string())?;

        // (a) block sums centered at their own mean add to zero.
        let sum: f64 = stats.z.iter().sum();
        check(sum.abs() < 1e-9, format!("config {config}: sum Z = {sum:e}"))?;

        // (d) Z = Z~ + (mu - mu_hat) D, with mu_hat recomputed here.
        let total: f64 = symbols.iter().map(|&s| values[s as usize]).sum();
        let mu_hat = total / symbols.len() as f64;
        for (l, block) in blocks.iter().enumerate() {
            let z_tilde: f64 = block.iter().map(|&s| values[s as usize] - mu).sum();
            let rhs = z_tilde + (mu - mu_hat) * block.len() as f64;
            check(
                (stats.z[l] - rhs).abs() < 1e-9,
                format!("config {config}: Z_{l} = {} but Z~ + (mu - mu_hat) D = {rhs}", stats.z[l]),
            )?;
        }

        let ss: f64 = stats.z.iter().map(|z| z * z).sum();
        if ss < 1e-12 {
            continue;
        }

        // (b) exhaustive bootstrap variance over all m^m index vectors.
        let total_vectors = m.pow(m as u32);
        let mut second_moment = 0.0;
        for code in 0..total_vectors {
            let mut c = code;
            let mut s = 0.0;
            for _ in 0..m {
                s += stats.z[c % m];
                c /= m;
            }
            second_moment += s * s;
        }
        let var = second_moment / total_vectors as f64;
        let rel = (var - ss).abs() / ss;
        worst_var = worst_var.max(rel);
        check(rel < 1e-12, format!("config {config}: Var* = {var}, sum Z^2 = {ss}"))?;

        // (c) defining form from an independently assembled sample.
        let indices: Vec<usize> = (0..m).map(|_| rng.gen_range(0..m)).collect();
        let star: Vec<Symbol> = indices.iter().flat_map(|&i| blocks[i].iter().copied()).collect();
        let mu_star = star.iter().map(|&s| values[s as usize]).sum::<f64>() / star.len() as f64;
        let sigma = (ss / star.len() as f64).sqrt();
        let defining = (star.len() as f64).sqrt() * (mu_star - mu_hat) / sigma;
        let reduced = reduced_statistic(&stats.z, &indices).map_err(|e| e.to_string())?;
        let tol = 1e-10 * reduced.abs().max(1.0);
        check(
            (defining - reduced).abs() <= tol,
            format!("config {config}: defining {defining} vs reduced {reduced}"),
        )?;
        let library = normalized_statistic(&blocks, &stats.z, &indices, &f).map_err(|e| e.to_string())?;
        check(
            (library - defining).abs() <= tol,
            format!("config {config}: library statistic {library} vs defining {defining}"),
        )?;
        let assembled = assemble_sample(&blocks, &indices).map_err(|e| e.to_string())?;
        check(assembled.symbols == star, format!("config {config}: assembled sample differs"))?;
    }
    Ok(format!("1000 configurations; worst Var* relative gap {worst_var:.1e}"))
}

fn brute_force_returns(traj: &[Symbol], k: usize) -> Vec<usize> {
    let mut times = vec![1];
    for n in 2..=traj.len() + 1 - k {
        if traj[n - 1..n - 1 + k] == traj[..k] {
            times.push(n);
        }
    }
    times
}

/// Return times and blocks against a brute-force scanner.
fn criterion_2() -> Outcome {
    let mut rng = SeedSpec::new(1002, 0).rng();
    for case in 0..200 {
        let k = rng.gen_range(1..=3);
        let len = rng.gen_range(k..=50);
        let alphabet = rng.gen_range(2..=3);
        let traj: Vec<Symbol> = (0..len).map(|_| rng.gen_range(0..alphabet)).collect();
        let expected = brute_force_returns(&traj, k);
        let m = expected.len() - 1;
        let got = return_times(&traj, k, m).map_err(|e| format!("case {case}: {e}"))?;
        check(got == expected, format!("case {case}: {got:?} vs {expected:?} on {traj:?}"))?;
        check(
            matches!(return_times(&traj, k, m + 1), Err(Error::InsufficientReturns { .. })),
            format!("case {case}: asking for {} returns should fail", m + 1),
        )?;
        let blocks = extract_blocks(&traj, &got).map_err(|e| e.to_string())?;
        let concat: Vec<Symbol> = blocks.concat();
        check(
            concat[..] == traj[..got[m] - 1],
            format!("case {case}: blocks do not concatenate to the segment"),
        )?;
    }
    Ok("200 trajectories match exactly".into())
}

fn coin() -> Kernel {
    Kernel::finite_order(1, &[vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap()
}

/// Fair-coin return-time tail and first moment.
fn criterion_3() -> Outcome {
    let source = ChainSource::InfiniteOrder { kernel: coin(), burn_in: 0 };
    let t_grid: Vec<f64> = (1..=10).map(f64::from).collect();
    let tables = tail_and_moment_check(&source, 1, &t_grid, 1, 100_000, 1003, 1 << 20).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for row in &tables.tail {
        let exact = 0.5f64.powf(row.t);
        check((row.bound - exact).abs() < 1e-15, format!("t = {}: bound {} vs {exact}", row.t, row.bound))?;
        let z = (row.empirical - exact).abs() / row.se;
        worst = worst.max(z);
        check(z <= 4.0, format!("t = {}: {} vs {exact} ({z:.2} SE)", row.t, row.empirical))?;
        check(!row.violation, format!("t = {}: violation flagged", row.t))?;
    }
    let mean = &tables.moments[0];
    check(mean.bound == 2.0, format!("moment bound {}", mean.bound))?;
    let z = (mean.empirical - 2.0).abs() / mean.se;
    check(z <= 4.0, format!("E(D_1) = {} ({z:.2} SE)", mean.empirical))?;
    Ok(format!(
        "tail within {worst:.2} SE of 2^-t; E(D_1) = {:.4} +- {:.4}",
        mean.empirical, mean.se
    ))
}

const MARKOV_CONFIG: &str = r#"{
    "kernel": {"variant": "finite_order", "order": 1, "table": [[0.7, 0.3], [0.3, 0.7]]},
    "observable": [0, 1], "mode": "markov", "k": 6, "m": 1000, "B": 2000, "seed": 2024
}"#;

const MIXTURE_CONFIG: &str = r#"{
    "kernel": {"variant": "geometric_mixture", "theta": 0.2, "table": [[0.7, 0.3], [0.3, 0.7]]},
    "observable": [0, 1], "mode": "infinite_order", "k": 6, "m": 1000, "B": 2000, "seed": 2025
}"#;

fn clt_ks(text: &str) -> Outcome {
    let config = ExperimentConfig::from_json(text).map_err(|e| e.to_string())?;
    let report = clt_experiment(&config).map_err(|e| e.to_string())?.report;
    let rep = &report.replicates[0];
    let s = &rep.summary;
    let line = format!(
        "KS {:.5} (mean {:.4}, sd {:.4}, skewness {:.4}; {} symbols, identity gap {:.1e})",
        s.ks_distance, s.mean, s.sd, s.skewness, rep.segment_len, rep.identity_gap
    );
    check(s.ks_distance < 0.05, line.clone())?;
    Ok(line)
}

fn criterion_4() -> Outcome {
    clt_ks(MARKOV_CONFIG)
}

fn criterion_5() -> Outcome {
    clt_ks(MIXTURE_CONFIG)
}

/// Coupling discrepancy rates against `beta_k`.
fn criterion_6() -> Outcome {
    let mixture = Kernel::geometric_mixture(0.5, &[vec![0.8, 0.2], vec![0.2, 0.8]]).unwrap();
    let burn_in = 1000;
    let estimation: Trajectory =
        sample_infinite_order_trajectory(&mixture, 10_000_000, burn_in, SeedSpec::new(1006, 0))
            .map_err(|e| e.to_string())?;
    let rows = coupling_check(&mixture, &estimation, &[2, 4, 6], 1, 100_000, burn_in, 1006)
        .map_err(|e| e.to_string())?;
    let mut parts = Vec::new();
    for row in &rows {
        let expected_beta = 0.6 * 0.5f64.powi(row.k as i32);
        check(
            (row.beta_k - expected_beta).abs() < 1e-15,
            format!("k = {}: beta_k {} vs {expected_beta}", row.k, row.beta_k),
        )?;
        check(
            row.single_rate <= row.beta_k + 4.0 * row.single_se,
            format!("k = {}: rate {} > beta_k {} + 4 SE", row.k, row.single_rate, row.beta_k),
        )?;
        parts.push(format!("k={} {:.5}<={:.5}", row.k, row.single_rate, row.beta_k));
    }

    let finite = Kernel::finite_order(2, &[vec![0.8, 0.2], vec![0.4, 0.6], vec![0.3, 0.7], vec![0.9, 0.1]]).unwrap();
    let exact = coupling_check(&finite, &Trajectory::default(), &[2, 4], 5, 100_000, burn_in, 1006)
        .map_err(|e| e.to_string())?;
    for row in &exact {
        check(
            row.single_rate == 0.0 && row.horizon_rate == 0.0,
            format!("finite order, k = {}: rates {} / {}", row.k, row.single_rate, row.horizon_rate),
        )?;
    }
    Ok(format!("{}; finite order exact 0", parts.join(", ")))
}

/// Schedule arithmetic.
fn criterion_7() -> Outcome {
    check(block_count(1.0, 2).map_err(|e| e.to_string())? == 7, "block_count(1, 2) != 7")?;
    check(block_count(2.0, 3).map_err(|e| e.to_string())? == 403, "block_count(2, 3) != 403")?;
    let w = alpha_window(0.45, 15.0, 0.45).map_err(|e| e.to_string())?;
    check(
        (w.lower - 3.99254).abs() < 1e-5 && (w.upper - 14.20149).abs() < 1e-5,
        format!("window ({}, {})", w.lower, w.upper),
    )?;
    Ok(format!("7, 403, window ({:.5}, {:.5})", w.lower, w.upper))
}

const DETERMINISM_CONFIG: &str = r#"{
    "kernel": {"variant": "geometric_mixture", "theta": 0.2, "table": [[0.7, 0.3], [0.3, 0.7]]},
    "observable": [0, 1], "k": 4, "m": 300, "B": 2000, "replicates": 3, "seed": 8,
    "output": {"csv": "statistics.csv", "json": "report.json"}
}"#;

fn run_clt_check(dir: &Path, threads: usize) -> Result<Outputs, String> {
    std::fs::write(dir.join("config.json"), DETERMINISM_CONFIG).map_err(|e| e.to_string())?;
    let status = Command::new(env!("CARGO_BIN_EXE_regboot"))
        .current_dir(dir)
        .args(["--threads", &threads.to_string(), "clt-check", "--config", "config.json"])
        .output()
        .map_err(|e| e.to_string())?;
    check(
        status.status.success(),
        format!("clt-check exited with {:?}: {}", status.status.code(), String::from_utf8_lossy(&status.stderr)),
    )?;
    let csv = std::fs::read(dir.join("statistics.csv")).map_err(|e| e.to_string())?;
    let json = std::fs::read(dir.join("report.json")).map_err(|e| e.to_string())?;
    Ok((csv, json))
}

/// Byte-identical outputs across runs and thread counts.
fn criterion_8() -> Outcome {
    let runs: Vec<(usize, Outputs)> = [1, 4, 4, 1]
        .into_iter()
        .map(|threads| {
            let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
            Ok((threads, run_clt_check(dir.path(), threads)?))
        })
        .collect::<Result<_, String>>()?;
    let (_, reference) = &runs[0];
    check(reference.0.len() > 2000, "statistics CSV is unexpectedly short")?;
    for (i, (threads, out)) in runs.iter().enumerate().skip(1) {
        check(out.0 == reference.0, format!("run {i} ({threads} threads): CSV differs"))?;
        check(out.1 == reference.1, format!("run {i} ({threads} threads): JSON differs"))?;
    }
    Ok(format!(
        "4 runs at 1/4 threads identical ({} CSV bytes, {} JSON bytes)",
        reference.0.len(),
        reference.1.len()
    ))
}

/// Lindeberg ratio along k in {2, 4, 6} with m_k = floor(e^(alpha k)),
/// averaged over replicates whose block sums are not all zero.
fn criterion_9() -> Outcome {
    let alpha = 1000f64.ln() / 6.0 + 1e-9;
    let replicates = 200u64;
    let mut rows = Vec::new();
    for k in [2usize, 4, 6] {
        let text = format!(
            r#"{{
                "kernel": {{"variant": "finite_order", "order": 1, "table": [[0.7, 0.3], [0.3, 0.7]]}},
                "observable": [0, 1], "mode": "markov", "k": {k}, "alpha": {alpha}, "seed": 1009
            }}"#
        );
        let config = ExperimentConfig::from_json(&text).map_err(|e| e.to_string())?;
        let chain = prepare_chain(&config, config.seed).map_err(|e| e.to_string())?;
        let (m, _) = schedule_of(&config).map_err(|e| e.to_string())?;
        let mut ratios = Vec::new();
        let mut degenerate = 0;
        for r in 0..replicates {
            let (trajectory, d) = trajectory_with_returns(&chain.source, k, m, SeedSpec::new(1009, r), 1 << 31)
                .map_err(|e| e.to_string())?;
            let blocks = d.blocks(&trajectory).map_err(|e| e.to_string())?;
            let stats = block_statistics(&blocks, &chain.observable, None).map_err(|e| e.to_string())?;
            match regeneration_diagnostics(&stats.z, None) {
                Ok(diag) => ratios.push(diag.lindeberg_ratio),
                Err(Error::Degenerate(_)) => degenerate += 1,
                Err(e) => return Err(e.to_string()),
            }
        }
        check(ratios.len() >= 100, format!("k = {k}: only {} nondegenerate replicates", ratios.len()))?;
        let n = ratios.len() as f64;
        let mean = ratios.iter().sum::<f64>() / n;
        let se = (ratios.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt();
        rows.push((k, m, mean, se, degenerate));
    }
    let expected_m = [10, 100, 1000];
    for ((k, m, ..), want) in rows.iter().zip(expected_m) {
        check(*m == want, format!("k = {k}: m = {m}, expected {want}"))?;
    }
    for pair in rows.windows(2) {
        let (k0, _, a, sa, _) = pair[0];
        let (k1, _, b, sb, _) = pair[1];
        check(
            b - a <= 3.0 * (sa * sa + sb * sb).sqrt(),
            format!("k = {k0} -> {k1}: lindeberg ratio {a:.5} -> {b:.5}"),
        )?;
    }
    Ok(rows
        .iter()
        .map(|(k, m, mean, se, skipped)| format!("k={k} m={m} {mean:.5}+-{se:.5} ({skipped} degenerate)"))
        .collect::<Vec<_>>()
        .join(", "))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("exact identity suite", criterion_1, Duration::from_secs(10)),
        ("return-time oracle", criterion_2, Duration::from_secs(1)),
        ("tail and moment bounds", criterion_3, Duration::from_secs(30)),
        ("bootstrap CLT, Markov regime", criterion_4, Duration::from_secs(120)),
        ("bootstrap CLT, infinite-order regime", criterion_5, Duration::from_secs(180)),
        ("coupling bound", criterion_6, Duration::from_secs(60)),
        ("schedule arithmetic", criterion_7, Duration::from_secs(1)),
        ("determinism across threads", criterion_8, Duration::from_secs(300)),
        ("Lindeberg-ratio trend", criterion_9, Duration::from_secs(180)),
    ];
    let mut failures = 0;
    for (i, (name, run, budget)) in criteria.iter().enumerate() {
        let started = Instant::now();
        let outcome = run();
        let elapsed = started.elapsed();
        let outcome = match outcome {
            Ok(detail) if elapsed > *budget => Err(format!("{detail}; over the {budget:?} budget")),
            other => other,
        };
        match outcome {
            Ok(detail) => println!("criterion {}: PASS  {name} [{:.2?}] {detail}", i + 1, elapsed),
            Err(detail) => {
                failures += 1;
                println!("criterion {}: FAIL  {name} [{:.2?}] {detail}", i + 1, elapsed);
            }
        }
    }
    if failures > 0 {
        println!("{failures} of {} criteria failed", criteria.len());
        std::process::exit(1);
    }
    println!("all {} criteria passed", criteria.len());
}

