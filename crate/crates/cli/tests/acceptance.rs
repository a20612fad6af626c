//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.
//!
//! `RSKLD_ACCEPTANCE=1,5,11` restricts the run to the listed criteria.

use std::process::Command;
use std::time::{Duration, Instant};

use rskld::montecarlo::{concentration_check, identity_ks_test, KsOptions, ScalarSampler};
use rskld::presets::{run_experiment, Preset};
use rskld::quadrature::QuadConfig;
use rskld::rate_functions::{rate_j, rate_k_closed};
use rskld::rmt::{log_joint_density, sample_gue_spectrum, traceless, BlockEnsembleSpec, DEFAULT_BROWNIAN_STEPS};
use rskld::rng::substream_key;
use rskld::tableaux::oracle_sweep;
use rskld::variational::{equilibrium_measure, inf_convolution_check, rate_k_eta, rate_k_variational};

type Check = rskld::Result<(bool, String)>;

struct Criterion {
    id: u32,
    name: &'static str,
    budget: Duration,
    run: fn() -> Check,
}

fn cores() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn closed_form_consistency() -> Check {
    let mut worst = 0.0f64;
    for i in 1..=19 {
        let x = i as f64 / 10.0;
        worst = worst.max((rate_k_closed(x).value() - rate_k_variational(x)?.value()).abs());
    }
    Ok((worst <= 1e-6, format!("max |K_closed - K_variational| = {worst:.3e} (tol 1e-6)")))
}

fn legendre_consistency() -> Check {
    let (mut d0, mut d1) = (0.0f64, 0.0f64);
    for i in 0..=60 {
        let x = -4.0 + 0.1 * i as f64;
        d0 = d0.max((rate_k_eta(x, 0.0)?.value() - rate_j(x).value()).abs());
    }
    for i in 1..=25 {
        let x = 0.1 * i as f64;
        d1 = d1.max((rate_k_eta(x, 1.0)?.value() - rate_k_closed(x).value()).abs());
    }
    Ok((d0 <= 1e-6 && d1 <= 1e-6, format!("max |K_0 - J| = {d0:.3e}, max |K_1 - K| = {d1:.3e} (tol 1e-6)")))
}

fn inf_convolution() -> Check {
    let mut worst = 0.0f64;
    for &eta in &[0.25, 0.5, 1.0] {
        for i in 0..=40 {
            worst = worst.max(inf_convolution_check(-2.0 + 0.1 * i as f64, eta)?);
        }
    }
    Ok((worst <= 1e-4, format!("max residual {worst:.3e} on x in [-2, 2] step 0.1 (tol 1e-4)")))
}

fn equilibrium_constraints() -> Check {
    let cfg = QuadConfig::default();
    let mut worst = 0.0f64;
    for &x in &[0.5, 1.0, 1.5] {
        let mu = equilibrium_measure(x)?;
        worst = worst.max((mu.mass(&cfg)? - 1.0).abs()).max((mu.first_moment(&cfg)? + x).abs());
    }
    let l = equilibrium_measure(1.999)?.l;
    let pass = worst <= 1e-8 && (-4.01..=-3.99).contains(&l);
    Ok((pass, format!("max constraint error {worst:.3e} (tol 1e-8); L(1.999) = {l:.6}")))
}

fn combinatorial_oracle() -> Check {
    let s = oracle_sweep(8, 4)?;
    Ok((
        s.failures.is_empty(),
        format!("{} words, {} comparisons, {} failures", s.words, s.comparisons, s.failures.len()),
    ))
}

fn spectral_sanity() -> Check {
    let (m, reps) = (50usize, 10_000u64);
    let (mut top, mut second, mut worst_trace) = (0.0, 0.0, 0.0f64);
    for i in 0..reps {
        let s = sample_gue_spectrum(m, substream_key(6, 0, i))?;
        let xi = s.scaled();
        top += xi[0];
        second += xi.iter().map(|x| x * x).sum::<f64>() / m as f64;
        worst_trace = worst_trace.max(traceless(&s)?.eigenvalues.iter().sum::<f64>().abs());
    }
    let (top, second) = (top / reps as f64, second / reps as f64);
    // midpoint rule on [-6, 6]^2
    let (lo, hi, cells) = (-6.0, 6.0, 1200);
    let h = (hi - lo) / cells as f64;
    let mut mass = 0.0;
    for i in 0..cells {
        for j in 0..cells {
            let (x, y) = (lo + (i as f64 + 0.5) * h, lo + (j as f64 + 0.5) * h);
            mass += log_joint_density(&[x, y])?.exp();
        }
    }
    mass *= h * h;
    let pass = (1.85..=2.05).contains(&top)
        && (0.95..=1.05).contains(&second)
        && worst_trace <= 1e-9 * m as f64
        && (mass - 1.0).abs() <= 1e-3;
    Ok((
        pass,
        format!(
            "mean xi_1 = {top:.4}, mean second moment = {second:.4}, max |trace| = {worst_trace:.2e}, m = 2 mass = {mass:.6}"
        ),
    ))
}

fn distributional_identities() -> Check {
    let opts = KsOptions::default();
    let top = ScalarSampler::GueTop { m: 5 };
    let mut pass = true;
    let mut parts = Vec::new();
    let blocks = [
        BlockEnsembleSpec::new(vec![0.2], vec![5])?,
        BlockEnsembleSpec::new(vec![0.1, 0.05], vec![5, 10])?,
    ];
    for (i, block) in blocks.into_iter().enumerate() {
        let label = format!("{:?}x{:?}", block.probs(), block.mults());
        let r = identity_ks_test(&top, &ScalarSampler::BlockPlusGaussian { block }, 100_000, 71 + i as u64, &opts)?;
        pass &= r.ks.pass;
        parts.push(format!("block {label}: D = {:.5} vs {:.5}", r.ks.statistic, r.ks.threshold));
    }
    let brownian = ScalarSampler::Brownian { k: 4, steps: DEFAULT_BROWNIAN_STEPS, rho: 0.0 };
    let r = identity_ks_test(
        &ScalarSampler::GueTop { m: 4 },
        &brownian,
        100_000,
        73,
        &KsOptions { threshold: Some(0.03), ..opts },
    )?;
    pass &= r.ks.pass;
    parts.push(format!("Brownian k = 4: D = {:.5} vs {:.5}", r.ks.statistic, r.ks.threshold));
    Ok((pass, parts.join("; ")))
}

fn desk_experiment(label: &str) -> Check {
    let preset = Preset::builtin("desk")?;
    let exp = preset
        .ldp
        .iter()
        .find(|e| e.label == label)
        .ok_or_else(|| rskld::Error::InvalidArgument(format!("desk preset lacks {label}")))?;
    let (table, outcome) = run_experiment(exp)?;
    let rows: Vec<String> = table
        .rows
        .iter()
        .map(|r| {
            format!(
                "x = {}: hits {}/{} rate {} ref {}",
                r.point.threshold.label(),
                r.point.estimate.hits,
                r.point.estimate.reps,
                r.point.estimate.rate_estimate.value(),
                r.rate_function_value.value()
            )
        })
        .collect();
    Ok((outcome.pass, format!("{label}: {} [{}]", outcome.detail, rows.join("; "))))
}

fn upper_slope() -> Check {
    desk_experiment("words-upper-m10")
}

fn lower_slope() -> Check {
    let (eig_pass, eig) = desk_experiment("gue-lower-m10")?;
    let (word_pass, word) = desk_experiment("words-lower-m8")?;
    Ok((eig_pass && word_pass, format!("{eig} | {word}")))
}

fn concentration_decay() -> Check {
    let cfg = Preset::builtin("desk")?
        .concentration
        .ok_or_else(|| rskld::Error::InvalidArgument("desk preset lacks a concentration grid".into()))?;
    let r = concentration_check(&cfg)?;
    let show = |s: &rskld::montecarlo::SideReport| match s.fit {
        Some(f) => format!("c_hat {:.4}, envelope ok {}", f.c_hat, s.envelope_ok),
        None => "insufficient data".to_string(),
    };
    Ok((r.pass, format!("upper: {}; lower: {}", show(&r.upper), show(&r.lower))))
}

fn determinism() -> Check {
    let run = |workers: &str| -> rskld::Result<Vec<u8>> {
        let out = Command::new(env!("CARGO_BIN_EXE_rskld"))
            .args(["verify", "ldp", "--preset", "quick", "--seed", "42", "--workers", workers])
            .env("RUST_LOG", "off")
            .output()?;
        if !out.status.success() {
            return Err(rskld::Error::NumericFailure(format!("workers {workers}: exit {:?}", out.status.code())));
        }
        Ok(out.stdout)
    };
    let outputs = [run("1")?, run("8")?, run("1")?, run("8")?];
    let same = outputs.windows(2).all(|w| w[0] == w[1]);
    Ok((same, format!("4 runs, {} bytes each, identical: {same}", outputs[0].len())))
}

fn main() {
    let scale = 8.0 / cores().min(8) as f64;
    let minutes = |m: f64| Duration::from_secs_f64(60.0 * m);
    let criteria = [
        Criterion { id: 1, name: "closed-form consistency", budget: Duration::from_secs(10), run: closed_form_consistency },
        Criterion { id: 2, name: "Legendre consistency", budget: Duration::from_secs(30), run: legendre_consistency },
        Criterion { id: 3, name: "inf-convolution", budget: Duration::from_secs(60), run: inf_convolution },
        Criterion { id: 4, name: "equilibrium constraints", budget: Duration::from_secs(5), run: equilibrium_constraints },
        Criterion { id: 5, name: "combinatorial oracle", budget: minutes(5.0), run: combinatorial_oracle },
        Criterion { id: 6, name: "spectral sanity", budget: minutes(2.0), run: spectral_sanity },
        Criterion { id: 7, name: "distributional identities", budget: minutes(5.0), run: distributional_identities },
        // the budget is stated for 8 workers
        Criterion { id: 8, name: "upper-tail LDP slope", budget: minutes(20.0 * scale), run: upper_slope },
        Criterion { id: 9, name: "lower-tail LDP slope", budget: minutes(20.0), run: lower_slope },
        Criterion { id: 10, name: "concentration decay", budget: minutes(15.0), run: concentration_decay },
        Criterion { id: 11, name: "determinism", budget: minutes(5.0), run: determinism },
    ];
    let selected: Option<Vec<u32>> = std::env::var("RSKLD_ACCEPTANCE")
        .ok()
        .map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let mut failed = Vec::new();
    for c in &criteria {
        if selected.as_ref().is_some_and(|s| !s.contains(&c.id)) {
            continue;
        }
        let start = Instant::now();
        let result = (c.run)();
        let elapsed = start.elapsed();
        let in_time = elapsed <= c.budget;
        let (pass, detail) = match result {
            Ok((ok, detail)) => (ok && in_time, detail),
            Err(e) => (false, format!("error: {e}")),
        };
        println!(
            "criterion {:>2} {:<27} {} | {} | {:.1} s (budget {:.0} s)",
            c.id,
            c.name,
            if pass { "PASS" } else { "FAIL" },
            detail,
            elapsed.as_secs_f64(),
            c.budget.as_secs_f64()
        );
        if !pass {
            failed.push(c.id);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all criteria passed");
    } else {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}
