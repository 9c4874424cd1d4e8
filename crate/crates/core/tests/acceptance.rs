//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each,
//! and exits non-zero if any fails.

use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use svc_cache::config::{ExperimentConfig, SweepVar};
use svc_cache::content::ContentLibrary;
use svc_cache::delay::{CacheBudgets, DelayModel};
use svc_cache::experiments::{self, Comparison, ValidateOptions};
use svc_cache::geometry::{g_integral, stp_mbs, NetworkGeometry, RadioConfig, TierGeometry};
use svc_cache::mc::{mc_stp_mbs, SimConfig};
use svc_cache::optimizer::{
    grid_oracle_with_model, optimize_with_model, project_budget, OptimizerConfig,
};
use svc_cache::policy::{mpcp, CachingPolicy};
use svc_cache::quadrature::integrate;
use svc_cache::scalar::db_to_linear;
use svc_cache::LayerGrid;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn default_config() -> ExperimentConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("config/default.toml");
    ExperimentConfig::load(&path).expect("committed default config loads")
}

fn model_of(cfg: &ExperimentConfig) -> DelayModel<f64> {
    DelayModel::new(
        &cfg.library().unwrap(),
        &cfg.network().unwrap(),
        &cfg.radio().unwrap(),
    )
    .unwrap()
}

fn analytic_mc_agreement() -> Outcome {
    let cfg = default_config();
    check(cfg.sim.trials == 50_000, "default trials is not 50 000")?;
    let report = experiments::validate_probabilities(&cfg, &ValidateOptions::default())
        .map_err(|e| e.to_string())?;
    let col = |n: &str| report.column(n).unwrap();
    let (quantity, pass, analytic, mean, trials) = (
        col("quantity"),
        col("pass"),
        col("analytic"),
        col("mc_mean"),
        col("trials"),
    );
    let required = [
        "stp_nearest_cached_d2d",
        "stp_nearest_uncached_d2d",
        "stp_cache_tier_d2d",
        "stp_cache_tier_sbs",
        "stp_mbs",
    ];
    let mut worst: f64 = 0.0;
    for q in required {
        let points = (0..quantity.len())
            .filter(|&k| quantity[k] == q && pass[k] != "NA")
            .count();
        check(points >= 5, format!("{q}: only {points} MC points"))?;
    }
    for k in 0..quantity.len() {
        if pass[k] == "NA" {
            continue;
        }
        check(
            trials[k] == "50000",
            format!("row {k}: {} trials", trials[k]),
        )?;
        check(
            pass[k] == "pass",
            format!(
                "{} row {k} failed: analytic {} mc {}",
                quantity[k], analytic[k], mean[k]
            ),
        )?;
        if !quantity[k].starts_with("delay") {
            let a: f64 = analytic[k].parse().unwrap();
            let m: f64 = mean[k].parse().unwrap();
            worst = worst.max((a - m).abs());
        }
    }
    Ok(format!(
        "{} gated rows within 3 stderr and 0.01, max |diff| {worst:.4}",
        pass.iter().filter(|p| **p != "NA").count()
    ))
}

fn special_function() -> Outcome {
    let mut worst4: f64 = 0.0;
    for k in 0..=20 {
        let b = 0.25 * k as f64;
        let err = (g_integral(4.0, b).unwrap() - (std::f64::consts::FRAC_PI_2 - b.atan())).abs();
        check(err <= 1e-9, format!("G_4({b}) off by {err:e}"))?;
        worst4 = worst4.max(err);
    }
    let mut worst_a: f64 = 0.0;
    for a in [3.0, 3.5, 4.0, 5.0] {
        let s = 2.0 * std::f64::consts::PI / a;
        let err = (g_integral(a, 0.0).unwrap() - s / s.sin()).abs();
        check(err <= 1e-8, format!("G_{a}(0) off by {err:e}"))?;
        worst_a = worst_a.max(err);
    }
    Ok(format!(
        "max err {worst4:.1e} (a=4 grid), {worst_a:.1e} (a at b=0)"
    ))
}

fn mbs_probability() -> Outcome {
    let theta: f64 = db_to_linear(5.0);
    let x = theta.sqrt().recip();
    let arccot = 1.0 / (1.0 + theta.sqrt() * (std::f64::consts::FRAC_PI_2 - x.atan()));
    let head = integrate(|t: f64| 1.0 / (1.0 + t * t), x, 1e3, 1e-13).value;
    // ∫_B^∞ dt/(1+t²) = atan(1/B)
    let quad = 1.0 / (1.0 + theta.sqrt() * (head + 1e-3f64.atan()));
    let value: f64 = stp_mbs(4.0, theta).unwrap();
    check(
        (value - arccot).abs() <= 5e-4,
        format!("{value} vs arccot form {arccot}"),
    )?;
    check(
        (value - quad).abs() <= 5e-4,
        format!("{value} vs quadrature {quad}"),
    )?;
    check(
        (value - 0.3469382267859512).abs() <= 5e-4,
        "frozen value mismatch",
    )?;
    let mut parts = vec![format!("P_m={value:.6}")];
    for (k, density) in [1e-5, 1e-4].into_iter().enumerate() {
        let sim = SimConfig {
            trials: 50_000,
            master_seed: 0xacce_0003 + k as u64,
            ..SimConfig::default()
        };
        let est = mc_stp_mbs(density, 4.0, theta, &sim).map_err(|e| e.to_string())?;
        check(
            (est.mean - value).abs() <= 3.0 * est.stderr,
            format!("lambda_m={density}: MC {} ± {}", est.mean, est.stderr),
        )?;
        parts.push(format!(
            "MC(λ={density:e})={:.4}±{:.4}",
            est.mean, est.stderr
        ));
    }
    Ok(parts.join(", "))
}

fn demand_model() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let cases = 300;
    for _ in 0..cases {
        let f = rng.random_range(2..=60usize);
        let l = rng.random_range(2..=6usize);
        let alpha = rng.random_range(0.0..3.0);
        let q = rng.random_range(0.0..(f as f64));
        let lib = ContentLibrary::uniform(f, l, 1.0, alpha, q).unwrap();
        let s1: f64 = lib.request_probabilities().iter().sum();
        let s2 = lib.demand().sum();
        check(
            (s1 - 1.0).abs() <= 1e-12,
            format!("Σp(f) = {s1} (F={f}, α={alpha}, q={q})"),
        )?;
        check((s2 - 1.0).abs() <= 1e-12, format!("Σp(f,l) = {s2}"))?;
        check(lib.quality_preference(1, 1).unwrap() == 0.0, "p(1,1) != 0")?;
        for layer in 2..=l {
            check(
                lib.quality_preference(f, layer).unwrap() == 0.0,
                "p(F,l>=2) != 0",
            )?;
        }
        let zipf = ContentLibrary::uniform(f, l, 1.0, alpha, 0.0).unwrap();
        let norm: f64 = (1..=f).map(|n| (n as f64).powf(-alpha)).sum();
        for n in 1..=f {
            let expect = (n as f64).powf(-alpha) / norm;
            let got = zipf.request_probability(n).unwrap();
            check(
                (got - expect).abs() <= 1e-15 * expect.max(1.0),
                format!("q=0 not Zipf at f={n}"),
            )?;
        }
    }
    Ok(format!("{cases} randomized libraries"))
}

fn projection_operator() -> Outcome {
    let one = |p: f64, c: f64, m: f64| {
        project_budget(
            &LayerGrid::from_vec(1, 1, vec![p]).unwrap(),
            &LayerGrid::filled(1, 1, c),
            m,
            1e-12,
        )
        .unwrap()
        .as_slice()
        .to_vec()
    };
    let two = |p: [f64; 2], m: f64| {
        project_budget(
            &LayerGrid::from_vec(1, 2, p.to_vec()).unwrap(),
            &LayerGrid::filled(1, 2, 1.0),
            m,
            1e-12,
        )
        .unwrap()
        .as_slice()
        .to_vec()
    };
    let close = |a: &[f64], b: &[f64]| a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-12);
    check(close(&one(0.9, 10.0, 5.0), &[0.5]), "single-entry case")?;
    check(close(&two([1.4, 0.5], 1.5), &[1.0, 0.5]), "capping case")?;
    check(close(&two([0.8, 0.6], 1.0), &[0.6, 0.4]), "interior case")?;

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut binding, mut worst_res, mut worst_idem) = (0, 0.0f64, 0.0f64);
    for _ in 0..1000 {
        let f = rng.random_range(1..=12usize);
        let l = rng.random_range(1..=4usize);
        let p_hat: LayerGrid<f64> = LayerGrid::from_fn(f, l, |_, _| rng.random_range(-2.0..3.0));
        let sizes = LayerGrid::from_fn(f, l, |_, _| rng.random_range(0.1..50.0));
        let total: f64 = sizes.sum();
        let m: f64 = total * rng.random_range(0.01..1.2);
        let q = project_budget(&p_hat, &sizes, m, 1e-10).map_err(|e| e.to_string())?;
        check(
            q.as_slice().iter().all(|v| (0.0..=1.0).contains(v)),
            "box violated",
        )?;
        if m < total {
            binding += 1;
            let res = (q.dot(&sizes) - m).abs() / m;
            check(res <= 1e-6, format!("budget residual {res:e}"))?;
            worst_res = worst_res.max(res);
        } else {
            check(
                q.as_slice().iter().all(|v| *v == 1.0),
                "non-binding case not all ones",
            )?;
        }
        let qq = project_budget(&q, &sizes, m, 1e-10).unwrap();
        let idem = qq.max_abs_diff(&q);
        check(idem <= 1e-9, format!("idempotence {idem:e}"))?;
        worst_idem = worst_idem.max(idem);
    }
    Ok(format!(
        "1000 instances ({binding} binding), max residual {worst_res:.1e}·M, max idempotence gap {worst_idem:.1e}"
    ))
}

fn optimizer_vs_oracle() -> Outcome {
    let start = Instant::now();
    let net = NetworkGeometry::new(
        TierGeometry::bounded(0.01, 20.0, 4.0).unwrap(),
        TierGeometry::bounded(0.001, 60.0, 4.0).unwrap(),
        TierGeometry::unbounded(1e-5, 4.0).unwrap(),
    )
    .unwrap();
    let cfg = default_config();
    let radio: RadioConfig<f64> = cfg.radio().unwrap();
    let lib = ContentLibrary::uniform(2, 2, 25e6, 1.0, 5.0).unwrap();
    let half = lib.total_catalog_bits() / 2.0;
    let budgets = CacheBudgets::new(half, half).unwrap();
    let model = DelayModel::new(&lib, &net, &radio).unwrap();
    let oracle = grid_oracle_with_model(&model, &budgets, 0.02).map_err(|e| e.to_string())?;
    let opt = optimize_with_model(&model, &budgets, &OptimizerConfig::default())
        .map_err(|e| e.to_string())?;
    let ratio = opt.best_delay / oracle.delay;
    let secs = start.elapsed().as_secs_f64();
    check(
        ratio <= 1.01,
        format!(
            "optimized {} vs oracle {} (ratio {ratio})",
            opt.best_delay, oracle.delay
        ),
    )?;
    check(secs <= 300.0, format!("took {secs:.0} s"))?;
    Ok(format!(
        "optimized {:.6} s, oracle {:.6} s, ratio {ratio:.5}, {secs:.1} s",
        opt.best_delay, oracle.delay
    ))
}

fn baseline_ordering() -> Outcome {
    let cfg = default_config();
    let sweeps: [(SweepVar, &str, i8); 5] = [
        (SweepVar::ThetaDb, "theta_db=3:11:5", 1),
        (SweepVar::MD, "m_d=100e6:400e6:4", -1),
        (SweepVar::MS, "m_s=250e6:1000e6:4", -1),
        (SweepVar::Skewness, "skewness=0.4:2.0:5", 0),
        (SweepVar::BackhaulRate, "backhaul_rate=2e6:50e6:5", -1),
    ];
    let mut points = 0;
    for (var, spec, trend) in sweeps {
        let spec: svc_cache::SweepSpec = spec.parse().unwrap();
        let mut prev: Option<Comparison> = None;
        for v in spec.values() {
            let c = experiments::compare_policies(&cfg.with_value(var, v).unwrap())
                .map_err(|e| e.to_string())?;
            points += 1;
            check(
                c.optimized <= c.mpcp && c.mpcp <= c.epcp.max(c.icp),
                format!(
                    "{var}={v}: optimized {} mpcp {} epcp {} icp {}",
                    c.optimized, c.mpcp, c.epcp, c.icp
                ),
            )?;
            if let Some(p) = prev {
                match trend {
                    1 => check(
                        c.optimized > p.optimized,
                        format!("{var}={v}: delay not increasing"),
                    )?,
                    -1 => check(
                        c.optimized < p.optimized,
                        format!("{var}={v}: delay not decreasing"),
                    )?,
                    _ => {}
                }
            }
            prev = Some(c);
        }
    }
    Ok(format!(
        "{points} sweep points over theta, M_d, M_s, alpha_pop, R_bh"
    ))
}

fn convergence() -> Outcome {
    let cfg = default_config();
    let mut finals = Vec::new();
    let mut iters = Vec::new();
    for db in [3.0, 5.0, 7.0] {
        let c = cfg.with_value(SweepVar::ThetaDb, db).unwrap();
        let r = optimize_with_model(&model_of(&c), &c.budgets().unwrap(), &c.optimizer_config())
            .map_err(|e| e.to_string())?;
        if db == 5.0 {
            check(
                r.converged && r.iterations_run <= 100,
                format!(
                    "defaults: {} iterations, converged {}",
                    r.iterations_run, r.converged
                ),
            )?;
        }
        check(
            r.trajectory
                .windows(2)
                .all(|w| w[1].best_delay <= w[0].best_delay),
            format!("{db} dB: best-so-far increases"),
        )?;
        check(
            r.best_delay == r.trajectory.last().unwrap().best_delay,
            "best delay mismatch",
        )?;
        finals.push(r.best_delay);
        iters.push(r.iterations_run);
    }
    check(
        finals[0] < finals[1] && finals[1] < finals[2],
        format!("final delays {finals:?} not ordered by theta"),
    )?;
    Ok(format!(
        "final delays {:.4}/{:.4}/{:.4} s at 3/5/7 dB, iterations {iters:?}",
        finals[0], finals[1], finals[2]
    ))
}

fn structural_identities() -> Outcome {
    let cfg = default_config();
    let model = model_of(&cfg);
    let lib = cfg.library().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..200 {
        let (pd, ps) = (rng.random::<f64>(), rng.random::<f64>());
        let w = model.branch_weights(pd, ps);
        let s = w[0] + w[1] + w[2];
        check(
            (s - 1.0).abs() <= 1e-12,
            format!("branch weights sum to {s}"),
        )?;
    }
    for pd in [0.0, 1.0] {
        for ps in [0.0, 1.0] {
            let w = model.branch_weights(pd, ps);
            check(
                (w.iter().sum::<f64>() - 1.0).abs() <= 1e-12,
                "edge partition",
            )?;
        }
    }

    let radio = cfg.radio().unwrap();
    let se = (1.0 + radio.sir_threshold()).log2();
    let pm = stp_mbs(4.0, radio.sir_threshold()).unwrap();
    let per_bit = 1.0 / radio.backhaul_rate + pm / (radio.bandwidth_mbs * se);
    let closed: f64 = (1..=lib.file_count())
        .flat_map(|f| (1..=lib.layer_count()).map(move |l| (f, l)))
        .map(|(f, l)| {
            lib.quality_preference(f, l).unwrap() * lib.super_layer_size(f, l).unwrap() * per_bit
        })
        .sum();
    let zero = model
        .total(&CachingPolicy::zeros(lib.file_count(), lib.layer_count()))
        .unwrap();
    check(
        (zero - closed).abs() <= 1e-12 * closed,
        format!("all-miss {zero} vs closed form {closed}"),
    )?;

    let grid: Vec<f64> = (0..=10).map(|k| k as f64 / 10.0).collect();
    for i in 0..=10 {
        for j in 0..=10 {
            let h = model.hit_rate(grid[i], grid[j]);
            if i > 0 {
                check(
                    h >= model.hit_rate(grid[i - 1], grid[j]),
                    "hit rate decreases in p_d",
                )?;
            }
            if j > 0 {
                check(
                    h >= model.hit_rate(grid[i], grid[j - 1]),
                    "hit rate decreases in p_s",
                )?;
            }
        }
    }
    let budgets = cfg.budgets().unwrap();
    check(
        model.total(&mpcp(&lib, &budgets)).unwrap() < zero,
        "caching does not help",
    )?;
    Ok(format!(
        "partition of unity, all-miss {zero:.6} s, 11x11 hit-rate grid"
    ))
}

fn main() {
    let criteria: [Criterion; 9] = [
        (
            "analytic vs Monte-Carlo success probabilities",
            analytic_mc_agreement,
        ),
        ("special function G", special_function),
        (
            "MBS success probability and density invariance",
            mbs_probability,
        ),
        ("demand model", demand_model),
        ("budget projection", projection_operator),
        ("optimizer vs grid oracle", optimizer_vs_oracle),
        ("baseline ordering and trends", baseline_ordering),
        ("convergence", convergence),
        ("structural identities", structural_identities),
    ];
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = run();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {}: PASS  {name}: {detail} [{secs:.1} s]", k + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {}: FAIL  {name}: {why} [{secs:.1} s]", k + 1);
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
