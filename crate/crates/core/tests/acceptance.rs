//! Acceptance suite: one line per criterion, nonzero exit if any fails.
//!
//! Run with `cargo test -p radwalk --test acceptance`.

use std::time::Instant;

use rand::Rng;
use rand_distr::StandardNormal;
use radwalk::bessel::{brownian_squared_norm, BesqLaw};
use radwalk::covariance::{canonical_sigma, validate_field, CanonicalField, FieldParams, Noise, Perturbation, WalkModel};
use radwalk::ensemble::{stream, EnsembleConfig, DEFAULT_SEED};
use radwalk::stats::{
    classify_phase, ks_statistic, ks_two_sample, lattice_start, marginal_fit, marginal_trend, moment_bound_check,
    non_increasing_with_one_inversion, occupation_fraction, phase_outcomes, MarginalFitConfig, Phase, PhaseConfig,
    DEFAULT_ALPHA, DEFAULT_PHASE_RADIUS, KS_SLACK, TREND_INVERSION_TOL,
};
use radwalk::walk::{compensator_ensemble, compensators, simulate};
use statrs::distribution::{ContinuousCDF, Gamma};

struct Report {
    failures: Vec<String>,
}

impl Report {
    fn line(&mut self, id: &str, label: &str, pass: bool, detail: String, started: Instant) {
        let verdict = if pass { "PASS" } else { "FAIL" };
        println!(
            "criterion {id:<4} {verdict}  {label:<44} {detail} [{:.1}s]",
            started.elapsed().as_secs_f64()
        );
        if !pass {
            self.failures.push(format!("{id} {label}"));
        }
    }
}

fn random_direction<R: Rng>(dim: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let n = v.iter().map(|c| c * c).sum::<f64>().sqrt();
        if n > 1e-8 {
            return v.into_iter().map(|c| c / n).collect();
        }
    }
}

/// `(mean, standard error)` of a sample.
fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn construction(r: &mut Report) {
    let t = Instant::now();
    let mut rng = stream(DEFAULT_SEED);
    let mut worst_radial = 0.0f64;
    let mut worst_trace = 0.0f64;
    let mut min_eig = f64::INFINITY;
    for _ in 0..20 {
        let d = rng.random_range(2..=6);
        let total = rng.random_range(0.5..6.0);
        let radial = total * rng.random_range(0.05..=1.0);
        let params = FieldParams::new(d, radial, total).unwrap();
        for _ in 0..1000 {
            let u = random_direction(d, &mut rng);
            let s = canonical_sigma(&u, &params).unwrap();
            let mut quad = 0.0;
            for i in 0..d {
                for j in 0..d {
                    quad += u[i] * s[(i, j)] * u[j];
                }
            }
            worst_radial = worst_radial.max((quad - radial).abs());
            worst_trace = worst_trace.max((s.trace() - total).abs());
        }
        let report = validate_field(&CanonicalField::new(params), 1000, 1e-10);
        worst_radial = worst_radial.max(report.max_radial_dev);
        worst_trace = worst_trace.max(report.max_trace_dev);
        min_eig = min_eig.min(report.min_eig);
    }
    let pass = worst_radial <= 1e-10 && worst_trace <= 1e-10 && min_eig > 0.0;
    r.line(
        "1",
        "canonical field: radial U, trace V",
        pass,
        format!("max |uΣu-U| {worst_radial:.1e}, max |trΣ-V| {worst_trace:.1e}, min eig {min_eig:.3}"),
        t,
    );
}

fn moments(r: &mut Report) {
    const DRAWS: usize = 1_000_000;
    let t = Instant::now();
    let mut rng = stream(DEFAULT_SEED ^ 2);
    let mut worst_z = 0.0f64;
    let mut checked = 0;
    for noise in [Noise::Rademacher, Noise::Gaussian] {
        for _ in 0..10 {
            let d = rng.random_range(2..=5);
            let total = rng.random_range(1.0..5.0);
            let radial = total * rng.random_range(0.1..1.0);
            let c = rng.random_range(0.0..3.0);
            let model = WalkModel::canonical(d, radial, total, noise)
                .unwrap()
                .with_perturbation(Perturbation::new(c, Perturbation::DEFAULT_DELTA).unwrap());
            let radius = rng.random_range(0.0..20.0);
            let x: Vec<f64> = random_direction(d, &mut rng).iter().map(|u| u * radius).collect();
            let exact = model.exact_moments(&x);

            // Sample columns: Δ_i, Δ_iΔ_j (i ≤ j), ⟨x,Δ⟩², ⟨x,Δ⟩‖Δ‖², ‖Δ‖⁴.
            let pairs: Vec<(usize, usize)> = (0..d).flat_map(|i| (i..d).map(move |j| (i, j))).collect();
            let width = d + pairs.len() + 3;
            let mut cols = vec![Vec::with_capacity(DRAWS); width];
            let mut draw_rng = stream(rng.random());
            let mut delta = vec![0.0; d];
            for _ in 0..DRAWS {
                model.sample_increment_into(&x, &mut draw_rng, &mut delta);
                let radial_part: f64 = x.iter().zip(&delta).map(|(a, b)| a * b).sum();
                let sq: f64 = delta.iter().map(|v| v * v).sum();
                for i in 0..d {
                    cols[i].push(delta[i]);
                }
                for (k, &(i, j)) in pairs.iter().enumerate() {
                    cols[d + k].push(delta[i] * delta[j]);
                }
                cols[width - 3].push(radial_part * radial_part);
                cols[width - 2].push(radial_part * sq);
                cols[width - 1].push(sq * sq);
            }
            let mut expected: Vec<f64> = exact.mean.clone();
            expected.extend(pairs.iter().map(|&(i, j)| exact.cov[(i, j)]));
            expected.extend([exact.radial_second, exact.m3, exact.m4]);
            for (col, &e) in cols.iter().zip(&expected) {
                let (m, se) = mean_se(col);
                // Zero-variance columns (‖Δ‖⁴ under Rademacher noise) are
                // compared up to summation rounding.
                let scale = 5.0 * se + 1e-9 * (1.0 + e.abs());
                worst_z = worst_z.max((m - e).abs() / scale * 5.0);
                checked += 1;
            }
        }
    }
    r.line(
        "2",
        "exact moments vs 1e6 draws, both noises",
        worst_z <= 5.0,
        format!("{checked} scalars, worst |z| {worst_z:.2} (limit 5)"),
        t,
    );
}

fn compensator_exactness(r: &mut Report) {
    let t = Instant::now();
    let mut worst_b = 0.0f64;
    let mut worst_a = 0.0f64;
    for (d, total, seed) in [(2, 3.0, 1u64), (3, 2.0, 2), (5, 4.5, 3)] {
        let model = WalkModel::canonical(d, 1.0, total, Noise::Rademacher).unwrap();
        let n = 1000;
        let traj = simulate(&model, &lattice_start(d), n, seed).unwrap();
        let track = compensators(&traj, &model, n, 1.0).unwrap();
        for k in 0..=n {
            worst_b = worst_b.max((track.b()[k] - total * k as f64 / n as f64).abs());
            if k > 0 {
                let x = traj.position(k - 1);
                let expected = 4.0 * x.iter().map(|c| c * c).sum::<f64>() / (n * n) as f64;
                worst_a = worst_a.max((track.a()[k] - track.a()[k - 1] - expected).abs());
            }
        }
    }
    r.line(
        "3",
        "compensators exact (rademacher, U = 1)",
        worst_b <= 1e-12 && worst_a <= 1e-12,
        format!("max |B-V[nt]/n| {worst_b:.1e}, max A-jump error {worst_a:.1e}"),
        t,
    );
}

fn residual_decay(r: &mut Report) {
    for (label, noise, c) in [
        ("residual decay, perturbed rademacher", Noise::Rademacher, 1.0),
        ("residual decay, perturbed gaussian", Noise::Gaussian, 1.0),
        ("residual decay, unperturbed gaussian", Noise::Gaussian, 0.0),
    ] {
        let t = Instant::now();
        let model = WalkModel::canonical(2, 1.0, 3.0, noise)
            .unwrap()
            .with_perturbation(Perturbation::new(c, Perturbation::DEFAULT_DELTA).unwrap());
        let mut means = Vec::new();
        for n in [256, 4096] {
            let ens = EnsembleConfig {
                n_traj: 200,
                seed: DEFAULT_SEED,
                workers: 0,
            };
            let rows = compensator_ensemble(&model, &lattice_start(2), n, 1.0, &ens).unwrap();
            let b = rows.iter().map(|s| s.residuals.b_residual).sum::<f64>() / 200.0;
            let a = rows.iter().map(|s| s.residuals.a_residual).sum::<f64>() / 200.0;
            means.push((b, a));
        }
        let b_ratio = means[0].0 / means[1].0;
        let a_ratio = means[0].1 / means[1].1;
        r.line(
            "4",
            label,
            b_ratio >= 2.0 && a_ratio >= 2.0,
            format!(
                "B: {:.2e} -> {:.2e} (x{b_ratio:.1}), A: {:.2e} -> {:.2e} (x{a_ratio:.1})",
                means[0].0, means[1].0, means[0].1, means[1].1
            ),
            t,
        );
    }
}

fn fit_config(n: usize) -> MarginalFitConfig {
    MarginalFitConfig {
        n,
        horizon: 1.0,
        t_eval: 1.0,
        ensemble: EnsembleConfig {
            n_traj: 1000,
            seed: DEFAULT_SEED,
            workers: 0,
        },
        alpha: DEFAULT_ALPHA,
        slack: KS_SLACK,
    }
}

const FIT_MODELS: [(usize, f64); 3] = [(2, 3.0), (2, 2.0), (3, 3.0)];

fn marginal_fits(r: &mut Report) {
    for noise in [Noise::Rademacher, Noise::Gaussian] {
        for (d, total) in FIT_MODELS {
            let t = Instant::now();
            let model = WalkModel::canonical(d, 1.0, total, noise).unwrap();
            let fit = marginal_fit(&model, &fit_config(4096)).unwrap();
            let rep = fit.report;
            // The criterion's declared bound is 0.0615; the computed threshold
            // is c(0.01)/sqrt(1000) + 0.01.
            r.line(
                "5",
                &format!("marginal fit d={d} V={total} {noise}"),
                rep.statistic <= 0.0615 && rep.pass,
                format!("D {:.4} <= {:.4}", rep.statistic, rep.threshold),
                t,
            );
        }
    }
}

fn trends(r: &mut Report) {
    for noise in [Noise::Rademacher, Noise::Gaussian] {
        for (d, total) in FIT_MODELS {
            let t = Instant::now();
            let model = WalkModel::canonical(d, 1.0, total, noise).unwrap();
            let fits = marginal_trend(&model, &[64, 512, 4096], &fit_config(4096)).unwrap();
            let ds: Vec<f64> = fits.iter().map(|f| f.report.statistic).collect();
            r.line(
                "6",
                &format!("trend n=64,512,4096 d={d} V={total} {noise}"),
                non_increasing_with_one_inversion(&ds, TREND_INVERSION_TOL),
                format!("D = {:.4}, {:.4}, {:.4}", ds[0], ds[1], ds[2]),
                t,
            );
        }
    }
}

fn besq(r: &mut Report) {
    let mut rng = stream(DEFAULT_SEED ^ 7);
    for total in [1.5, 3.0] {
        let t = Instant::now();
        let law = BesqLaw::from_zero(total).unwrap();
        let oracle = Gamma::new(total / 2.0, 0.5).unwrap(); // rate 1/(2t), t = 1
        let sample: Vec<f64> = (0..10_000).map(|_| law.sample_at(1.0, &mut rng).unwrap()).collect();
        let d = ks_statistic(&sample, |y| oracle.cdf(y)).unwrap();
        r.line("7a", &format!("exact BESQ sampler vs Gamma, V={total}"), d <= 0.02, format!("D {d:.4} <= 0.02"), t);
    }
    for total in [1.5, 3.0] {
        let t = Instant::now();
        let law = BesqLaw::from_zero(total).unwrap();
        let chained: Vec<f64> = (0..100_000)
            .map(|_| law.sample_chained(10, 0.1, &mut rng).unwrap())
            .collect();
        let direct: Vec<f64> = (0..100_000).map(|_| law.sample_at(1.0, &mut rng).unwrap()).collect();
        let d = ks_two_sample(&chained, &direct).unwrap();
        r.line(
            "7b",
            &format!("Chapman-Kolmogorov 10 x 0.1 vs 1, V={total}"),
            d <= 0.01,
            format!("D {d:.4} <= 0.01"),
            t,
        );
    }
    for total in [2.0, 3.0] {
        let t = Instant::now();
        let law = BesqLaw::from_zero(total).unwrap();
        let euler: Vec<f64> = (0..10_000)
            .map(|_| law.euler_bessel(1000, 1e-3, &mut rng).unwrap().powi(2))
            .collect();
        let exact: Vec<f64> = (0..10_000).map(|_| law.sample_at(1.0, &mut rng).unwrap()).collect();
        let d = ks_two_sample(&euler, &exact).unwrap();
        r.line("7c", &format!("Euler (dt=1e-3) vs exact, V={total}"), d <= 0.03, format!("D {d:.4} <= 0.03"), t);
    }
    for dim in [2usize, 3] {
        let t = Instant::now();
        let law = BesqLaw::from_zero(dim as f64).unwrap();
        let sample: Vec<f64> = (0..10_000).map(|_| brownian_squared_norm(dim, 1.0, &mut rng)).collect();
        let d = ks_statistic(&sample, |y| law.marginal_cdf(1.0, y).unwrap()).unwrap();
        r.line("7d", &format!("|B_t|^2 in R^{dim} vs BESQ CDF"), d <= 0.02, format!("D {d:.4} <= 0.02"), t);
    }
}

fn phases(r: &mut Report) {
    let seeds = [DEFAULT_SEED, DEFAULT_SEED + 1, DEFAULT_SEED + 2];
    let cases: [(f64, f64, usize, &str); 4] = [
        (1.0, 4.0, 2, "transient-consistent"),
        (1.0, 3.0, 3, "transient-consistent"),
        (1.0, 1.5, 2, "recurrent-consistent"),
        (1.0, 2.0, 2, "never transient-consistent"),
    ];
    for (radial, total, dim, want) in cases {
        let t = Instant::now();
        let mut verdicts = Vec::new();
        let mut detail = Vec::new();
        for seed in seeds {
            let cfg = PhaseConfig {
                radial,
                total,
                dim,
                noise: Noise::Rademacher,
                n_steps: 100_000,
                radius: DEFAULT_PHASE_RADIUS,
                ensemble: EnsembleConfig {
                    n_traj: 200,
                    seed,
                    workers: 0,
                },
            };
            let v = classify_phase(&cfg).unwrap();
            detail.push(format!("esc {:.3}/ret {:.3}", v.escape_fraction, v.return_fraction));
            verdicts.push(v.verdict);
        }
        let pass = match want {
            "transient-consistent" => verdicts.iter().all(|&v| v == Phase::TransientConsistent),
            "recurrent-consistent" => verdicts.iter().all(|&v| v == Phase::RecurrentConsistent),
            _ => verdicts.iter().all(|&v| v != Phase::TransientConsistent),
        };
        r.line(
            "8",
            &format!("phase (U,V,d)=({radial},{total},{dim}) {want}"),
            pass,
            format!("3 seeds: {}", detail.join(", ")),
            t,
        );
    }
}

fn moment_and_occupation(r: &mut Report) {
    let t = Instant::now();
    let model = WalkModel::canonical(2, 1.0, 3.0, Noise::Rademacher).unwrap();
    let grid: Vec<usize> = (4..=14).map(|p| 1usize << p).collect();
    let ens = EnsembleConfig {
        n_traj: 400,
        seed: DEFAULT_SEED,
        workers: 0,
    };
    let table = moment_bound_check(&model, &lattice_start(2), 4, &grid, &ens).unwrap();
    let top = table.rows.iter().map(|row| row.ratio).fold(0.0f64, f64::max);
    r.line(
        "9a",
        "moment ratio l=4 bounded, m=16..16384",
        table.pass,
        format!(
            "max ratio {top:.3}; top decade {:.3} vs middle {:.3}",
            table.top_decade_max, table.middle_decade_max
        ),
        t,
    );

    let t = Instant::now();
    let model = WalkModel::canonical(2, 1.0, 2.0, Noise::Rademacher).unwrap();
    let table = occupation_fraction(&model, &lattice_start(2), 10.0, &[256, 512, 1024, 2048, 4096], &ens).unwrap();
    let first = table.rows.first().unwrap().1;
    let last = table.rows.last().unwrap().1;
    r.line(
        "9b",
        "null occupation C=10, d=2 V=2",
        table.pass,
        format!("f_256 {first:.4} -> f_4096 {last:.4} (x{:.2}, need 1.5)", first / last),
        t,
    );
}

fn determinism(r: &mut Report) {
    let t = Instant::now();
    let model = WalkModel::canonical(2, 1.0, 3.0, Noise::Gaussian)
        .unwrap()
        .with_perturbation(Perturbation::new(0.5, 1.0).unwrap());
    let mut bodies: Vec<Vec<String>> = Vec::new();
    for workers in [1, 3] {
        let mut cfg = fit_config(1024);
        cfg.ensemble.workers = workers;
        let fit = marginal_fit(&model, &cfg).unwrap();
        let ens = EnsembleConfig {
            n_traj: 100,
            seed: 9,
            workers,
        };
        let comp = compensator_ensemble(&model, &lattice_start(2), 512, 1.0, &ens).unwrap();
        let phase_cfg = PhaseConfig {
            radial: 1.0,
            total: 3.0,
            dim: 2,
            noise: Noise::Rademacher,
            n_steps: 5_000,
            radius: DEFAULT_PHASE_RADIUS,
            ensemble: ens,
        };
        let phase = phase_outcomes(&phase_cfg).unwrap();
        bodies.push(vec![
            serde_json::to_string(&fit).unwrap(),
            serde_json::to_string(&comp).unwrap(),
            serde_json::to_string(&phase).unwrap(),
        ]);
    }
    r.line(
        "10",
        "byte-identical results, workers 1 vs 3",
        bodies[0] == bodies[1],
        format!("{} result bodies compared", bodies[0].len()),
        t,
    );
}

fn main() {
    let started = Instant::now();
    let mut report = Report { failures: Vec::new() };
    construction(&mut report);
    moments(&mut report);
    compensator_exactness(&mut report);
    residual_decay(&mut report);
    marginal_fits(&mut report);
    trends(&mut report);
    besq(&mut report);
    phases(&mut report);
    moment_and_occupation(&mut report);
    determinism(&mut report);
    println!("acceptance finished in {:.1}s", started.elapsed().as_secs_f64());
    if report.failures.is_empty() {
        println!("all criteria passed");
    } else {
        println!("{} failing: {}", report.failures.len(), report.failures.join("; "));
        std::process::exit(1);
    }
}
