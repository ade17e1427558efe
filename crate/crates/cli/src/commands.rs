//! One function per command. Each writes its result files through a
//! [`Sink`] and returns whether its pass criteria held.

use radwalk::bessel::{write_cdf_table, BesqLaw};
use radwalk::covariance::validate_field;
use radwalk::ensemble::run_indexed;
use radwalk::format::real;
use radwalk::stats::{
    lattice_start, marginal_fit, marginal_trend, moment_bound_check, non_increasing_with_one_inversion,
    occupation_fraction, phase_outcomes, trend_seed, MarginalFitConfig, PhaseConfig, PhaseVerdict,
    TREND_INVERSION_TOL,
};
use radwalk::walk::{compensator_ensemble, Walker};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{Command, ExperimentConfig, Section};
use crate::error::CliError;
use crate::manifest::EnsembleRecord;
use crate::output::Sink;

/// Standard errors allowed between the mean terminal martingale value and
/// its expectation.
pub const MARTINGALE_SE_TOL: f64 = 5.0;

pub struct Outcome {
    pub pass: bool,
    pub ensembles: Vec<EnsembleRecord>,
    /// Printed to stdout at the end of the run.
    pub summary: Value,
}

pub fn execute(cfg: &ExperimentConfig, command: Command, sink: &mut Sink) -> Result<Outcome, CliError> {
    if command != Command::Validate && cfg.run.n_traj == 0 {
        return Err(cfg.field_error(Section::Run, "N_traj", "must be positive"));
    }
    match command {
        Command::Validate => validate(cfg, sink),
        Command::Simulate => simulate(cfg, sink),
        Command::MarginalFit => fit(cfg, sink),
        Command::Compensators => compensators(cfg, sink),
        Command::Phase => phase(cfg, sink),
        Command::Moments => moments(cfg, sink),
        Command::NullOccupation => occupation(cfg, sink),
    }
}

fn main_ensemble(cfg: &ExperimentConfig) -> EnsembleRecord {
    EnsembleRecord::new("main", cfg.run.seed, cfg.run.n_traj)
}

fn validate(cfg: &ExperimentConfig, sink: &mut Sink) -> Result<Outcome, CliError> {
    let model = cfg.build_model()?;
    if cfg.run.n_dirs == 0 {
        return Err(cfg.field_error(Section::Run, "n_dirs", "must be positive"));
    }
    let report = validate_field(model.field(), cfg.run.n_dirs, cfg.run.tol);
    sink.json("validation.json", &report)?;
    Ok(Outcome {
        pass: report.pass,
        ensembles: Vec::new(),
        summary: serde_json::to_value(report).expect("report serializes"),
    })
}

#[derive(Serialize)]
struct Endpoint {
    index: usize,
    sub_seed: u64,
    steps: usize,
    squared_norm: f64,
    position: Vec<f64>,
}

fn simulate(cfg: &ExperimentConfig, sink: &mut Sink) -> Result<Outcome, CliError> {
    let model = cfg.build_model()?;
    let start = lattice_start(model.dim());
    let steps = cfg.run.n_steps;
    let ens = cfg.run.ensemble();
    let rows = run_indexed(ens.n_traj, ens.seed, ens.workers, |index, sub_seed| {
        let mut walker = Walker::new(&model, &start, sub_seed)?;
        for _ in 0..steps {
            walker.step()?;
        }
        Ok(Endpoint {
            index,
            sub_seed,
            steps,
            squared_norm: walker.squared_norm(),
            position: walker.position().to_vec(),
        })
    })?;
    sink.jsonl("endpoints.jsonl", &rows)?;
    sink.csv("endpoints.csv", |out| {
        let coords: Vec<String> = (1..=model.dim()).map(|i| format!("X_{i}")).collect();
        writeln!(out, "index,sub_seed,squared_norm,{}", coords.join(","))?;
        for r in &rows {
            let cells: Vec<String> = r.position.iter().map(|&x| real(x)).collect();
            writeln!(out, "{},{},{},{}", r.index, r.sub_seed, real(r.squared_norm), cells.join(","))?;
        }
        Ok(())
    })?;
    let mean = rows.iter().map(|r| r.squared_norm).sum::<f64>() / rows.len() as f64;
    Ok(Outcome {
        pass: true,
        ensembles: vec![main_ensemble(cfg)],
        summary: json!({ "N_traj": rows.len(), "N_steps": steps, "mean_squared_norm": mean }),
    })
}

#[derive(Serialize)]
struct SampleRow {
    index: usize,
    sub_seed: u64,
    y: f64,
}

#[derive(Serialize)]
struct TrendRow {
    n: usize,
    master_seed: u64,
    statistic: f64,
    threshold: f64,
    pass: bool,
}

fn fit(cfg: &ExperimentConfig, sink: &mut Sink) -> Result<Outcome, CliError> {
    let model = cfg.build_model()?;
    let run = &cfg.run;
    let fit_cfg = MarginalFitConfig {
        n: run.n,
        horizon: run.horizon,
        t_eval: run.t_eval,
        ensemble: run.ensemble(),
        alpha: run.alpha,
        slack: run.slack,
    };
    let result = marginal_fit(&model, &fit_cfg)?;
    let mut ensembles = vec![main_ensemble(cfg)];

    let rows: Vec<SampleRow> = ensembles[0]
        .sub_seeds
        .iter()
        .zip(&result.samples)
        .enumerate()
        .map(|(index, (&sub_seed, &y))| SampleRow { index, sub_seed, y })
        .collect();
    sink.jsonl("samples.jsonl", &rows)?;
    sink.csv("samples.csv", |out| {
        writeln!(out, "index,sub_seed,y")?;
        for r in &rows {
            writeln!(out, "{},{},{}", r.index, r.sub_seed, real(r.y))?;
        }
        Ok(())
    })?;
    let law = BesqLaw::from_zero(model.params().total())?;
    let top = result.samples.iter().fold(0.0f64, |a, &b| a.max(b));
    let ys: Vec<f64> = (0..=200).map(|k| top * k as f64 / 200.0).collect();
    sink.csv("cdf.csv", |out| write_cdf_table(&law, run.t_eval, &ys, out))?;

    let mut pass = result.report.pass;
    let mut trend_json = Value::Null;
    if let Some(ns) = &run.grid {
        let trend = marginal_trend(&model, ns, &fit_cfg)?;
        let trend_rows: Vec<TrendRow> = trend
            .iter()
            .map(|f| TrendRow {
                n: f.n,
                master_seed: trend_seed(run.seed, f.n),
                statistic: f.report.statistic,
                threshold: f.report.threshold,
                pass: f.report.pass,
            })
            .collect();
        for r in &trend_rows {
            ensembles.push(EnsembleRecord::new(format!("trend n={}", r.n), r.master_seed, run.n_traj));
        }
        sink.csv("trend.csv", |out| {
            writeln!(out, "n,master_seed,D,threshold,pass")?;
            for r in &trend_rows {
                writeln!(out, "{},{},{},{},{}", r.n, r.master_seed, real(r.statistic), real(r.threshold), r.pass)?;
            }
            Ok(())
        })?;
        let ds: Vec<f64> = trend_rows.iter().map(|r| r.statistic).collect();
        let trend_pass = non_increasing_with_one_inversion(&ds, TREND_INVERSION_TOL);
        pass &= trend_pass;
        trend_json = json!({ "rows": trend_rows, "inversion_tol": TREND_INVERSION_TOL, "pass": trend_pass });
    }
    let summary = json!({
        "n": result.n,
        "t_eval": result.t_eval,
        "report": result.report,
        "trend": trend_json,
        "pass": pass,
    });
    sink.json("marginal_fit.json", &summary)?;
    Ok(Outcome {
        pass,
        ensembles,
        summary,
    })
}

fn compensators(cfg: &ExperimentConfig, sink: &mut Sink) -> Result<Outcome, CliError> {
    let model = cfg.build_model()?;
    let run = &cfg.run;
    let start = lattice_start(model.dim());
    let rows = compensator_ensemble(&model, &start, run.n, run.horizon, &run.ensemble())?;
    sink.jsonl("compensators.jsonl", &rows)?;
    sink.csv("compensators.csv", |out| {
        writeln!(
            out,
            "index,sub_seed,sup_y_jump_sq,sup_b_jump_sq,sup_a_jump,b_residual,a_residual,y_terminal,m_terminal"
        )?;
        for r in &rows {
            let cells = [
                r.jumps.sup_y_jump_sq,
                r.jumps.sup_b_jump_sq,
                r.jumps.sup_a_jump,
                r.residuals.b_residual,
                r.residuals.a_residual,
                r.y_terminal,
                r.m_terminal,
            ]
            .map(real);
            writeln!(out, "{},{},{}", r.index, r.sub_seed, cells.join(","))?;
        }
        Ok(())
    })?;
    let count = rows.len() as f64;
    let mean = |f: &dyn Fn(&radwalk::walk::TrajectorySummary) -> f64| rows.iter().map(f).sum::<f64>() / count;
    let m_mean = mean(&|r| r.m_terminal);
    let m_se = if rows.len() > 1 {
        (rows.iter().map(|r| (r.m_terminal - m_mean).powi(2)).sum::<f64>() / (count - 1.0) / count).sqrt()
    } else {
        f64::NAN
    };
    // M_n(0) = ‖x‖²/n and M_n is a martingale.
    let expected = start.iter().map(|x| x * x).sum::<f64>() / run.n as f64;
    let pass = rows.len() < 2 || (m_mean - expected).abs() <= MARTINGALE_SE_TOL * m_se;
    let summary = json!({
        "n": run.n,
        "T": run.horizon,
        "N_traj": rows.len(),
        "mean_b_residual": mean(&|r| r.residuals.b_residual),
        "mean_a_residual": mean(&|r| r.residuals.a_residual),
        "mean_sup_y_jump_sq": mean(&|r| r.jumps.sup_y_jump_sq),
        "mean_sup_b_jump_sq": mean(&|r| r.jumps.sup_b_jump_sq),
        "mean_sup_a_jump": mean(&|r| r.jumps.sup_a_jump),
        "mean_m_terminal": m_mean,
        "se_m_terminal": m_se,
        "expected_m": expected,
        "pass": pass,
    });
    sink.json("compensators_summary.json", &summary)?;
    Ok(Outcome {
        pass,
        ensembles: vec![main_ensemble(cfg)],
        summary,
    })
}

#[derive(Serialize)]
struct PhaseRow {
    index: usize,
    sub_seed: u64,
    late_min_radius: f64,
    escaped: bool,
    returned: bool,
}

fn phase(cfg: &ExperimentConfig, sink: &mut Sink) -> Result<Outcome, CliError> {
    let m = &cfg.model;
    if m.perturb_c != 0.0 {
        return Err(cfg.field_error(
            Section::Model,
            "perturb_c",
            "phase classification runs the unperturbed model; set perturb_c = 0",
        ));
    }
    let phase_cfg = PhaseConfig {
        radial: m.radial,
        total: m.total,
        dim: m.d,
        noise: m.noise,
        n_steps: cfg.run.n_steps,
        radius: cfg.radius(Command::Phase),
        ensemble: cfg.run.ensemble(),
    };
    let outcomes = phase_outcomes(&phase_cfg)?;
    let record = main_ensemble(cfg);
    let rows: Vec<PhaseRow> = outcomes
        .iter()
        .zip(&record.sub_seeds)
        .enumerate()
        .map(|(index, (o, &sub_seed))| PhaseRow {
            index,
            sub_seed,
            late_min_radius: o.late_min_radius,
            escaped: o.escaped,
            returned: o.returned,
        })
        .collect();
    sink.jsonl("phase.jsonl", &rows)?;
    sink.csv("phase.csv", |out| {
        writeln!(out, "index,sub_seed,late_min_radius,escaped,returned")?;
        for r in &rows {
            writeln!(out, "{},{},{},{},{}", r.index, r.sub_seed, real(r.late_min_radius), r.escaped, r.returned)?;
        }
        Ok(())
    })?;
    let verdict = PhaseVerdict::from_outcomes(&phase_cfg, &outcomes);
    let pass = cfg.run.expect.is_none_or(|e| e == verdict.verdict);
    let summary = json!({
        "verdict": verdict,
        "radius": phase_cfg.radius,
        "N_steps": phase_cfg.n_steps,
        "expect": cfg.run.expect,
        "pass": pass,
    });
    sink.json("phase.json", &summary)?;
    Ok(Outcome {
        pass,
        ensembles: vec![record],
        summary,
    })
}

fn moments(cfg: &ExperimentConfig, sink: &mut Sink) -> Result<Outcome, CliError> {
    let model = cfg.build_model()?;
    let start = lattice_start(model.dim());
    let grid = cfg.grid(Command::Moments);
    let table = moment_bound_check(&model, &start, cfg.run.ell, &grid, &cfg.run.ensemble())?;
    sink.csv("moments.csv", |out| {
        writeln!(out, "m,mean_norm_pow,ratio")?;
        for r in &table.rows {
            writeln!(out, "{},{},{}", r.m, real(r.mean_norm_pow), real(r.ratio))?;
        }
        Ok(())
    })?;
    sink.json("moments.json", &table)?;
    Ok(Outcome {
        pass: table.pass,
        ensembles: vec![main_ensemble(cfg)],
        summary: serde_json::to_value(&table).expect("table serializes"),
    })
}

fn occupation(cfg: &ExperimentConfig, sink: &mut Sink) -> Result<Outcome, CliError> {
    let model = cfg.build_model()?;
    let start = lattice_start(model.dim());
    let grid = cfg.grid(Command::NullOccupation);
    let radius = cfg.radius(Command::NullOccupation);
    let table = occupation_fraction(&model, &start, radius, &grid, &cfg.run.ensemble())
        .map_err(|e| match e {
            radwalk::Error::InvalidParameter { name: "C", reason } => cfg.field_error(Section::Run, "radius", reason),
            radwalk::Error::InvalidParameter { name: "n_grid", reason } => cfg.field_error(Section::Run, "grid", reason),
            other => other.into(),
        })?;
    sink.csv("occupation.csv", |out| {
        writeln!(out, "n,fraction")?;
        for &(n, f) in &table.rows {
            writeln!(out, "{n},{}", real(f))?;
        }
        Ok(())
    })?;
    sink.json("occupation.json", &table)?;
    Ok(Outcome {
        pass: table.pass,
        ensembles: vec![main_ensemble(cfg)],
        summary: serde_json::to_value(&table).expect("table serializes"),
    })
}
