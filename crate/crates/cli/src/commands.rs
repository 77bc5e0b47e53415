use std::path::{Path, PathBuf};

use phasetrack::analytic::{self, GainSet};
use phasetrack::montecarlo::{self, EnsembleConfig, SweepAxis, SweepReport};
use phasetrack::solvers::{self, ScalarQuadratic};
use phasetrack::{ModelParams, Scheme};

use crate::config::{Command, RunConfig};
use crate::error::CliError;
use crate::output::{self, fmt_num, Cell, Table};

/// Default |z| above which an ensemble is treated as a regression.
const TRIPWIRE_Z: f64 = 5.0;

const COMPARE_GRID: &str = "0.2:10:50";
const ROBUST_GRID: &str = "-1:0.99:200";
const ROBUST_MUS: [f64; 3] = [0.5, 0.8, 0.9];

pub fn run(cfg: &RunConfig) -> Result<(), CliError> {
    match cfg.command {
        Command::Analytic => analytic_cmd(cfg),
        Command::Compare => compare_cmd(cfg),
        Command::Robust => robust_cmd(cfg),
        Command::Ensemble => ensemble_cmd(cfg),
    }
}

fn ensemble_config(cfg: &RunConfig, params: ModelParams, schemes: Vec<Scheme>) -> EnsembleConfig {
    EnsembleConfig {
        burn_in: cfg.burn_in,
        jobs: cfg.jobs,
        sign: cfg.sign,
        ..EnsembleConfig::new(params, schemes, cfg.trials)
    }
}

fn grid_or(cfg: &RunConfig, default: &str) -> Result<Vec<f64>, CliError> {
    match &cfg.grid {
        Some(g) => Ok(g.clone()),
        None => crate::config::parse_grid(default),
    }
}

fn grid_text(grid: &[f64]) -> String {
    grid.iter()
        .map(|v| fmt_num(*v))
        .collect::<Vec<_>>()
        .join(",")
}

fn root(q: ScalarQuadratic) -> Option<f64> {
    solvers::stabilizing_root(&q).ok()
}

/// Gain column: bandwidth, Kalman gain or combination weight of each scheme.
fn scheme_gain(scheme: Scheme, p: &ModelParams) -> Result<f64, CliError> {
    let g = analytic::scheme_gains(scheme, p)?.gains;
    Ok(match (scheme, g) {
        (Scheme::TwSmoother, GainSet::Lag { k1, .. }) => k1,
        (_, GainSet::Lag { chi, .. }) => chi,
        (Scheme::Kalman, GainSet::Optimal { k_f, .. }) => k_f,
        (Scheme::InfoBackward, GainSet::Optimal { k_b, .. }) => k_b,
        (Scheme::Rts, GainSet::Optimal { smoother_gain, .. }) => smoother_gain,
        (_, GainSet::Optimal { p_f, p_b, .. }) => analytic::combine_unbiased(p_f, p_b, 0.0)?.k1,
        (_, GainSet::Robust(r)) => r.forward_gain(p),
    })
}

fn riccati_root(scheme: Scheme, p: &ModelParams) -> Option<f64> {
    match scheme {
        Scheme::TwFilter | Scheme::TwBackward | Scheme::TwSmoother => None,
        Scheme::Kalman | Scheme::TwoFilter => root(analytic::kalman_riccati(p)),
        Scheme::InfoBackward => root(analytic::backward_riccati(p)),
        Scheme::Rts => {
            root(analytic::kalman_riccati(p)).map(|p_f| analytic::rts_riccati_solution(p, p_f))
        }
        Scheme::Robust => root(analytic::robust_forward_riccati(p)),
    }
}

fn analytic_cmd(cfg: &RunConfig) -> Result<(), CliError> {
    let p = &cfg.params;
    let mut t = Table::new([
        "scheme",
        "covariance",
        "gain",
        "riccati_root",
        "lambda0_limit",
    ]);
    let sql_limit = analytic::sql_ou(&ModelParams { lambda: 0.0, ..*p });
    let sql = analytic::sql_ou(p);
    t.push(vec![
        "sql".into(),
        sql.into(),
        (2.0 * p.alpha * p.alpha * sql).into(),
        root(analytic::sql_riccati(p)).into(),
        sql_limit.into(),
    ]);
    for &scheme in &cfg.schemes {
        t.push(vec![
            scheme.name().into(),
            analytic::scheme_covariance_with_sign(scheme, p, cfg.sign)?.into(),
            scheme_gain(scheme, p)?.into(),
            riccati_root(scheme, p).into(),
            analytic::lambda_zero_limit(scheme, p).into(),
        ]);
    }
    output::emit(cfg.out.as_deref(), &t.render(&cfg.header(&[]), cfg.format))
}

const COMPARE_SCHEMES: [(Scheme, &str); 4] = [
    (Scheme::TwFilter, "tw_filter"),
    (Scheme::TwSmoother, "tw_smoother"),
    (Scheme::Kalman, "kalman"),
    (Scheme::Rts, "rts"),
];

fn compare_cmd(cfg: &RunConfig) -> Result<(), CliError> {
    let grid = grid_or(cfg, COMPARE_GRID)?;
    let schemes = COMPARE_SCHEMES.iter().map(|(s, _)| *s).collect();
    let ens = ensemble_config(cfg, cfg.params, schemes);
    let empirical = cfg.trials > 0;
    let report = montecarlo::sweep(cfg.axis, &grid, &ens, empirical)?;
    let mut columns = vec![cfg.axis.name().to_string(), "sql".into()];
    columns.extend(COMPARE_SCHEMES.iter().map(|(_, c)| c.to_string()));
    columns.push("tw_filter_dual".into());
    if empirical {
        for (_, c) in COMPARE_SCHEMES {
            columns.push(format!("{c}_emp"));
            columns.push(format!("{c}_se"));
        }
    }
    columns.push("status".into());
    let mut t = Table::new(columns);
    for row in &report.rows {
        let p = &row.params;
        let ok = row.error().is_none();
        let mut cells: Vec<Cell> = vec![row.value.into(), ok.then(|| analytic::sql_ou(p)).into()];
        cells.extend(
            COMPARE_SCHEMES
                .iter()
                .map(|(s, _)| Cell::from(row.analytic(*s))),
        );
        cells.push(ok.then(|| analytic::tw_filter_cov(p, p.chi())).into());
        if empirical {
            for (s, _) in COMPARE_SCHEMES {
                let r = row.empirical(s);
                cells.push(r.map(|r| r.empirical).into());
                cells.push(r.map(|r| r.se).into());
            }
        }
        cells.push(row.error().unwrap_or("ok").into());
        t.push(cells);
    }
    let header = cfg.header(&[("axis", cfg.axis.name().into()), ("grid", grid_text(&grid))]);
    output::emit(cfg.out.as_deref(), &t.render(&header, cfg.format))?;
    fail_on_rows(&report)
}

fn fail_on_rows(report: &SweepReport) -> Result<(), CliError> {
    // Row-level problems are recorded in the file; only a sweep with no
    // usable rows counts as a failure.
    if report.rows.iter().all(|r| r.error().is_some()) {
        let first = report.rows[0].error().unwrap_or_default();
        return Err(CliError::Numerical(format!(
            "every grid point failed, first: {first}"
        )));
    }
    Ok(())
}

/// `robust.csv` → `robust_mu0.5.csv`.
fn suffixed(path: &Path, mu: f64) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let name = match path.extension() {
        Some(ext) => format!("{stem}_mu{}.{}", fmt_num(mu), ext.to_string_lossy()),
        None => format!("{stem}_mu{}", fmt_num(mu)),
    };
    path.with_file_name(name)
}

fn robust_cmd(cfg: &RunConfig) -> Result<(), CliError> {
    let grid = grid_or(cfg, ROBUST_GRID)?;
    let mus: Vec<f64> = if cfg.mu_given {
        vec![cfg.params.mu]
    } else {
        ROBUST_MUS.to_vec()
    };
    let empirical = cfg.trials > 0;
    for &mu in &mus {
        let params = ModelParams { mu, ..cfg.params };
        let ens = ensemble_config(cfg, params, vec![Scheme::Rts, Scheme::Robust]);
        let report = montecarlo::sweep(SweepAxis::Delta, &grid, &ens, empirical)?;
        let mut columns = vec!["delta", "rts_mse", "robust_mse"];
        if empirical {
            columns.extend(["rts_emp", "rts_se", "robust_emp", "robust_se"]);
        }
        columns.push("status");
        let mut t = Table::new(columns);
        for row in &report.rows {
            let mut cells = vec![
                Cell::from(row.value),
                row.analytic(Scheme::Rts).into(),
                row.analytic(Scheme::Robust).into(),
            ];
            if empirical {
                for s in [Scheme::Rts, Scheme::Robust] {
                    let r = row.empirical(s);
                    cells.push(r.map(|r| r.empirical).into());
                    cells.push(r.map(|r| r.se).into());
                }
            }
            cells.push(row.error().unwrap_or("ok").into());
            t.push(cells);
        }
        let run = RunConfig {
            params,
            ..cfg.clone()
        };
        let header = run.header(&[("axis", "delta".into()), ("grid", grid_text(&grid))]);
        let out = match (&cfg.out, mus.len()) {
            (Some(p), 1) => Some(p.clone()),
            (Some(p), _) => Some(suffixed(p, mu)),
            (None, _) => None,
        };
        output::emit(out.as_deref(), &t.render(&header, cfg.format))?;
        fail_on_rows(&report)?;
    }
    Ok(())
}

fn ensemble_cmd(cfg: &RunConfig) -> Result<(), CliError> {
    let ens = ensemble_config(cfg, cfg.params, cfg.schemes.clone());
    let report = montecarlo::run_ensemble(&ens)?;
    let mut t = Table::new(["scheme", "analytic", "empirical", "se", "z", "n_trials"]);
    for r in &report.rows {
        t.push(vec![
            r.scheme.name().into(),
            r.analytic.into(),
            r.empirical.into(),
            r.se.into(),
            r.z.into(),
            r.trials.into(),
        ]);
    }
    let names = cfg
        .schemes
        .iter()
        .map(|s| s.name())
        .collect::<Vec<_>>()
        .join(",");
    output::emit(
        cfg.out.as_deref(),
        &t.render(&cfg.header(&[("schemes", names)]), cfg.format),
    )?;
    let worst = report
        .rows
        .iter()
        .max_by(|a, b| a.z.abs().total_cmp(&b.z.abs()));
    match worst {
        Some(r) if r.z.is_nan() || r.z.abs() > TRIPWIRE_Z => Err(CliError::Tripwire(format!(
            "{}: |z| = {} exceeds {TRIPWIRE_Z}",
            r.scheme,
            fmt_num(r.z.abs())
        ))),
        _ => Ok(()),
    }
}
