//! Experiment bookkeeping: per-run and ensemble error reports, profile dumps
//! for plotting, summary tables, and the training-log CSV. All tables print
//! floats with 17 significant digits so a re-parse is lossless.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Duration;

use crate::net::NetworkParams;
use crate::oracle::{
    exact_solution, fv_snapshots, relative_errors, sine_solution, ExperimentPreset, PresetId,
    ReferenceKind,
};
use crate::train::{average_predict, DivergedRun, EnsembleResult, EpochRecord};
use crate::{Error, Result};

/// 17 significant digits: enough that parsing the text recovers the exact
/// bits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn parse_f64(s: &str) -> Result<f64> {
    s.trim().parse::<f64>().map_err(|e| Error::Parse(format!("bad float '{s}': {e}")))
}

fn parse_usize(s: &str) -> Result<usize> {
    s.trim().parse::<usize>().map_err(|e| Error::Parse(format!("bad integer '{s}': {e}")))
}

/// Two-pass sample standard deviation (n - 1 denominator; 0 for fewer than
/// two values).
pub fn sample_stddev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// One completed run's numbers.
#[derive(Clone, Copy, Debug)]
pub struct RunRow {
    pub param_seed: u64,
    pub criterion: f64,
    pub e_r_t: f64,
    pub e_r: f64,
}

/// Errors and bookkeeping of one ensemble on one preset.
#[derive(Clone, Debug)]
pub struct RunReport {
    pub preset: PresetId,
    pub config_summary: String,
    pub runs: Vec<RunRow>,
    pub diverged: Vec<DivergedRun>,
    /// Relative errors of the retraining-average predictor (the headline
    /// quantities), computed over non-diverged runs only.
    pub mean_e_r_t: f64,
    pub mean_e_r: f64,
    /// Spread of the per-run errors.
    pub stddev_e_r_t: f64,
    pub stddev_e_r: f64,
    /// Collocation budget (interior, temporal, spatial).
    pub samples: (usize, usize, usize),
    pub wall: Duration,
}

impl RunReport {
    /// Score a finished ensemble against a reference oracle.
    pub fn from_ensemble(
        ensemble: &EnsembleResult,
        preset: &ExperimentPreset,
        reference: ReferenceKind,
        quad_n: usize,
        wall: Duration,
    ) -> Result<Self> {
        let mut runs = Vec::with_capacity(ensemble.runs.len());
        for run in &ensemble.runs {
            let f = |x: f64, t: f64| run.predict(x, t);
            let (e_r_t, e_r) = relative_errors(&f, preset, reference, quad_n)?;
            runs.push(RunRow { param_seed: run.param_seed, criterion: run.final_training_error, e_r_t, e_r });
        }
        let avg = |x: f64, t: f64| average_predict(&ensemble.runs, x, t).map(|p| p.0).unwrap_or(f64::NAN);
        let (mean_e_r_t, mean_e_r) = relative_errors(&avg, preset, reference, quad_n)?;
        let per_t: Vec<f64> = runs.iter().map(|r| r.e_r_t).collect();
        let per_s: Vec<f64> = runs.iter().map(|r| r.e_r).collect();
        let counts = ensemble.config.counts;
        Ok(RunReport {
            preset: preset.id(),
            config_summary: config_summary(&ensemble.config),
            runs,
            diverged: ensemble.diverged.clone(),
            mean_e_r_t,
            mean_e_r,
            stddev_e_r_t: sample_stddev(&per_t),
            stddev_e_r: sample_stddev(&per_s),
            samples: (counts.interior, counts.temporal, counts.spatial),
            wall,
        })
    }
}

/// One-line human-readable digest of a training configuration.
pub fn config_summary(cfg: &crate::train::TrainingConfig) -> String {
    let widths = |w: &[usize]| w.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("-");
    format!(
        "theta={}/{} eta={}/{} epochs={} n_max={} n_min={} lambda={} lr={}/{} opt={} r_f={} c={} sampler={} form={} seeds={}/{}",
        widths(&cfg.widths_theta),
        cfg.activation_theta.name(),
        widths(&cfg.widths_eta),
        cfg.activation_eta.name(),
        cfg.epochs,
        cfg.n_max,
        cfg.n_min,
        cfg.lambda,
        cfg.lr_theta,
        cfg.lr_eta,
        cfg.optimizer.name(),
        cfg.reset_ratio,
        cfg.c_count,
        cfg.sampler.name(),
        cfg.residual_form.name(),
        cfg.param_seed,
        cfg.collocation_seed,
    )
}

/// Per-run table: `param_seed,criterion,e_r_t,e_r,diverged`. Diverged runs
/// carry NaN metric columns and flag 1.
pub fn report_csv(report: &RunReport) -> String {
    let mut out = String::from("param_seed,criterion,e_r_t,e_r,diverged\n");
    for r in &report.runs {
        out.push_str(&format!(
            "{},{},{},{},0\n",
            r.param_seed,
            fmt_f64(r.criterion),
            fmt_f64(r.e_r_t),
            fmt_f64(r.e_r)
        ));
    }
    for d in &report.diverged {
        out.push_str(&format!("{},NaN,NaN,NaN,1\n", d.param_seed));
    }
    out
}

/// Parse the body written by `report_csv`; diverged rows come back in the
/// second vector as (seed, flag only).
pub fn parse_report_csv(text: &str) -> Result<(Vec<RunRow>, Vec<u64>)> {
    let mut lines = text.lines();
    match lines.next() {
        Some("param_seed,criterion,e_r_t,e_r,diverged") => {}
        other => return Err(Error::Parse(format!("bad report header: {other:?}"))),
    }
    let mut rows = Vec::new();
    let mut diverged = Vec::new();
    for line in lines {
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 5 {
            return Err(Error::Parse(format!("bad report row '{line}'")));
        }
        let seed = cols[0]
            .parse::<u64>()
            .map_err(|e| Error::Parse(format!("bad seed '{}': {e}", cols[0])))?;
        match cols[4] {
            "0" => rows.push(RunRow {
                param_seed: seed,
                criterion: parse_f64(cols[1])?,
                e_r_t: parse_f64(cols[2])?,
                e_r: parse_f64(cols[3])?,
            }),
            "1" => diverged.push(seed),
            other => return Err(Error::Parse(format!("bad diverged flag '{other}'"))),
        }
    }
    Ok((rows, diverged))
}

/// One profile sample: the ensemble band and the reference at (x, t).
#[derive(Clone, Copy, Debug)]
pub struct ProfileRow {
    pub t: f64,
    pub x: f64,
    pub mean: f64,
    pub stddev: f64,
    pub exact_reference: f64,
}

fn reference_value(preset: &ExperimentPreset, x: f64, t: f64) -> Result<f64> {
    if preset.has_closed_form() {
        exact_solution(preset, x, t)
    } else {
        sine_solution(x, t, 1e-12)
    }
}

/// Ensemble mean/stddev plus the reference on a uniform x-grid at each
/// requested time. Row count is exactly `times.len() * n_x`.
pub fn profile_dump(
    nets: &[NetworkParams],
    preset: &ExperimentPreset,
    reference: ReferenceKind,
    times: &[f64],
    n_x: usize,
) -> Result<Vec<ProfileRow>> {
    if nets.is_empty() {
        return Err(Error::Contract("empty ensemble".into()));
    }
    if n_x < 2 {
        return Err(Error::Config(format!("need at least two profile nodes, got {n_x}")));
    }
    let (a, b) = preset.domain();
    let t_final = preset.t_final();
    if times.is_empty() || times.iter().any(|&t| !(0.0..=t_final).contains(&t)) {
        return Err(Error::Config(format!(
            "profile times must be a nonempty subset of [0, {t_final}]"
        )));
    }
    let grids = match reference {
        ReferenceKind::Exact => None,
        ReferenceKind::FiniteVolume { n_cells, cfl } => {
            let mut sorted = times.to_vec();
            sorted.sort_by(|p, q| p.partial_cmp(q).unwrap());
            // snapshots for the sorted times, fetched back by value
            Some((sorted.clone(), fv_snapshots(preset, n_cells, cfl, &sorted)?))
        }
    };
    let mut rows = Vec::with_capacity(times.len() * n_x);
    for &t in times {
        let grid = grids.as_ref().map(|(sorted, gs)| {
            let i = sorted.iter().position(|&s| s == t).expect("time in its own sort");
            &gs[i]
        });
        for i in 0..n_x {
            let x = a + (b - a) * i as f64 / (n_x - 1) as f64;
            let vals: Vec<f64> =
                nets.iter().map(|n| n.forward_value(crate::Point::new(x, t))).collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let stddev = sample_stddev(&vals);
            let exact_reference = match grid {
                Some(g) => g.eval(x),
                None => reference_value(preset, x, t)?,
            };
            rows.push(ProfileRow { t, x, mean, stddev, exact_reference });
        }
    }
    Ok(rows)
}

pub fn profile_csv(rows: &[ProfileRow]) -> String {
    let mut out = String::from("t,x,mean,stddev,exact_reference\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            fmt_f64(r.t),
            fmt_f64(r.x),
            fmt_f64(r.mean),
            fmt_f64(r.stddev),
            fmt_f64(r.exact_reference)
        ));
    }
    out
}

pub fn parse_profile_csv(text: &str) -> Result<Vec<ProfileRow>> {
    let mut lines = text.lines();
    match lines.next() {
        Some("t,x,mean,stddev,exact_reference") => {}
        other => return Err(Error::Parse(format!("bad profile header: {other:?}"))),
    }
    let mut rows = Vec::new();
    for line in lines {
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 5 {
            return Err(Error::Parse(format!("bad profile row '{line}'")));
        }
        rows.push(ProfileRow {
            t: parse_f64(cols[0])?,
            x: parse_f64(cols[1])?,
            mean: parse_f64(cols[2])?,
            stddev: parse_f64(cols[3])?,
            exact_reference: parse_f64(cols[4])?,
        });
    }
    Ok(rows)
}

/// One summary line per report, shaped like the error table: collocation
/// budget plus the ensemble-average errors.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SummaryRow {
    pub preset: PresetId,
    pub m_int: usize,
    pub m_tb: usize,
    pub m_sb: usize,
    pub e_r: f64,
    pub e_r_t: f64,
}

pub fn summarize(reports: &[RunReport]) -> Result<Vec<SummaryRow>> {
    if reports.is_empty() {
        return Err(Error::Contract("nothing to summarize".into()));
    }
    Ok(reports
        .iter()
        .map(|r| SummaryRow {
            preset: r.preset,
            m_int: r.samples.0,
            m_tb: r.samples.1,
            m_sb: r.samples.2,
            e_r: r.mean_e_r,
            e_r_t: r.mean_e_r_t,
        })
        .collect())
}

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut out = String::from("preset,m_int,m_tb,m_sb,e_r,e_r_t\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.preset.name(),
            r.m_int,
            r.m_tb,
            r.m_sb,
            fmt_f64(r.e_r),
            fmt_f64(r.e_r_t)
        ));
    }
    out
}

pub fn parse_summary_csv(text: &str) -> Result<Vec<SummaryRow>> {
    let mut lines = text.lines();
    match lines.next() {
        Some("preset,m_int,m_tb,m_sb,e_r,e_r_t") => {}
        other => return Err(Error::Parse(format!("bad summary header: {other:?}"))),
    }
    let mut rows = Vec::new();
    for line in lines {
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 6 {
            return Err(Error::Parse(format!("bad summary row '{line}'")));
        }
        rows.push(SummaryRow {
            preset: PresetId::parse(cols[0])?,
            m_int: parse_usize(cols[1])?,
            m_tb: parse_usize(cols[2])?,
            m_sb: parse_usize(cols[3])?,
            e_r: parse_f64(cols[4])?,
            e_r_t: parse_f64(cols[5])?,
        });
    }
    Ok(rows)
}

/// Fixed-width rendering of the summary for terminals.
pub fn summary_text(rows: &[SummaryRow]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<14} {:>8} {:>6} {:>6} {:>12} {:>12}\n",
        "preset", "m_int", "m_tb", "m_sb", "e_r", "e_r_t"
    ));
    for r in rows {
        out.push_str(&format!(
            "{:<14} {:>8} {:>6} {:>6} {:>12.4e} {:>12.4e}\n",
            r.preset.name(),
            r.m_int,
            r.m_tb,
            r.m_sb,
            r.e_r,
            r.e_r_t
        ));
    }
    out
}

/// `epoch,j_pde,j_u,c_star,eta_reset` per training epoch.
pub fn training_log_csv(history: &[EpochRecord]) -> String {
    let mut out = String::from("epoch,j_pde,j_u,c_star,eta_reset\n");
    for r in history {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.epoch,
            fmt_f64(r.j_pde),
            fmt_f64(r.j_u),
            fmt_f64(r.c_star),
            u8::from(r.eta_reset)
        ));
    }
    out
}

pub fn parse_training_log_csv(text: &str) -> Result<Vec<EpochRecord>> {
    let mut lines = text.lines();
    match lines.next() {
        Some("epoch,j_pde,j_u,c_star,eta_reset") => {}
        other => return Err(Error::Parse(format!("bad training log header: {other:?}"))),
    }
    let mut rows = Vec::new();
    for line in lines {
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 5 {
            return Err(Error::Parse(format!("bad training log row '{line}'")));
        }
        rows.push(EpochRecord {
            epoch: parse_usize(cols[0])?,
            j_pde: parse_f64(cols[1])?,
            j_u: parse_f64(cols[2])?,
            c_star: parse_f64(cols[3])?,
            eta_reset: match cols[4] {
                "0" => false,
                "1" => true,
                other => return Err(Error::Parse(format!("bad reset flag '{other}'"))),
            },
        });
    }
    Ok(rows)
}

/// Write a string table to disk.
pub fn write_table(path: &Path, content: &str) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(content.as_bytes())?;
    w.flush()?;
    Ok(())
}
