//! Command-line front end: single runs, ensembles and hyperparameter grids,
//! finite-volume references, lemma sweeps, and profile dumps. Every run
//! leaves a manifest sufficient to reproduce it bit-exactly.

mod config;
mod lemmas;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use config::{parse_times, Resolved};
use wpinn::net::NetworkParams;
use wpinn::oracle::{fv_solve, ExperimentPreset, PresetId, ReferenceKind};
use wpinn::report::{
    fmt_f64, profile_csv, profile_dump, report_csv, summarize, summary_csv, summary_text,
    training_log_csv, write_table, RunReport,
};
use wpinn::sample::write_collocation_csv;
use wpinn::train::{run_grid, table1_grid, table2_grid, Trainer, TrainingConfig};
use wpinn::{Error, Result};

#[derive(Parser)]
#[command(name = "wpinn", version, about = "Weak adversarial networks for scalar conservation laws")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a single model and write its checkpoints.
    Train(TrainArgs),
    /// Retrain a config (or a whole grid) from many seeds and report errors.
    Ensemble(EnsembleArgs),
    /// Solve the preset with the Godunov reference scheme and dump profiles.
    FvReference(FvArgs),
    /// Run the numerical lemma sweeps and print PASS/FAIL lines.
    CheckLemmas(LemmaArgs),
    /// Evaluate stored checkpoints on a profile grid.
    DumpProfile(ProfileArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Experiment preset: standing_shock | moving_shock | rarefaction | sine.
    #[arg(long)]
    preset: String,
    /// Config file (flat key = value with [sections]).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Ad-hoc override, repeatable: --set section.key=value.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output root; a fresh timestamped run directory is created inside.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Exact run directory (overrides --out; no timestamp added).
    #[arg(long)]
    run_dir: Option<PathBuf>,
    /// Shorthand for --set training.epochs=N.
    #[arg(long)]
    epochs: Option<usize>,
    /// Shorthand for --set training.param_seed=N.
    #[arg(long)]
    seed: Option<u64>,
    /// Shorthand for --set run.threads=N.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct EnsembleArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Hyperparameter grid: none (single config) | table1 | table2.
    #[arg(long, default_value = "none")]
    grid: String,
    /// Shorthand for --set run.n_theta=N.
    #[arg(long = "n-theta")]
    n_theta: Option<usize>,
}

#[derive(Args)]
struct FvArgs {
    #[arg(long)]
    preset: String,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    run_dir: Option<PathBuf>,
    /// Cell count (at least 16).
    #[arg(long)]
    cells: usize,
    /// Final time to march to.
    #[arg(long = "t-end")]
    t_end: f64,
    #[arg(long, default_value_t = 0.5)]
    cfl: f64,
}

#[derive(Args)]
struct LemmaArgs {
    /// Seed for the randomized sweeps.
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

#[derive(Args)]
struct ProfileArgs {
    #[arg(long)]
    preset: String,
    /// Directory holding theta*.wnet checkpoints (a train or ensemble run).
    #[arg(long)]
    run: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    run_dir: Option<PathBuf>,
    /// Comma-separated times; default 0, T/2, T.
    #[arg(long)]
    times: Option<String>,
    #[arg(long, default_value_t = 201)]
    nx: usize,
    /// Reference column source: exact | fv.
    #[arg(long)]
    reference: Option<String>,
    /// FV reference resolution.
    #[arg(long, default_value_t = 16384)]
    cells: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Ensemble(a) => cmd_ensemble(a),
        Command::FvReference(a) => cmd_fv(a),
        Command::CheckLemmas(a) => cmd_lemmas(a),
        Command::DumpProfile(a) => cmd_profile(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) | Error::Parse(_) => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}

/// Apply file, --set pairs, and shorthand flags in override order.
fn resolve(common: &CommonArgs) -> Result<Resolved> {
    let mut r = Resolved::defaults(&common.preset)?;
    if let Some(path) = &common.config {
        r.apply_file(path)?;
    }
    r.apply_overrides(&common.set)?;
    if let Some(e) = common.epochs {
        r.training.epochs = e;
    }
    if let Some(s) = common.seed {
        r.training.param_seed = s;
    }
    if let Some(t) = common.threads {
        r.run.threads = t;
    }
    r.validate()?;
    Ok(r)
}

/// The run directory: --run-dir verbatim, else a fresh timestamped child of
/// --out, $WPINN_OUT, or ./runs.
fn resolve_run_dir(
    command: &str,
    preset: &str,
    out: Option<&PathBuf>,
    run_dir: Option<&PathBuf>,
) -> Result<PathBuf> {
    if let Some(dir) = run_dir {
        std::fs::create_dir_all(dir)?;
        return Ok(dir.clone());
    }
    let root = out
        .cloned()
        .or_else(|| std::env::var_os("WPINN_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("runs"));
    let stamp = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let mut k = 0u32;
    loop {
        let name = if k == 0 {
            format!("{command}-{preset}-{stamp}")
        } else {
            format!("{command}-{preset}-{stamp}-{k}")
        };
        let dir = root.join(name);
        // create_dir is the existence check: first writer wins
        match std::fs::create_dir_all(&root).and_then(|()| std::fs::create_dir(&dir)) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => k += 1,
            Err(e) => return Err(e.into()),
        }
    }
}

fn git_describe() -> String {
    std::process::Command::new("git")
        .args(["describe", "--always", "--dirty"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .unwrap_or_else(|| "unknown".to_string())
}

fn default_reference(resolved: &Resolved) -> ReferenceKind {
    if resolved.preset.has_closed_form() {
        ReferenceKind::Exact
    } else {
        ReferenceKind::FiniteVolume { n_cells: resolved.run.reference_cells, cfl: resolved.run.cfl }
    }
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let resolved = resolve(&args.common)?;
    let dir = resolve_run_dir(
        "train",
        resolved.preset.id().name(),
        args.common.out.as_ref(),
        args.common.run_dir.as_ref(),
    )?;
    write_table(&dir.join("manifest.txt"), &resolved.manifest("train", &git_describe()))?;
    let mut trainer = Trainer::new(&resolved.training, &resolved.preset)?;
    write_collocation_csv(trainer.sets(), &dir.join("collocation.csv"))?;
    let model = trainer.train()?;
    model.theta.save(&dir.join("theta.wnet"))?;
    model.eta.save(&dir.join("eta.wnet"))?;
    write_table(&dir.join("training_log.csv"), &training_log_csv(&model.history))?;
    println!(
        "trained {} for {} epochs: criterion = {}, c* = {}, floored evals = {}",
        resolved.preset.id().name(),
        resolved.training.epochs,
        fmt_f64(model.final_training_error),
        model.c_star,
        model.floored_evals,
    );
    println!("outputs in {}", dir.display());
    Ok(())
}

fn grid_for(resolved: &Resolved, grid: &str) -> Result<Vec<TrainingConfig>> {
    match grid {
        "none" => Ok(vec![resolved.training.clone()]),
        "table1" => Ok(table1_grid(&resolved.training)),
        "table2" => Ok(table2_grid(&resolved.training)),
        other => Err(Error::Config(format!("unknown grid '{other}' (none | table1 | table2)"))),
    }
}

fn cmd_ensemble(args: EnsembleArgs) -> Result<()> {
    let mut resolved = resolve(&args.common)?;
    if let Some(n) = args.n_theta {
        resolved.run.n_theta = n;
        resolved.validate()?;
    }
    let configs = grid_for(&resolved, &args.grid)?;
    let dir = resolve_run_dir(
        "ensemble",
        resolved.preset.id().name(),
        args.common.out.as_ref(),
        args.common.run_dir.as_ref(),
    )?;
    write_table(&dir.join("manifest.txt"), &resolved.manifest("ensemble", &git_describe()))?;
    let threads = resolved.effective_threads();
    let started = Instant::now();
    let outcome = run_grid(&configs, &resolved.preset, resolved.run.n_theta, threads)?;
    let wall = started.elapsed();

    // per-config bookkeeping for grids
    if configs.len() > 1 {
        let mut lines = String::from("config_index,mean_criterion,diverged,summary\n");
        for (i, res) in outcome.results.iter().enumerate() {
            lines.push_str(&format!(
                "{},{},{},{}\n",
                i,
                fmt_f64(res.mean_criterion),
                res.diverged.len(),
                wpinn::report::config_summary(&res.config)
            ));
        }
        write_table(&dir.join("grid_results.csv"), &lines)?;
    }

    let winner = &outcome.results[outcome.winner];
    write_table(
        &dir.join("winner.txt"),
        &format!(
            "index = {}\nmean_criterion = {}\nconfig = {}\n",
            outcome.winner,
            fmt_f64(winner.mean_criterion),
            wpinn::report::config_summary(&winner.config)
        ),
    )?;
    for run in &winner.runs {
        run.theta.save(&dir.join(format!("theta_s{}.wnet", run.param_seed)))?;
        run.eta.save(&dir.join(format!("eta_s{}.wnet", run.param_seed)))?;
        write_table(
            &dir.join(format!("training_log_s{}.csv", run.param_seed)),
            &training_log_csv(&run.history),
        )?;
    }

    let reference = default_reference(&resolved);
    let report =
        RunReport::from_ensemble(winner, &resolved.preset, reference, resolved.run.quad_n, wall)?;
    write_table(&dir.join("report.csv"), &report_csv(&report))?;
    let rows = summarize(std::slice::from_ref(&report))?;
    write_table(&dir.join("summary.csv"), &summary_csv(&rows))?;
    let text = summary_text(&rows);
    write_table(&dir.join("summary.txt"), &text)?;
    let nets: Vec<NetworkParams> = winner.runs.iter().map(|r| r.theta.clone()).collect();
    let profile =
        profile_dump(&nets, &resolved.preset, reference, &resolved.run.times, resolved.run.n_x)?;
    write_table(&dir.join("profile.csv"), &profile_csv(&profile))?;

    print!("{text}");
    println!(
        "winner config {} of {}; {} diverged run(s); wall = {:.1?}",
        outcome.winner,
        configs.len(),
        report.diverged.len(),
        wall
    );
    println!("outputs in {}", dir.display());
    Ok(())
}

fn cmd_fv(args: FvArgs) -> Result<()> {
    let preset = ExperimentPreset::from_id(PresetId::parse(&args.preset)?);
    if args.cells < 16 {
        return Err(Error::Config(format!("need at least 16 cells, got {}", args.cells)));
    }
    if !(args.cfl > 0.0 && args.cfl < 1.0) {
        return Err(Error::Config(format!("cfl must lie in (0,1), got {}", args.cfl)));
    }
    if !(args.t_end >= 0.0) {
        return Err(Error::Config(format!("t-end must be nonnegative, got {}", args.t_end)));
    }
    let dir = resolve_run_dir(
        "fv-reference",
        preset.id().name(),
        args.out.as_ref(),
        args.run_dir.as_ref(),
    )?;
    let grid = fv_solve(&preset, args.cells, args.cfl, args.t_end)?;
    grid.write_csv(&dir.join("cells.csv"))?;
    // point profile bracketed by the Dirichlet boundary data
    let (a, b) = preset.domain();
    let mut profile = String::from("x,u\n");
    profile.push_str(&format!("{},{}\n", fmt_f64(a), fmt_f64(preset.boundary_trace(a, args.t_end))));
    for i in 0..grid.n_cells() {
        profile.push_str(&format!("{},{}\n", fmt_f64(grid.center(i)), fmt_f64(grid.values()[i])));
    }
    profile.push_str(&format!("{},{}\n", fmt_f64(b), fmt_f64(preset.boundary_trace(b, args.t_end))));
    write_table(&dir.join("profile.csv"), &profile)?;
    println!(
        "marched {} cells to t = {}: mass = {}, extrema = [{}, {}]",
        grid.n_cells(),
        grid.time(),
        fmt_f64(grid.mass()),
        fmt_f64(grid.values().iter().cloned().fold(f64::INFINITY, f64::min)),
        fmt_f64(grid.values().iter().cloned().fold(f64::NEG_INFINITY, f64::max)),
    );
    println!("outputs in {}", dir.display());
    Ok(())
}

fn cmd_lemmas(args: LemmaArgs) -> Result<()> {
    let started = Instant::now();
    let outcomes = lemmas::run_all(args.seed);
    let mut all_ok = true;
    for o in &outcomes {
        println!("{} {} ({})", if o.passed { "PASS" } else { "FAIL" }, o.name, o.detail);
        all_ok &= o.passed;
    }
    println!("{} sweeps in {:.1?}", outcomes.len(), started.elapsed());
    if all_ok {
        Ok(())
    } else {
        Err(Error::Contract("lemma sweep failed".into()))
    }
}

fn load_checkpoints(dir: &Path) -> Result<Vec<NetworkParams>> {
    let mut names: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .map(|n| n.starts_with("theta") && n.ends_with(".wnet"))
                .unwrap_or(false)
        })
        .collect();
    // length-then-lexicographic puts theta_s2 before theta_s10, matching the
    // seed order the ensemble writer used when summing averages
    names.sort_by(|p, q| {
        let a = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
        let b = q.file_name().and_then(|n| n.to_str()).unwrap_or("");
        a.len().cmp(&b.len()).then_with(|| a.cmp(b))
    });
    if names.is_empty() {
        return Err(Error::Config(format!("no theta*.wnet checkpoints in {}", dir.display())));
    }
    names.iter().map(|p| NetworkParams::load(p)).collect()
}

fn cmd_profile(args: ProfileArgs) -> Result<()> {
    let preset = ExperimentPreset::from_id(PresetId::parse(&args.preset)?);
    let nets = load_checkpoints(&args.run)?;
    let times = match &args.times {
        Some(t) => parse_times(t)?,
        None => vec![0.0, 0.5 * preset.t_final(), preset.t_final()],
    };
    let reference = match args.reference.as_deref() {
        None => {
            if preset.has_closed_form() {
                ReferenceKind::Exact
            } else {
                ReferenceKind::FiniteVolume { n_cells: args.cells, cfl: 0.5 }
            }
        }
        Some("exact") => ReferenceKind::Exact,
        Some("fv") => ReferenceKind::FiniteVolume { n_cells: args.cells, cfl: 0.5 },
        Some(other) => return Err(Error::Config(format!("unknown reference '{other}'"))),
    };
    let dir = resolve_run_dir(
        "dump-profile",
        preset.id().name(),
        args.out.as_ref(),
        args.run_dir.as_ref(),
    )?;
    let rows = profile_dump(&nets, &preset, reference, &times, args.nx)?;
    write_table(&dir.join("profile.csv"), &profile_csv(&rows))?;
    println!(
        "profiled {} checkpoint(s) at {} times x {} nodes -> {} rows",
        nets.len(),
        times.len(),
        args.nx,
        rows.len()
    );
    println!("outputs in {}", dir.display());
    Ok(())
}
