use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::json;

use mrf_core::bloch::{conventional_schedule, simulate, AcqParams, AcqSchedule, TissueParams};
use mrf_core::crb::{crb, fisher, sensitivity_trajectory};
use mrf_core::design::{
    bang_bang_fraction, check_constraints, max_flip_variation, optimize_with, per_tissue_ncrb, DesignConfig,
};
use mrf_core::dictionary::{match_signal, Dictionary};
use mrf_core::mc::{run_mc, sweep_ncrb, NoiseModel};

use crate::config::{Mode, RunConfig};
use crate::dict_io;
use crate::error::CliError;
use crate::provenance::Provenance;
use crate::schedule_io::{format_schedule, read_schedule};

const DEG: f64 = std::f64::consts::PI / 180.0;

#[derive(Debug, Parser)]
#[command(name = "mrf", version, about = "MR fingerprinting simulation, Cramér-Rao bounds and sequence design")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// TOML configuration; defaults apply to missing keys.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (overrides `io.out_dir`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Seed for noise and generated schedules (overrides `mc.seed`).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; defaults to the number of cores.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate the signal of every configured tissue.
    Simulate {
        #[arg(long)]
        schedule: Option<PathBuf>,
    },
    /// Fisher information and Cramér-Rao bounds per tissue.
    Crb {
        #[arg(long)]
        schedule: Option<PathBuf>,
    },
    /// Optimize a schedule.
    Design {
        /// Initial schedule; a conventional train when omitted.
        #[arg(long)]
        schedule: Option<PathBuf>,
        #[arg(long, value_enum)]
        mode: Option<Mode>,
    },
    /// Generate a dictionary over the configured grid.
    Dict {
        #[arg(long)]
        schedule: Option<PathBuf>,
    },
    /// Match a measured signal against a dictionary.
    Match {
        #[arg(long)]
        dict: PathBuf,
        /// CSV with columns `n,mx,my`.
        #[arg(long)]
        signal: PathBuf,
    },
    /// Monte Carlo evaluation of dictionary matching.
    Mc {
        #[arg(long)]
        schedule: Option<PathBuf>,
        /// Use a stored dictionary (and its schedule) instead of generating one.
        #[arg(long)]
        dict: Option<PathBuf>,
    },
    /// nCRB versus acquisition length.
    Sweep {
        /// Extra schedule compared against the conventional train.
        #[arg(long)]
        schedule: Option<PathBuf>,
    },
}

struct Context {
    config: RunConfig,
    out: PathBuf,
    provenance: Provenance,
}

impl Context {
    fn new(common: &Common) -> Result<Self, CliError> {
        let mut config = match &common.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(seed) = common.seed {
            config.mc.seed = seed;
        }
        if let Some(out) = &common.out {
            config.io.out_dir = out.clone();
        }
        let out = config.io.out_dir.clone();
        std::fs::create_dir_all(&out).map_err(|e| CliError::io(&out, e))?;
        let provenance = Provenance::new(&config);
        Ok(Self {
            config,
            out,
            provenance,
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    /// Conventional train of `n` pulses with the configured echo time.
    fn conventional(&self, n: usize) -> Result<AcqSchedule, CliError> {
        let s = conventional_schedule(n, self.config.mc.seed)?;
        let te = self.config.bloch.te_ms;
        let entries = s
            .entries()
            .iter()
            .map(|u| AcqParams::new(u.alpha, u.phi, te, u.tr))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(AcqSchedule::new(entries)?)
    }

    fn schedule(&self, path: Option<&Path>) -> Result<AcqSchedule, CliError> {
        match path {
            Some(p) => read_schedule(p),
            None => self.conventional(self.config.design.n),
        }
    }

    fn write_json(&self, name: &str, value: &serde_json::Value) -> Result<(), CliError> {
        let path = self.path(name);
        let text = serde_json::to_string_pretty(value).expect("JSON serializes");
        std::fs::write(&path, text + "\n").map_err(|e| CliError::io(&path, e))
    }

    fn write_text(&self, name: &str, text: &str) -> Result<(), CliError> {
        let path = self.path(name);
        std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))
    }

    fn write_csv<T: Serialize>(&self, name: &str, rows: &[T]) -> Result<(), CliError> {
        let mut writer = csv::Writer::from_writer(Vec::new());
        for row in rows {
            writer.serialize(row).map_err(|e| CliError::Io(e.to_string()))?;
        }
        let body = writer.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
        let body = String::from_utf8(body).expect("csv output is UTF-8");
        self.write_text(name, &(self.provenance.csv_comment() + &body))
    }
}

fn tissue_json(t: &TissueParams) -> serde_json::Value {
    json!({ "t1_ms": t.t1, "t2_ms": t.t2, "m0": t.m0 })
}

fn matrix_json(m: &nalgebra::Matrix3<f64>) -> serde_json::Value {
    json!((0..3).map(|i| (0..3).map(|j| m[(i, j)]).collect::<Vec<_>>()).collect::<Vec<_>>())
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(threads) = cli.common.threads {
        if threads == 0 {
            return Err(CliError::Validation("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::Validation(e.to_string()))?;
    }
    let ctx = Context::new(&cli.common)?;
    match &cli.command {
        Command::Simulate { schedule } => cmd_simulate(&ctx, schedule.as_deref()),
        Command::Crb { schedule } => cmd_crb(&ctx, schedule.as_deref()),
        Command::Design { schedule, mode } => cmd_design(&ctx, schedule.as_deref(), mode.unwrap_or(ctx.config.design.mode)),
        Command::Dict { schedule } => cmd_dict(&ctx, schedule.as_deref()),
        Command::Match { dict, signal } => cmd_match(&ctx, dict, signal),
        Command::Mc { schedule, dict } => cmd_mc(&ctx, schedule.as_deref(), dict.as_deref()),
        Command::Sweep { schedule } => cmd_sweep(&ctx, schedule.as_deref()),
    }
}

#[derive(Serialize)]
struct TrajectoryRow {
    tissue: usize,
    t1_ms: f64,
    t2_ms: f64,
    m0: f64,
    n: usize,
    mx: f64,
    my: f64,
    abs_m: f64,
}

fn cmd_simulate(ctx: &Context, schedule: Option<&Path>) -> Result<(), CliError> {
    let schedule = ctx.schedule(schedule)?;
    let ensemble = ctx.config.ensemble()?;
    let mut rows = Vec::new();
    for (l, theta) in ctx.config.tissues()?.iter().enumerate() {
        let signal = simulate(&schedule, theta, &ensemble)?;
        for (i, m) in signal.samples().iter().enumerate() {
            rows.push(TrajectoryRow {
                tissue: l + 1,
                t1_ms: theta.t1,
                t2_ms: theta.t2,
                m0: theta.m0,
                n: i + 1,
                mx: m[0],
                my: m[1],
                abs_m: m[0].hypot(m[1]),
            });
        }
    }
    ctx.write_csv("trajectory.csv", &rows)
}

#[derive(Serialize)]
struct NcrbRow {
    tissue: usize,
    t1_ms: f64,
    t2_ms: f64,
    m0: f64,
    ncrb_t1: f64,
    ncrb_t2: f64,
    ncrb_m0: f64,
}

fn cmd_crb(ctx: &Context, schedule: Option<&Path>) -> Result<(), CliError> {
    let schedule = ctx.schedule(schedule)?;
    let ensemble = ctx.config.ensemble()?;
    let sigma = ctx.config.sigma()?;
    let mut reports = Vec::new();
    let mut rows = Vec::new();
    for (l, theta) in ctx.config.tissues()?.iter().enumerate() {
        let (_, sens) = sensitivity_trajectory(&schedule, theta, &ensemble)?;
        let fim = fisher(&sens, sigma)?;
        let report = crb(&fim, theta)?;
        reports.push(json!({
            "tissue": tissue_json(theta),
            "fim": matrix_json(&fim.matrix),
            "crb": matrix_json(&report.crb_matrix),
            "ncrb": report.ncrb,
            "condition_number": report.condition_number,
        }));
        rows.push(NcrbRow {
            tissue: l + 1,
            t1_ms: theta.t1,
            t2_ms: theta.t2,
            m0: theta.m0,
            ncrb_t1: report.ncrb[0],
            ncrb_t2: report.ncrb[1],
            ncrb_m0: report.ncrb[2],
        });
    }
    ctx.write_json(
        "crb.json",
        &json!({
            "provenance": ctx.provenance,
            "sigma": sigma,
            "schedule_length": schedule.len(),
            "isochromats": ensemble.nv(),
            "tissues": reports,
        }),
    )?;
    ctx.write_csv("ncrb.csv", &rows)
}

#[derive(Serialize)]
struct CostRow {
    iteration: usize,
    cost: f64,
}

fn cmd_design(ctx: &Context, schedule: Option<&Path>, mode: Mode) -> Result<(), CliError> {
    let config: DesignConfig = ctx.config.design_config(mode)?;
    let init = ctx.schedule(schedule)?;
    let initial_ncrb = per_tissue_ncrb(&init, &config)?;
    let result = optimize_with(&config, &init, |it, cost| {
        if it % 1000 == 0 {
            eprintln!("iteration {it}: cost {cost:.6e}");
        }
    })?;
    let violations = check_constraints(&result.schedule, &config);
    ctx.write_text("schedule.csv", &format_schedule(&result.schedule, &ctx.provenance.csv_comment()))?;
    let history: Vec<CostRow> = result
        .cost_history
        .iter()
        .enumerate()
        .map(|(iteration, &cost)| CostRow { iteration, cost })
        .collect();
    ctx.write_csv("cost_history.csv", &history)?;
    ctx.write_json(
        "design.json",
        &json!({
            "provenance": ctx.provenance,
            "mode": mode,
            "sigma": config.sigma,
            "schedule_length": config.n,
            "iterations": result.iterations,
            "converged": result.converged,
            "initial_cost": result.cost_history.first(),
            "final_cost": result.cost_history.last(),
            "tissues": config.tissues.iter().map(tissue_json).collect::<Vec<_>>(),
            "initial_ncrb": initial_ncrb,
            "per_tissue_ncrb": result.per_tissue_ncrb,
            "bang_bang_fraction": bang_bang_fraction(&result.schedule, &config),
            "max_flip_variation_deg": max_flip_variation(&result.schedule) / DEG,
            "constraint_violations": violations.len(),
        }),
    )?;
    eprintln!(
        "{} iterations (converged: {}), cost {:.6e} -> {:.6e}",
        result.iterations,
        result.converged,
        result.cost_history[0],
        result.cost_history.last().expect("history is never empty")
    );
    Ok(())
}

fn cmd_dict(ctx: &Context, schedule: Option<&Path>) -> Result<(), CliError> {
    let schedule = ctx.schedule(schedule)?;
    let dict = Dictionary::from_grid(&schedule, &ctx.config.grid(), &ctx.config.ensemble()?)?;
    dict_io::write(&dict, &ctx.out, "dictionary", &ctx.provenance)?;
    eprintln!("{} atoms, {} TRs", dict.len(), schedule.len());
    Ok(())
}

#[derive(Deserialize)]
struct SignalRow {
    n: usize,
    mx: f64,
    my: f64,
}

fn read_signal(path: &Path) -> Result<Vec<f64>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut flat = Vec::new();
    for (i, row) in reader.deserialize::<SignalRow>().enumerate() {
        let row = row.map_err(|e| CliError::Validation(format!("signal: {e}")))?;
        if row.n != i + 1 {
            return Err(CliError::Validation(format!("signal: row {} has n = {}", i + 1, row.n)));
        }
        flat.extend([row.mx, row.my]);
    }
    Ok(flat)
}

fn cmd_match(ctx: &Context, dict: &Path, signal: &Path) -> Result<(), CliError> {
    let dict = dict_io::read(dict)?;
    let signal = read_signal(signal)?;
    let est = match_signal(&signal, &dict)?;
    let doc = json!({
        "provenance": ctx.provenance,
        "t1_ms": est.t1,
        "t2_ms": est.t2,
        "m0": est.m0,
        "score": est.score,
        "atom_index": est.index,
    });
    println!("T1 {} ms, T2 {} ms, M0 {}", est.t1, est.t2, est.m0);
    ctx.write_json("estimate.json", &doc)
}

#[derive(Serialize)]
struct EstimateRow {
    trial: usize,
    t1_ms: f64,
    t2_ms: f64,
    m0: f64,
}

fn cmd_mc(ctx: &Context, schedule: Option<&Path>, dict: Option<&Path>) -> Result<(), CliError> {
    let dict = match dict {
        Some(p) => dict_io::read(p)?,
        None => Dictionary::from_grid(&ctx.schedule(schedule)?, &ctx.config.grid(), &ctx.config.ensemble()?)?,
    };
    let sigma = ctx.config.sigma()?;
    let theta = ctx.config.mc_tissue()?;
    let noise = NoiseModel::new(sigma, ctx.config.mc.seed)?;
    let r = run_mc(dict.schedule(), &theta, &noise, &dict, ctx.config.mc.trials)?;
    ctx.write_json(
        "mc.json",
        &json!({
            "provenance": ctx.provenance,
            "sigma": sigma,
            "tissue": tissue_json(&theta),
            "atom_count": dict.len(),
            "trials": r.trials,
            "nbias": r.nbias,
            "nmae": r.nmae,
            "nstd": r.nstd,
            "nrmse": r.nrmse,
            "empirical_std_over_crb": r.empirical_std_over_crb,
            "mean_estimate": r.mean_estimate,
            "crb_std": r.crb_std,
        }),
    )?;
    let rows: Vec<EstimateRow> = r
        .estimates
        .iter()
        .enumerate()
        .map(|(trial, e)| EstimateRow {
            trial,
            t1_ms: e[0],
            t2_ms: e[1],
            m0: e[2],
        })
        .collect();
    ctx.write_csv("mc_estimates.csv", &rows)
}

#[derive(Serialize)]
struct SweepCsvRow {
    label: String,
    n: usize,
    tissue: usize,
    t1_ms: f64,
    t2_ms: f64,
    ncrb_t1: f64,
    ncrb_t2: f64,
    ncrb_m0: f64,
    /// Conventional nCRB(T2) at the same length over this row's.
    t2_gain_vs_conventional: Option<f64>,
}

fn cmd_sweep(ctx: &Context, schedule: Option<&Path>) -> Result<(), CliError> {
    let lengths = &ctx.config.sweep.lengths;
    let longest = *lengths.iter().max().expect("validated nonempty");
    let conventional = ctx.conventional(longest)?;
    let input = schedule.map(read_schedule).transpose()?;
    let mut labeled = Vec::new();
    for &n in lengths {
        labeled.push(("conventional".to_string(), conventional.prefix(n)?));
    }
    if let Some(s) = &input {
        for &n in lengths.iter().filter(|&&n| n <= s.len()) {
            labeled.push(("input".to_string(), s.prefix(n)?));
        }
    }
    let ensemble = ctx.config.ensemble()?;
    let sigma = ctx.config.sigma()?;
    let mut rows = Vec::new();
    for (l, theta) in ctx.config.tissues()?.iter().enumerate() {
        let table = sweep_ncrb(&labeled, theta, &ensemble, sigma)?;
        for row in &table {
            let gain = (row.label != "conventional")
                .then(|| table.iter().find(|r| r.label == "conventional" && r.n == row.n))
                .flatten()
                .map(|c| c.ncrb[1] / row.ncrb[1]);
            rows.push(SweepCsvRow {
                label: row.label.clone(),
                n: row.n,
                tissue: l + 1,
                t1_ms: theta.t1,
                t2_ms: theta.t2,
                ncrb_t1: row.ncrb[0],
                ncrb_t2: row.ncrb[1],
                ncrb_m0: row.ncrb[2],
                t2_gain_vs_conventional: gain,
            });
        }
    }
    ctx.write_csv("sweep.csv", &rows)
}
