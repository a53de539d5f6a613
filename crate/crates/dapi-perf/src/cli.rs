//! Subcommand front end.
//!
//! Exit codes: 0 on success, 1 when an experiment-level assertion fails
//! (tolerance or monotonicity violated), 2 on usage or input errors.

use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::experiments::{
    self, parse_kv, DensityConfig, Fig2Config, Fig3Config, ScalingConfig, ScalingDiagnostics,
    SeparatedConfig,
};
use crate::formulas::{dapi_losses, dapi_losses_separated, LossBreakdown};
use crate::graph::WeightedGraph;
use crate::model::{
    assemble_capi, assemble_dapi_correlated_gamma, assemble_dapi_gamma, ClosedLoopStateSpace,
    SystemParams,
};
use crate::oracle::verify::{oracle_triangle_row, standing_grid};
use crate::tuning::{tune, DEFAULT_BRACKET};

#[derive(Parser)]
#[command(
    name = "dapi-perf",
    version,
    about = "Transient H2 power-loss analysis of DAPI/CAPI secondary frequency control"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Graph utilities.
    Graph {
        #[command(subcommand)]
        command: GraphCommand,
    },
    /// Closed-loop model inspection.
    Model {
        #[command(subcommand)]
        command: ModelCommand,
    },
    /// Closed-form loss breakdown for one configuration.
    Losses(LossesArgs),
    /// Gamma tuning report (optimum, interval, threshold).
    Tune(TuneArgs),
    /// Cross-validate closed forms against the Lyapunov and Monte-Carlo
    /// oracles on the standing grid.
    Verify(VerifyArgs),
    /// Loss-vs-gamma curve on the published complete-graph configuration.
    Fig2(ExperimentArgs),
    /// Per-node losses vs ring size for several gammas.
    Fig3(ExperimentArgs),
    /// Asymptotic scaling diagnostics on a lattice family.
    Scaling(ExperimentArgs),
    /// Densification sweep from a ring to the complete graph.
    Density(ExperimentArgs),
    /// Separated physical/communication fuzz-radius sweep.
    Separated(ExperimentArgs),
}

#[derive(Subcommand)]
enum GraphCommand {
    /// Print the sorted Laplacian eigenvalues of an edge-list file as CSV.
    Spectrum { file: PathBuf },
}

#[derive(Subcommand)]
enum ModelCommand {
    /// Print the closed-loop A, B, C matrices as CSV (graphs up to n = 10).
    Dump(ModelDumpArgs),
}

#[derive(Args)]
struct GraphSelection {
    /// Edge-list file (header `n <count>`, one `i j weight` line per edge).
    #[arg(long, value_name = "FILE")]
    graph: Option<PathBuf>,
    /// Built-in family: ring | ring-qfuzz | path | complete | torus.
    #[arg(long, default_value = "ring")]
    family: String,
    /// Node count (1D families).
    #[arg(long, default_value_t = 10)]
    n: usize,
    /// Torus rows.
    #[arg(long, default_value_t = 3)]
    rows: usize,
    /// Torus columns.
    #[arg(long, default_value_t = 3)]
    cols: usize,
    /// Fuzz radius for ring-qfuzz.
    #[arg(long, default_value_t = 1)]
    qfuzz: usize,
    /// Edge weight (per-unit susceptance).
    #[arg(long, default_value_t = 0.1)]
    weight: f64,
}

impl GraphSelection {
    fn build(&self) -> Result<WeightedGraph> {
        if let Some(path) = &self.graph {
            return WeightedGraph::read_edge_list(path);
        }
        match self.family.as_str() {
            "ring" => WeightedGraph::ring(self.n, self.weight),
            "ring-qfuzz" => WeightedGraph::ring_qfuzz(self.n, self.qfuzz, self.weight),
            "path" => WeightedGraph::path(self.n, self.weight),
            "complete" => WeightedGraph::complete(self.n, self.weight),
            "torus" => WeightedGraph::torus_2d(self.rows, self.cols, self.weight),
            other => Err(Error::InvalidConfig(format!(
                "unknown family '{other}' (ring|ring-qfuzz|path|complete|torus)"
            ))),
        }
    }
}

#[derive(Args)]
struct ParamArgs {
    /// Droop gain.
    #[arg(long, default_value_t = 5.0)]
    k: f64,
    /// Inertia-to-damping ratio.
    #[arg(long, default_value_t = 0.8)]
    tau: f64,
    /// Integral controller gain.
    #[arg(long, default_value_t = 0.8)]
    q: f64,
    /// Conductance-to-susceptance ratio.
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    /// Measurement-to-injection noise intensity ratio.
    #[arg(long, default_value_t = 1.0)]
    eps: f64,
    /// Distributed-averaging strength.
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
}

impl ParamArgs {
    fn to_params(&self) -> Result<SystemParams> {
        SystemParams::new(self.k, self.tau, self.q, self.alpha, self.eps, self.gamma)
    }
}

#[derive(Args)]
struct ModelDumpArgs {
    #[command(flatten)]
    graph: GraphSelection,
    #[command(flatten)]
    params: ParamArgs,
    /// Controller: dapi | dapi-correlated | capi.
    #[arg(long, default_value = "dapi")]
    controller: String,
}

#[derive(Args)]
struct LossesArgs {
    #[command(flatten)]
    graph: GraphSelection,
    #[command(flatten)]
    params: ParamArgs,
    /// Separate communication graph (edge-list file); weights are used as
    /// given and must commute with the physical Laplacian.
    #[arg(long, value_name = "FILE")]
    comm_graph: Option<PathBuf>,
}

#[derive(Args)]
struct TuneArgs {
    #[command(flatten)]
    graph: GraphSelection,
    #[command(flatten)]
    params: ParamArgs,
    /// Emit CSV instead of aligned text.
    #[arg(long)]
    csv: bool,
}

#[derive(Args)]
struct VerifyArgs {
    /// Skip the Monte-Carlo leg (triangle checks only).
    #[arg(long)]
    skip_mc: bool,
    /// Base RNG seed for the Monte-Carlo leg.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Run only cases whose name contains this substring.
    #[arg(long)]
    case: Option<String>,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Flat key-value config file (`key = value` lines).
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Output directory for the CSV and the resolved config.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Additional `key=value` overrides (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl ExperimentArgs {
    /// defaults <- config file <- --set <- --out
    fn overrides(&self) -> Result<BTreeMap<String, String>> {
        let mut map = BTreeMap::new();
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path)?;
            for (k, v) in parse_kv(&text)? {
                if k != "experiment" {
                    map.insert(k, v);
                }
            }
        }
        for kv in &self.set {
            let Some((k, v)) = kv.split_once('=') else {
                return Err(Error::InvalidConfig(format!("--set expects key=value, got '{kv}'")));
            };
            map.insert(k.trim().to_string(), v.trim().to_string());
        }
        if let Some(out) = &self.out {
            map.insert("out".to_string(), out.display().to_string());
        }
        Ok(map)
    }
}

/// Parses and runs; returns the process exit code.
pub fn run<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command) {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

/// Entry point for the binary.
pub fn run_from_env() -> i32 {
    run(std::env::args_os())
}

fn execute(command: Command) -> Result<bool> {
    match command {
        Command::Graph { command } => match command {
            GraphCommand::Spectrum { file } => {
                let graph = WeightedGraph::read_edge_list(&file)?;
                let spec = graph.spectrum()?;
                let line = spec
                    .eigenvalues()
                    .iter()
                    .map(|v| v.to_string())
                    .collect::<Vec<_>>()
                    .join(",");
                println!("{line}");
                Ok(true)
            }
        },
        Command::Model { command } => match command {
            ModelCommand::Dump(args) => model_dump(&args),
        },
        Command::Losses(args) => losses(&args),
        Command::Tune(args) => tune_cmd(&args),
        Command::Verify(args) => verify_cmd(&args),
        Command::Fig2(args) => {
            let mut cfg = Fig2Config::default();
            cfg.apply_map(&args.overrides()?)?;
            let result = experiments::run_fig2(&cfg)?;
            println!(
                "gamma_star = {}\ngamma_star_eta = {}\nwrote {}",
                result.tuning.gamma_star,
                result.tuning.gamma_star_eta,
                result.csv_path.display()
            );
            Ok(true)
        }
        Command::Fig3(args) => {
            let mut cfg = Fig3Config::default();
            cfg.apply_map(&args.overrides()?)?;
            let result = experiments::run_fig3(&cfg)?;
            println!("wrote {} ({} rows)", result.csv_path.display(), result.rows.len());
            Ok(true)
        }
        Command::Scaling(args) => {
            let mut cfg = ScalingConfig::default();
            cfg.apply_map(&args.overrides()?)?;
            let report = experiments::run_scaling(&cfg)?;
            let mut ok = report.p_bound_ok;
            match &report.diagnostics {
                ScalingDiagnostics::DoublingRatios { ratios, loglog_slope } => {
                    println!("per-node eta doubling ratios: {ratios:?} (log-log slope {loglog_slope:.3})");
                    ok = ok && ratios.iter().all(|r| *r > 1.7 && *r < 2.3);
                }
                ScalingDiagnostics::LogDifferences { differences, slope_vs_log_n } => {
                    println!("per-node eta differences: {differences:?} (slope vs log n {slope_vs_log_n:.4})");
                    ok = ok
                        && differences
                            .windows(2)
                            .all(|w| (w[1] - w[0]).abs() <= 0.25 * w[0].abs());
                }
            }
            println!(
                "per-node p bound {} (max {}) -> {}",
                report.p_bound,
                report.per_node_p.iter().cloned().fold(0.0, f64::max),
                if report.p_bound_ok { "ok" } else { "VIOLATED" }
            );
            println!("wrote {}", report.csv_path.display());
            Ok(ok)
        }
        Command::Density(args) => {
            let mut cfg = DensityConfig::default();
            cfg.apply_map(&args.overrides()?)?;
            let result = experiments::run_density(&cfg)?;
            println!(
                "{} steps, eta monotone: {}\nwrote {}",
                result.rows.len() - 1,
                result.eta_monotone,
                result.csv_path.display()
            );
            Ok(result.eta_monotone)
        }
        Command::Separated(args) => {
            let mut cfg = SeparatedConfig::default();
            cfg.apply_map(&args.overrides()?)?;
            let result = experiments::run_separated(&cfg)?;
            println!(
                "diagonal max rel err {:.3e}\nwrote {}",
                result.diagonal_max_rel_err,
                result.csv_path.display()
            );
            Ok(result.diagonal_max_rel_err < 1e-10)
        }
    }
}

fn print_matrix_csv(label: &str, m: &nalgebra::DMatrix<f64>) {
    println!("# {label} ({}x{})", m.nrows(), m.ncols());
    for r in 0..m.nrows() {
        let line = (0..m.ncols())
            .map(|c| m[(r, c)].to_string())
            .collect::<Vec<_>>()
            .join(",");
        println!("{line}");
    }
}

fn model_dump(args: &ModelDumpArgs) -> Result<bool> {
    let graph = args.graph.build()?;
    if graph.node_count() > 10 {
        return Err(Error::InvalidConfig(format!(
            "model dump is limited to n <= 10, got n = {}",
            graph.node_count()
        )));
    }
    let p = args.params.to_params()?;
    let system: ClosedLoopStateSpace = match args.controller.as_str() {
        "dapi" => assemble_dapi_gamma(&graph, &p)?,
        "dapi-correlated" => assemble_dapi_correlated_gamma(&graph, &p)?,
        "capi" => assemble_capi(&graph, &p)?,
        other => {
            return Err(Error::InvalidConfig(format!(
                "unknown controller '{other}' (dapi|dapi-correlated|capi)"
            )))
        }
    };
    print_matrix_csv("A", system.a());
    print_matrix_csv("B", system.b());
    print_matrix_csv("C", system.c());
    Ok(true)
}

fn print_losses_row(l: &LossBreakdown) {
    println!("p_part,eta_part,total");
    println!("{},{},{}", l.p_part, l.eta_part, l.total);
}

fn losses(args: &LossesArgs) -> Result<bool> {
    let graph = args.graph.build()?;
    let p = args.params.to_params()?;
    let breakdown = match &args.comm_graph {
        Some(path) => {
            let gc = WeightedGraph::read_edge_list(path)?;
            dapi_losses_separated(&graph, &gc, &p)?
        }
        None => dapi_losses(&graph.spectrum()?, &p)?,
    };
    print_losses_row(&breakdown);
    Ok(true)
}

fn tune_cmd(args: &TuneArgs) -> Result<bool> {
    let graph = args.graph.build()?;
    let p = args.params.to_params()?;
    let spec = graph.spectrum()?;
    let report = tune(&spec, &p, DEFAULT_BRACKET)?;
    if args.csv {
        println!("name,gamma,p_part,eta_part,total");
        for (name, gamma, losses) in &report.losses_at {
            println!("{name},{gamma},{},{},{}", losses.p_part, losses.eta_part, losses.total);
        }
    } else {
        println!("gamma_star      {:>12.6}{}", report.gamma_star,
            if report.gamma_star_is_zero { "  (degenerate: boundary minimum)" } else { "" });
        println!("gamma_star_eta  {:>12.6}", report.gamma_star_eta);
        println!("gamma_hat       {:>12.6}", report.gamma_hat);
        println!("gamma_star interval [0, {:.6}]", report.gamma_star_upper);
        for (name, gamma, losses) in &report.losses_at {
            println!(
                "losses at {name:<16} gamma = {gamma:<12.6} p = {:<12.6} eta = {:<12.6} total = {:.6}",
                losses.p_part, losses.eta_part, losses.total
            );
        }
        if report.scan_local_minima.len() > 1 {
            println!("note: total-loss scan saw multiple local minima: {:?}", report.scan_local_minima);
        }
    }
    Ok(true)
}

fn verify_cmd(args: &VerifyArgs) -> Result<bool> {
    let mut all_ok = true;
    println!("case,closed_form,lyapunov,per_mode,mc_mean,mc_stderr,max_rel_err");
    for case in standing_grid() {
        if let Some(filter) = &args.case {
            if !case.name.contains(filter.as_str()) {
                continue;
            }
        }
        let seed = if args.skip_mc { None } else { Some(args.seed) };
        let row = oracle_triangle_row(&case, seed)?;
        let fmt_opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        println!(
            "{},{},{},{},{},{},{}",
            row.case_name,
            row.closed_form,
            row.lyapunov,
            row.per_mode,
            fmt_opt(row.mc_mean),
            fmt_opt(row.mc_stderr),
            row.max_rel_err
        );
        all_ok = all_ok && row.within_tol;
    }
    Ok(all_ok)
}
