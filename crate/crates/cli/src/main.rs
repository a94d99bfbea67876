use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use lineplan::evaluate::{self, LinePlan};
use lineplan::pareto::{self, FrontierOptions};
use lineplan::solve::{mps, SolveLimits, SolveStatus};
use lineplan::{build_graph, build_model, load_instance, Error, MilpModel, Mode, ModelOptions, ProblemInstance};

const EXIT_VALIDATION: u8 = 2;
const EXIT_INFEASIBLE: u8 = 3;
const EXIT_NO_INCUMBENT: u8 = 4;

#[derive(Parser)]
#[command(name = "lineplan", version, about = "Multi-period railway line planning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check an instance (and optionally a solution) and print a summary.
    Validate {
        #[command(flatten)]
        common: Common,
        /// Solution file to check against the model at `--epsilon`.
        #[arg(long)]
        solution: Option<PathBuf>,
    },
    /// Solve the model at one adjustment limit.
    Solve {
        #[command(flatten)]
        common: Common,
        /// Only write the model as MPS.
        #[arg(long)]
        export_mps: bool,
    },
    /// Trace the journey time / adjustment frontier.
    Frontier {
        #[command(flatten)]
        common: Common,
    },
    /// Route passengers over a fixed plan.
    Assign {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        plan: PathBuf,
    },
    /// Write the model at `--epsilon` as fixed-format MPS.
    ExportMps {
        #[command(flatten)]
        common: Common,
    },
    /// Validate an external solver's solution.
    ImportSolution {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        solution: PathBuf,
    },
    /// Replace every period's demand with seeded synthetic demand.
    SynthDemand {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 2.0)]
        peak_factor: f64,
        #[arg(long, default_value_t = 0.5)]
        directionality: f64,
    },
    /// Compare plan files: journey times, adjustments, revenue impact and
    /// the per-station change heatmap.
    Report {
        #[command(flatten)]
        common: Common,
        /// Directory of plan files, e.g. the `plans` folder of a frontier run.
        #[arg(long)]
        plans: PathBuf,
        #[arg(long, default_value_t = -0.81)]
        elasticity: f64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Sym,
    Asym,
}

#[derive(Args)]
struct Common {
    /// Instance file.
    instance: PathBuf,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long, conflicts_with = "epsilon_list")]
    epsilon: Option<u32>,
    #[arg(long, value_delimiter = ',')]
    epsilon_list: Option<Vec<u32>>,
    /// Reward per unused adjustment.
    #[arg(long)]
    delta: Option<f64>,
    /// Seconds per solve.
    #[arg(long)]
    time_limit: Option<f64>,
    /// Relative gap at which a solve stops.
    #[arg(long)]
    gap: Option<f64>,
    #[arg(long)]
    node_limit: Option<u64>,
    /// Total seconds for a frontier run.
    #[arg(long)]
    total_time: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

impl Common {
    fn instance(&self) -> lineplan::Result<ProblemInstance> {
        let mut inst = load_instance(&self.instance)?;
        if let Some(m) = self.mode {
            inst = inst.with_mode(match m {
                ModeArg::Sym => Mode::Symmetric,
                ModeArg::Asym => Mode::Asymmetric,
            })?;
        }
        if let Some(d) = self.delta {
            inst.delta = d;
        }
        Ok(inst)
    }

    fn limits(&self) -> SolveLimits {
        SolveLimits { time_limit: self.time_limit, gap_limit: self.gap, node_limit: self.node_limit }
    }

    fn epsilon(&self) -> u32 {
        self.epsilon.unwrap_or(0)
    }

    fn model(&self, inst: &ProblemInstance) -> lineplan::Result<MilpModel> {
        let graph = build_graph(inst)?;
        Ok(build_model(&graph, inst, &ModelOptions::with_epsilon(self.epsilon())))
    }

    fn out_dir(&self) -> anyhow::Result<&Path> {
        fs::create_dir_all(&self.out).with_context(|| format!("creating {}", self.out.display()))?;
        Ok(&self.out)
    }
}

fn mode_name(mode: Mode) -> &'static str {
    match mode {
        Mode::Symmetric => "sym",
        Mode::Asymmetric => "asym",
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::Parse(_) | Error::Validation(_) | Error::ConstraintViolation { .. } | Error::NameCollision(_)) => {
            EXIT_VALIDATION
        }
        Some(Error::InfeasiblePlan(_) | Error::Unroutable { .. }) => EXIT_INFEASIBLE,
        Some(Error::LimitWithoutIncumbent) => EXIT_NO_INCUMBENT,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .target(env_logger::Target::Stderr)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<u8> {
    let common = match &cli.command {
        Command::Validate { common, .. }
        | Command::Solve { common, .. }
        | Command::Frontier { common }
        | Command::Assign { common, .. }
        | Command::ExportMps { common }
        | Command::ImportSolution { common, .. }
        | Command::SynthDemand { common, .. }
        | Command::Report { common, .. } => common,
    };
    if let Some(n) = common.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match &cli.command {
        Command::Validate { common, solution } => validate(common, solution.as_deref()),
        Command::Solve { common, export_mps } => {
            if *export_mps {
                export(common)
            } else {
                solve(common)
            }
        }
        Command::Frontier { common } => frontier(common),
        Command::Assign { common, plan } => assign(common, plan),
        Command::ExportMps { common } => export(common),
        Command::ImportSolution { common, solution } => import(common, solution),
        Command::SynthDemand { common, peak_factor, directionality } => {
            synth(common, *peak_factor, *directionality)
        }
        Command::Report { common, plans, elasticity } => report(common, plans, *elasticity),
    }
}

fn validate(common: &Common, solution: Option<&Path>) -> anyhow::Result<u8> {
    let inst = common.instance()?;
    let graph = build_graph(&inst)?;
    let mut line = format!(
        "stations={} lines={} periods={} nodes={} arcs={} max_adjustments={} mode={}",
        inst.num_stations(),
        inst.lines.len(),
        inst.periods.len(),
        graph.num_nodes(),
        graph.num_arcs(),
        pareto::max_adjustments(&inst),
        mode_name(inst.mode)
    );
    if let Some(path) = solution {
        let model = build_model(&graph, &inst, &ModelOptions::with_epsilon(common.epsilon()));
        let sol = mps::import_solution(&model, &inst, path)?;
        evaluate::audit_solution(&inst, &graph, &model, &sol.values)?;
        line.push_str(&format!(" solution=ok objective={:.6}", sol.objective));
    }
    println!("{line}");
    Ok(0)
}

fn solve(common: &Common) -> anyhow::Result<u8> {
    let inst = common.instance()?;
    let graph = build_graph(&inst)?;
    let epsilon = common.epsilon();
    let model = build_model(&graph, &inst, &ModelOptions::with_epsilon(epsilon));
    log::info!("model: {} variables, {} rows", model.num_vars(), model.num_rows());
    let sol = lineplan::solve(&model, &common.limits())?;
    log::info!("solve finished in {:.1} s after {} nodes", sol.wall_time, sol.nodes);
    if sol.status == SolveStatus::Infeasible {
        println!("epsilon={epsilon} status=infeasible");
        return Ok(EXIT_INFEASIBLE);
    }
    let adj = pareto::count_adjustments(&model, &inst, &sol.values)?;
    let audit = evaluate::audit_solution(&inst, &graph, &model, &sol.values)?;
    let out = common.out_dir()?;
    mps::write_solution(&model, &inst, &sol.values, &out.join("solution.sol"))?;
    audit.plan.save(&inst, &out.join("plan.toml"))?;
    let mut report = String::new();
    report.push_str(&format!("status {}\n", sol.status));
    report.push_str(&format!("objective {:.6}\n", sol.objective));
    report.push_str(&format!("gjt_min {:.6}\n", sol.gjt));
    report.push_str(&format!("bound {:.6}\n", sol.bound));
    report.push_str(&format!("gap {:.6}\n", sol.gap));
    report.push_str(&format!("max_conservation_residual {:.3e}\n", audit.max_residual));
    for (p, used) in audit.budget_used.iter().enumerate() {
        report.push_str(&format!("budget[{}] {:.3} of {:.3}\n", p + 1, used, inst.periods[p].budget));
    }
    report.push_str(&format!(
        "adjustments {} (frequency {}, stop {}) slack {} epsilon {}\n",
        adj.total(),
        adj.frequency,
        adj.stop,
        audit.slack,
        epsilon
    ));
    fs::write(out.join("report.txt"), report)?;
    println!(
        "epsilon={epsilon} total_adj={} freq_adj={} stop_adj={} gjt_min={:.6} gap={:.6} status={}",
        adj.total(),
        adj.frequency,
        adj.stop,
        sol.gjt,
        sol.gap,
        sol.status
    );
    Ok(0)
}

fn frontier(common: &Common) -> anyhow::Result<u8> {
    let inst = common.instance()?;
    let options = FrontierOptions {
        epsilons: common.epsilon_list.clone(),
        start: common.epsilon,
        limits: common.limits(),
        total_time: common.total_time,
        threads: common.threads,
        pair_directions: false,
    };
    let set = pareto::run_frontier(&inst, &options)?;
    let out = common.out_dir()?;
    fs::write(out.join("frontier.csv"), set.to_csv())?;
    fs::write(out.join("pareto.csv"), set.frontier_csv())?;
    let plans_dir = out.join("plans");
    fs::create_dir_all(&plans_dir)?;
    for p in &set.points {
        if let Some(plan) = &p.plan {
            plan.save(&inst, &plans_dir.join(format!("eps{:04}.toml", p.epsilon)))?;
        }
    }
    fs::write(out.join("heatmap.csv"), evaluate::heatmap_csv(&set.plans(), &inst))?;
    let failed = set.points.iter().filter(|p| matches!(p.status, pareto::PointStatus::Failed(_))).count();
    println!("points={} pareto={} failed={}", set.points.len(), set.frontier().len(), failed);
    Ok(0)
}

fn assign(common: &Common, plan: &Path) -> anyhow::Result<u8> {
    let inst = common.instance()?;
    let graph = build_graph(&inst)?;
    let plan = LinePlan::load(&inst, plan)?;
    let result = evaluate::assign(&inst, &graph, &plan)?;
    let out = common.out_dir()?;
    fs::write(out.join("od.csv"), result.od_csv(&inst))?;
    let (f, s) = plan.change_counts(&inst);
    println!(
        "gjt_min={:.6} max_load_factor={:.6} total_adj={} freq_adj={f} stop_adj={s}",
        result.gjt,
        result.max_load_factor,
        f + s
    );
    Ok(0)
}

fn export(common: &Common) -> anyhow::Result<u8> {
    let inst = common.instance()?;
    let model = common.model(&inst)?;
    let out = common.out_dir()?;
    let path = out.join("model.mps");
    mps::export_mps(&model, &inst, &path)?;
    println!("mps={} rows={} columns={}", path.display(), model.num_rows(), model.num_vars());
    Ok(0)
}

fn import(common: &Common, solution: &Path) -> anyhow::Result<u8> {
    let inst = common.instance()?;
    let model = common.model(&inst)?;
    let sol = mps::import_solution(&model, &inst, solution)?;
    let adj = pareto::count_adjustments(&model, &inst, &sol.values)?;
    println!(
        "epsilon={} total_adj={} freq_adj={} stop_adj={} gjt_min={:.6} objective={:.6}",
        common.epsilon(),
        adj.total(),
        adj.frequency,
        adj.stop,
        sol.gjt,
        sol.objective
    );
    Ok(0)
}

fn synth(common: &Common, peak_factor: f64, directionality: f64) -> anyhow::Result<u8> {
    let inst = common.instance()?;
    let synth = lineplan::instance::synth_demand(&inst, common.seed, peak_factor, directionality)?;
    let out = common.out_dir()?;
    let stem = common.instance.file_stem().and_then(|s| s.to_str()).unwrap_or("instance");
    let path = out.join(format!("{stem}.seed{}.inst", common.seed));
    synth.save(&path)?;
    let totals: Vec<String> = synth.periods.iter().map(|p| format!("{:.2}", p.demand.total())).collect();
    println!("instance={} demand_per_hour={}", path.display(), totals.join(","));
    Ok(0)
}

fn report(common: &Common, plans_dir: &Path, elasticity: f64) -> anyhow::Result<u8> {
    let inst = common.instance()?;
    let graph = build_graph(&inst)?;
    let mut files: Vec<PathBuf> = fs::read_dir(plans_dir)
        .with_context(|| format!("reading {}", plans_dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "toml"))
        .collect();
    files.sort();
    let mut rows = Vec::new();
    for f in &files {
        let plan = LinePlan::load(&inst, f)?;
        let r = evaluate::assign(&inst, &graph, &plan)?;
        rows.push((f, plan, r.gjt));
    }
    let Some(reference) = rows.iter().map(|r| r.2).reduce(f64::max) else {
        anyhow::bail!("no plan files in {}", plans_dir.display());
    };
    let mut csv = String::from("plan,total_adj,freq_adj,stop_adj,gjt_min,gjt_change_pct,revenue_impact_pct\n");
    for (f, plan, gjt) in &rows {
        let (fa, sa) = plan.change_counts(&inst);
        let pct = 100.0 * (gjt - reference) / reference;
        csv.push_str(&format!(
            "{},{},{fa},{sa},{gjt:.6},{pct:.4},{:.4}\n",
            f.file_stem().and_then(|s| s.to_str()).unwrap_or(""),
            fa + sa,
            evaluate::revenue_impact(pct, elasticity)
        ));
    }
    let out = common.out_dir()?;
    fs::write(out.join("report.csv"), csv)?;
    let plans: Vec<LinePlan> = rows.into_iter().map(|r| r.1).collect();
    fs::write(out.join("heatmap.csv"), evaluate::heatmap_csv(&plans, &inst))?;
    println!("plans={} reference_gjt_min={reference:.6}", plans.len());
    Ok(0)
}
