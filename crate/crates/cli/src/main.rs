use std::fs;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use boincomb::blrm::McmcConfig;
use boincomb::engine::replay_step;
use boincomb::scenario::{builtin_scenario, builtin_scenarios, load_mask};
use boincomb::seed::child_seed;
use boincomb::{
    decide_next, decision_table, fit_isotonic, lambda_boundaries, render_figure, render_table, run_matrix,
    select_mtc, BlrmContext, Combo, Decision, Design, DesignParams, DoseGrid, Metric, MtcTieRule, Scenario,
    StudyConfig, StudyReport, SubsetMask, TrialState,
};
use boincomb_service::record::{resolve_mask, MaskSpec};

// stdout writes that surface a closed pipe as an error instead of panicking
macro_rules! out {
    ($($t:tt)*) => { write!(std::io::stdout(), $($t)*)? };
}
macro_rules! outln {
    ($($t:tt)*) => { writeln!(std::io::stdout(), $($t)*)? };
}

#[derive(Parser)]
#[command(name = "boincomb", version, about = "Interval dose finding for two-drug combinations on dose subsets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Escalation and de-escalation boundaries for a target.
    Boundaries {
        #[arg(long, default_value_t = 0.3)]
        phi: f64,
        #[arg(long)]
        phi1: Option<f64>,
        #[arg(long)]
        phi2: Option<f64>,
        #[arg(long)]
        json: bool,
    },
    /// Integer decision table by number of patients.
    Table {
        #[command(flatten)]
        design: DesignArgs,
        #[arg(long, default_value_t = 18)]
        n_max: u32,
        #[arg(long)]
        json: bool,
    },
    /// Simulate one design over bundled or custom scenarios.
    Simulate {
        /// Scenario number 1-14, a scenario JSON file, or "all".
        #[arg(long, default_value = "all")]
        scenario: Vec<String>,
        /// Mask name (full, band, case_study) or mask JSON file.
        #[arg(long, default_value = "band")]
        mask: String,
        #[command(flatten)]
        design: DesignArgs,
        #[arg(long, default_value_t = 1000)]
        reps: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = default_threads())]
        threads: usize,
        #[command(flatten)]
        mcmc: McmcArgs,
        /// Write the study report as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Keep per-trial paths in the JSON report.
        #[arg(long)]
        keep_trials: bool,
    },
    /// Run every scenario under every configuration of a study file.
    SimulateMatrix {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Render a saved study report.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
        /// For figures: selection, overdose, sample_size or dlt.
        #[arg(long, default_value = "selection")]
        metric: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Isotonic estimates and final selection for a stopped trial.
    SelectMtc {
        #[arg(long)]
        state: PathBuf,
    },
    /// Recommendation for the next cohort.
    NextDose {
        #[arg(long)]
        state: PathBuf,
    },
    /// Start the trial-conduct HTTP service.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value = "trials")]
        data_dir: PathBuf,
        /// Require this bearer token on every request.
        #[arg(long, env = "BOINCOMB_TOKEN")]
        token: Option<String>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Table,
    Csv,
    Figure,
}

#[derive(clap::Args, Clone)]
struct DesignArgs {
    #[arg(long, default_value_t = 0.3)]
    phi: f64,
    #[arg(long)]
    phi1: Option<f64>,
    #[arg(long)]
    phi2: Option<f64>,
    /// boin-c, boin-cs, boin-ce or boin-cb.
    #[arg(long, default_value = "boin-cs")]
    design: String,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    cohort_size: Option<u32>,
    #[arg(long)]
    max_cohorts: Option<u32>,
    /// 0 disables the convergence stop.
    #[arg(long)]
    earlystop_n: Option<u32>,
    #[arg(long)]
    require_mtc_below_lambda_d: bool,
    /// lower-estimate, higher-estimate, toward-target or random.
    #[arg(long)]
    mtc_tie_rule: Option<String>,
}

#[derive(clap::Args, Clone)]
struct McmcArgs {
    #[arg(long)]
    mcmc_burn_in: Option<usize>,
    #[arg(long)]
    mcmc_draws: Option<usize>,
}

fn default_threads() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

fn parse_json_str<T: for<'de> Deserialize<'de>>(s: &str, what: &str) -> Result<T> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).with_context(|| format!("unknown {what} {s:?}"))
}

impl DesignArgs {
    fn params(&self) -> Result<DesignParams> {
        let phi1 = self.phi1.unwrap_or(0.6 * self.phi);
        let phi2 = self.phi2.unwrap_or(1.4 * self.phi);
        let mut p = DesignParams::with_thresholds(self.phi, phi1, phi2)?;
        p.design = parse_json_str::<Design>(&self.design, "design")?;
        if let Some(e) = self.epsilon {
            p.epsilon = e;
        }
        if let Some(c) = self.cohort_size {
            p.cohort_size = c;
            if p.earlystop_n.is_some() && self.earlystop_n.is_none() {
                p.earlystop_n = Some(3 * c);
            }
        }
        if let Some(m) = self.max_cohorts {
            p.max_cohorts = m;
        }
        match self.earlystop_n {
            Some(0) => p.earlystop_n = None,
            Some(n) => p.earlystop_n = Some(n),
            None => {}
        }
        p.require_mtc_below_lambda_d = self.require_mtc_below_lambda_d;
        if let Some(rule) = &self.mtc_tie_rule {
            p.mtc_tie_rule = parse_json_str::<MtcTieRule>(rule, "tie rule")?;
        }
        p.validate()?;
        Ok(p)
    }
}

impl McmcArgs {
    fn context(&self, design: Design) -> Option<BlrmContext> {
        (design == Design::BoinCb).then(|| {
            let d = McmcConfig::default();
            BlrmContext {
                mcmc: McmcConfig {
                    burn_in: self.mcmc_burn_in.unwrap_or(d.burn_in),
                    draws: self.mcmc_draws.unwrap_or(d.draws),
                    ..d
                },
                ..Default::default()
            }
        })
    }
}

fn scenarios_from(args: &[String]) -> Result<Vec<Scenario>> {
    let mut out = Vec::new();
    for a in args {
        if a == "all" {
            out.extend(builtin_scenarios());
        } else if let Ok(k) = a.parse::<usize>() {
            out.push(builtin_scenario(k).with_context(|| format!("no bundled scenario {k}; use 1-14"))?);
        } else {
            out.push(Scenario::load(a).with_context(|| format!("reading scenario {a}"))?);
        }
    }
    Ok(out)
}

fn mask_for(grid: &DoseGrid, spec: &str) -> Result<SubsetMask> {
    if Path::new(spec).is_file() {
        let (g, m) = load_mask(spec).with_context(|| format!("reading mask {spec}"))?;
        if &g != grid {
            bail!("mask {spec} is defined on a different dose grid");
        }
        return Ok(m);
    }
    Ok(resolve_mask(grid, Some(MaskSpec::Named(spec.to_string())))?)
}

fn write_or_print(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            out!("{text}");
            Ok(())
        }
    }
}

fn save_report(report: &StudyReport, out: Option<&Path>) -> Result<()> {
    out!("{}", render_table(report)?.text);
    if let Some(p) = out {
        fs::write(p, serde_json::to_string_pretty(report)?).with_context(|| format!("writing {}", p.display()))?;
        eprintln!("report written to {}", p.display());
    }
    Ok(())
}

/// Study file for `simulate-matrix`.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct StudyFile {
    #[serde(default = "default_reps")]
    reps: usize,
    #[serde(default = "default_seed")]
    seed: u64,
    threads: Option<usize>,
    #[serde(default)]
    keep_trials: bool,
    /// Scenario numbers, scenario files, or "all" (the default).
    #[serde(default = "all_scenarios")]
    scenarios: Vec<serde_json::Value>,
    configs: Vec<StudyEntry>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct StudyEntry {
    label: String,
    #[serde(default = "default_mask")]
    mask: String,
    params: DesignParams,
    blrm: Option<BlrmContext>,
}

fn default_reps() -> usize {
    1000
}
fn default_seed() -> u64 {
    1
}
fn all_scenarios() -> Vec<serde_json::Value> {
    vec!["all".into()]
}
fn default_mask() -> String {
    "band".into()
}

/// Offline trial file for `next-dose` and `select-mtc`. Either `state` (a full
/// trial state) or `cohorts` (outcomes in order, replayed through the engine).
#[derive(Deserialize)]
struct TrialFile {
    params: Option<DesignParams>,
    grid: Option<DoseGrid>,
    mask: Option<MaskSpec>,
    #[serde(default)]
    seed: u64,
    state: Option<TrialState>,
    cohorts: Option<Vec<CohortLine>>,
    blrm: Option<BlrmContext>,
}

#[derive(Deserialize)]
struct CohortLine {
    at: Option<Combo>,
    dlt: u32,
}

struct Offline {
    params: DesignParams,
    grid: DoseGrid,
    mask: SubsetMask,
    seed: u64,
    blrm: Option<BlrmContext>,
}

#[derive(Serialize)]
struct NextDose {
    status: boincomb::TrialStatus,
    next: Option<Combo>,
    label: Option<String>,
    decision: Option<Decision>,
    state: TrialState,
}

fn load_trial(path: &Path) -> Result<(Offline, TrialFile)> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let file: TrialFile = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let params = match &file.params {
        Some(p) => p.clone(),
        None => DesignParams::standard(0.3)?,
    };
    let grid = file.grid.clone().unwrap_or_else(DoseGrid::standard);
    let mask = resolve_mask(&grid, file.mask.clone())?;
    let blrm = file
        .blrm
        .clone()
        .or_else(|| (params.design == Design::BoinCb).then(BlrmContext::default));
    Ok((
        Offline {
            params,
            grid,
            mask,
            seed: file.seed,
            blrm,
        },
        file,
    ))
}

impl Offline {
    /// Replay cohorts in order with per-cohort seeds, as the service does.
    fn replay(&self, cohorts: &[CohortLine]) -> Result<(TrialState, Option<Decision>)> {
        let mut state = TrialState::new(&self.grid);
        let mut last = None;
        for (k, line) in cohorts.iter().enumerate() {
            if !state.status.is_running() {
                bail!("cohort {} comes after the trial stopped ({:?})", k + 1, state.status);
            }
            if let Some(at) = line.at {
                state.current = at;
            }
            let treated = state.apply_cohort(&self.mask, state.current, line.dlt, self.params.cohort_size)?;
            let mut rng = ChaCha8Rng::seed_from_u64(child_seed(self.seed, k as u64, 0, 0));
            let d = decide_next(&treated, &self.grid, &self.mask, &self.params, self.blrm.as_ref(), &mut rng)?;
            state = replay_step(&treated, &self.grid, &self.mask, &self.params, &d)?;
            last = Some(d);
        }
        Ok((state, last))
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Boundaries { phi, phi1, phi2, json } => {
            let (le, ld) = lambda_boundaries(phi, phi1.unwrap_or(0.6 * phi), phi2.unwrap_or(1.4 * phi))?;
            if json {
                outln!("{}", serde_json::json!({"lambda_e": le, "lambda_d": ld}));
            } else {
                outln!("lambda_e = {le:.6}\nlambda_d = {ld:.6}");
            }
        }
        Command::Table { design, n_max, json } => {
            let p = design.params()?;
            let t = decision_table(&p, n_max)?;
            if json {
                outln!("{}", serde_json::to_string_pretty(&t)?);
            } else {
                outln!("lambda_e = {:.4}, lambda_d = {:.4}, epsilon = {}", t.lambda_e, t.lambda_d, p.epsilon);
                outln!("{:>4} {:>14} {:>17} {:>15}", "n", "escalate y <=", "de-escalate y >=", "eliminate y >=");
                for r in t.rows.iter().filter(|r| r.n % p.cohort_size == 0) {
                    let elim = r.eliminate_if_y_ge.map_or("-".to_string(), |y| y.to_string());
                    outln!("{:>4} {:>14} {:>17} {:>15}", r.n, r.escalate_if_y_le, r.deescalate_if_y_ge, elim);
                }
            }
        }
        Command::Simulate {
            scenario,
            mask,
            design,
            reps,
            seed,
            threads,
            mcmc,
            out,
            keep_trials,
        } => {
            let params = design.params()?;
            let scenarios = scenarios_from(&scenario)?;
            let grid = &scenarios[0].grid;
            if scenarios.iter().any(|s| &s.grid != grid) {
                bail!("all scenarios in one run must share a dose grid");
            }
            let config = StudyConfig {
                label: format!("{}-{}", params.design.name(), Path::new(&mask).file_stem().unwrap_or_default().to_string_lossy()),
                mask: mask_for(grid, &mask)?,
                blrm: mcmc.context(params.design),
                params,
            };
            let report = run_matrix(&scenarios, &[config], reps, seed, threads, keep_trials)?;
            save_report(&report, out.as_deref())?;
        }
        Command::SimulateMatrix { config, out, threads } => {
            let text = fs::read_to_string(&config).with_context(|| format!("reading {}", config.display()))?;
            let study: StudyFile = serde_json::from_str(&text).with_context(|| format!("parsing {}", config.display()))?;
            let names: Vec<String> = study
                .scenarios
                .iter()
                .map(|v| v.as_str().map(String::from).unwrap_or_else(|| v.to_string()))
                .collect();
            let scenarios = scenarios_from(&names)?;
            let grid = &scenarios[0].grid;
            let configs = study
                .configs
                .into_iter()
                .map(|c| {
                    Ok(StudyConfig {
                        mask: mask_for(grid, &c.mask)?,
                        blrm: c.blrm.or_else(|| (c.params.design == Design::BoinCb).then(BlrmContext::default)),
                        label: c.label,
                        params: c.params,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let threads = threads.or(study.threads).unwrap_or_else(default_threads);
            let report = run_matrix(&scenarios, &configs, study.reps, study.seed, threads, study.keep_trials)?;
            save_report(&report, out.as_deref())?;
        }
        Command::Report { input, format, metric, out } => {
            let text = fs::read_to_string(&input).with_context(|| format!("reading {}", input.display()))?;
            let report = StudyReport::from_json(&text)?;
            let rendered = match format {
                Format::Table => render_table(&report)?.text,
                Format::Csv => render_table(&report)?.csv,
                Format::Figure => render_figure(&report, metric.parse::<Metric>()?)?,
            };
            write_or_print(out.as_deref(), &rendered)?;
        }
        Command::SelectMtc { state } => {
            let (t, file) = load_trial(&state)?;
            let s = match (file.state, file.cohorts) {
                (Some(s), _) => s,
                (None, Some(c)) => t.replay(&c)?.0,
                (None, None) => bail!("trial file needs `state` or `cohorts`"),
            };
            s.validate(&t.grid, &t.mask)?;
            let fit = fit_isotonic(&s, &t.mask)?;
            let mut rng = ChaCha8Rng::seed_from_u64(child_seed(t.seed, u64::MAX, 0, 0));
            let sel = select_mtc(&fit, &s, &t.params, &mut rng)?;
            outln!("{:<8} {:>4} {:>4} {:>9}", "combo", "n", "y", "estimate");
            for (c, e) in fit.iter() {
                let mark = if s.is_eliminated(c) { " eliminated" } else { "" };
                outln!("{:<8} {:>4} {:>4} {:>9.4}{mark}", c.to_string(), s.n_at(c), s.y_at(c), e);
            }
            match sel {
                Some(c) => outln!("selected {c} {}", t.grid.label(c)),
                None => outln!("no combination selected"),
            }
        }
        Command::NextDose { state } => {
            let (t, file) = load_trial(&state)?;
            let (s, decision) = match (file.state, file.cohorts) {
                // a state whose latest cohort still awaits its decision
                (Some(s), _) => {
                    s.validate(&t.grid, &t.mask)?;
                    let mut rng = ChaCha8Rng::seed_from_u64(child_seed(t.seed, s.cohort_log.len().saturating_sub(1) as u64, 0, 0));
                    let d = decide_next(&s, &t.grid, &t.mask, &t.params, t.blrm.as_ref(), &mut rng)?;
                    (replay_step(&s, &t.grid, &t.mask, &t.params, &d)?, Some(d))
                }
                (None, Some(c)) => t.replay(&c)?,
                (None, None) => bail!("trial file needs `state` or `cohorts`"),
            };
            let next = s.status.is_running().then_some(s.current);
            let view = NextDose {
                status: s.status,
                next,
                label: next.map(|c| t.grid.label(c)),
                decision,
                state: s,
            };
            outln!("{}", serde_json::to_string_pretty(&view)?);
        }
        Command::Serve {
            port,
            host,
            data_dir,
            token,
        } => {
            let addr: SocketAddr = format!("{host}:{port}").parse().context("bad host/port")?;
            let rt = tokio::runtime::Runtime::new()?;
            eprintln!("serving on http://{addr}, data in {}", data_dir.display());
            rt.block_on(boincomb_service::serve(addr, &data_dir, token))?;
        }
    }
    Ok(())
}

fn main() {
    if let Err(e) = run(Cli::parse()) {
        let closed = e
            .downcast_ref::<std::io::Error>()
            .is_some_and(|io| io.kind() == std::io::ErrorKind::BrokenPipe);
        if closed {
            return;
        }
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
