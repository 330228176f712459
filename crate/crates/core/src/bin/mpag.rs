use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use mpag::collab::{adversarial_families, empirical_distortion, fit_distortion, run_mechanism, ProfileFamily, StatelessProfile};
use mpag::collegiality::DEFAULT_BUDGET;
use mpag::experiment::{run_beta_sweep, run_fig1, Scenario, Setup};
use mpag::plurality::{classify_samples, manipulable_fraction, FractionMethod};
use mpag::Error;

#[derive(Parser)]
#[command(name = "mpag", about = "Strategic demonstrations, collegial mechanisms and collaboration experiments")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Scenario file (TOML, or JSON by extension). Defaults to the built-in gridworld.
    #[arg(long, global = true)]
    scenario: Option<PathBuf>,
    /// Output directory. Defaults to the scenario's `out`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides the scenario's seeds with a single seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Honest versus strategic demonstration, recovered rewards and robot behavior.
    Fig1,
    /// Returns and social welfare across the β grid.
    Sweep,
    /// Honesty thresholds and exhaustive straightforwardness checks.
    Thresholds {
        #[arg(long, default_value_t = DEFAULT_BUDGET)]
        budget: u128,
    },
    /// The strategic human's best response against honest others.
    Bestresponse {
        #[arg(long)]
        beta: Option<f64>,
    },
    /// Manipulable fraction of the utility simplex under plurality voting.
    Plurality {
        #[arg(long, default_value_t = 0.0)]
        beta: f64,
        #[arg(long, default_value_t = 100_000)]
        samples: u64,
        /// Integrate over a barycentric mesh with this many subdivisions instead of sampling.
        #[arg(long)]
        mesh: Option<usize>,
        /// Also write every sample and its classification.
        #[arg(long)]
        per_sample: bool,
    },
    /// Distortion of the score-based collaboration mechanism.
    Collab {
        #[arg(long = "M", default_value_t = 8)]
        m: usize,
        #[arg(long = "N", default_value_t = 3)]
        n: usize,
        /// A family (dirichlet, unanimous, antagonistic, single-supporter, all) or a CSV file of rewards.
        #[arg(long, default_value = "all")]
        profiles: String,
        #[arg(long, default_value_t = 1000)]
        runs: usize,
        /// Random profiles in the dirichlet family.
        #[arg(long, default_value_t = 200)]
        dirichlet: usize,
        /// Sweep M over 2, 4, ..., 64 and fit the growth.
        #[arg(long)]
        sweep: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(j) = cli.common.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(j).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::SolverNotConverged { .. } => 3,
        _ => 2,
    }
}

fn scenario(common: &Common) -> mpag::Result<Scenario> {
    let mut s = match &common.scenario {
        Some(p) => Scenario::load(p)?,
        None => Scenario::default_gridworld(),
    };
    if let Some(seed) = common.seed {
        s.seeds = vec![seed];
    }
    Ok(s)
}

fn out_dir(common: &Common, fallback: &Path) -> PathBuf {
    common.out.clone().unwrap_or_else(|| fallback.to_path_buf())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> mpag::Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn print_json<T: Serialize>(value: &T) -> mpag::Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn run(cli: &Cli) -> mpag::Result<()> {
    let common = &cli.common;
    match &cli.command {
        Command::Fig1 => {
            let setup = Setup::new(scenario(common)?)?;
            let dir = out_dir(common, &setup.scenario.out);
            let art = run_fig1(&setup, setup.scenario.seeds[0])?;
            art.write(&dir)?;
            print!("{}", art.rendering);
        }
        Command::Sweep => {
            let setup = Setup::new(scenario(common)?)?;
            let dir = out_dir(common, &setup.scenario.out);
            let betas = setup.betas(setup.scenario.seeds[0])?;
            let result = run_beta_sweep(&setup, &betas)?;
            result.write(&dir)?;
            let failed = result.rows.iter().filter(|r| r.error.is_some()).count();
            println!("{} rows written to {} ({failed} failed)", result.rows.len(), dir.join("sweep.csv").display());
        }
        Command::Thresholds { budget } => {
            let setup = Setup::new(scenario(common)?)?;
            let dir = out_dir(common, &setup.scenario.out);
            let summary = setup.thresholds(setup.scenario.seeds[0])?;
            let betas = match &setup.scenario.betas {
                Some(b) => b.clone(),
                None => vec![0.0, summary.analytic + 0.5],
            };
            let table = setup.straightforward_table(&betas, *budget)?;
            write_json(&dir.join("thresholds.json"), &summary)?;
            let mut w = csv::Writer::from_path(dir.join("straightforward.csv"))?;
            for row in &table {
                w.serialize(row)?;
            }
            w.flush()?;
            print_json(&summary)?;
            let mut out = std::io::stdout().lock();
            writeln!(out, "{:<22} {:<8} {:>10}  result", "mechanism", "human", "beta")?;
            for r in &table {
                let verdict = match r.straightforward {
                    Some(true) => "pass",
                    Some(false) => "fail",
                    None => "skipped (budget)",
                };
                writeln!(out, "{:<22} {:<8} {:>10.4}  {verdict}", r.mechanism, r.human, r.beta)?;
            }
        }
        Command::Bestresponse { beta } => {
            let setup = Setup::new(scenario(common)?)?;
            let dir = out_dir(common, &setup.scenario.out);
            let seed = setup.scenario.seeds[0];
            let beta = beta.unwrap_or(setup.scenario.fig1_beta);
            let h = setup.strategic_index()?;
            let honest = setup.honest_trajectories(seed)?;
            let others: Vec<_> = honest.iter().enumerate().filter(|(k, _)| *k != h).map(|(_, t)| t.clone()).collect();
            let sol = setup.best_response(h, &others, beta, seed)?;
            #[derive(Serialize)]
            struct Summary<'a> {
                human: &'a str,
                beta: f64,
                target: &'a [f64],
                objective: f64,
                trajectory_objective: f64,
                own_value: f64,
                stats: &'a mpag::best_response::SolverStats,
                trajectory: &'a mpag::mdp::Trajectory,
                honest: &'a mpag::mdp::Trajectory,
            }
            let summary = Summary {
                human: &setup.scenario.humans[h].name,
                beta,
                target: &sol.target_vector,
                objective: sol.objective_value,
                trajectory_objective: sol.trajectory_objective,
                own_value: sol.own_value,
                stats: &sol.solver_stats,
                trajectory: &sol.trajectory,
                honest: &honest[h],
            };
            write_json(&dir.join("bestresponse.json"), &summary)?;
            print_json(&summary)?;
            if let Some(g) = setup.scenario.env.gridworld() {
                println!("{}", g.render_trajectory(&sol.trajectory));
            }
        }
        Command::Plurality { beta, samples, mesh, per_sample } => {
            let seed = common.seed.unwrap_or(0);
            let dir = out_dir(common, Path::new("out"));
            let method = match mesh {
                Some(n) => FractionMethod::ExactMesh { subdivisions: *n },
                None => FractionMethod::MonteCarlo { samples: *samples, seed },
            };
            let est = manipulable_fraction(*beta, method)?;
            write_json(&dir.join(format!("plurality_beta{beta}.json")), &est)?;
            if *per_sample {
                let mut w = csv::Writer::from_path(dir.join(format!("plurality_beta{beta}_samples.csv")))?;
                w.write_record(["u1", "u2", "u3", "manipulable"])?;
                for (u, m) in classify_samples(*beta, *samples, seed) {
                    let v = u.values();
                    w.write_record([v[0].to_string(), v[1].to_string(), v[2].to_string(), m.to_string()])?;
                }
                w.flush()?;
            }
            print_json(&est)?;
        }
        Command::Collab { m, n, profiles, runs, dirichlet, sweep } => {
            let seed = common.seed.unwrap_or(0);
            let dir = out_dir(common, Path::new("out"));
            fs::create_dir_all(&dir)?;
            let file_profile = if Path::new(profiles).is_file() { Some(read_profile(Path::new(profiles))?) } else { None };
            let families = match profiles.as_str() {
                _ if file_profile.is_some() => Vec::new(),
                "all" => adversarial_families(*dirichlet, seed),
                "dirichlet" => vec![ProfileFamily::Dirichlet { count: *dirichlet, seed }],
                "unanimous" => vec![ProfileFamily::Unanimous],
                "antagonistic" => vec![ProfileFamily::Antagonistic],
                "single-supporter" => vec![ProfileFamily::SingleSupporter],
                other => return Err(Error::Invalid(format!("unknown profile family or file: {other}"))),
            };
            let arms: Vec<usize> = if *sweep { vec![2, 4, 8, 16, 32, 64] } else { vec![*m] };

            let mut points = Vec::new();
            let mut traces = Vec::new();
            for &arms in &arms {
                let point = match &file_profile {
                    Some(p) => {
                        let w = mpag::collab::estimate_welfare(p, &p.truthful_agents(), *runs, seed)?;
                        mpag::collab::DistortionPoint {
                            num_arms: p.num_arms(),
                            num_humans: p.num_humans(),
                            runs: *runs,
                            distortion: p.optimal_welfare() / w,
                            worst_family: "file".into(),
                            worst_index: 0,
                            profiles: 1,
                            excluded: usize::from(w <= 0.0),
                        }
                    }
                    None => empirical_distortion(&families, arms, *n, *runs, seed)?,
                };
                points.push(point);
                let sample: Vec<StatelessProfile> = match &file_profile {
                    Some(p) => vec![p.clone()],
                    None => families.iter().filter_map(|f| f.generate(arms, *n).ok()?.into_iter().next()).collect(),
                };
                for p in sample {
                    traces.push(run_mechanism(&p, &p.truthful_agents(), seed)?);
                }
            }
            let mut w = csv::Writer::from_path(dir.join("distortion.csv"))?;
            for p in &points {
                w.serialize(p)?;
            }
            w.flush()?;
            let mut f = fs::File::create(dir.join("traces.jsonl"))?;
            for t in &traces {
                writeln!(f, "{}", serde_json::to_string(t)?)?;
            }
            if points.len() >= 2 {
                let fit = fit_distortion(&points)?;
                write_json(&dir.join("fit.json"), &fit)?;
                print_json(&fit)?;
            }
            print_json(&points)?;
        }
    }
    Ok(())
}

/// A headerless CSV: one row per human, one column per arm.
fn read_profile(path: &Path) -> mpag::Result<StatelessProfile> {
    let mut r = csv::ReaderBuilder::new().has_headers(false).from_path(path)?;
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|x| x.trim().parse::<f64>().map_err(|e| Error::Invalid(format!("{}: {e}", path.display()))))
            .collect::<mpag::Result<Vec<f64>>>()?;
        rows.push(row);
    }
    StatelessProfile::new(rows)
}
