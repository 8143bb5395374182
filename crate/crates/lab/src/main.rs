use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use derl::config::SEED_ENV;
use derl::experiment::{mean, RunResult};
use derl::export::{export_svg, write_runs};
use derl::format::{self, fmt_num};
use derl::{load_config, ExperimentConfig, LabError};
use derl_core::ops::{derpi, DerpiConfig};
use derl_core::verify;

/// Distribution-entropy-regularized RL experiments.
#[derive(Parser)]
#[command(name = "derl", version, after_help = concat!(
    "Exit codes: 0 success, 1 property failure or runtime error, 2 configuration error.\n",
    "Set DERL_SEED=<base> to replace a configuration's seeds by base, base+1, ..."
))]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the property-certificate suite.
    Verify {
        #[arg(long, default_value_t = 2024)]
        seed: u64,
        /// Print CSV instead of a table.
        #[arg(long)]
        csv: bool,
    },
    /// Train the configured agent once per seed and write CSV files.
    Run { config: PathBuf },
    /// Train the mixed-target categorical agent at several mixing proportions.
    SweepEps {
        config: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "0,0.25,0.5,0.75,1")]
        eps: Vec<f64>,
    },
    /// Train the four actor-critic variants.
    AblateAc { config: PathBuf },
    /// Render plots from the curve CSV files in a directory.
    Export {
        dir: PathBuf,
        #[arg(long, required = true)]
        svg: bool,
    },
    /// Solve the configured environment exactly with regularized policy iteration.
    Derpi {
        config: PathBuf,
        #[arg(long)]
        lambda: Option<f64>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config_error() { 2 } else { 1 })
        }
    }
}

fn dispatch(command: Command) -> derl::Result<ExitCode> {
    match command {
        Command::Verify { seed, csv } => {
            let reports = verify::run_suite(seed)?;
            print!("{}", if csv { format::report_csv(&reports) } else { format::report_table(&reports) });
            let ok = reports.iter().all(|r| r.passed());
            Ok(if ok { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
        Command::Run { config } => {
            let cfg = configure(&config)?;
            let runs = derl::run_experiment(&cfg)?;
            summarize(&runs);
            save(&cfg, &runs)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::SweepEps { config, eps } => {
            let cfg = configure(&config)?;
            let table = derl::sweep_epsilon(&cfg, &eps)?;
            summarize(&table.runs);
            let dir = save(&cfg, &table.runs)?;
            let mut csv = String::from("epsilon,seed,auc\n");
            for row in &table.rows {
                csv.push_str(&format!("{},{},{}\n", fmt_num(row.epsilon), row.seed, fmt_num(row.auc)));
            }
            let path = dir.join("sweep.csv");
            std::fs::write(&path, csv).map_err(|e| LabError::Io { path: path.clone(), source: e })?;
            for (e, m) in &table.means {
                println!("epsilon {e:<6} mean auc {m:.4}");
            }
            println!("spearman(epsilon, mean auc) = {:.4}", table.spearman);
            Ok(ExitCode::SUCCESS)
        }
        Command::AblateAc { config } => {
            let cfg = configure(&config)?;
            let groups = derl::ablate_ac(&cfg)?;
            let runs: Vec<RunResult> = groups.iter().flat_map(|(_, r)| r.iter().cloned()).collect();
            summarize(&runs);
            save(&cfg, &runs)?;
            for (_, rs) in &groups {
                let aucs: Vec<f64> = rs.iter().map(|r| r.record.auc()).collect();
                println!("{:<10} mean auc {:.4}", rs[0].label, mean(&aucs));
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Export { dir, svg } => {
            debug_assert!(svg);
            let path = export_svg(&dir)?;
            println!("wrote {}", path.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Derpi { config, lambda } => {
            let cfg = configure(&config)?;
            let env = cfg.build_env()?;
            let mut dc = DerpiConfig::new(lambda.unwrap_or(cfg.agent.lambda));
            dc.epsilon = cfg.agent.epsilon();
            dc.mu_source = cfg.agent.mu_source;
            let result = derpi(&env, &dc)?;
            let dir = cfg.output.join(&cfg.name);
            std::fs::create_dir_all(&dir).map_err(|e| LabError::Io { path: dir.clone(), source: e })?;
            let files = [
                ("mdp.txt", format::write_mdp(&env)),
                ("q.txt", format::write_qtable(&result.q)),
                ("z.txt", format::write_dist_table(&result.z)),
                ("trace.csv", format::write_trace_csv(&result.trace)),
            ];
            for (name, text) in files {
                let path = dir.join(name);
                std::fs::write(&path, text).map_err(|e| LabError::Io { path: path.clone(), source: e })?;
            }
            println!(
                "policy {:?} after {} evaluations ({} clipped decompositions); wrote {}",
                result.policy.greedy_actions(),
                result.trace.len(),
                result.clipped,
                dir.display()
            );
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn configure(path: &Path) -> derl::Result<ExperimentConfig> {
    let mut cfg = load_config(path)?;
    cfg.apply_seed_override()?;
    if std::env::var_os(SEED_ENV).is_some() {
        eprintln!("{SEED_ENV} set: seeds {:?}", cfg.seeds);
    }
    Ok(cfg)
}

fn summarize(runs: &[RunResult]) {
    for r in runs {
        let last = r.record.evals.last().map_or(f64::NAN, |e| e.return_mean);
        println!(
            "{:<18} seed {:<4} auc {:>8.4} final {:>8.4} clipped {:<6} {:.2?}",
            r.label,
            r.seed(),
            r.record.auc(),
            last,
            r.record.clipped,
            r.wall_time
        );
    }
}

fn save(cfg: &ExperimentConfig, runs: &[RunResult]) -> derl::Result<PathBuf> {
    let dir = cfg.output.join(&cfg.name);
    write_runs(&dir, &cfg.name, &cfg.dump(), runs)?;
    println!("wrote {}", dir.display());
    Ok(dir)
}
