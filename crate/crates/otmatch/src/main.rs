use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use otmatch::bench::{parse_instances, run_instance, scaling_sweep, SCALING_SIZES};
use otmatch::checkpoint::Checkpoint;
use otmatch::cluster::{cluster_cost, write_cost_csv};
use otmatch::config::TrainConfig;
use otmatch::runner::{run, write_dataset_csv, Trainer, CHECKPOINT_FILE};
use otmatch_core::cost::validate_metric;

/// Semi-supervised training with an optimal-transport consistency loss.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train from a config file; writes metrics.csv, timing.csv and checkpoint.json.
    Train {
        /// Flat `key = value` config; omitted keys take their defaults.
        config: Option<PathBuf>,
        /// Output directory.
        #[arg(long, default_value = "run")]
        out: PathBuf,
        /// Resume from this checkpoint instead of starting fresh (config is ignored).
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Stop after this many steps even if training is not finished.
        #[arg(long)]
        max_steps: Option<u64>,
        /// Also write the training set as `x0,…,y` CSV to this path.
        #[arg(long)]
        dump_data: Option<PathBuf>,
        /// Print the fully defaulted config and exit.
        #[arg(long)]
        print_config: bool,
    },
    /// Evaluate the teacher and student of a checkpoint on its test set.
    Eval {
        checkpoint: PathBuf,
    },
    /// Compare exact OT, Sinkhorn and the Dirac formula on JSON Lines instances.
    OtBench {
        /// One JSON object per line: {"mu": [...], "nu": [...], "cost": [...], "epsilon": 0.01}.
        instances: Option<PathBuf>,
        /// Time the Dirac formula for K in 4, 16, 64, 256 and fit the log-log slope.
        #[arg(long)]
        scaling: bool,
        /// Minimum seconds spent timing each solver call.
        #[arg(long, default_value_t = 0.01)]
        budget: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Cluster the cost matrix stored in a checkpoint.
    CostCluster {
        checkpoint: PathBuf,
        /// Output directory for dendrogram.json and cost.csv.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    match dispatch(Cli::parse().command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cmd: Command) -> anyhow::Result<ExitCode> {
    match cmd {
        Command::Train {
            config,
            out,
            resume,
            max_steps,
            dump_data,
            print_config,
        } => {
            let mut trainer = match &resume {
                Some(path) => Trainer::from_checkpoint(Checkpoint::load(path)?)?,
                None => {
                    let cfg = match &config {
                        Some(p) => TrainConfig::load(p)?,
                        None => TrainConfig::default(),
                    };
                    if print_config {
                        print!("{}", cfg.to_toml());
                        return Ok(ExitCode::SUCCESS);
                    }
                    Trainer::new(cfg)?
                }
            };
            if let Some(path) = dump_data {
                write_dataset_csv(&trainer.train, &path)?;
            }
            let summary = run(&mut trainer, &out, max_steps, resume.is_some())?;
            println!(
                "steps {} mean_step_seconds {:.6} eval_acc {}",
                summary.steps,
                summary.mean_step_seconds,
                summary.final_eval_acc.map_or("-".into(), |a| format!("{a:.4}"))
            );
            println!("checkpoint {}", out.join(CHECKPOINT_FILE).display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Eval { checkpoint } => {
            let trainer = Trainer::from_checkpoint(Checkpoint::load(&checkpoint)?)?;
            println!("step {}", trainer.state.step);
            println!("teacher_acc {:.6}", trainer.evaluate_teacher()?);
            println!("student_acc {:.6}", trainer.evaluate_student()?);
            Ok(ExitCode::SUCCESS)
        }
        Command::OtBench {
            instances,
            scaling,
            budget,
            seed,
        } => {
            if let Some(path) = instances {
                let text = std::fs::read_to_string(&path).with_context(|| path.display().to_string())?;
                let parsed = match parse_instances(&text) {
                    Ok(p) => p,
                    Err(e) => {
                        eprintln!("{}:{}: {}", path.display(), e.line, e.message);
                        return Ok(ExitCode::from(2));
                    }
                };
                for inst in &parsed {
                    println!("{}", serde_json::to_string(&run_instance(inst, budget))?);
                }
            }
            if scaling {
                println!("{}", serde_json::to_string(&scaling_sweep(&SCALING_SIZES, 5, budget, seed))?);
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::CostCluster { checkpoint, out } => {
            let ck = Checkpoint::load(&checkpoint)?;
            let cost = &ck.state.cost.values;
            std::fs::create_dir_all(&out).with_context(|| out.display().to_string())?;
            let result = cluster_cost(cost)?;
            let tree_path = out.join("dendrogram.json");
            std::fs::write(&tree_path, serde_json::to_string_pretty(&result.tree)?)
                .with_context(|| tree_path.display().to_string())?;
            let labels: Vec<String> = (0..cost.rows()).map(|i| i.to_string()).collect();
            write_cost_csv(cost, &labels, &out.join("cost.csv"))?;
            let report = validate_metric(cost, 1e-9);
            println!("triangle_violations {}", report.triangle_violations.len());
            let inversions = result.dendrogram.inversions();
            if inversions.is_empty() {
                println!("merge heights nondecreasing");
                Ok(ExitCode::SUCCESS)
            } else {
                eprintln!("merge height inversions at steps {inversions:?}");
                Ok(ExitCode::FAILURE)
            }
        }
    }
}
