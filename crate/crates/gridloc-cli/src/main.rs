//! `gridloc` command line: synthetic data generation, training, evaluation,
//! comparison runs, plotting, oracle dumps and gradient checks.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
//! failure. Logging via `GRIDLOC_LOG={error,info,debug}`.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use gridloc::agent_dqn::evaluate;
use gridloc::baseline::baseline_accuracy;
use gridloc::config::{MethodSel, RunConfig};
use gridloc::data_io::{gen_synthetic, split, write_dataset, SynthConfig};
use gridloc::error::Error;
use gridloc::experiment::{load_split, probe_spec, run_experiment};
use gridloc::metrics::{Method, RunMetrics};
use gridloc::neuro::checkpoint::load_checkpoint;
use gridloc::neuro::gradcheck::{gradient_check, FD_PERTURBATION};
use gridloc::neuro::{NetSpec, Network};
use gridloc::oracle::value_iteration;
use gridloc::plot::plot_svg;

#[derive(Parser)]
#[command(name = "gridloc", version, about = "Gridworld Q-learning lesion localization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by config-driven subcommands; flags override file values.
#[derive(Args, Clone, Default)]
struct ConfigArgs {
    /// Config file of `key = value` lines
    #[arg(long)]
    config: Option<PathBuf>,
    /// RNG seed for the whole run
    #[arg(long)]
    seed: Option<u64>,
    /// Dataset root containing train/ and test/
    #[arg(long)]
    data: Option<PathBuf>,
    /// Output directory for artifacts
    #[arg(long)]
    out: Option<PathBuf>,
    /// Training episodes (DQN) / epochs stay as configured
    #[arg(long)]
    episodes: Option<usize>,
    /// Integer render downscale factor
    #[arg(long)]
    scale: Option<usize>,
    /// Which method(s) to run
    #[arg(long, value_parser = ["dqn", "supervised", "both"])]
    method: Option<String>,
}

impl ConfigArgs {
    fn load(&self) -> gridloc::Result<RunConfig> {
        let mut overrides: Vec<(String, String)> = Vec::new();
        let mut add = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                overrides.push((k.to_string(), v));
            }
        };
        add("seed", self.seed.map(|v| v.to_string()));
        add("data_dir", self.data.as_ref().map(|p| p.display().to_string()));
        add("out_dir", self.out.as_ref().map(|p| p.display().to_string()));
        add("episodes", self.episodes.map(|v| v.to_string()));
        add("scale", self.scale.map(|v| v.to_string()));
        add("method", self.method.clone());
        RunConfig::load(self.config.as_deref(), &overrides)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset split into train/ and test/
    GenSynthetic {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Total image count (split in half between train and test)
        #[arg(long, default_value_t = 60)]
        count: usize,
    },
    /// Train the Q network and write metrics + checkpoint
    TrainDqn {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Train the supervised keypoint baseline
    TrainBaseline {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Evaluate a checkpoint on the test split
    Eval {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Checkpoint path (defaults to <out>/dqn.ckpt or baseline.ckpt)
        #[arg(long)]
        ckpt: Option<PathBuf>,
    },
    /// Train both methods on the identical split and write the full report
    Compare {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Re-render the comparison SVG from metrics CSVs in <out>
    Plot {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Solve one training image exactly and dump its Q table as CSV
    OracleDump {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Case id (defaults to the first training image)
        #[arg(long)]
        case: Option<String>,
    },
    /// Verify analytic gradients against central finite differences
    Gradcheck {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Check every parameter instead of a seeded subsample
        #[arg(long)]
        exhaustive: bool,
        /// Max relative error tolerance
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(
        env_logger::Env::new().filter_or("GRIDLOC_LOG", "error"),
    )
    .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> gridloc::Result<()> {
    match cli.command {
        Command::GenSynthetic { cfg, count } => {
            let cfg = cfg.load()?;
            let synth = SynthConfig {
                count,
                seed: cfg.seed,
                block_size: cfg.block_size,
                ..SynthConfig::default()
            };
            if count < 2 {
                return Err(Error::Config("need at least 2 images to split".into()));
            }
            let ds = gen_synthetic(&synth, &cfg.data_dir)?;
            let spec = ds.spec;
            let (train, test) = split(ds, count / 2, cfg.seed)?;
            write_dataset(&train.items, &spec, &cfg.data_dir.join("train"))?;
            write_dataset(&test.items, &spec, &cfg.data_dir.join("test"))?;
            println!(
                "generated {count} cases into {} ({} train / {} test)",
                cfg.data_dir.display(),
                train.len(),
                test.len()
            );
            Ok(())
        }
        Command::TrainDqn { cfg } => {
            let mut cfg = cfg.load()?;
            cfg.method = MethodSel::Dqn;
            let out = run_experiment(&cfg)?;
            let last = out.dqn.as_ref().and_then(|m| m.rows.last().cloned());
            if let Some(row) = last {
                println!("final test accuracy: {:.4}", row.test_accuracy);
            }
            println!("artifacts in {}", cfg.out_dir.display());
            Ok(())
        }
        Command::TrainBaseline { cfg } => {
            let mut cfg = cfg.load()?;
            cfg.method = MethodSel::Supervised;
            let out = run_experiment(&cfg)?;
            let last = out.baseline.as_ref().and_then(|m| m.rows.last().cloned());
            if let Some(row) = last {
                println!("final test accuracy: {:.4}", row.test_accuracy);
            }
            println!("artifacts in {}", cfg.out_dir.display());
            Ok(())
        }
        Command::Eval { cfg, ckpt } => {
            let cfg = cfg.load()?;
            let (_, test_ds) = load_split(&cfg)?;
            let (h, w) = (
                test_ds.spec.image_height / cfg.scale,
                test_ds.spec.image_width / cfg.scale,
            );
            let is_supervised = matches!(cfg.method, MethodSel::Supervised);
            let path = ckpt.unwrap_or_else(|| {
                cfg.out_dir.join(if is_supervised { "baseline.ckpt" } else { "dqn.ckpt" })
            });
            if is_supervised {
                let spec = NetSpec::keypoint(h, w);
                let params = load_checkpoint(&path, &spec)?;
                let net = Network { spec, params };
                let acc = baseline_accuracy(&net, &test_ds, cfg.env_opts())?;
                println!("supervised test accuracy: {acc:.4}");
            } else {
                let spec = NetSpec::dqn(h, w);
                let params = load_checkpoint(&path, &spec)?;
                let net = Network { spec, params };
                let acc = evaluate(&net, &test_ds, cfg.steps_per_episode, cfg.env_opts())?;
                println!("dqn test accuracy: {acc:.4}");
            }
            Ok(())
        }
        Command::Compare { cfg } => {
            let cfg = cfg.load()?;
            let out = run_experiment(&cfg)?;
            print!("{}", out.report);
            println!("artifacts in {}", cfg.out_dir.display());
            Ok(())
        }
        Command::Plot { cfg } => {
            let cfg = cfg.load()?;
            let read = |name: &str, method: Method| -> Option<RunMetrics> {
                RunMetrics::read_csv(&cfg.out_dir.join(name), method).ok()
            };
            let dqn = read("dqn_metrics.csv", Method::Dqn);
            let baseline = read("baseline_metrics.csv", Method::Supervised);
            let path = cfg.out_dir.join("plot.svg");
            plot_svg(dqn.as_ref(), baseline.as_ref(), &path)?;
            println!("wrote {}", path.display());
            Ok(())
        }
        Command::OracleDump { cfg, case } => {
            let cfg = cfg.load()?;
            let (train_ds, _) = load_split(&cfg)?;
            let item = match &case {
                Some(id) => train_ds
                    .items
                    .iter()
                    .find(|i| &i.case_id == id)
                    .ok_or_else(|| Error::Data(format!("case `{id}` not found")))?,
                None => &train_ds.items[0],
            };
            let env = item.to_env(train_ds.spec, cfg.env_opts())?;
            let q = value_iteration(&env, cfg.gamma, 1e-9);
            std::fs::create_dir_all(&cfg.out_dir)
                .map_err(|e| Error::Data(format!("{}: {e}", cfg.out_dir.display())))?;
            let path = cfg.out_dir.join(format!("qtable_{}.csv", item.case_id));
            q.write_csv(&path)?;
            println!("wrote {}", path.display());
            Ok(())
        }
        Command::Gradcheck {
            cfg,
            exhaustive,
            tolerance,
        } => {
            let cfg = cfg.load()?;
            let side = 240 / cfg.scale;
            let spec = NetSpec::dqn(side, side);
            let samples = if exhaustive { None } else { Some(64) };
            let report = gradient_check(&spec, cfg.seed, samples, FD_PERTURBATION);
            println!("{report}");
            if report.passes(tolerance) {
                println!("gradient check passed (tolerance {tolerance:e})");
                Ok(())
            } else {
                Err(Error::Numerical(format!(
                    "gradient check failed: max rel err {:.3e} >= {tolerance:e}",
                    report.max_rel_err
                )))
            }
        }
    }
}
