//! End-to-end orchestration: train both methods on the identical split,
//! persist metrics/checkpoints/plot, and produce the comparison report.

use std::fmt::Write as _;
use std::path::Path;

use crate::baseline::{train_baseline, BaselineOutcome, EpochLoss};
use crate::config::RunConfig;
use crate::data_io::{load_dataset, Dataset};
use crate::error::{io_err, Error, Result};
use crate::grid_env::GridSpec;
use crate::metrics::{Method, RunMetrics};
use crate::neuro::checkpoint::save_checkpoint;
use crate::plot::plot_svg;
use crate::stats::{linfit, mean, t_test};

pub struct ExperimentOutput {
    pub dqn: Option<RunMetrics>,
    pub baseline: Option<RunMetrics>,
    pub baseline_losses: Option<Vec<EpochLoss>>,
    pub report: String,
}

/// Load `<data>/train` and `<data>/test` with the configured grid geometry.
pub fn load_split(cfg: &RunConfig) -> Result<(Dataset, Dataset)> {
    let spec = probe_spec(&cfg.data_dir.join("train"), cfg.block_size)?;
    let train = load_dataset(&cfg.data_dir.join("train"), spec)?;
    let test = load_dataset(&cfg.data_dir.join("test"), spec)?;
    Ok((train, test))
}

/// Infer the grid geometry from the first image in a dataset directory.
pub fn probe_spec(dir: &Path, block_size: usize) -> Result<GridSpec> {
    let mut names: Vec<_> = std::fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.to_string_lossy().ends_with("_img.png"))
        .collect();
    names.sort();
    let Some(first) = names.first() else {
        return Err(Error::Data(format!("no `*_img.png` files in {}", dir.display())));
    };
    let img = image::open(first)
        .map_err(|e| Error::Data(format!("{}: unreadable ({e})", first.display())))?;
    GridSpec::new(img.height() as usize, img.width() as usize, block_size)
}

/// Run the configured experiment end to end, writing all artifacts into
/// `cfg.out_dir`:
/// `dqn_metrics.csv`, `dqn.ckpt`, `baseline_metrics.csv`, `baseline.ckpt`,
/// `baseline_losses.csv`, `plot.svg`, `report.txt`.
pub fn run_experiment(cfg: &RunConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let (train_ds, test_ds) = load_split(cfg)?;
    std::fs::create_dir_all(&cfg.out_dir).map_err(io_err(&cfg.out_dir))?;

    let mut dqn_metrics = None;
    if cfg.method.includes_dqn() {
        let mut m = RunMetrics::new(Method::Dqn);
        let net = crate::agent_dqn::train(
            &train_ds,
            &test_ds,
            cfg.hyperparams(),
            cfg.env_opts(),
            &mut m,
        )?;
        m.write_csv(&cfg.out_dir.join("dqn_metrics.csv"))?;
        save_checkpoint(&net.params, &net.spec, &cfg.out_dir.join("dqn.ckpt"))?;
        dqn_metrics = Some(m);
    }

    let mut baseline_metrics = None;
    let mut baseline_losses = None;
    if cfg.method.includes_supervised() {
        let mut m = RunMetrics::new(Method::Supervised);
        let BaselineOutcome { net, losses } = train_baseline(
            &train_ds,
            &test_ds,
            cfg.baseline_params(),
            cfg.env_opts(),
            &mut m,
        )?;
        m.write_csv(&cfg.out_dir.join("baseline_metrics.csv"))?;
        save_checkpoint(&net.params, &net.spec, &cfg.out_dir.join("baseline.ckpt"))?;
        write_losses_csv(&losses, &cfg.out_dir.join("baseline_losses.csv"))?;
        baseline_metrics = Some(m);
        baseline_losses = Some(losses);
    }

    plot_svg(
        dqn_metrics.as_ref(),
        baseline_metrics.as_ref(),
        &cfg.out_dir.join("plot.svg"),
    )?;

    let report = report(
        cfg,
        dqn_metrics.as_ref(),
        baseline_metrics.as_ref(),
        baseline_losses.as_deref(),
    )?;
    std::fs::write(cfg.out_dir.join("report.txt"), &report)
        .map_err(io_err(cfg.out_dir.join("report.txt")))?;

    Ok(ExperimentOutput {
        dqn: dqn_metrics,
        baseline: baseline_metrics,
        baseline_losses,
        report,
    })
}

fn write_losses_csv(losses: &[EpochLoss], path: &Path) -> Result<()> {
    let mut text = String::from("epoch,train_mse,test_mse\n");
    for l in losses {
        writeln!(text, "{},{},{}", l.epoch, l.train_mse, l.test_mse).unwrap();
    }
    std::fs::write(path, text).map_err(io_err(path))
}

/// First epoch from which the test loss stays more than 10% above the train
/// loss for the rest of the run; the marker that the model has begun fitting
/// the training set specifically.
pub fn divergence_epoch(losses: &[EpochLoss]) -> Option<u32> {
    let diverged = |l: &EpochLoss| l.test_mse > l.train_mse * 1.10;
    let mut first = None;
    for l in losses {
        if diverged(l) {
            first.get_or_insert(l.epoch);
        } else {
            first = None;
        }
    }
    first
}

/// Summary over the last `window` rows of each series: means, fit slopes,
/// and the two-sample t-test between the two last-window accuracy samples.
pub fn report(
    cfg: &RunConfig,
    dqn: Option<&RunMetrics>,
    baseline: Option<&RunMetrics>,
    baseline_losses: Option<&[EpochLoss]>,
) -> Result<String> {
    let window = cfg.window;
    let mut text = String::new();
    writeln!(text, "comparison report").unwrap();
    writeln!(text, "=================").unwrap();
    let partial = dqn.is_none() || baseline.is_none();
    if partial {
        writeln!(text, "status: PARTIAL (one method missing)").unwrap();
    } else {
        writeln!(text, "status: full").unwrap();
    }
    writeln!(text).unwrap();

    let mut windows: Vec<Vec<f64>> = Vec::new();
    for (name, run) in [("dqn", dqn), ("supervised", baseline)] {
        let Some(run) = run else { continue };
        let accs = run.last_window_accuracies(window)?;
        let points: Vec<(f64, f64)> = run
            .rows
            .iter()
            .map(|r| (r.step as f64, r.test_accuracy))
            .collect();
        let (slope, intercept) = linfit(&points)?;
        writeln!(text, "[{name}]").unwrap();
        writeln!(text, "rows = {}", run.rows.len()).unwrap();
        writeln!(text, "last_{window}_mean_accuracy = {:.6}", mean(&accs)).unwrap();
        writeln!(text, "fit_slope = {slope:.8}").unwrap();
        writeln!(text, "fit_intercept = {intercept:.8}").unwrap();
        writeln!(text).unwrap();
        windows.push(accs);
    }

    if windows.len() == 2 {
        let (a, b) = (&windows[0], &windows[1]);
        writeln!(text, "[comparison]").unwrap();
        let var = |xs: &[f64]| crate::stats::sample_var(xs, mean(xs));
        if var(a) == 0.0 && var(b) == 0.0 && mean(a) == mean(b) {
            // constant identical windows: the degenerate limit t = 0, p = 1
            writeln!(text, "t = 0").unwrap();
            writeln!(text, "p = 1").unwrap();
        } else {
            let tt = t_test(a, b)?;
            writeln!(text, "t = {:.6}", tt.t).unwrap();
            writeln!(text, "df = {:.4}", tt.df).unwrap();
            writeln!(text, "p = {:.6e}", tt.p).unwrap();
        }
        writeln!(text).unwrap();
    }

    if let Some(losses) = baseline_losses {
        writeln!(text, "[supervised_losses]").unwrap();
        match divergence_epoch(losses) {
            Some(e) => writeln!(text, "train_test_divergence_epoch = {e}").unwrap(),
            None => writeln!(text, "train_test_divergence_epoch = none").unwrap(),
        }
        if let Some(last) = losses.last() {
            writeln!(text, "final_train_mse = {:.8}", last.train_mse).unwrap();
            writeln!(text, "final_test_mse = {:.8}", last.test_mse).unwrap();
        }
        writeln!(text).unwrap();
    }

    writeln!(text, "[config]").unwrap();
    text.push_str(&cfg.render());
    Ok(text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::MetricsRow;

    fn const_series(method: Method, n: usize, acc: f64) -> RunMetrics {
        let mut m = RunMetrics::new(method);
        for i in 0..n {
            m.push(MetricsRow {
                step: i as u32 + 1,
                epsilon: None,
                mean_reward: None,
                train_loss: None,
                test_accuracy: acc,
            });
        }
        m
    }

    #[test]
    fn constant_equal_series_report_t0_p1() {
        let cfg = RunConfig::default();
        let a = const_series(Method::Dqn, 30, 0.5);
        let b = const_series(Method::Supervised, 30, 0.5);
        let text = report(&cfg, Some(&a), Some(&b), None).unwrap();
        assert!(text.contains("t = 0"), "{text}");
        assert!(text.contains("p = 1"), "{text}");
        assert!(text.contains("last_20_mean_accuracy = 0.500000"));
    }

    #[test]
    fn window_longer_than_series_errors_mentioning_window() {
        let cfg = RunConfig::default();
        let a = const_series(Method::Dqn, 5, 0.5);
        let err = report(&cfg, Some(&a), None, None).unwrap_err();
        assert!(err.to_string().contains("window"), "{err}");
    }

    #[test]
    fn partial_report_is_marked() {
        let cfg = RunConfig::default();
        let a = const_series(Method::Dqn, 25, 0.75);
        let text = report(&cfg, Some(&a), None, None).unwrap();
        assert!(text.contains("PARTIAL"));
    }

    #[test]
    fn divergence_epoch_requires_persistence() {
        let mk = |pairs: &[(f64, f64)]| -> Vec<EpochLoss> {
            pairs
                .iter()
                .enumerate()
                .map(|(i, &(tr, te))| EpochLoss {
                    epoch: i as u32 + 1,
                    train_mse: tr,
                    test_mse: te,
                })
                .collect()
        };
        // dips below the 10% margin at epoch 2, diverges from epoch 3 on
        let losses = mk(&[(1.0, 1.05), (1.0, 1.08), (0.8, 1.0), (0.5, 1.0)]);
        assert_eq!(divergence_epoch(&losses), Some(3));
        let flat = mk(&[(1.0, 1.0), (0.9, 0.95)]);
        assert_eq!(divergence_epoch(&flat), None);
    }
}
