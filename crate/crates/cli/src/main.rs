use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use vestibular::harness::{
    self, curve_mean_std, ensemble_sweep, memory_csv, memory_for, random_search, report_csv, run_experiment_full,
    sweep_csv, timeseries_csv, trial_seeds, SearchSpace, DEFAULT_SEARCH_THRESHOLD,
};
use vestibular::{ExperimentConfig, ReadoutMatrix};

#[derive(Parser)]
#[command(name = "vrc", version, about = "Vestibular reservoir computing experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Flat key=value experiment configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (created if missing).
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads for ensembles (0 = all cores).
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    /// Independent trials for ensembles.
    #[arg(long, default_value_t = 20)]
    trials: usize,
    /// Extra key=value overrides applied after the config file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Write the normalised benchmark series.
    Generate(Common),
    /// Train and test one reservoir; writes report, readout and series.
    Train(Common),
    /// Closed-loop prediction from a saved readout.
    Predict {
        #[command(flatten)]
        common: Common,
        /// Readout CSV written by `train`.
        #[arg(long)]
        readout: PathBuf,
        /// Prediction horizon; defaults to l_test.
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Memory curves of the configured reservoir over several trials.
    Memory(Common),
    /// Ensemble statistics over reservoir sizes.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated reservoir sizes.
        #[arg(long, value_delimiter = ',', default_value = "10,20,40,60")]
        sizes: Vec<usize>,
    },
    /// Random hyperparameter search on validation NRMSE.
    Search {
        #[command(flatten)]
        common: Common,
        /// Number of sampled configurations.
        #[arg(long, default_value_t = 20)]
        budget: usize,
        /// Stop once validation NRMSE falls below this value.
        #[arg(long, default_value_t = DEFAULT_SEARCH_THRESHOLD)]
        threshold: f64,
    },
}

fn load_config(c: &Common) -> Result<ExperimentConfig> {
    let mut text = match &c.config {
        Some(p) => fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
        None => String::new(),
    };
    for kv in &c.set {
        if !kv.contains('=') {
            bail!("--set expects KEY=VALUE, got '{kv}'");
        }
        text.push('\n');
        text.push_str(kv);
    }
    if let Some(seed) = c.seed {
        text.push_str(&format!("\nseed={seed}"));
    }
    Ok(ExperimentConfig::from_kv(&text)?)
}

fn write(dir: &Path, name: &str, body: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, body).with_context(|| format!("writing {}", path.display()))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn prepare(c: &Common) -> Result<ExperimentConfig> {
    let cfg = load_config(c)?;
    fs::create_dir_all(&c.out).with_context(|| format!("creating {}", c.out.display()))?;
    write(&c.out, "config.txt", &cfg.to_kv())?;
    Ok(cfg)
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Generate(c) => {
            let cfg = prepare(&c)?;
            let data = harness::benchmark_data(&cfg)?;
            write(&c.out, "timeseries.csv", &timeseries_csv(&data))?;
        }
        Command::Train(c) => {
            let cfg = prepare(&c)?;
            let run = run_experiment_full(&cfg)?;
            write(&c.out, "report.csv", &report_csv(&run.report))?;
            write(&c.out, "report.json", &serde_json::to_string_pretty(&run.report)?)?;
            write(&c.out, "readout.csv", &run.readout.to_csv())?;
            write(&c.out, "truth.csv", &timeseries_csv(&run.truth))?;
            write(&c.out, "prediction.csv", &timeseries_csv(&run.prediction))?;
            if let Some(m) = &run.report.memory {
                write(&c.out, "memory.csv", &memory_csv(std::slice::from_ref(m)))?;
            }
            let s = &run.report.stats;
            println!(
                "train_nrmse={:.5} val_nrmse={:.5} dv={:.4} kl={:.5} diverged={}",
                s.train_nrmse, s.val_nrmse, s.dv, s.kl, s.diverged
            );
        }
        Command::Predict { common, readout, steps } => {
            let cfg = prepare(&common)?;
            let text = fs::read_to_string(&readout).with_context(|| format!("reading {}", readout.display()))?;
            let w = ReadoutMatrix::from_csv(&text)?;
            let run = harness::predict_with_readout(&cfg, &w, steps.unwrap_or(cfg.l_test))?;
            write(&common.out, "prediction.csv", &timeseries_csv(&run.series))?;
            if let Some(t) = run.diverged_at {
                println!("prediction diverged at step {t}");
            }
        }
        Command::Memory(c) => {
            let cfg = prepare(&c)?;
            let seeds = trial_seeds(cfg.seed, c.trials.max(1));
            let curves = harness::parallel_map(&seeds, c.jobs, |&s| {
                let mut t = cfg.clone();
                t.seed = s;
                memory_for(&t)
            })
            .into_iter()
            .collect::<std::result::Result<Vec<_>, _>>()?;
            write(&c.out, "memory.csv", &memory_csv(&curves))?;
            let mut all = String::from("tau,mf,method,trial\n");
            for (i, curve) in curves.iter().enumerate() {
                all.push_str(curve.to_csv(i).split_once('\n').map_or("", |x| x.1));
            }
            write(&c.out, "memory_trials.csv", &all)?;
            let mc: Vec<f64> = curves.iter().map(|c| c.mc).collect();
            let (m, s) = vestibular::linalg::mean_std(&mc);
            println!("mc_mean={m:.4} mc_std={s:.4} (tau_max={}, points={})", cfg.tau_max, curve_mean_std(&curves).len());
        }
        Command::Sweep { common, sizes } => {
            let cfg = prepare(&common)?;
            let results = ensemble_sweep(&cfg, &sizes, common.trials, common.jobs)?;
            write(&common.out, "sweep.csv", &sweep_csv(&results))?;
            for r in &results {
                let v = r.row("val_nrmse").map_or(f64::NAN, |x| x.mean);
                println!("n={} val_nrmse_mean={v:.5} divergent={}/{}", r.n, r.n_divergent(), r.reports.len());
            }
        }
        Command::Search { common, budget, threshold } => {
            let cfg = prepare(&common)?;
            let res = random_search(&SearchSpace::default(), budget, &cfg, cfg.seed, Some(threshold))?;
            let mut csv = String::from("gamma,rho,lambda,density,val_nrmse\n");
            for t in &res.trials {
                let score = t.score.map_or("nan".to_string(), |s| format!("{s:?}"));
                csv.push_str(&format!("{:?},{:?},{:?},{:?},{score}\n", t.gamma, t.rho, t.lambda, t.density));
            }
            write(&common.out, "search.csv", &csv)?;
            write(&common.out, "best_config.txt", &res.best.to_kv())?;
            println!("best val_nrmse={:.5} after {} samples", res.best_score, res.trials.len());
        }
    }
    Ok(())
}
