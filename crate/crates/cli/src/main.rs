mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use basin_rc::classify::{Assignment, Metrics};
use basin_rc::experiment::*;
use clap::{Args, Parser, Subcommand};

use config::SeedOverrides;

#[derive(Parser)]
#[command(name = "basin-rc", version, about = "Basin-of-attraction prediction with reservoir computers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Worker threads; defaults to the available hardware parallelism.
    #[arg(long, global = true)]
    parallel: Option<usize>,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output file (directory for basin-map).
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed_reservoir: Option<u64>,
    #[arg(long)]
    seed_sampling: Option<u64>,
    #[arg(long)]
    seed_noise: Option<u64>,
}

impl Common {
    fn seeds(&self) -> SeedOverrides {
        SeedOverrides {
            reservoir: self.seed_reservoir,
            sampling: self.seed_sampling,
            noise: self.seed_noise,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the true system from `[simulate] ic` and write the trajectory CSV.
    Simulate(Common),
    /// Sample training trajectories, fit the readout and write a model bundle.
    Train(Common),
    /// Forecast from the first n_test observations of `[predict] ic`.
    Predict {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        bundle: PathBuf,
    },
    /// Predict every cell of the test grid; writes basin_map.csv, its
    /// metadata sidecar and basin_map.ppm into the output directory.
    BasinMap {
        #[command(flatten)]
        common: Common,
        /// Reuse a trained model instead of training from the config.
        #[arg(long)]
        bundle: Option<PathBuf>,
    },
    /// Full-factorial sweep over the `[sweep]` axes.
    Sweep(Common),
    /// Render a saved basin map as a binary pixmap.
    Render {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Files a command is about to write; removed again if the command fails.
#[derive(Default)]
struct Outputs(Vec<PathBuf>);

impl Outputs {
    fn claim(&mut self, path: impl Into<PathBuf>) -> PathBuf {
        let path = path.into();
        self.0.push(path.clone());
        path
    }

    fn discard(&self) {
        for p in &self.0 {
            let _ = std::fs::remove_file(p);
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.parallel {
        if n == 0 {
            eprintln!("error: --parallel must be >= 1");
            return ExitCode::FAILURE;
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .expect("thread pool is configured once");
    }
    let mut outputs = Outputs::default();
    match run(cli.command, &mut outputs) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            outputs.discard();
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(command: Command, outputs: &mut Outputs) -> Result<()> {
    match command {
        Command::Simulate(c) => simulate(&c, outputs),
        Command::Train(c) => train(&c, outputs),
        Command::Predict { common, bundle } => predict(&common, &bundle, outputs),
        Command::BasinMap { common, bundle } => basin_map(&common, bundle.as_deref(), outputs),
        Command::Sweep(c) => sweep(&c, outputs),
        Command::Render { input, out } => {
            let map = BasinMap::load(&input).with_context(|| format!("loading {}", input.display()))?;
            render_basin_map(&map, outputs.claim(out))?;
            Ok(())
        }
    }
}

fn load(c: &Common) -> Result<(config::FileConfig, ExperimentConfig)> {
    let file = config::read(&c.config)?;
    let cfg = file.experiment(c.seeds()).context("config validation")?;
    Ok((file, cfg))
}

fn attractor_name(labeler: &Labeler, a: Assignment) -> String {
    match a {
        Assignment::Attractor(i) => format!("{} ({i})", labeler.sys.attractors[i].label),
        Assignment::Spurious => "spurious".into(),
        Assignment::Unresolved => "unresolved".into(),
    }
}

fn simulate(c: &Common, outputs: &mut Outputs) -> Result<()> {
    let (file, cfg) = load(c)?;
    let sim = file.simulate()?;
    let labeler = Labeler::new(&cfg)?;
    let dim = labeler.sys.dim();
    if sim.ic.len() != dim {
        bail!("simulate.ic: expected {dim} components, found {}", sim.ic.len());
    }
    let traj = labeler.sys.trajectory(&sim.ic, sim.steps + 1)?;
    traj.write_csv(outputs.claim(&c.out))?;
    println!("final state: {:?}", traj.last());
    if !cfg.system.is_chaotic() {
        let full: Vec<usize> = (0..dim).collect();
        let label = labeler.assign(&traj, &cfg, &full)?;
        println!("convergence: {}", attractor_name(&labeler, label));
    }
    Ok(())
}

fn train(c: &Common, outputs: &mut Outputs) -> Result<()> {
    let (_, cfg) = load(c)?;
    let signals = generate_training_set(&cfg).context("sampling training trajectories")?;
    let model = fit_model(&cfg, &signals).context("training")?;
    println!("n_fit: {}", model.readout.n_fit());
    println!("training residual (mse): {:e}", model.training_mse);
    ModelBundle::new(cfg, model).save(outputs.claim(&c.out))?;
    Ok(())
}

fn predict(c: &Common, bundle: &Path, outputs: &mut Outputs) -> Result<()> {
    let file = config::read(&c.config)?;
    let ic = file.predict()?.ic.clone();
    let bundle = ModelBundle::load(bundle).with_context(|| format!("loading bundle {}", bundle.display()))?;
    let cfg = &bundle.config;
    let labeler = Labeler::new(cfg)?;
    if ic.len() != labeler.sys.dim() {
        bail!("predict.ic: expected {} components, found {}", labeler.sys.dim(), ic.len());
    }
    let r = evaluate_ic(cfg, &labeler, &bundle.model, &ic)?;
    let Some(forecast) = r.forecast else {
        bail!("forecast diverged");
    };
    forecast.write_csv(outputs.claim(&c.out))?;
    println!("true basin: {}", attractor_name(&labeler, Assignment::Attractor(r.truth)));
    println!("outcome: {}", r.outcome.name());
    if let Some(p) = r.outcome.predicted() {
        println!("predicted basin: {}", attractor_name(&labeler, Assignment::Attractor(p)));
    }
    Ok(())
}

fn print_summary(m: &Metrics) {
    println!("f_c: {:.4}", m.f_c);
    println!("f_wrong: {:.4}", m.f_wrong);
    println!("f_spurious: {:.4}", m.f_spurious);
    println!("f_unresolved: {:.4}", m.f_unresolved);
    println!("basin  count  f_c     FNR     FPR");
    for (i, b) in m.per_basin.iter().enumerate() {
        println!(
            "{i:<5}  {:<5}  {:.4}  {:.4}  {:.4}",
            b.count, b.f_c, b.false_negative_rate, b.false_positive_rate
        );
    }
}

fn basin_map(c: &Common, bundle: Option<&Path>, outputs: &mut Outputs) -> Result<()> {
    let (_, cfg) = load(c)?;
    let map = match bundle {
        None => run_basin_experiment(&cfg)?,
        Some(path) => {
            let b = ModelBundle::load(path).with_context(|| format!("loading bundle {}", path.display()))?;
            if b.config.reservoir != cfg.reservoir || b.config.observed != cfg.observed {
                bail!("bundle {} was trained with a different reservoir or observation", path.display());
            }
            let labeler = Labeler::new(&cfg)?;
            evaluate_grid(&cfg, &labeler, &b.model, &|_, _| {})?
        }
    };
    std::fs::create_dir_all(&c.out).with_context(|| format!("creating {}", c.out.display()))?;
    let csv = outputs.claim(c.out.join("basin_map.csv"));
    outputs.claim(meta_path(&csv));
    map.save(&csv)?;
    render_basin_map(&map, outputs.claim(c.out.join("basin_map.ppm")))?;
    print_summary(&map.metrics);
    Ok(())
}

fn sweep(c: &Common, outputs: &mut Outputs) -> Result<()> {
    let (file, cfg) = load(c)?;
    let (axes, realizations) = file.sweep()?;
    let table = run_sweep(&cfg, &axes, realizations)?;
    table.save(outputs.claim(&c.out))?;
    let failed = table.rows.iter().filter(|r| r.error.is_some()).count();
    println!("n_train  half_train  half_test  mean f_c");
    for &n in &axes.n_train {
        for &h in &axes.half_train {
            for &t in &axes.half_test {
                let mean = table.mean_f_c(n, h, t).map_or("failed".to_string(), |m| format!("{m:.4}"));
                println!("{n:<7}  {h:<10}  {t:<9}  {mean}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} failed cells recorded as NaN");
    }
    Ok(())
}
