use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use hierq::combinatorics::{alpha, sparsified_path_count, total_paths};
use hierq::harness::{
    aggregate, depth_balanced_grid, greedy_policy, main_grid, read_snapshot, run_experiment, train_seed,
    write_csv, write_snapshot, CsvRow, ExperimentConfig, PolicyRow,
};
use hierq::mdp::{builtin_environment, GridWorld};

#[derive(Parser)]
#[command(name = "hierq", version, about = "Hierarchical multistep Q-learning experiments on gridworlds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Study {
    Main,
    Depth,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment from a TOML config.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Override the number of seeds.
        #[arg(long)]
        seeds: Option<usize>,
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long, default_value_t = 1)]
        parallel: usize,
        /// Also write the final tables of this seed to snapshot.csv.
        #[arg(long)]
        snapshot_seed: Option<u64>,
    },
    /// Run a parameter grid on one environment.
    Grid {
        #[arg(long, value_enum)]
        study: Study,
        #[arg(long)]
        env: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seeds: Option<usize>,
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long, default_value_t = 1)]
        parallel: usize,
        #[arg(long, default_value_t = 0)]
        root_seed: u64,
    },
    /// Print backup-path counts.
    CountPaths {
        #[arg(long)]
        h: u64,
        #[arg(long)]
        n: u64,
        /// Only this depth (default: every reachable depth).
        #[arg(long)]
        t: Option<u64>,
    },
    /// Print the greedy policy stored in a snapshot as CSV.
    DumpPolicy {
        #[arg(long)]
        snapshot: PathBuf,
        /// Map file, or the name of a bundled map.
        #[arg(long)]
        map: String,
    },
}

fn write_outputs(config: &ExperimentConfig, out: &Path, stem: &str, workers: usize) -> Result<f64> {
    let records = run_experiment(config, workers)?;
    write_csv(&records, &out.join(format!("{stem}records.csv")))?;
    let report = aggregate(&records)?;
    write_csv(&report.episodes, &out.join(format!("{stem}report.csv")))?;
    Ok(report.marginal)
}

fn load_map(spec: &str) -> Result<GridWorld> {
    let path = Path::new(spec);
    if path.is_file() {
        let text = fs::read_to_string(path).with_context(|| format!("reading {spec}"))?;
        return Ok(GridWorld::parse(spec, &text)?);
    }
    builtin_environment(spec).with_context(|| format!("no map file or bundled map named {spec:?}"))
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run {
            config,
            out,
            seeds,
            episodes,
            parallel,
            snapshot_seed,
        } => {
            let mut cfg = ExperimentConfig::load(&config).with_context(|| format!("loading {}", config.display()))?;
            if let Some(s) = seeds {
                cfg.seeds = s;
            }
            if let Some(e) = episodes {
                cfg.episodes = e;
            }
            fs::create_dir_all(&out)?;
            let marginal = write_outputs(&cfg, &out, "", parallel)?;
            fs::write(out.join("config.toml"), cfg.to_toml())?;
            if let Some(seed) = snapshot_seed {
                let world = cfg.world()?;
                let (_, agent) = train_seed(&cfg, &world, seed)?;
                write_snapshot(&agent, &world, &out.join("snapshot.csv"))?;
            }
            println!("{}: marginal mean log steps {marginal:.4}", cfg.label());
        }
        Command::Grid {
            study,
            env,
            out,
            seeds,
            episodes,
            parallel,
            root_seed,
        } => {
            if builtin_environment(&env).is_none() {
                bail!("unknown environment {env:?}");
            }
            let mut configs = match study {
                Study::Main => main_grid(&env),
                Study::Depth => depth_balanced_grid(&env, 0.95, 9, &[1, 2, 3], 3)?,
            };
            fs::create_dir_all(&out)?;
            let mut summary = String::from("label,marginal_mean_log\n");
            for cfg in &mut configs {
                if let Some(s) = seeds {
                    cfg.seeds = s;
                }
                if let Some(e) = episodes {
                    cfg.episodes = e;
                }
                cfg.root_seed = root_seed;
                let label = cfg.label();
                let marginal = write_outputs(cfg, &out, &format!("{label}."), parallel)?;
                summary.push_str(&format!("{label},{marginal}\n"));
                eprintln!("{label}: {marginal:.4}");
            }
            fs::write(out.join("summary.csv"), summary)?;
        }
        Command::CountPaths { h, n, t } => {
            if h == 0 || n == 0 {
                bail!("h and n must be at least 1");
            }
            println!("{:>6} {:>24}", "t", "alpha");
            let depths = match t {
                Some(t) => t..=t,
                None => n..=n * h,
            };
            for d in depths {
                println!("{d:>6} {:>24}", alpha(d, h, n));
            }
            println!("total paths       {}", total_paths(h, n));
            println!("sparsified count  {}", sparsified_path_count(h, n));
        }
        Command::DumpPolicy { snapshot, map } => {
            let world = load_map(&map)?;
            let entries = read_snapshot(&world, &snapshot)?;
            let rows = greedy_policy(&world, entries);
            let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(std::io::stdout());
            w.write_record(PolicyRow::HEADER)?;
            for row in rows {
                w.serialize(row)?;
            }
            w.flush()?;
        }
    }
    Ok(())
}
