use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;
use sparq::distribution::{execute, memory_units, plan_intuitive, plan_tped, DistributionPlan};
use sparq::experiment::{emit, run, ExperimentName, ExperimentSpec};
use sparq::routing::{find_path, shortest_path_baseline, train, Route, RoutePath, RoutingModel, TrainConfig};
use sparq::topology::{snapshot, snapshot_series, GraphSnapshot, NetworkConfig};
use sparq::Error;

/// Space-air-ground quantum network simulator.
#[derive(Debug, Parser)]
#[command(name = "sparq", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print threshold-gated graph snapshots as JSON.
    Propagate {
        #[command(flatten)]
        net: NetArgs,
        /// Number of snapshots, spaced by the config's step.
        #[arg(long, default_value_t = 1)]
        steps: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a routing agent and save it as JSON.
    Train {
        #[command(flatten)]
        net: NetArgs,
        /// Number of snapshots to train across.
        #[arg(long, default_value_t = 20)]
        steps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        episodes: usize,
        #[arg(long, default_value_t = 50)]
        mini_episodes: usize,
        #[arg(long, default_value = "model.json")]
        out: PathBuf,
    },
    /// Route one request with a trained agent and the shortest-path baseline.
    Route {
        #[command(flatten)]
        net: NetArgs,
        #[command(flatten)]
        request: RequestArgs,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Plan and execute entanglement distribution along a path.
    Distribute {
        #[command(flatten)]
        net: NetArgs,
        #[command(flatten)]
        request: RequestArgs,
        /// Explicit path as comma-separated node ids; otherwise the agent
        /// given by --model routes from --src to --dst.
        #[arg(long, value_delimiter = ',')]
        path: Option<Vec<usize>>,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = PolicyArg::Both)]
        policy: PolicyArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a seeded experiment and write CSV plus metadata.
    Experiment {
        #[arg(value_parser = parse_experiment)]
        name: ExperimentName,
        #[command(flatten)]
        net: NetArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 20)]
        trials: usize,
        #[arg(long, default_value_t = 20)]
        steps: usize,
        #[arg(long, default_value_t = 100)]
        episodes: usize,
        #[arg(long, default_value_t = 50)]
        mini_episodes: usize,
        /// Use this agent instead of training one.
        #[arg(long)]
        model: Option<PathBuf>,
        /// CSV path; defaults to `<name>.csv`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct NetArgs {
    /// Network configuration JSON; the bundled 54-node network if omitted.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RequestArgs {
    #[arg(long)]
    src: Option<usize>,
    #[arg(long)]
    dst: Option<usize>,
    /// Snapshot index; time is this times the config's step.
    #[arg(long, default_value_t = 0)]
    step: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PolicyArg {
    Tped,
    Intuitive,
    Both,
}

fn parse_experiment(s: &str) -> Result<ExperimentName, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

impl NetArgs {
    fn load(&self) -> sparq::Result<NetworkConfig> {
        match &self.config {
            Some(path) => NetworkConfig::load(path),
            None => Ok(NetworkConfig::bundled()),
        }
    }
}

impl RequestArgs {
    fn endpoints(&self) -> sparq::Result<(usize, usize)> {
        match (self.src, self.dst) {
            (Some(s), Some(d)) => Ok((s, d)),
            _ => Err(Error::Config("--src and --dst are required".into())),
        }
    }

    fn snapshot(&self, config: &NetworkConfig) -> sparq::Result<GraphSnapshot> {
        snapshot(config, self.step as f64 * config.step_seconds, config.threshold)
    }
}

fn write_output(out: Option<&Path>, text: &str) -> sparq::Result<()> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        }),
        None => {
            let mut stdout = std::io::stdout().lock();
            writeln!(stdout, "{text}").map_err(|source| Error::Io {
                path: PathBuf::from("<stdout>"),
                source,
            })
        }
    }
}

fn pretty(value: &serde_json::Value) -> String {
    serde_json::to_string_pretty(value).expect("JSON values serialize")
}

fn route_summary(route: &Route, snap: &GraphSnapshot) -> sparq::Result<serde_json::Value> {
    Ok(match route.path() {
        Some(p) => json!({ "path": p, "hops": p.hops(), "min_eta": p.min_eta(snap)? }),
        None => json!({ "failed": route }),
    })
}

fn distribution_summary(plan: &DistributionPlan, snap: &GraphSnapshot) -> sparq::Result<serde_json::Value> {
    let result = execute(plan, snap)?;
    Ok(json!({
        "plan": plan,
        "fidelity": result.fidelity,
        "pair_count": result.pair_count,
        "swap_count": result.swap_count,
        "memory_units": memory_units(plan),
        "final_state": result.final_state,
    }))
}

fn run_command(command: Command) -> sparq::Result<()> {
    match command {
        Command::Propagate { net, steps, out } => {
            let config = net.load()?;
            if steps == 0 {
                return Err(Error::Config("--steps must be at least 1".into()));
            }
            let series = snapshot_series(&config, 0.0, config.step_seconds, steps, config.threshold)?;
            let text = serde_json::to_string_pretty(&series).expect("snapshots serialize");
            write_output(out.as_deref(), &text)
        }
        Command::Train {
            net,
            steps,
            seed,
            episodes,
            mini_episodes,
            out,
        } => {
            let config = net.load()?;
            if steps == 0 {
                return Err(Error::Config("--steps must be at least 1".into()));
            }
            let series = snapshot_series(&config, 0.0, config.step_seconds, steps, config.threshold)?;
            let train_config = TrainConfig {
                episodes,
                mini_episodes,
                seed,
                ..TrainConfig::default()
            };
            let training = train(&series, &train_config)?;
            training.model.save(&out)?;
            let summary = json!({
                "model": out,
                "episodes_with_updates": training.losses.len(),
                "final_loss": training.losses.last(),
                "converged": sparq::routing::converged(&training.losses),
            });
            write_output(None, &pretty(&summary))
        }
        Command::Route { net, request, model, out } => {
            let config = net.load()?;
            let model = RoutingModel::load(&model)?;
            let snap = request.snapshot(&config)?;
            let (src, dst) = request.endpoints()?;
            let dqn = find_path(&model, &snap, src, dst, None)?;
            let baseline = shortest_path_baseline(&snap, src, dst)?;
            let summary = json!({
                "time": snap.time,
                "src": src,
                "dst": dst,
                "dqn": route_summary(&dqn, &snap)?,
                "shortest_path": route_summary(&baseline, &snap)?,
            });
            write_output(out.as_deref(), &pretty(&summary))
        }
        Command::Distribute {
            net,
            request,
            path,
            model,
            policy,
            out,
        } => {
            let config = net.load()?;
            let snap = request.snapshot(&config)?;
            let path = match (path, model) {
                (Some(nodes), _) => RoutePath::new(nodes),
                (None, Some(model)) => {
                    let model = RoutingModel::load(&model)?;
                    let (src, dst) = request.endpoints()?;
                    match find_path(&model, &snap, src, dst, None)? {
                        Route::Found(p) => p,
                        Route::Failed(why) => {
                            return Err(Error::Planning(format!("agent found no route from {src} to {dst}: {why:?}")))
                        }
                    }
                }
                (None, None) => return Err(Error::Config("give --path or --model with --src and --dst".into())),
            };
            let mut summary = serde_json::Map::new();
            summary.insert("time".into(), json!(snap.time));
            summary.insert("path".into(), json!(path));
            if policy != PolicyArg::Intuitive {
                summary.insert("tped".into(), distribution_summary(&plan_tped(&path, &snap)?, &snap)?);
            }
            if policy != PolicyArg::Tped {
                summary.insert("intuitive".into(), distribution_summary(&plan_intuitive(&path, &snap)?, &snap)?);
            }
            write_output(out.as_deref(), &pretty(&summary.into()))
        }
        Command::Experiment {
            name,
            net,
            seed,
            trials,
            steps,
            episodes,
            mini_episodes,
            model,
            out,
        } => {
            let mut spec = ExperimentSpec::new(name);
            if let Some(path) = &net.config {
                spec = spec.with_config_file(path)?;
            }
            spec.seed = seed;
            spec.trials = trials;
            spec.time_steps = steps;
            spec.episodes = episodes;
            spec.mini_episodes = mini_episodes;
            if let Some(path) = model {
                spec.model = Some(RoutingModel::load(path)?);
            }
            let out = out.unwrap_or_else(|| PathBuf::from(format!("{name}.csv")));
            let output = run(&spec)?;
            emit(&output, &out)?;
            let summary = json!({
                "csv": out,
                "rows": output.rows.len(),
                "means": output.metadata.means,
                "converged": output.metadata.converged,
            });
            write_output(None, &pretty(&summary))
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run_command(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("sparq: {e}");
            ExitCode::from(if e.is_config() { 1 } else { 2 })
        }
    }
}
