use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use cmreg::bench::{run_benchmark, write_report, BenchConfig};
use cmreg::geometry::{catalog, write_spec, ContactOracle};
use cmreg::manifold::{generate_manifold, load_manifold, save_manifold, SamplerConfig};
use cmreg::observe::{load_observations, save_observations, simulate_observations, ExplorationConfig};
use cmreg::pose::Pose6;
use cmreg::registration::{register, CorrespondenceMode, RegistrationConfig};

/// Contact-manifold pose estimation toolkit for tight-clearance peg-in-hole
/// assembly: build reference contact manifolds, simulate online contact
/// observations, register them to recover the hole pose, and benchmark the
/// pipeline.
#[derive(Parser)]
#[command(name = "cmreg", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a reference contact manifold for a catalog geometry.
    GenManifold {
        #[arg(long)]
        geometry: String,
        #[arg(long, default_value_t = 20_000)]
        count: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(short, long)]
        output: PathBuf,
        /// Fraction of points sampled from compliant trajectories.
        #[arg(long, default_value_t = 0.5)]
        traj_fraction: f64,
        /// Angular metric scale, mm per degree.
        #[arg(long, default_value_t = 0.25)]
        rot_scale: f64,
        #[arg(long, default_value_t = 12)]
        k_normals: usize,
    },
    /// Simulate online contact observations under a hidden hole pose.
    Observe {
        #[arg(long)]
        manifold: PathBuf,
        #[arg(long, default_value_t = 10.0)]
        t_obs: f64,
        /// Hidden true hole pose "x,y,z,alpha,beta,gamma".
        #[arg(long)]
        true_pose: String,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long, default_value_t = 300)]
        n_obs: usize,
        #[arg(long, default_value_t = 0.05)]
        noise_pos: f64,
        #[arg(long, default_value_t = 0.05)]
        noise_rot: f64,
        /// Omit the eval-only truth line for blind evaluation.
        #[arg(long)]
        strip_truth: bool,
    },
    /// Register an observation file against a manifold.
    Register {
        #[arg(long)]
        manifold: PathBuf,
        #[arg(long)]
        obs: PathBuf,
        /// Initial hole pose estimate "x,y,z,alpha,beta,gamma".
        #[arg(long)]
        init: String,
        #[arg(long, default_value_t = 16)]
        restarts: usize,
        #[arg(long, default_value_t = 900)]
        max_iters: usize,
        #[arg(long, default_value = "se3-relative")]
        mode: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// JSON report path; a one-line CSV summary goes to stdout.
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Run the benchmark described by a key=value config file.
    Bench {
        #[arg(long)]
        config: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Print a catalog geometry in the plain-text polygon format.
    ExportGeometry {
        name: String,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

/// 2 for configuration/input errors, 3 for runtime failures.
fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}

enum CliError {
    Config(String),
    Runtime(String),
}

fn config<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Config(e.to_string())
}

fn runtime<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Runtime(e.to_string())
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::GenManifold {
            geometry,
            count,
            seed,
            output,
            traj_fraction,
            rot_scale,
            k_normals,
        } => {
            let spec = catalog(&geometry).map_err(config)?;
            let oracle = ContactOracle::with_default_tolerances(spec).map_err(config)?;
            let mut cfg = SamplerConfig::for_oracle(&oracle, count, seed);
            cfg.traj_fraction = traj_fraction;
            cfg.scale = cmreg::pose::MetricScale::new(rot_scale);
            cfg.k_normals = k_normals;
            let manifold = generate_manifold(&oracle, &cfg).map_err(runtime)?;
            save_manifold(&manifold, &output).map_err(runtime)?;
            eprintln!(
                "wrote {} contact poses for {geometry} to {}",
                manifold.len(),
                output.display()
            );
            Ok(())
        }
        Command::Observe {
            manifold,
            t_obs,
            true_pose,
            seed,
            output,
            n_obs,
            noise_pos,
            noise_rot,
            strip_truth,
        } => {
            let m = load_manifold(&manifold).map_err(config)?;
            let spec = catalog(&m.geometry).map_err(config)?;
            let oracle = ContactOracle::new(spec, m.contact_tol, m.pen_tol).map_err(config)?;
            let truth = Pose6::parse(&true_pose).map_err(config)?;
            let mut cfg = ExplorationConfig::for_geometry(oracle.spec(), t_obs, seed);
            cfg.n_obs = n_obs;
            cfg.sigma_pos = noise_pos;
            cfg.sigma_rot = noise_rot;
            let set = simulate_observations(&oracle, &truth, &cfg).map_err(runtime)?;
            save_observations(&set, &output, strip_truth).map_err(runtime)?;
            eprintln!("wrote {} observations to {}", set.poses.len(), output.display());
            Ok(())
        }
        Command::Register {
            manifold,
            obs,
            init,
            restarts,
            max_iters,
            mode,
            seed,
            output,
        } => {
            let m = load_manifold(&manifold).map_err(config)?;
            let set = load_observations(&obs).map_err(config)?;
            if set.geometry != m.geometry {
                return Err(CliError::Config(format!(
                    "observation geometry {:?} does not match manifold geometry {:?}",
                    set.geometry, m.geometry
                )));
            }
            let init = Pose6::parse(&init).map_err(config)?;
            let mode: CorrespondenceMode = mode.parse().map_err(CliError::Config)?;
            let cfg = RegistrationConfig {
                max_iters,
                restarts,
                scale: m.scale(),
                mode,
                seed,
                ..Default::default()
            };
            let result = register(&m, &set.poses, &init, &cfg).map_err(runtime)?;
            let json = serde_json::to_string_pretty(&result).map_err(runtime)?;
            std::fs::write(&output, json).map_err(runtime)?;
            let e = result.estimate;
            println!(
                "estimate,{},{},{},{},{},{},{:.1}",
                e.x, e.y, e.z, e.alpha, e.beta, e.gamma, result.wall_ms
            );
            Ok(())
        }
        Command::Bench { config: path, output } => {
            let text = std::fs::read_to_string(&path).map_err(config)?;
            let cfg = BenchConfig::parse(&text).map_err(config)?;
            cfg.validate().map_err(config)?;
            let report = run_benchmark(&cfg).map_err(runtime)?;
            write_report(&report, &output).map_err(runtime)?;
            for cell in &report.cells {
                println!(
                    "{} t_obs={} {}: success {:.1}% ({} trials)",
                    cell.geometry,
                    cell.t_obs,
                    cell.method.as_str(),
                    100.0 * cell.success_rate,
                    cell.trials
                );
            }
            Ok(())
        }
        Command::ExportGeometry { name, output } => {
            let spec = catalog(&name).map_err(config)?;
            let text = write_spec(&spec);
            match output {
                Some(path) => std::fs::write(&path, text).map_err(runtime)?,
                None => print!("{text}"),
            }
            Ok(())
        }
    }
}
