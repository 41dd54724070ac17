//! `divsearch`: command-line driver for single runs, landscape campaigns,
//! A/B comparisons and snapshot recomputation.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use divsearch::engine::{EngineConfig, Mechanisms};
use divsearch::genotype::GenotypeConfig;
use divsearch::harness::{self, AppSource, Arm, ExperimentSpec, RunOptions};
use divsearch::landscape::{ClusterCounting, LandscapeConfig};
use divsearch::stats::PValueMethod;
use divsearch::sut::{AppModel, AppParams};
use divsearch::variation::VariationConfig;
use divsearch::{Error, Result};

#[derive(Parser)]
#[command(
    name = "divsearch",
    version,
    about = "Diversity-aware multi-objective test suite search"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic app model and write it as JSON.
    GenApp {
        #[command(flatten)]
        app: AppParamArgs,
        /// Output file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the engine once and write its artifacts.
    Run {
        #[command(flatten)]
        app: AppArgs,
        #[command(flatten)]
        engine: EngineArgs,
        /// Mechanisms to enable: all, none, or a comma list.
        #[arg(long, default_value = "none")]
        mechanisms: Mechanisms,
        /// Write every generation's population under populations/.
        #[arg(long)]
        archive_populations: bool,
        #[arg(long)]
        wall_time: bool,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Landscape-analysis campaign over several repetitions.
    Landscape {
        #[command(flatten)]
        app: AppArgs,
        #[command(flatten)]
        engine: EngineArgs,
        #[arg(long, default_value = "none")]
        mechanisms: Mechanisms,
        #[arg(long, default_value_t = 5)]
        reps: usize,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Compare a diversity arm against the baseline with rank statistics.
    Compare {
        #[command(flatten)]
        app: AppArgs,
        #[command(flatten)]
        engine: EngineArgs,
        /// Mechanisms of the treatment arm; the control arm has none.
        #[arg(long, default_value = "all")]
        mechanisms: Mechanisms,
        #[arg(long, default_value_t = 20)]
        reps: usize,
        /// Use exact permutation p-values instead of the chi-square approximation.
        #[arg(long)]
        exact: bool,
        /// Compare wall-clock time instead of evaluation counts.
        #[arg(long)]
        wall_time: bool,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Recompute the landscape snapshot of an archived population file.
    Metrics {
        #[command(flatten)]
        app: AppArgs,
        #[command(flatten)]
        engine: EngineArgs,
        /// Population text file (one suite per blank-line separated block).
        #[arg(long)]
        population: PathBuf,
        /// Generation number written in the output row.
        #[arg(long, default_value_t = 0)]
        generation: usize,
        /// Output CSV file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct AppParamArgs {
    #[arg(long, default_value_t = AppParams::default().model_seed)]
    app_seed: u64,
    #[arg(long, default_value_t = AppParams::default().activity_count)]
    activities: usize,
    #[arg(long, default_value_t = AppParams::default().statements_per_activity)]
    statements: usize,
    #[arg(long, default_value_t = AppParams::default().alphabet_size)]
    alphabet: usize,
    #[arg(long, default_value_t = AppParams::default().crash_density)]
    crash_density: f64,
}

impl AppParamArgs {
    fn params(&self) -> AppParams {
        AppParams {
            model_seed: self.app_seed,
            activity_count: self.activities,
            statements_per_activity: self.statements,
            alphabet_size: self.alphabet,
            crash_density: self.crash_density,
        }
    }
}

#[derive(Args)]
struct AppArgs {
    /// Pinned app model JSON; overrides the generation flags.
    #[arg(long)]
    app: Option<PathBuf>,
    #[command(flatten)]
    params: AppParamArgs,
}

impl AppArgs {
    fn source(&self) -> AppSource {
        match &self.app {
            Some(path) => AppSource::Pinned { path: path.clone() },
            None => AppSource::Generated(self.params.params()),
        }
    }
}

#[derive(Args)]
struct EngineArgs {
    /// Master seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Generation budget; defaults to 40 (10 for `compare`).
    #[arg(long)]
    generations: Option<usize>,
    #[arg(long, default_value_t = 50)]
    pop_size: usize,
    #[arg(long, default_value_t = 50)]
    offspring_size: usize,
    #[arg(long, default_value_t = 100)]
    size_init: usize,
    #[arg(long, default_value_t = 0.5)]
    div_limit: f64,
    #[arg(long, default_value_t = 15)]
    n_div: usize,
    /// Distance threshold of the connectedness graph.
    #[arg(long, default_value_t = divsearch::landscape::DEFAULT_K)]
    k: usize,
    /// Count only clusters with two or more members in nconnec.
    #[arg(long)]
    exclude_singletons: bool,
    #[arg(long, default_value_t = 0.7)]
    crossover_prob: f64,
    #[arg(long, default_value_t = 0.3)]
    mutation_prob: f64,
    #[arg(long, default_value_t = 5)]
    suite_size: usize,
    #[arg(long, default_value_t = 20)]
    seq_min: usize,
    #[arg(long, default_value_t = 500)]
    seq_max: usize,
}

impl EngineArgs {
    fn config(
        &self,
        mechanisms: Mechanisms,
        alphabet_size: usize,
        default_gens: usize,
    ) -> EngineConfig {
        EngineConfig {
            genotype: GenotypeConfig {
                suite_max: self.suite_size,
                seq_min: self.seq_min,
                seq_max: self.seq_max,
                alphabet_size,
            },
            variation: VariationConfig {
                crossover_prob: self.crossover_prob,
                mutation_prob: self.mutation_prob,
            },
            landscape: LandscapeConfig {
                k: self.k,
                counting: if self.exclude_singletons {
                    ClusterCounting::ExcludeSingletons
                } else {
                    ClusterCounting::AllComponents
                },
            },
            size_pop: self.pop_size,
            size_off: self.offspring_size,
            g_max: self.generations.unwrap_or(default_gens),
            size_init: self.size_init,
            div_limit: self.div_limit,
            n_div: self.n_div,
            mechanisms,
            rng_seed: self.seed,
            trace: false,
        }
    }
}

fn load_app(args: &AppArgs) -> Result<(AppSource, AppModel)> {
    let source = args.source();
    let app = source.load()?;
    Ok((source, app))
}

fn write_config(out: &Path, cfg: &EngineConfig, source: &AppSource) -> Result<()> {
    let json = serde_json::json!({ "app": source, "engine": cfg });
    let mut text = serde_json::to_string_pretty(&json)?;
    text.push('\n');
    harness::write_file(&out.join("config.json"), &text)
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenApp { app, out } => {
            let params = app.params();
            params.validate()?;
            AppModel::generate(&params)?.save(&out)
        }
        Command::Run {
            app,
            engine,
            mechanisms,
            archive_populations,
            wall_time,
            out,
        } => {
            let (source, model) = load_app(&app)?;
            let cfg = engine.config(mechanisms, model.alphabet_size, 40);
            cfg.validate()?;
            write_config(&out, &cfg, &source)?;
            let opts = RunOptions {
                archive_populations,
                wall_time,
            };
            let arm = if mechanisms.any() { "div" } else { "baseline" };
            let (_, summary) = harness::run_single(&source.id(), &model, arm, 0, &cfg, opts, &out)?;
            println!(
                "coverage {:.6}, crashes {}, evaluations {}, restarts {}",
                summary.final_coverage,
                summary.distinct_crashes,
                summary.evaluations,
                summary.restarts
            );
            Ok(())
        }
        Command::Landscape {
            app,
            engine,
            mechanisms,
            reps,
            out,
        } => {
            let (source, model) = load_app(&app)?;
            let cfg = engine.config(mechanisms, model.alphabet_size, 40);
            let spec = ExperimentSpec {
                apps: vec![source],
                arms: vec![Arm {
                    name: if mechanisms.any() { "div" } else { "baseline" }.into(),
                    engine: cfg,
                }],
                repetitions: reps,
                k: engine.k,
                master_seed: engine.seed,
                p_value: PValueMethod::default(),
                wall_time: false,
            };
            let runs = harness::run_landscape_campaign(&spec, &out)?;
            println!("wrote {} repetitions to {}", runs.len(), out.display());
            Ok(())
        }
        Command::Compare {
            app,
            engine,
            mechanisms,
            reps,
            exact,
            wall_time,
            out,
        } => {
            let (source, model) = load_app(&app)?;
            let control = engine.config(Mechanisms::none(), model.alphabet_size, 10);
            let treatment = engine.config(mechanisms, model.alphabet_size, 10);
            let spec = ExperimentSpec {
                apps: vec![source],
                arms: vec![
                    Arm {
                        name: "baseline".into(),
                        engine: control,
                    },
                    Arm {
                        name: "div".into(),
                        engine: treatment,
                    },
                ],
                repetitions: reps,
                k: engine.k,
                master_seed: engine.seed,
                p_value: if exact {
                    PValueMethod::Exact
                } else {
                    PValueMethod::ChiSquare
                },
                wall_time,
            };
            let rows = harness::run_comparison(&spec, &out)?;
            print!("{}", harness::comparison_csv(&rows));
            Ok(())
        }
        Command::Metrics {
            app,
            engine,
            population,
            generation,
            out,
        } => {
            let (_, model) = load_app(&app)?;
            let cfg = engine.config(Mechanisms::none(), model.alphabet_size, 40);
            cfg.genotype.validate()?;
            let text = std::fs::read_to_string(&population).map_err(|e| Error::Io {
                path: population.clone(),
                source: e,
            })?;
            let snap = harness::snapshot_from_archive(&text, generation, &model, &cfg)?;
            let csv = harness::snapshot_csv(&snap);
            match out {
                Some(path) => harness::write_file(&path, &csv),
                None => {
                    print!("{csv}");
                    Ok(())
                }
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
