//! Command-line surface: scene generation, compression, routing, router
//! training, the retention-sweep pilot, the ablation matrix, and report
//! rendering. Every command that produces files writes them under an output
//! directory together with the run-config snapshot that produced them.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use dualcomp::config::RunConfig;
use dualcomp::error::{Error, Result};
use dualcomp::io::report::{flops_context, sweep_csv, CompressReport, SweepRow, SWEEP_CSV_HEADER};
use dualcomp::io::{atomic_write, grid_file, label_file, model_file, sequence_file};
use dualcomp::lexicon::Lexicon;
use dualcomp::pipeline::{compress_grid, PipelineOptions};
use dualcomp::router::{allocate_budget, train_router, InstructionRepr, RouterModel, TaskPolicy};
use dualcomp::scene::{
    self, ablation_matrix, duality_sweep, embed_text, flops_proxy, generate_scene, SceneSpec,
    TaskKind,
};

#[derive(Parser)]
#[command(name = "dualcomp", version, about = "Dual-stream visual token compression")]
struct Cli {
    /// Run-config TOML; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct SceneArgs {
    #[arg(long, default_value_t = 24)]
    height: usize,
    #[arg(long, default_value_t = 24)]
    width: usize,
    #[arg(long, default_value_t = 64)]
    dim: usize,
    #[arg(long, default_value_t = 4)]
    objects: usize,
    #[arg(long, default_value_t = 2)]
    object_size_min: usize,
    #[arg(long, default_value_t = 5)]
    object_size_max: usize,
    #[arg(long, default_value_t = 2)]
    roads: usize,
    #[arg(long, default_value_t = 2)]
    waypoints: usize,
    #[arg(long, default_value_t = 0.05)]
    noise: f64,
}

impl SceneArgs {
    fn spec(&self, seed: u64, task_kind: TaskKind) -> SceneSpec {
        SceneSpec {
            height: self.height,
            width: self.width,
            dim: self.dim,
            n_objects: self.objects,
            object_size_range: (self.object_size_min, self.object_size_max),
            n_roads: self.roads,
            road_waypoints: self.waypoints,
            noise_scale: self.noise,
            seed,
            task_kind,
        }
    }
}

fn parse_task(task: &str) -> Result<TaskKind> {
    match task {
        "semantic" => Ok(TaskKind::Semantic),
        "balanced" => Ok(TaskKind::Balanced),
        "geometric" => Ok(TaskKind::Geometric),
        other => Err(Error::Config(format!("unknown task kind {other:?}"))),
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scene grid (and optionally its ground truth).
    GenScene {
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value = "balanced")]
        task: String,
        #[command(flatten)]
        scene: SceneArgs,
        #[arg(long)]
        out_dir: PathBuf,
        /// Also write ground-truth masks as JSON.
        #[arg(long)]
        truth: bool,
    },
    /// Compress one grid file into a token sequence plus JSON metrics.
    Compress {
        #[arg(long)]
        grid: PathBuf,
        /// Explicit duality factor (requires --rho, bypasses the router).
        #[arg(long)]
        lambda: Option<f64>,
        /// Explicit retention ratio (requires --lambda).
        #[arg(long)]
        rho: Option<f64>,
        /// Instruction text routed through a trained model (requires --model).
        #[arg(long)]
        instruction: Option<String>,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Predict a policy for an instruction.
    Route {
        #[arg(long)]
        instruction: String,
        #[arg(long)]
        model: PathBuf,
        /// Also print token budgets for this grid size.
        #[arg(long)]
        n_max: Option<usize>,
    },
    /// Train the router on a label file or a synthetic lexicon corpus.
    TrainRouter {
        #[arg(long)]
        labels: Option<PathBuf>,
        /// Generate this many synthetic corpus samples instead of reading labels.
        #[arg(long)]
        synthetic: Option<usize>,
        #[arg(long, default_value_t = 2000)]
        steps: usize,
        #[arg(long)]
        learning_rate: Option<f64>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Retention sweep over seeded scenes, all three task kinds per seed.
    Pilot {
        #[arg(long, default_value_t = 10)]
        seeds: u64,
        /// Comma-separated retention ratios, descending.
        #[arg(long, default_value = "1.0,0.5,0.1,0.0417,0.0208,0.0104", value_delimiter = ',')]
        rhos: Vec<f64>,
        #[command(flatten)]
        scene: SceneArgs,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Run all six pipeline variants over seeded scenes at one policy.
    Ablate {
        #[arg(long, default_value_t = 10)]
        seeds: u64,
        #[arg(long, default_value_t = 0.05)]
        rho: f64,
        #[arg(long, default_value_t = 0.5)]
        lambda: f64,
        #[arg(long, default_value = "geometric")]
        task: String,
        #[command(flatten)]
        scene: SceneArgs,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Summarize a metrics JSON or sweep/ablation CSV.
    Report {
        #[arg(long)]
        input: PathBuf,
    },
}

fn main() {
    if let Ok(threads) = std::env::var("DUALCOMP_THREADS") {
        if let Ok(n) = threads.parse::<usize>() {
            if n >= 1 {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
        }
    }
    let cli = Cli::parse();
    if let Err(error) = run(cli) {
        eprintln!("error: {error}");
        std::process::exit(1);
    }
}

fn load_config(path: &Option<PathBuf>) -> Result<RunConfig> {
    match path {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

fn load_lexicon(config: &RunConfig) -> Result<Lexicon> {
    match &config.paths.lexicon {
        Some(path) => Lexicon::load(path),
        None => Ok(Lexicon::default()),
    }
}

fn prepare_out_dir(out_dir: &Path, config: &RunConfig) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    atomic_write(&out_dir.join("config.toml"), config.to_toml_string().as_bytes())
}

fn run(cli: Cli) -> Result<()> {
    let config = load_config(&cli.config)?;
    match cli.command {
        Command::GenScene {
            seed,
            task,
            scene,
            out_dir,
            truth,
        } => {
            let spec = scene.spec(seed, parse_task(&task)?);
            let (grid, ground_truth) = generate_scene(&spec)?;
            prepare_out_dir(&out_dir, &config)?;
            grid_file::write_grid(&grid, &out_dir.join("scene.fgrd"))?;
            if truth {
                let cells = |mask: &Vec<bool>| -> Vec<usize> {
                    mask.iter()
                        .enumerate()
                        .filter(|(_, &m)| m)
                        .map(|(i, _)| i)
                        .collect()
                };
                let json = serde_json::json!({
                    "height": ground_truth.height,
                    "width": ground_truth.width,
                    "task_kind": ground_truth.task_kind.as_str(),
                    "object_cells": cells(&ground_truth.object_mask),
                    "road_cells": ground_truth.road_masks.iter().map(cells).collect::<Vec<_>>(),
                });
                atomic_write(
                    &out_dir.join("truth.json"),
                    serde_json::to_string_pretty(&json)?.as_bytes(),
                )?;
            }
            println!("wrote {}", out_dir.join("scene.fgrd").display());
            Ok(())
        }
        Command::Compress {
            grid,
            lambda,
            rho,
            instruction,
            model,
            out_dir,
        } => {
            let grid = grid_file::read_grid(&grid)?;
            let explicit = lambda.is_some() || rho.is_some();
            if explicit == instruction.is_some() {
                return Err(Error::Config(
                    "provide exactly one of --lambda/--rho or --instruction".into(),
                ));
            }
            let (policy, router_invoked) = if explicit {
                let (Some(lambda), Some(rho)) = (lambda, rho) else {
                    return Err(Error::Config("--lambda and --rho go together".into()));
                };
                (TaskPolicy::new(lambda, rho, config.router.rho_min)?, false)
            } else {
                let model_path = model.ok_or_else(|| {
                    Error::Config("--instruction requires --model".into())
                })?;
                let router = model_file::read_model(&model_path)?;
                let text = instruction.expect("checked above");
                let input = InstructionRepr::new(embed_text(&text, router.dims.input))?
                    .with_text(text);
                (router.forward(&input)?, true)
            };
            let options = PipelineOptions {
                unroll_mode: config.unroll_mode()?,
                ..Default::default()
            };
            let output = compress_grid(&grid, &policy, &config, &options)?;
            prepare_out_dir(&out_dir, &config)?;
            sequence_file::write_sequence(
                &output.sequence,
                grid.dim(),
                config.fusion.scale_vectors,
                &out_dir.join("sequence.dcsq"),
            )?;
            let tokens_kept = output.sequence.tokens.len();
            let report = CompressReport {
                n_max: grid.cells(),
                tokens_kept,
                compression_ratio: grid.cells() as f64 / tokens_kept.max(1) as f64,
                lambda: policy.lambda,
                rho: policy.rho,
                n_sem_budget: output.budget.n_sem,
                n_geo_budget: output.budget.n_geo,
                semantic_tokens: output.sequence.semantic_count(),
                geometric_tokens: output.sequence.geometric_count(),
                router_invoked,
                flops_proxy: flops_proxy(tokens_kept, &config.flops),
            };
            atomic_write(&out_dir.join("metrics.json"), report.to_json().as_bytes())?;
            println!("{}", report.to_json());
            Ok(())
        }
        Command::Route {
            instruction,
            model,
            n_max,
        } => {
            let router = model_file::read_model(&model)?;
            let input = InstructionRepr::new(embed_text(&instruction, router.dims.input))?
                .with_text(instruction);
            let policy = router.forward(&input)?;
            let mut json = serde_json::json!({
                "lambda": policy.lambda,
                "rho": policy.rho,
            });
            if let Some(n_max) = n_max {
                let budget = allocate_budget(&policy, n_max);
                json["n_keep"] = budget.n_keep.into();
                json["n_sem"] = budget.n_sem.into();
                json["n_geo"] = budget.n_geo.into();
            }
            println!("{}", serde_json::to_string_pretty(&json)?);
            Ok(())
        }
        Command::TrainRouter {
            labels,
            synthetic,
            steps,
            learning_rate,
            seed,
            out_dir,
        } => {
            let lexicon = load_lexicon(&config)?;
            let dims = config.router_dims();
            let corpus = match (labels, synthetic) {
                (Some(path), None) => {
                    let records =
                        label_file::read_labels(&path, config.router.alpha, config.router.rho_min)?;
                    records
                        .into_iter()
                        .map(|(text, record)| {
                            Ok((
                                InstructionRepr::new(embed_text(&text, dims.input))?
                                    .with_text(text),
                                record,
                            ))
                        })
                        .collect::<Result<Vec<_>>>()?
                }
                (None, count) => scene::lexicon_corpus(
                    &lexicon,
                    count.unwrap_or(300),
                    dims.input,
                    &config.router.rho_targets,
                    config.router.alpha,
                    config.router.rho_min,
                    seed,
                )?,
                (Some(_), Some(_)) => {
                    return Err(Error::Config(
                        "provide at most one of --labels / --synthetic".into(),
                    ))
                }
            };
            let model = RouterModel::init(dims, config.router.rho_min, seed)?;
            let learning_rate = learning_rate.unwrap_or(config.router.learning_rate);
            let (trained, log) =
                train_router(&model, &corpus, steps, learning_rate, seed.wrapping_add(1))?;
            prepare_out_dir(&out_dir, &config)?;
            model_file::write_model(&trained, &out_dir.join("router.dcrt"))?;
            let mut csv = String::from("step,loss\n");
            for (step, loss) in log.step_losses.iter().enumerate() {
                csv.push_str(&format!("{step},{loss:.9}\n"));
            }
            atomic_write(&out_dir.join("train_log.csv"), csv.as_bytes())?;
            println!(
                "trained {} params over {} steps: corpus loss {:.6} -> {:.6}",
                trained.param_count(),
                steps,
                log.initial_corpus_loss,
                log.final_corpus_loss
            );
            Ok(())
        }
        Command::Pilot {
            seeds,
            rhos,
            scene,
            out_dir,
        } => {
            let specs: Vec<SceneSpec> = (0..seeds)
                .flat_map(|seed| {
                    TaskKind::ALL
                        .iter()
                        .map(move |&kind| (seed, kind))
                })
                .map(|(seed, kind)| scene.spec(seed, kind))
                .collect();
            let rows = duality_sweep(&specs, &rhos, scene::default_lambda, &config)?;
            prepare_out_dir(&out_dir, &config)?;
            atomic_write(&out_dir.join("pilot.csv"), sweep_csv(&rows).as_bytes())?;
            println!("wrote {} rows to {}", rows.len(), out_dir.join("pilot.csv").display());
            Ok(())
        }
        Command::Ablate {
            seeds,
            rho,
            lambda,
            task,
            scene,
            out_dir,
        } => {
            let kind = parse_task(&task)?;
            let specs: Vec<SceneSpec> = (0..seeds).map(|seed| scene.spec(seed, kind)).collect();
            let rows = ablation_matrix(&specs, rho, lambda, &config)?;
            prepare_out_dir(&out_dir, &config)?;
            atomic_write(&out_dir.join("ablation.csv"), sweep_csv(&rows).as_bytes())?;
            println!(
                "wrote {} rows ({} variants x {} scenes) to {}",
                rows.len(),
                scene::Variant::ALL.len(),
                specs.len(),
                out_dir.join("ablation.csv").display()
            );
            Ok(())
        }
        Command::Report { input } => report_command(&input),
    }
}

fn report_command(input: &Path) -> Result<()> {
    let text = std::fs::read_to_string(input)?;
    if input.extension().and_then(|e| e.to_str()) == Some("json") {
        let report: CompressReport = serde_json::from_str(&text)?;
        println!(
            "compression: {} of {} tokens kept ({:.2}x), lambda {:.3}, rho {:.4}",
            report.tokens_kept, report.n_max, report.compression_ratio, report.lambda, report.rho
        );
        println!(
            "streams: {} semantic + {} geometric (budgets {}/{}), router {}",
            report.semantic_tokens,
            report.geometric_tokens,
            report.n_sem_budget,
            report.n_geo_budget,
            if report.router_invoked { "invoked" } else { "bypassed" }
        );
        println!("{}", flops_context(report.tokens_kept, report.flops_proxy));
        return Ok(());
    }
    // Sweep/ablation CSV: group means by (variant, task, rho).
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default();
    if header != SWEEP_CSV_HEADER {
        return Err(Error::invalid("report input", "unrecognized CSV header"));
    }
    let mut groups: BTreeMap<(String, String, String), Vec<SweepRow>> = BTreeMap::new();
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 13 {
            return Err(Error::invalid("report input", format!("bad row {line:?}")));
        }
        let row = SweepRow {
            scene_seed: fields[0].parse().map_err(|_| bad_field(fields[0]))?,
            task_kind: fields[1].into(),
            variant: fields[2].into(),
            rho: fields[3].parse().map_err(|_| bad_field(fields[3]))?,
            lambda: fields[4].parse().map_err(|_| bad_field(fields[4]))?,
            tokens_kept: fields[5].parse().map_err(|_| bad_field(fields[5]))?,
            compression_ratio: fields[6].parse().map_err(|_| bad_field(fields[6]))?,
            object_preservation: fields[7].parse().map_err(|_| bad_field(fields[7]))?,
            path_recall: fields[8].parse().map_err(|_| bad_field(fields[8]))?,
            path_connected_frac: fields[9].parse().map_err(|_| bad_field(fields[9]))?,
            flops_proxy: fields[10].parse().map_err(|_| bad_field(fields[10]))?,
            object_vacuous: fields[11].parse().map_err(|_| bad_field(fields[11]))?,
            path_vacuous: fields[12].parse().map_err(|_| bad_field(fields[12]))?,
        };
        groups
            .entry((row.variant.clone(), row.task_kind.clone(), format!("{:.6}", row.rho)))
            .or_default()
            .push(row);
    }
    println!(
        "{:<14} {:<10} {:>8} {:>8} {:>10} {:>8} {:>10} {:>10}",
        "variant", "task", "rho", "ratio", "preserved", "recall", "connected", "tokens"
    );
    for ((variant, task, rho), rows) in &groups {
        let n = rows.len() as f64;
        let mean = |f: fn(&SweepRow) -> f64| rows.iter().map(f).sum::<f64>() / n;
        println!(
            "{:<14} {:<10} {:>8} {:>8.2} {:>10.3} {:>8.3} {:>10.3} {:>10.1}",
            variant,
            task,
            rho,
            mean(|r| r.compression_ratio),
            mean(|r| r.object_preservation),
            mean(|r| r.path_recall),
            mean(|r| r.path_connected_frac),
            mean(|r| r.tokens_kept as f64),
        );
    }
    if let Some(rows) = groups.values().next() {
        let tokens = rows[0].tokens_kept;
        println!("{}", flops_context(tokens, rows[0].flops_proxy));
    }
    Ok(())
}

fn bad_field(field: &str) -> Error {
    Error::invalid("report input", format!("unparsable field {field:?}"))
}
