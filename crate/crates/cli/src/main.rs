use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use liteupdate_cli::config::{ExperimentConfig, ExperimentKind};
use liteupdate_cli::experiments::{old_new_accuracy, with_threads};
use liteupdate_cli::{checkpoint, export, run, write_outputs};
use liteupdate_core::pipeline::{
    finetune_random, finetune_representative, pretrain, select_buffer_with_scores,
};
use liteupdate_core::select::assemble_representative;
use liteupdate_core::synth::make_dataset;
use liteupdate_core::{merge_params, GeneratorSpec, MergeConfig, Split};

#[derive(Parser)]
#[command(name = "liteupdate", version, about = "Detector update experiments on synthetic patches")]
struct Cli {
    /// JSON experiment configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file (checkpoints, CSV) or directory (experiments).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Run seed; replaces the configured seed list.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Branch {
    Representative,
    Random,
}

#[derive(Clone, Copy, ValueEnum)]
enum Grid {
    Kn,
    K,
    Components,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Val,
    Test,
    Fresh,
}

#[derive(Subcommand)]
enum Command {
    /// Train the initial detector on the old generator.
    Pretrain,
    /// Build the candidate buffer and the representative set.
    Select {
        #[arg(long)]
        checkpoint: PathBuf,
        /// New generator version id (default: first configured).
        #[arg(long)]
        generator: Option<String>,
    },
    /// Fine-tune one branch from a checkpoint.
    Finetune {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_enum)]
        branch: Branch,
        #[arg(long)]
        generator: Option<String>,
        /// Random-branch sample count (default: the representative size).
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Merge two fine-tuned checkpoints into a base.
    Merge {
        #[arg(long)]
        base: PathBuf,
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long)]
        k: Option<f64>,
    },
    /// Accuracy on the old and a new generator's test sets.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        generator: Option<String>,
    },
    /// Run the experiment kind named in the configuration.
    Experiment {
        #[arg(long)]
        multi: bool,
    },
    /// Sweep k_n, k, or the merge components.
    Ablate {
        #[arg(long, value_enum)]
        grid: Grid,
    },
    /// Random fine-tuning over the sample grid against the representative update.
    Efficiency,
    /// Export a dataset as CSV.
    Dataset {
        #[arg(long)]
        generator: Option<String>,
        #[arg(long, value_enum, default_value = "train")]
        split: SplitArg,
        #[arg(long, default_value_t = 100)]
        per_class: usize,
    },
}

fn generator(cfg: &ExperimentConfig, id: Option<&str>) -> Result<GeneratorSpec> {
    let all: Vec<GeneratorSpec> = std::iter::once(cfg.old()).chain(cfg.new_gens()).collect();
    match id {
        None => Ok(cfg.new_gens().remove(0)),
        Some(id) => all.into_iter().find(|g| g.version_id == id).ok_or_else(|| anyhow!("unknown generator {id}")),
    }
}

fn out_path(cli_out: &Option<PathBuf>, default: &str) -> PathBuf {
    cli_out.clone().unwrap_or_else(|| PathBuf::from(default))
}

fn write(path: &Path, body: &str) -> Result<()> {
    std::fs::write(path, body).with_context(|| format!("writing {}", path.display()))
}

fn experiment(cfg: ExperimentConfig, cli: &Cli) -> Result<()> {
    let out = run(&cfg, cli.threads)?;
    print!("{}", out.summary);
    let dir = cli.out.clone().or_else(|| cfg.out_dir.clone()).unwrap_or_else(|| PathBuf::from("results"));
    for p in write_outputs(&cfg, &out, &dir)? {
        eprintln!("wrote {}", p.display());
    }
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seeds = vec![seed];
    }
    let seed = cfg.seeds[0];
    let plan = cfg.plan(seed)?;
    let g_old = cfg.old();

    match &cli.command {
        Command::Pretrain => {
            let theta0 = with_threads(cli.threads, || pretrain(&g_old, &plan, seed))??;
            let path = out_path(&cli.out, "theta0.lupd");
            checkpoint::save(&theta0, &path)?;
            eprintln!("wrote {}", path.display());
        }
        Command::Select { checkpoint: ckpt, generator: id } => {
            let theta0 = checkpoint::load(ckpt)?;
            let g = generator(&cfg, id.as_deref())?;
            let pool = plan.training_pool(&g_old)?;
            let (buffer, scores) = with_threads(cli.threads, || select_buffer_with_scores(&theta0, &pool, &plan))??;
            let rep = assemble_representative(&buffer, &pool, &g)?;
            let dir = out_path(&cli.out, ".");
            std::fs::create_dir_all(&dir)?;
            write(&dir.join("buffer.csv"), &export::buffer_csv(&buffer, &scores, &pool)?)?;
            write(&dir.join("representative.csv"), &export::representative_csv(&rep))?;
            println!(
                "buffer: {} negatives (quota {}), {} positives (quota {}); representative: {} real, {} regenerated",
                buffer.negatives.len(),
                buffer.negative_quota(),
                buffer.positives.len(),
                buffer.positive_quota(),
                rep.real_samples.len(),
                rep.regenerated_samples.len()
            );
            if buffer.has_shortfall() {
                eprintln!("warning: buffer shortfall");
            }
        }
        Command::Finetune { checkpoint: ckpt, branch, generator: id, samples } => {
            let theta0 = checkpoint::load(ckpt)?;
            let g = generator(&cfg, id.as_deref())?;
            let theta = with_threads(cli.threads, || match branch {
                Branch::Random => finetune_random(&theta0, &g, samples.unwrap_or(plan.n), &plan, seed),
                Branch::Representative => {
                    let pool = plan.training_pool(&g_old)?;
                    let (buffer, _) = select_buffer_with_scores(&theta0, &pool, &plan)?;
                    let rep = assemble_representative(&buffer, &pool, &g)?;
                    finetune_representative(&theta0, &rep, &plan, seed)
                }
            })??;
            let path = out_path(&cli.out, "theta_ft.lupd");
            checkpoint::save(&theta, &path)?;
            eprintln!("wrote {}", path.display());
        }
        Command::Merge { base, a, b, k } => {
            let merge = MergeConfig::new(k.unwrap_or(cfg.k))?;
            let merged = merge_params(&checkpoint::load(base)?, &checkpoint::load(a)?, &checkpoint::load(b)?, merge)?;
            let path = out_path(&cli.out, "theta_new.lupd");
            checkpoint::save(&merged, &path)?;
            eprintln!("wrote {}", path.display());
        }
        Command::Eval { checkpoint: ckpt, generator: id } => {
            let theta = checkpoint::load(ckpt)?;
            let g = generator(&cfg, id.as_deref())?;
            let (old, new) = with_threads(cli.threads, || old_new_accuracy(&theta, &plan, &g_old, &g))??;
            println!("{}: {old:.2}", g_old.version_id);
            println!("{}: {new:.2}", g.version_id);
            println!("avg: {:.2}", (old + new) / 2.0);
        }
        Command::Experiment { multi } => {
            if *multi {
                cfg.kind = ExperimentKind::Multi;
            }
            experiment(cfg, &cli)?;
        }
        Command::Ablate { grid } => {
            cfg.kind = match grid {
                Grid::Kn => ExperimentKind::AblateKn,
                Grid::K => ExperimentKind::AblateK,
                Grid::Components => ExperimentKind::AblateComponents,
            };
            experiment(cfg, &cli)?;
        }
        Command::Efficiency => {
            cfg.kind = ExperimentKind::Efficiency;
            experiment(cfg, &cli)?;
        }
        Command::Dataset { generator: id, split, per_class } => {
            let g = match id {
                None => g_old.clone(),
                Some(_) => generator(&cfg, id.as_deref())?,
            };
            let split = match split {
                SplitArg::Train => Split::Train,
                SplitArg::Val => Split::Val,
                SplitArg::Test => Split::Test,
                SplitArg::Fresh => Split::Fresh,
            };
            if *per_class == 0 {
                bail!("per-class count must be positive");
            }
            let ds = make_dataset(&g, *per_class, *per_class, split, seed)?;
            let csv = export::dataset_csv(&ds);
            match &cli.out {
                Some(p) => write(p, &csv)?,
                None => print!("{csv}"),
            }
        }
    }
    Ok(())
}
