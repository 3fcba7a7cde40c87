use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};

use micronet::config::{parse_override, RunConfig};
use micronet::data::{gen_synthetic, load_dataset, save_mask, write_dataset, Dataset, Split};
use micronet::graph::{audit, build_architecture, render_csv, render_text, summarize, ArchitectureSpec};
use micronet::metrics::{argmax_labels, ConfusionMatrix};
use micronet::rf::{render_rf_csv, rf_report};
use micronet::train::{derive_seed, evaluate, load_checkpoint, stack_batch, train};
use micronet::Error;

#[derive(Parser)]
#[command(name = "micronet", version, about = "Compact fire-module segmentation networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Layer table of an architecture.
    Summarize {
        /// Variant name (unet, bm1, bm2, bm3, micro) or config file.
        #[arg(long)]
        arch: String,
        #[arg(long)]
        csv: bool,
        /// Input height and width; defaults to 500, or 512 when 500 does not divide.
        #[arg(long)]
        size: Option<usize>,
        /// Compare against the reference Micro-Net table.
        #[arg(long)]
        audit: bool,
    },
    /// Parameter count, optionally as a ratio against a second architecture.
    CountParams {
        #[arg(long)]
        arch: String,
        #[arg(long)]
        vs: Option<String>,
    },
    /// Train on a dataset directory or generated synthetic patches.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        /// `key=value` override, applied after the config file.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        epochs: Option<usize>,
        /// Output directory; also receives the log and checkpoint.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Confusion-matrix metrics of a checkpoint on a dataset.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Defaults to the validation split when the manifest assigns one.
        #[arg(long, value_enum)]
        split: Option<SplitArg>,
        /// Write predicted masks here as P5 files.
        #[arg(long)]
        masks: Option<PathBuf>,
        #[arg(long, default_value_t = 2)]
        batch: usize,
    },
    /// Receptive-field extent and gridding of each rate sequence.
    AnalyzeRf {
        #[arg(long)]
        arch: String,
        /// Write the CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a seeded synthetic building dataset.
    GenSynthetic {
        #[arg(long)]
        count: usize,
        #[arg(long)]
        size: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0.9)]
        train_fraction: f64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Val,
    All,
}

fn arch_graph(arg: &str) -> anyhow::Result<(ArchitectureSpec, micronet::graph::LayerGraph)> {
    let spec = ArchitectureSpec::resolve(arg)?;
    let graph = build_architecture(&spec)?;
    Ok((spec, graph))
}

fn write_file(path: &Path, text: &str) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Summarize { arch, csv, size, audit } => {
            let (spec, graph) = arch_graph(&arch)?;
            let d = spec.spatial_divisor();
            let size = size.unwrap_or(if 500 % d == 0 { 500 } else { 512 });
            if size % d != 0 {
                bail!("size {size} is not a multiple of {d}");
            }
            let rows = summarize(&graph, size, size);
            print!("{}", if csv { render_csv(&rows) } else { render_text(&rows) });
            if audit {
                print!("{}", audit::audit_micro(&graph).render());
            }
        }
        Command::CountParams { arch, vs } => {
            let (spec, graph) = arch_graph(&arch)?;
            let n = graph.count_params();
            println!("{}: {n}", spec.variant);
            if let Some(other) = vs {
                let (ospec, ograph) = arch_graph(&other)?;
                let m = ograph.count_params();
                println!("{}: {m}", ospec.variant);
                println!("ratio {}/{}: {:.2}", ospec.variant, spec.variant, m as f64 / n as f64);
            }
        }
        Command::Train { config, set, seed, epochs, out } => {
            let mut overrides = set.iter().map(|s| parse_override(s)).collect::<Result<Vec<_>, _>>()?;
            if let Some(s) = seed {
                overrides.push(("seed".into(), toml::Value::Integer(s as i64)));
            }
            if let Some(e) = epochs {
                overrides.push(("epochs".into(), toml::Value::Integer(e as i64)));
            }
            if let Some(o) = out {
                // The whole run moves, including paths a loaded config pinned.
                let at = |f: &str| toml::Value::String(o.join(f).display().to_string());
                overrides.push(("output_dir".into(), toml::Value::String(o.display().to_string())));
                overrides.push(("log_path".into(), at("log.csv")));
                overrides.push(("checkpoint_path".into(), at("checkpoint.mnck")));
            }
            let cfg = match &config {
                Some(path) => RunConfig::load(path, &overrides)?,
                None => RunConfig::resolve(None, &overrides)?,
            };
            let out_dir = &cfg.data.output_dir;
            fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
            write_file(&out_dir.join("resolved.toml"), &cfg.to_toml())?;

            let dataset = match &cfg.data.data_dir {
                Some(dir) => load_dataset(dir)?,
                None => Dataset::from_patches(gen_synthetic(
                    cfg.data.synthetic_count,
                    cfg.data.synthetic_size,
                    cfg.data.synthetic_seed,
                )?),
            };
            let graph = build_architecture(&cfg.arch)?;
            eprintln!(
                "training {} ({} params) on {} patches for {} epochs",
                cfg.arch.variant,
                graph.count_params(),
                dataset.len(),
                cfg.training.epochs
            );
            let outcome = train::<f32>(&graph, &dataset, &cfg.training, |r| {
                eprintln!(
                    "epoch {:>3}  loss {:.6}  miou {:.4}  acc {:.4}  {:.1}s",
                    r.epoch, r.loss, r.miou, r.acc, r.seconds
                );
            })?;
            if let Some(last) = outcome.log.last() {
                println!("miou,acc\n{:.6},{:.6}", last.miou, last.acc);
            }
        }
        Command::Eval { checkpoint, data, split, masks, batch } => {
            let ck = load_checkpoint::<f32>(&checkpoint)?;
            let dataset = load_dataset(&data)?;
            let wanted = match split {
                Some(SplitArg::Train) => Some(Split::Train),
                Some(SplitArg::Val) => Some(Split::Val),
                Some(SplitArg::All) => None,
                None if dataset.is_split() => Some(Split::Val),
                None => None,
            };
            let patches = match wanted {
                Some(s) => dataset.subset(s),
                None => dataset.patches.iter().collect(),
            };
            if patches.is_empty() {
                bail!("no patches selected from {}", data.display());
            }
            let cm: ConfusionMatrix = match &masks {
                None => evaluate(&ck.network, &patches, batch)?,
                Some(dir) => {
                    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
                    let mut cm = ConfusionMatrix::new(ck.network.graph().n_classes());
                    for p in &patches {
                        let probs = ck.network.forward(&stack_batch::<f32>(&[*p])?)?;
                        let pred = argmax_labels(&probs).remove(0);
                        save_mask(dir.join(format!("{}.pgm", p.id())), &pred)?;
                        cm.accumulate(&pred, &p.label)?;
                    }
                    cm
                }
            };
            print!("{}", cm.to_csv()?);
        }
        Command::AnalyzeRf { arch, out } => {
            let (spec, _) = arch_graph(&arch)?;
            let csv = render_rf_csv(&rf_report(&spec)?);
            match out {
                Some(path) => write_file(&path, &csv)?,
                None => print!("{csv}"),
            }
        }
        Command::GenSynthetic { count, size, seed, out, train_fraction } => {
            let mut data = Dataset::from_patches(gen_synthetic(count, size, seed)?);
            if count >= 2 {
                data = data.with_split(train_fraction, derive_seed(seed, "split"))?;
            }
            write_dataset(&out, &data)?;
            eprintln!("wrote {count} patches to {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = std::env::var("MICRONET_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        // Fails only if the pool already exists, which cannot happen this early.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            match e.downcast_ref::<Error>() {
                Some(Error::NonFinite { .. }) => ExitCode::from(3),
                _ => ExitCode::from(2),
            }
        }
    }
}
