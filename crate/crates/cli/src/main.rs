//! `chromacodec` command-line front end.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chromacodec::color::{read_image, write_image, ImageRGB};
use chromacodec::entropy::{compress_image, decompress_image, CompressedImage};
use chromacodec::impulse::{dct_basis, impulse_responses, order_by_bitrate, render_grid, IMPULSE_CSV_HEADER};
use chromacodec::model::{load_checkpoint, Branch, LossWeights, Model, ModelConfig};
use chromacodec::train::{evaluate, load_image_dir, synthetic_dataset, train, RdRecord, TrainConfig, RD_HEADER};
use chromacodec::{write_atomic, Error, Result};
use clap::{Args, Parser, Subcommand};

/// Learned image codec with separate luminance and chrominance branches.
#[derive(Parser, Debug)]
#[command(name = "chromacodec", version)]
struct Cli {
    /// Worker threads (1 gives bit-reproducible runs); overrides CHROMACODEC_THREADS.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a model and write a checkpoint.
    Train(Box<TrainArgs>),
    /// Encode an image to a bitstream; prints bpp=<value>.
    Compress {
        #[arg(short, long)]
        input: PathBuf,
        #[arg(short, long)]
        checkpoint: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Decode a bitstream to PNG (or PPM by extension).
    Decompress {
        #[arg(short, long)]
        input: PathBuf,
        #[arg(short, long)]
        checkpoint: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Rate and quality of one image or every image in a directory.
    Eval {
        #[arg(short, long)]
        input: PathBuf,
        #[arg(short, long)]
        checkpoint: PathBuf,
        /// CSV destination; stdout when absent.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Channel impulse-response grids and per-channel CSV.
    Impulse {
        #[arg(short, long)]
        input: PathBuf,
        #[arg(short, long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Tiles per grid row.
        #[arg(long, default_value_t = 16)]
        columns: usize,
        /// Also write the 16x16 DCT basis grid for comparison.
        #[arg(long)]
        dct: bool,
    },
    /// Rate-distortion points of several checkpoints over an image directory.
    Rdcurve {
        #[arg(long)]
        images: PathBuf,
        #[arg(short, long = "checkpoint", num_args = 1.., required = true)]
        checkpoints: Vec<PathBuf>,
        /// CSV destination; stdout when absent.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// `key = value` configuration file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Model preset: tiny or full.
    #[arg(long)]
    preset: Option<String>,
    /// Loss weights: q1..q4 or `l1,l2,l3`.
    #[arg(long)]
    lambda: Option<String>,
    #[arg(long)]
    steps: Option<u64>,
    #[arg(long)]
    patch_size: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Training images; a synthetic set when absent.
    #[arg(long)]
    train_dir: Option<PathBuf>,
    /// Held-out images; a synthetic set when absent.
    #[arg(long)]
    val_dir: Option<PathBuf>,
    #[arg(long)]
    validate_every: Option<u64>,
    #[arg(long)]
    checkpoint_every: Option<u64>,
    /// Per-step loss CSV.
    #[arg(long)]
    log_csv: Option<PathBuf>,
    /// Checkpoint to write.
    #[arg(short, long)]
    checkpoint: PathBuf,
    /// Continue from the checkpoint if it exists.
    #[arg(long)]
    resume: bool,
}

const EXIT_USAGE: u8 = 2;
const EXIT_FORMAT: u8 = 3;
const EXIT_NUMERIC: u8 = 4;

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Usage(_) | Error::Dimension(_) | Error::Io(_) => EXIT_USAGE,
        Error::Format(_) | Error::Decode(_) | Error::Image(_) => EXIT_FORMAT,
        Error::Numeric(_) => EXIT_NUMERIC,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = configure_threads(cli.threads).and_then(|_| run(cli.command));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("chromacodec: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn configure_threads(flag: Option<usize>) -> Result<()> {
    let n = match flag {
        Some(n) => Some(n),
        None => match std::env::var("CHROMACODEC_THREADS") {
            Ok(v) => Some(
                v.trim()
                    .parse()
                    .map_err(|_| Error::Usage(format!("CHROMACODEC_THREADS={v:?} is not a thread count")))?,
            ),
            Err(_) => None,
        },
    };
    match n {
        Some(0) => Err(Error::Usage("thread count must be at least 1".into())),
        Some(n) => set_pool(n),
        None => Ok(()),
    }
}

#[cfg(feature = "parallel")]
fn set_pool(n: usize) -> Result<()> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Usage(format!("cannot configure {n} threads: {e}")))
}

#[cfg(not(feature = "parallel"))]
fn set_pool(n: usize) -> Result<()> {
    if n > 1 {
        log::warn!("built without the parallel feature; running on one thread");
    }
    Ok(())
}

fn require_file(path: &Path, what: &str) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::Usage(format!("{what} {} not found", path.display())))
    }
}

fn require_dir(path: &Path, what: &str) -> Result<()> {
    if path.is_dir() {
        Ok(())
    } else {
        Err(Error::Usage(format!("{what} {} is not a directory", path.display())))
    }
}

fn model_from(path: &Path) -> Result<Model> {
    require_file(path, "checkpoint")?;
    Ok(load_checkpoint(path)?.model)
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Train(args) => cmd_train(*args),
        Command::Compress { input, checkpoint, output } => {
            require_file(&input, "input image")?;
            let model = model_from(&checkpoint)?;
            let img = read_image(&input)?;
            let bytes = compress_image(&model, &img)?.to_bytes();
            write_atomic(&output, &bytes)?;
            println!("bpp={}", (bytes.len() * 8) as f64 / (img.width() * img.height()) as f64);
            Ok(())
        }
        Command::Decompress { input, checkpoint, output } => {
            require_file(&input, "bitstream")?;
            let model = model_from(&checkpoint)?;
            let parsed = CompressedImage::from_bytes(&std::fs::read(&input)?)?;
            write_image(&decompress_image(&model, &parsed)?, &output)
        }
        Command::Eval { input, checkpoint, output } => {
            let images = if input.is_dir() {
                load_image_dir(&input)?
            } else {
                require_file(&input, "input image")?;
                vec![(display_name(&input), read_image(&input)?)]
            };
            if images.is_empty() {
                return Err(Error::Usage(format!("no images in {}", input.display())));
            }
            let model = model_from(&checkpoint)?;
            let mut rows = evaluate(&model, &images)?;
            rows.push(RdRecord::mean("mean", &rows));
            let mut csv = format!("image,{}\n", RD_HEADER.join(","));
            rows.iter().for_each(|r| csv.push_str(&rd_row(&[&r.name], r)));
            emit(output.as_deref(), &csv)
        }
        Command::Impulse { input, checkpoint, out_dir, columns, dct } => {
            require_file(&input, "input image")?;
            if columns == 0 {
                return Err(Error::Usage("--columns must be at least 1".into()));
            }
            let model = model_from(&checkpoint)?;
            let img = read_image(&input)?;
            std::fs::create_dir_all(&out_dir)?;
            let mut csv = format!("{IMPULSE_CSV_HEADER}\n");
            for branch in Branch::ALL {
                let set = order_by_bitrate(impulse_responses(&model, &img, branch)?);
                write_image(&render_grid(&set.tiles(), columns)?, out_dir.join(format!("{}_grid.png", branch.name())))?;
                csv.push_str(&set.csv_rows());
            }
            write_atomic(out_dir.join("impulses.csv"), csv.as_bytes())?;
            if dct {
                let f = model.config.downsample_factor();
                let basis = dct_basis(f);
                let refs: Vec<&ImageRGB> = basis.iter().collect();
                write_image(&render_grid(&refs, f)?, out_dir.join("dct_basis.png"))?;
            }
            Ok(())
        }
        Command::Rdcurve { images, checkpoints, output } => {
            require_dir(&images, "image directory")?;
            checkpoints.iter().try_for_each(|c| require_file(c, "checkpoint"))?;
            let data = load_image_dir(&images)?;
            if data.is_empty() {
                return Err(Error::Usage(format!("no images in {}", images.display())));
            }
            let mut csv = format!("checkpoint,image,{}\n", RD_HEADER.join(","));
            for ck in &checkpoints {
                let model = model_from(ck)?;
                let rows = evaluate(&model, &data)?;
                let name = ck.display().to_string();
                rows.iter().for_each(|r| csv.push_str(&rd_row(&[&name, &r.name], r)));
                csv.push_str(&rd_row(&[&name, "mean"], &RdRecord::mean("mean", &rows)));
            }
            emit(output.as_deref(), &csv)
        }
    }
}

fn display_name(path: &Path) -> String {
    path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}

fn rd_row(keys: &[&str], r: &RdRecord) -> String {
    let values: Vec<String> = r.values().iter().map(f64::to_string).collect();
    format!("{},{}\n", keys.join(","), values.join(","))
}

fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => write_atomic(p, text.as_bytes()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let mut cfg = match &args.config {
        Some(p) => {
            require_file(p, "config")?;
            TrainConfig::load(p)?
        }
        None => TrainConfig::default(),
    };
    if let Some(p) = &args.preset {
        cfg.model = ModelConfig::preset(p)?;
    }
    if let Some(l) = &args.lambda {
        cfg.weights = LossWeights::parse(l)?;
    }
    macro_rules! over {
        ($($field:ident),*) => { $(if let Some(v) = args.$field.clone() { cfg.$field = v; })* };
    }
    over!(steps, patch_size, batch_size, lr, seed, validate_every, checkpoint_every);
    if args.train_dir.is_some() {
        cfg.train_dir = args.train_dir.clone();
    }
    if args.val_dir.is_some() {
        cfg.val_dir = args.val_dir.clone();
    }
    if args.log_csv.is_some() {
        cfg.log_csv = args.log_csv.clone();
    }
    cfg.checkpoint = Some(args.checkpoint.clone());
    cfg.validate()?;

    let train_images: Vec<ImageRGB> = match &cfg.train_dir {
        Some(d) => {
            require_dir(d, "training directory")?;
            load_image_dir(d)?.into_iter().map(|(_, i)| i).collect()
        }
        None => synthetic_dataset(cfg.synthetic_count, cfg.synthetic_size, cfg.synthetic_size, cfg.seed),
    };
    let val_images: Vec<ImageRGB> = match &cfg.val_dir {
        Some(d) => {
            require_dir(d, "validation directory")?;
            load_image_dir(d)?.into_iter().map(|(_, i)| i).collect()
        }
        None => synthetic_dataset(cfg.val_count, cfg.synthetic_size, cfg.synthetic_size, cfg.seed ^ 0x5e_ed0f_ba11),
    };
    let init = if args.resume && args.checkpoint.is_file() {
        Some(load_checkpoint(&args.checkpoint)?)
    } else {
        None
    };
    let out = train(&cfg, init, &train_images, &val_images)?;
    if let (Some(first), Some(last)) = (out.log.steps.first(), out.log.steps.last()) {
        log::info!(
            "trained steps {}..={} in {:.1}s, loss {:.4} -> {:.4}",
            first.step,
            last.step,
            out.log.seconds,
            first.loss.total,
            last.loss.total
        );
    }
    log::info!("checkpoint written to {}", args.checkpoint.display());
    Ok(())
}
