//! End-to-end runs of the `chromacodec` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use chromacodec::color::{read_image, write_image, ImageRGB};
use chromacodec::entropy::EntropyTables;
use chromacodec::model::{save_checkpoint, LossWeights, Model, ModelConfig};
use chromacodec::train::round_trip;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_chromacodec"));
    c.env_remove("CHROMACODEC_THREADS").env("RUST_LOG", "warn");
    c
}

fn run(args: &[&dyn AsRef<std::ffi::OsStr>]) -> Output {
    bin().args(args.iter().map(|a| a.as_ref())).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn image(w: usize, h: usize, seed: usize) -> ImageRGB {
    ImageRGB::from_fn(w, h, |x, y| {
        let v = ((x * 7 + y * 13 + seed * 31) % 97) as f64 / 96.0;
        [v, 1.0 - v, ((x + seed) % 5) as f64 / 4.0]
    })
}

struct Fixture {
    dir: tempfile::TempDir,
}

impl Fixture {
    fn new() -> Self {
        Self { dir: tempfile::tempdir().unwrap() }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn checkpoint(&self, name: &str, q: usize, seed: u64) -> PathBuf {
        let model = Model::new(ModelConfig::tiny(), LossWeights::preset(q).unwrap(), seed).unwrap();
        let p = self.path(name);
        save_checkpoint(&p, &model, None).unwrap();
        p
    }

    fn png(&self, name: &str, img: &ImageRGB) -> PathBuf {
        let p = self.path(name);
        write_image(img, &p).unwrap();
        p
    }
}

fn model_of(path: &Path) -> Model {
    chromacodec::model::load_checkpoint(path).unwrap().model
}

#[test]
fn compress_prints_bpp_from_file_size() {
    let f = Fixture::new();
    let ck = f.checkpoint("m.ckpt", 2, 1);
    let input = f.png("in.png", &image(40, 24, 1));
    let out = f.path("in.ccb");
    let o = run(&[&"compress", &"-i", &input, &"-c", &ck, &"-o", &out]);
    assert_eq!(code(&o), 0, "{o:?}");
    let size = std::fs::metadata(&out).unwrap().len() as f64;
    let printed: f64 = stdout(&o).trim().strip_prefix("bpp=").unwrap().parse().unwrap();
    assert_eq!(printed, size * 8.0 / 960.0);
}

#[test]
fn decompress_matches_the_evaluation_path() {
    let f = Fixture::new();
    let ck = f.checkpoint("m.ckpt", 3, 2);
    let input = f.png("in.png", &image(50, 33, 2));
    let (bits, decoded) = (f.path("x.ccb"), f.path("x.png"));
    assert_eq!(code(&run(&[&"compress", &"-i", &input, &"-c", &ck, &"-o", &bits])), 0);
    assert_eq!(code(&run(&[&"decompress", &"-i", &bits, &"-c", &ck, &"-o", &decoded])), 0);
    let model = model_of(&ck);
    let (bytes, recon) = round_trip(&model, &EntropyTables::new(&model).unwrap(), &read_image(&input).unwrap()).unwrap();
    assert_eq!(std::fs::read(&bits).unwrap(), bytes);
    let expect = chromacodec::color::to_rgb8(&recon);
    let got = chromacodec::color::to_rgb8(&read_image(&decoded).unwrap());
    assert_eq!(got, expect);
}

#[test]
fn one_pixel_image_round_trips() {
    let f = Fixture::new();
    let ck = f.checkpoint("m.ckpt", 1, 3);
    let input = f.png("dot.png", &ImageRGB::from_fn(1, 1, |_, _| [0.2, 0.6, 0.9]));
    let (bits, out) = (f.path("dot.ccb"), f.path("dot.ppm"));
    assert_eq!(code(&run(&[&"compress", &"-i", &input, &"-c", &ck, &"-o", &bits])), 0);
    assert_eq!(code(&run(&[&"decompress", &"-i", &bits, &"-c", &ck, &"-o", &out])), 0);
    let img = read_image(&out).unwrap();
    assert_eq!((img.width(), img.height()), (1, 1));
    assert_eq!(&std::fs::read(&out).unwrap()[..2], b"P6");
}

#[test]
fn usage_errors_exit_2() {
    let f = Fixture::new();
    let input = f.png("in.png", &image(16, 16, 0));
    let out = f.path("never.ccb");
    let o = run(&[&"compress", &"-i", &input, &"-c", &f.path("missing.ckpt"), &"-o", &out]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("checkpoint"));
    assert!(!out.exists());
    let ck = f.checkpoint("m.ckpt", 2, 0);
    assert_eq!(code(&run(&[&"compress", &"-i", &f.path("nope.png"), &"-c", &ck, &"-o", &out])), 2);
    assert_eq!(code(&run(&[&"compress", &"-i", &input])), 2);
    assert_eq!(code(&run(&[&"--threads", &"0", &"compress", &"-i", &input, &"-c", &ck, &"-o", &out])), 2);
    let o = bin().env("CHROMACODEC_THREADS", "many").args(["eval", "-c"]).arg(&ck).arg("-i").arg(&input).output().unwrap();
    assert_eq!(code(&o), 2);
    assert_eq!(code(&run(&[&"rdcurve", &"--images", &f.path("none"), &"-c", &ck])), 2);
    assert_eq!(code(&run(&[&"frobnicate"])), 2);
    assert!(!out.exists());
}

#[test]
fn format_errors_exit_3() {
    let f = Fixture::new();
    let ck = f.checkpoint("m.ckpt", 2, 4);
    let input = f.png("in.png", &image(32, 32, 4));
    let bits = f.path("x.ccb");
    assert_eq!(code(&run(&[&"compress", &"-i", &input, &"-c", &ck, &"-o", &bits])), 0);
    let mut bytes = std::fs::read(&bits).unwrap();
    bytes.truncate(bytes.len() - 3);
    std::fs::write(&bits, &bytes).unwrap();
    let out = f.path("x.png");
    assert_eq!(code(&run(&[&"decompress", &"-i", &bits, &"-c", &ck, &"-o", &out])), 3);
    assert!(!out.exists());
    let garbage = f.path("g.ckpt");
    std::fs::write(&garbage, b"not a checkpoint").unwrap();
    assert_eq!(code(&run(&[&"compress", &"-i", &input, &"-c", &garbage, &"-o", &bits])), 3);
    let cfg = f.path("bad.cfg");
    std::fs::write(&cfg, "learning_speed = 3\n").unwrap();
    assert_eq!(code(&run(&[&"train", &"--config", &cfg, &"-c", &f.path("t.ckpt")])), 3);
    // A bitstream for another architecture.
    let full = f.path("full.ckpt");
    save_checkpoint(&full, &Model::new(ModelConfig::full(), LossWeights::preset(2).unwrap(), 0).unwrap(), None).unwrap();
    let small = f.png("s.png", &image(16, 16, 5));
    assert_eq!(code(&run(&[&"compress", &"-i", &small, &"-c", &ck, &"-o", &bits])), 0);
    assert_eq!(code(&run(&[&"decompress", &"-i", &bits, &"-c", &full, &"-o", &out])), 3);
}

#[test]
fn numeric_errors_exit_4() {
    let f = Fixture::new();
    let mut model = Model::new(ModelConfig::tiny(), LossWeights::preset(2).unwrap(), 5).unwrap();
    // Huge biases at every stage overflow f64 through the squaring normalizations.
    for i in 0..4 {
        model.params.get_mut(&format!("lum.synthesis.deconv{i}.bias")).unwrap().data_mut().fill(2f64.powi(127));
    }
    let ck = f.path("blown.ckpt");
    save_checkpoint(&ck, &model, None).unwrap();
    let input = f.png("in.png", &image(16, 16, 6));
    let (bits, out) = (f.path("x.ccb"), f.path("x.png"));
    assert_eq!(code(&run(&[&"compress", &"-i", &input, &"-c", &ck, &"-o", &bits])), 0);
    let o = run(&[&"decompress", &"-i", &bits, &"-c", &ck, &"-o", &out]);
    assert_eq!(code(&o), 4, "{o:?}");
    assert!(!out.exists());
}

fn parse_csv(text: &str) -> (Vec<String>, Vec<Vec<String>>) {
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    (header, lines.map(|l| l.split(',').map(String::from).collect()).collect())
}

#[test]
fn eval_single_image_has_equal_mean_row() {
    let f = Fixture::new();
    let ck = f.checkpoint("m.ckpt", 2, 7);
    let input = f.png("one.png", &image(32, 16, 7));
    let o = run(&[&"eval", &"-i", &input, &"-c", &ck]);
    assert_eq!(code(&o), 0);
    let (header, rows) = parse_csv(&stdout(&o));
    assert_eq!(header, ["image", "bpp", "psnr_db", "msssim", "msssim_db", "ciede2000"]);
    assert_eq!(rows.len(), 2);
    assert_eq!((rows[0][0].as_str(), rows[1][0].as_str()), ("one.png", "mean"));
    assert_eq!(rows[0][1..], rows[1][1..]);
}

#[test]
fn rdcurve_rows_per_checkpoint() {
    let f = Fixture::new();
    let dir = f.path("imgs");
    std::fs::create_dir(&dir).unwrap();
    for i in 0..3 {
        write_image(&image(24 + 8 * i, 20, i), dir.join(format!("im{i}.png"))).unwrap();
    }
    let (a, b) = (f.checkpoint("a.ckpt", 1, 8), f.checkpoint("b.ckpt", 4, 9));
    let csv = f.path("rd.csv");
    let o = run(&[&"--threads", &"1", &"rdcurve", &"--images", &dir, &"-c", &a, &b, &"-o", &csv]);
    assert_eq!(code(&o), 0, "{o:?}");
    let text = std::fs::read_to_string(&csv).unwrap();
    let (header, rows) = parse_csv(&text);
    assert_eq!(header, ["checkpoint", "image", "bpp", "psnr_db", "msssim", "msssim_db", "ciede2000"]);
    assert_eq!(rows.len(), 8);
    let names: Vec<&str> = rows.iter().map(|r| r[1].as_str()).collect();
    assert_eq!(names, ["im0.png", "im1.png", "im2.png", "mean", "im0.png", "im1.png", "im2.png", "mean"]);
    for block in rows.chunks(4) {
        let values: Vec<Vec<f64>> = block.iter().map(|r| r[2..].iter().map(|v| v.parse().unwrap()).collect()).collect();
        for k in 0..5 {
            let mean = values[..3].iter().map(|v| v[k]).sum::<f64>() / 3.0;
            assert!((values[3][k] - mean).abs() <= 1e-12 * mean.abs().max(1.0));
        }
    }
    // Lossless CSV: values survive a text round trip bit for bit.
    let model = model_of(&a);
    let records = chromacodec::train::evaluate(&model, &chromacodec::train::load_image_dir(&dir).unwrap()).unwrap();
    let first: f64 = rows[0][2].parse().unwrap();
    assert_eq!(first.to_bits(), records[0].bpp.to_bits());
}

#[test]
fn impulse_outputs_and_rerun_determinism() {
    let f = Fixture::new();
    let ck = f.checkpoint("m.ckpt", 2, 10);
    let input = f.png("in.png", &image(48, 32, 10));
    let outs = [f.path("run1"), f.path("run2")];
    for out in &outs {
        let o = run(&[&"--threads", &"1", &"impulse", &"-i", &input, &"-c", &ck, &"--out-dir", out, &"--dct"]);
        assert_eq!(code(&o), 0, "{o:?}");
    }
    let lum = read_image(outs[0].join("lum_grid.png")).unwrap();
    let chroma = read_image(outs[0].join("chroma_grid.png")).unwrap();
    assert_eq!((lum.width(), lum.height()), (16 * 17 - 1, 2 * 17 - 1));
    assert_eq!((chroma.width(), chroma.height()), (16 * 17 - 1, 16));
    let dct = read_image(outs[0].join("dct_basis.png")).unwrap();
    assert_eq!((dct.width(), dct.height()), (16 * 17 - 1, 16 * 17 - 1));
    let csv = std::fs::read_to_string(outs[0].join("impulses.csv")).unwrap();
    let (header, rows) = parse_csv(&csv);
    assert_eq!(header.len(), 7);
    assert_eq!(rows.iter().filter(|r| r[0] == "lum").count(), 32);
    assert_eq!(rows.iter().filter(|r| r[0] == "chroma").count(), 16);
    for name in ["lum_grid.png", "chroma_grid.png", "impulses.csv", "dct_basis.png"] {
        assert_eq!(std::fs::read(outs[0].join(name)).unwrap(), std::fs::read(outs[1].join(name)).unwrap(), "{name}");
    }
}

#[test]
fn train_writes_checkpoint_and_resumes() {
    let f = Fixture::new();
    let cfg = f.path("t.cfg");
    std::fs::write(&cfg, "synthetic_count = 2\nsynthetic_size = 32\nval_count = 1\npatch_size = 16\nbatch_size = 1\n").unwrap();
    let (ck, log) = (f.path("t.ckpt"), f.path("log.csv"));
    let args: [&dyn AsRef<std::ffi::OsStr>; 11] =
        [&"--threads", &"1", &"train", &"--config", &cfg, &"-c", &ck, &"--log-csv", &log, &"--lambda", &"q3"];
    let o = bin().args(args.iter().map(|a| a.as_ref())).args(["--steps", "2"]).output().unwrap();
    assert_eq!(code(&o), 0, "{o:?}");
    let saved = chromacodec::model::load_checkpoint(&ck).unwrap();
    assert_eq!(saved.adam.unwrap().step, 2);
    assert_eq!(saved.model.weights, LossWeights::preset(3).unwrap());
    assert_eq!(std::fs::read_to_string(&log).unwrap().lines().count(), 3);
    let o = bin().args(args.iter().map(|a| a.as_ref())).args(["--steps", "3", "--resume"]).output().unwrap();
    assert_eq!(code(&o), 0, "{o:?}");
    let log_text = std::fs::read_to_string(&log).unwrap();
    let rows: Vec<&str> = log_text.lines().collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[1].starts_with("3,"));
    assert_eq!(chromacodec::model::load_checkpoint(&ck).unwrap().adam.unwrap().step, 3);
}
