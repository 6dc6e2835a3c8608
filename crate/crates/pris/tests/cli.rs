use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use pris::imageio::save_png;
use pris::report::{report_from_json, LogLine};
use pris::synth;

fn pris(args: &[&str], seed: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_pris"));
    cmd.args(args).env("RUST_LOG", "warn").env_remove("PRIS_SEED");
    if let Some(s) = seed {
        cmd.env("PRIS_SEED", s);
    }
    cmd.output().unwrap()
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn write_images(dir: &Path, seed: u64, count: usize, h: usize, w: usize) {
    std::fs::create_dir_all(dir).unwrap();
    for (i, img) in synth::images(seed, count, h, w).iter().enumerate() {
        save_png(&dir.join(format!("{i:02}.png")), img).unwrap();
    }
}

struct Workspace {
    _tmp: tempfile::TempDir,
    root: PathBuf,
}

impl Workspace {
    fn new() -> Self {
        let tmp = tempfile::tempdir().unwrap();
        let root = tmp.path().to_path_buf();
        write_images(&root.join("train"), 1, 4, 16, 16);
        write_images(&root.join("test"), 50, 3, 16, 16);
        Self { _tmp: tmp, root }
    }

    fn config(&self, name: &str, extra_train: &str, extra: &str) -> PathBuf {
        let text = format!(
            "[model]\nblocks = 1\nsubnet = {{ growth = 4, hidden_layers = 1 }}\nenhancer = {{ growth = 4, hidden_layers = 1 }}\n\
             [train]\nepochs = [2, 1, 1]\nlr = [1e-3, 1e-3, 1e-4]\nbatch_size = 2\n{extra_train}\n\
             [data]\ntrain_dir = \"train\"\ncrop = 16\n\
             [attacks]\ntrain = [\"identity\", \"gauss10\"]\n\
             [output]\ndir = \"runs/{name}\"\n{extra}"
        );
        let path = self.root.join(format!("{name}.toml"));
        std::fs::write(&path, text).unwrap();
        path
    }

    fn run_dir(&self, name: &str) -> PathBuf {
        self.root.join("runs").join(name)
    }

    fn train(&self, name: &str, extra_train: &str) -> PathBuf {
        let cfg = self.config(name, extra_train, "");
        ok(&pris(&["train", "--config", p(&cfg)], None));
        self.run_dir(name).join("model.ckpt")
    }
}

fn log_lines(path: &Path) -> Vec<LogLine> {
    std::fs::read_to_string(path).unwrap().lines().map(|l| LogLine::parse(l).unwrap()).collect()
}

#[test]
fn train_writes_checkpoints_and_log() {
    let ws = Workspace::new();
    let model = ws.train("a", "");
    let dir = ws.run_dir("a");
    for f in ["model.step1.ckpt", "model.step2.ckpt", "model.step3.ckpt"] {
        assert!(dir.join(f).exists(), "{f}");
    }
    assert!(model.exists());
    let log = log_lines(&dir.join("metrics.jsonl"));
    let steps: Vec<(u8, usize)> = log.iter().map(|l| (l.step, l.epoch)).collect();
    assert_eq!(steps, [(1, 0), (1, 1), (2, 0), (3, 0)]);
}

#[test]
fn joint_flag_runs_one_step() {
    let ws = Workspace::new();
    ws.train("j", "three_step = false");
    let log = log_lines(&ws.run_dir("j").join("metrics.jsonl"));
    assert_eq!(log.len(), 4);
    assert!(log.iter().all(|l| l.step == 1));
    assert!(ws.run_dir("j").join("model.step1.ckpt").exists());
    assert!(!ws.run_dir("j").join("model.step2.ckpt").exists());
}

#[test]
fn seed_override_from_environment() {
    let ws = Workspace::new();
    let cfg = ws.config("s", "", "");
    let log = ws.run_dir("s").join("metrics.jsonl");
    let mut runs = Vec::new();
    for seed in ["11", "11", "12"] {
        ok(&pris(&["train", "--config", p(&cfg)], Some(seed)));
        runs.push(std::fs::read(&log).unwrap());
    }
    assert_eq!(runs[0], runs[1]);
    assert_ne!(runs[0], runs[2]);
    let dump = ok(&pris(&["train", "--config", p(&cfg), "--dump-config"], Some("11")));
    assert!(dump.contains("init = 11\ntrain = 11\neval = 11"));
    let bad = pris(&["train", "--config", p(&cfg)], Some("minus one"));
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn dump_config_round_trips() {
    let ws = Workspace::new();
    let cfg = ws.config("d", "grad_mode = \"one\"", "");
    let first = ok(&pris(&["train", "--config", p(&cfg), "--dump-config"], None));
    let echoed = ws.root.join("elsewhere").join("echo.toml");
    std::fs::create_dir_all(echoed.parent().unwrap()).unwrap();
    std::fs::write(&echoed, &first).unwrap();
    let second = ok(&pris(&["train", "--config", p(&echoed), "--dump-config"], None));
    assert_eq!(first, second);
    assert!(first.contains("grad_mode = \"one\""));
    // dumping does not train
    assert!(!ws.run_dir("d").exists());
}

#[test]
fn config_errors_exit_2() {
    let ws = Workspace::new();
    for (name, extra) in [("u", "[surprise]\nx = 1\n"), ("v", "[seeds]\ninit = \"one\"\n")] {
        let cfg = ws.config(name, "", extra);
        let out = pris(&["train", "--config", p(&cfg)], None);
        assert_eq!(out.status.code(), Some(2), "{name}");
        assert!(String::from_utf8_lossy(&out.stderr).contains("configuration error"));
    }
    let bad_attack = ws.config("w", "", "");
    let text = std::fs::read_to_string(&bad_attack).unwrap().replace("\"gauss10\"", "\"blur3\"");
    std::fs::write(&bad_attack, text).unwrap();
    assert_eq!(pris(&["train", "--config", p(&bad_attack)], None).status.code(), Some(2));
    let missing = ws.root.join("nope.toml");
    assert_eq!(pris(&["train", "--config", p(&missing)], None).status.code(), Some(2));
}

#[test]
fn data_errors_exit_3() {
    let ws = Workspace::new();
    let cfg = ws.config("e", "", "");
    let text = std::fs::read_to_string(&cfg).unwrap().replace("crop = 16", "crop = 32");
    std::fs::write(&cfg, text).unwrap();
    let out = pris(&["train", "--config", p(&cfg)], None);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("smaller than the crop"));
}

#[test]
fn divergence_exits_4() {
    let ws = Workspace::new();
    let cfg = ws.config("n", "", "");
    let text = std::fs::read_to_string(&cfg).unwrap().replace("lr = [1e-3, 1e-3, 1e-4]", "lr = [1e30, 1e30, 1e30]");
    std::fs::write(&cfg, text).unwrap();
    let out = pris(&["train", "--config", p(&cfg)], None);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("non-finite"));
}

#[test]
fn embed_and_extract() {
    let ws = Workspace::new();
    let model = ws.train("m", "");
    write_images(&ws.root.join("big"), 70, 2, 40, 36);
    let (host, secret) = (ws.root.join("big/00.png"), ws.root.join("big/01.png"));
    let c1 = ws.root.join("c1.png");
    let c2 = ws.root.join("c2.png");
    for c in [&c1, &c2] {
        ok(&pris(&["embed", "--model", p(&model), "--host", p(&host), "--secret", p(&secret), "--out", p(c)], None));
    }
    assert_eq!(std::fs::read(&c1).unwrap(), std::fs::read(&c2).unwrap());
    let img = image::open(&c1).unwrap();
    assert_eq!((img.width(), img.height()), (32, 32));
    assert!(matches!(img, image::DynamicImage::ImageRgb8(_)));

    let e1 = ws.root.join("e1.png");
    let e2 = ws.root.join("e2.png");
    let e3 = ws.root.join("e3.png");
    for (e, seed) in [(&e1, "4"), (&e2, "4"), (&e3, "5")] {
        ok(&pris(&["extract", "--model", p(&model), "--container", p(&c1), "--out", p(e), "--z-seed", seed], None));
    }
    assert_eq!(std::fs::read(&e1).unwrap(), std::fs::read(&e2).unwrap());
    assert_ne!(std::fs::read(&e1).unwrap(), std::fs::read(&e3).unwrap());

    let out = pris(
        &["extract", "--model", p(&model), "--container", p(&c1), "--out", p(&e3), "--attack", "jpeg80"],
        None,
    );
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("jpeg80") && err.contains("available: default"), "{err}");

    let small = ws.root.join("test/00.png");
    let out = pris(&["embed", "--model", p(&model), "--host", p(&host), "--secret", p(&small), "--out", p(&c2)], None);
    assert_eq!(out.status.code(), Some(3));
    let gone = ws.root.join("missing.ckpt");
    let out = pris(&["embed", "--model", p(&gone), "--host", p(&host), "--secret", p(&secret), "--out", p(&c2)], None);
    assert_eq!(out.status.code(), Some(3));
    let out = pris(
        &["embed", "--model", p(&model), "--host", p(&host), "--secret", p(&secret), "--out", p(&c2), "--attack", "round"],
        None,
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn eval_levels() {
    let ws = Workspace::new();
    let model = ws.train("v", "");
    let out_base = ws.root.join("rep");
    let stdout = ok(&pris(
        &["eval", "--model", p(&model), "--data", p(&ws.root.join("test")), "--level", "4", "--attacks", "identity,gauss10,rjpeg90", "--out", p(&out_base)],
        None,
    ));
    assert!(stdout.contains("rjpeg90"));
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(ws.root.join("rep.json")).unwrap()).unwrap();
    let report = report_from_json(&json).unwrap();
    assert_eq!(report.level, 4);
    assert_eq!(report.rows.len(), 3);
    assert!(report.rows.iter().all(|r| r.psnr_c == report.rows[0].psnr_c && r.n_images == 3));
    let hash = pris::checkpoint::sha256_hex(&std::fs::read(&model).unwrap());
    assert_eq!(report.model_hash, hash);
    assert!(std::fs::read_to_string(ws.root.join("rep.txt")).unwrap().contains("PSNR-S"));

    // unknown labels are rejected before anything is loaded
    let out = pris(
        &["eval", "--model", p(&ws.root.join("missing.ckpt")), "--data", p(&ws.root), "--level", "4", "--attacks", "identity,blur", "--out", p(&out_base)],
        None,
    );
    assert_eq!(out.status.code(), Some(2));
    for level in ["3", "1", "7"] {
        let out = pris(
            &["eval", "--model", p(&model), "--data", p(&ws.root.join("test")), "--level", level, "--attacks", "gauss10", "--out", p(&out_base)],
            None,
        );
        assert_eq!(out.status.code(), Some(2), "level {level}");
    }
}

#[test]
fn per_attack_enhancers_give_level_three() {
    let ws = Workspace::new();
    let model = ws.train("l3", "per_attack_enhancers = true\nfinetune_epochs = 1");
    assert!(ws.run_dir("l3").join("metrics.enhance.gauss10.jsonl").exists());
    let out = ws.root.join("r3");
    let stdout = ok(&pris(
        &["eval", "--model", p(&model), "--data", p(&ws.root.join("test")), "--level", "3", "--attacks", "gauss10,identity", "--out", p(&out)],
        None,
    ));
    assert!(stdout.contains("level 3"));
    let c = ws.root.join("c.png");
    let (h, s) = (ws.root.join("test/00.png"), ws.root.join("test/01.png"));
    ok(&pris(&["embed", "--model", p(&model), "--host", p(&h), "--secret", p(&s), "--out", p(&c)], None));
    ok(&pris(&["extract", "--model", p(&model), "--container", p(&c), "--out", p(&ws.root.join("x.png")), "--attack", "gauss10"], None));
}

#[test]
fn per_attack_models_give_level_one() {
    let ws = Workspace::new();
    let model = ws.train("l1", "per_attack_models = true");
    let dir = ws.run_dir("l1");
    for f in ["model.identity.ckpt", "model.gauss10.ckpt", "metrics.gauss10.jsonl"] {
        assert!(dir.join(f).exists(), "{f}");
    }
    assert!(!model.exists());
    let out = ws.root.join("r1");
    let stdout = ok(&pris(
        &["eval", "--model", p(&model), "--data", p(&ws.root.join("test")), "--level", "1", "--attacks", "gauss10,identity", "--out", p(&out)],
        None,
    ));
    assert!(stdout.contains("level 1"));
    let (h, s) = (ws.root.join("test/00.png"), ws.root.join("test/01.png"));
    let c = ws.root.join("c.png");
    ok(&pris(&["embed", "--model", p(&model), "--host", p(&h), "--secret", p(&s), "--out", p(&c), "--attack", "gauss10"], None));
    ok(&pris(&["extract", "--model", p(&model), "--container", p(&c), "--out", p(&ws.root.join("x.png")), "--attack", "gauss10"], None));
    // level 4 needs the shared model, which was never trained
    let out4 = pris(
        &["eval", "--model", p(&model), "--data", p(&ws.root.join("test")), "--level", "4", "--attacks", "gauss10", "--out", p(&out)],
        None,
    );
    assert_eq!(out4.status.code(), Some(3));
}

#[test]
fn bitpack_demo_is_lossless() {
    let ws = Workspace::new();
    let (h, s) = (ws.root.join("test/00.png"), ws.root.join("test/01.png"));
    let out_dir = ws.root.join("bp");
    let stdout = ok(&pris(&["bitpack-demo", "--host", p(&h), "--secret", p(&s), "--out-dir", p(&out_dir)], None));
    assert!(stdout.contains("exact"));
    assert!(stdout.contains("floor      144.5284 dB"));
    let recovered = image::open(out_dir.join("recovered.png")).unwrap().to_rgb8();
    let secret = image::open(&s).unwrap().to_rgb8();
    assert_eq!(recovered, secret);
    let wide = pris::widefile::load(&out_dir.join("container.prw")).unwrap();
    assert_eq!((wide.width, wide.height, wide.channels), (16, 16, 3));

    write_images(&ws.root.join("odd"), 9, 1, 32, 16);
    let out = pris(&["bitpack-demo", "--host", p(&h), "--secret", p(&ws.root.join("odd/00.png")), "--out-dir", p(&out_dir)], None);
    assert_eq!(out.status.code(), Some(3));
}
