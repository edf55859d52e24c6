use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use daec2::synthetic::{write_event_tree, write_frame_tree, ToySpec};
use daec2::trainer::{load_checkpoint, save_checkpoint, FORMAT_VERSION};
use daec2_cli::config::resolve;

struct Fixture {
    dir: tempfile::TempDir,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let spec = ToySpec::default();
        write_frame_tree(&dir.path().join("frames"), &spec, ["train", "test"]).unwrap();
        write_event_tree(&dir.path().join("events"), &spec, ["Train", "Test"]).unwrap();
        let f = Self { dir };
        fs::write(f.config(), f.config_text()).unwrap();
        f
    }

    fn path(&self, p: &str) -> PathBuf {
        self.dir.path().join(p)
    }

    fn config(&self) -> PathBuf {
        self.path("run.toml")
    }

    fn config_text(&self) -> String {
        format!(
            r#"[data]
frame_root = "{frames}"
event_root = "{events}"
event_sensor = [16, 16]
val_fraction = 0.25

[network]
input_size = [16, 16]
base_channels = 4
num_classes = 4
projection_dim = 6
discriminator_channels = 4
discriminator_depth = 2
refinement_channels = 4
refinement_blocks = 1

[train]
epochs = 1
batch_size = 4
lr = 1e-3
max_steps_per_epoch = 2

[train.augment_frame.crop]
size = [12, 12]

[train.augment_event.crop]
size = [12, 12]

[output]
dir = "{out}"
run_name = "toy"
"#,
            frames = self.path("frames").display(),
            events = self.path("events").display(),
            out = self.path("runs").display(),
        )
    }

    fn run(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_daec2"))
            .args(args)
            .env("DAEC2_DETERMINISTIC", "1")
            .env("RUST_LOG", "warn")
            .output()
            .unwrap()
    }

    fn train(&self, extra: &[&str]) -> Output {
        let config = self.config();
        let mut args = vec!["train", "--config", config.to_str().unwrap()];
        args.extend_from_slice(extra);
        self.run(&args)
    }

    fn trained_checkpoint(&self) -> PathBuf {
        let out = self.train(&[]);
        assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
        self.path("runs/toy/checkpoints/epoch_0001.safetensors")
    }
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn train_populates_the_run_directory() {
    let f = Fixture::new();
    let ck = f.trained_checkpoint();
    let run = f.path("runs/toy");
    assert!(ck.exists());
    let metrics = fs::read_to_string(run.join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 2);
    let header = metrics.lines().next().unwrap();
    for col in ["val_frame_acc", "val_event_acc", "test_frame_acc", "test_event_acc"] {
        assert!(header.contains(col), "{header}");
    }
    assert!(run.join("steps.csv").exists());

    // the echoed config is the fully resolved one
    let echoed = fs::read_to_string(run.join("config.toml")).unwrap();
    let expected = resolve(&f.config_text(), &[]).unwrap();
    assert_eq!(resolve(&echoed, &[]).unwrap(), expected);
    assert!(echoed.contains("lambda4"), "defaults are written out");
}

#[test]
fn overrides_reach_the_echoed_config() {
    let f = Fixture::new();
    let out = f.train(&["--set", "train.epochs=0", "--set", "output.run_name=zero"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let echoed = fs::read_to_string(f.path("runs/zero/config.toml")).unwrap();
    assert_eq!(resolve(&echoed, &[]).unwrap().train.epochs, 0);
}

#[test]
fn missing_dataset_path_is_a_usage_error() {
    let f = Fixture::new();
    let out = f.train(&["--set", "data.frame_root=/nonexistent/frames"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("/nonexistent/frames"), "{}", stderr(&out));
}

#[test]
fn unknown_key_and_bad_lr_are_usage_errors() {
    let f = Fixture::new();
    let out = f.train(&["--set", "train.learning_rate=0.1"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("train.learning_rate"), "{}", stderr(&out));
    let out = f.train(&["--set", "train.lr=-1"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("lr"), "{}", stderr(&out));
    let out = f.run(&["train"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn hostile_weight_aborts_with_runtime_code_and_term() {
    let f = Fixture::new();
    let out = f.train(&["--set", "train.weights.cyc_cont=1e300"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("cyc_cont"), "{}", stderr(&out));
}

#[test]
fn eval_prints_reports_for_both_domains() {
    let f = Fixture::new();
    let ck = f.trained_checkpoint();
    for (root, split, domain, extra) in [
        ("frames", "test", "frame", None),
        ("events", "Test", "event", None),
        ("events", "Test", "event", Some("--events-as-frames")),
    ] {
        let root = f.path(root);
        let mut args = vec![
            "eval",
            "--checkpoint",
            s(&ck),
            "--root",
            s(&root),
            "--split",
            split,
            "--domain",
            domain,
            "--sensor",
            "16x16",
        ];
        args.extend(extra);
        let out = f.run(&args);
        assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
        let report: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
        assert_eq!(report["count"], 16);
        assert_eq!(report["epoch"], 1);
        let acc = report["accuracy"].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&acc));
    }
}

#[test]
fn eval_rejects_a_future_checkpoint_version() {
    let f = Fixture::new();
    let ck = f.trained_checkpoint();
    let mut c = load_checkpoint(&ck).unwrap();
    c.version = FORMAT_VERSION + 1;
    let bad = f.path("future.safetensors");
    save_checkpoint(&c, &bad).unwrap();
    let root = f.path("frames");
    let out = f.run(&[
        "eval", "--checkpoint", s(&bad), "--root", s(&root), "--split", "test", "--domain", "frame",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("version"), "{}", stderr(&out));
}

#[test]
fn export_writes_both_domains_and_protects_the_output() {
    let f = Fixture::new();
    let ck = f.trained_checkpoint();
    let out_file = f.path("emb/embeddings.csv");
    let (frames, events) = (f.path("frames"), f.path("events"));
    let args = [
        "export-embeddings",
        "--checkpoint",
        s(&ck),
        "--frame-root",
        s(&frames),
        "--frame-split",
        "test",
        "--event-root",
        s(&events),
        "--event-split",
        "Test",
        "--sensor",
        "16x16",
        "--out",
        s(&out_file),
    ];
    let out = f.run(&args);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let dump = daec2::eval::read_embeddings(&out_file).unwrap();
    assert_eq!(dump.rows.len(), 32);
    let frames_n = dump.rows.iter().filter(|r| r.domain == daec2::data::Domain::Frame).count();
    assert_eq!(frames_n, 16);

    let again = f.run(&args);
    assert_eq!(again.status.code(), Some(1));
    assert!(stderr(&again).contains("--force"), "{}", stderr(&again));

    let mut forced = args.to_vec();
    forced.push("--force");
    assert_eq!(f.run(&forced).status.code(), Some(0));
}

#[test]
fn ablate_dry_run_lists_the_loss_grid() {
    let f = Fixture::new();
    let config = f.config();
    let out = f.run(&["ablate", "--config", s(&config), "--preset", "losses", "--dry-run"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = stdout(&out);
    let names: Vec<&str> = text.lines().map(|l| l.split('\t').nth(1).unwrap()).collect();
    assert_eq!(
        names,
        [
            "Baseline",
            "With Self-Supervised Learning Loss",
            "With Uncorrelated Condition",
            "With Both"
        ]
    );
    assert!(!f.path("runs/toy").exists(), "dry run must not train");
}

#[test]
fn ablate_rejects_empty_and_malformed_grids() {
    let f = Fixture::new();
    let config = f.config();
    let grid = f.path("grid.toml");
    fs::write(&grid, "").unwrap();
    let out = f.run(&["ablate", "--config", s(&config), "--grid", s(&grid)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("empty"), "{}", stderr(&out));

    fs::write(&grid, "[[run]]\nname = \"a\"\n[run.train]\nenable_magic = true\n").unwrap();
    let out = f.run(&["ablate", "--config", s(&config), "--grid", s(&grid), "--dry-run"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("run[0].train.enable_magic"), "{}", stderr(&out));

    let out = f.run(&["ablate", "--config", s(&config), "--preset", "nope", "--dry-run"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn ablate_writes_one_row_per_grid_entry() {
    let f = Fixture::new();
    let config = f.config();
    let grid = f.path("grid.toml");
    fs::write(
        &grid,
        "[[run]]\nname = \"Baseline\"\n[run.train]\nenable_selfsup = false\nenable_uncorr = false\n\n\
         [[run]]\nname = \"With Both\"\n",
    )
    .unwrap();
    let out = f.run(&["ablate", "--config", s(&config), "--grid", s(&grid)]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let csv = fs::read_to_string(f.path("runs/toy/ablation.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("\"Baseline\",false,false"), "{}", lines[1]);
    assert!(lines[2].starts_with("\"With Both\",true,true"), "{}", lines[2]);
    for slug in ["baseline", "with_both"] {
        let run = f.path("runs/toy").join(slug);
        assert!(run.join("config.toml").exists());
        assert!(run.join("metrics.csv").exists());
    }
}
