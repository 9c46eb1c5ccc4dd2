//! CLI acceptance: repeating any command with the same configuration must
//! reproduce bit-identical checkpoints, logs, and CSV exports. Also pins
//! the exit-code contract and the weight-map export cardinality.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn binary() -> &'static str {
    env!("CARGO_BIN_EXE_autoassign")
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("aa_cli_{name}_{}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn run(args: &[&str]) -> Output {
    Command::new(binary())
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_cfg(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path
}

/// Byte content of every file under a directory, sorted by relative path.
fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(current) = stack.pop() {
        for entry in fs::read_dir(&current).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path
                    .strip_prefix(dir)
                    .unwrap()
                    .to_string_lossy()
                    .into_owned();
                files.push((rel, fs::read(&path).unwrap()));
            }
        }
    }
    files.sort();
    files
}

fn assert_identical(a: &Path, b: &Path) {
    let fa = dir_bytes(a);
    let fb = dir_bytes(b);
    let names_a: Vec<&String> = fa.iter().map(|(n, _)| n).collect();
    let names_b: Vec<&String> = fb.iter().map(|(n, _)| n).collect();
    assert_eq!(names_a, names_b, "file sets differ");
    for ((name, bytes_a), (_, bytes_b)) in fa.iter().zip(&fb) {
        assert_eq!(bytes_a, bytes_b, "{name} differs between identical runs");
    }
}

const SMOKE_TRAIN: &str =
    "train.iterations = 60\ntrain.scenes_per_step = 1\ntrain.seed = 5\neval.scenes = 6\n";

#[test]
fn criterion_7_train_runs_are_bit_identical() {
    let dir = scratch("train_det");
    let cfg = write_cfg(&dir, "train.cfg", SMOKE_TRAIN);
    let (out_a, out_b) = (dir.join("a"), dir.join("b"));

    for out in [&out_a, &out_b] {
        let start = std::time::Instant::now();
        let result = run(&[
            "train",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(
            result.status.success(),
            "train failed: {}",
            String::from_utf8_lossy(&result.stderr)
        );
        assert!(
            start.elapsed().as_secs() < 60,
            "smoke training must stay under a minute"
        );
    }
    // out.dir appears inside the persisted config; rewrite to a common value
    // before comparison so only genuine outputs are compared
    for out in [&out_a, &out_b] {
        let path = out.join("run_config.cfg");
        let text = fs::read_to_string(&path).unwrap();
        let scrubbed: String = text
            .lines()
            .map(|l| {
                if l.starts_with("out.dir = ") {
                    "out.dir = <scrubbed>"
                } else {
                    l
                }
            })
            .collect::<Vec<_>>()
            .join("\n");
        fs::write(&path, scrubbed).unwrap();
    }
    assert_identical(&out_a, &out_b);
    println!("PASS criterion 7 (cli determinism): train reruns byte-identical");
    let _ = fs::remove_dir_all(&dir);
}

#[test]
fn gen_data_and_dump_weights_are_deterministic() {
    let dir = scratch("data_det");
    let cfg = write_cfg(&dir, "gen.cfg", "data.scenes = 5\ndata.seed = 11\n");
    let (data_a, data_b) = (dir.join("da"), dir.join("db"));
    for out in [&data_a, &data_b] {
        let result = run(&[
            "gen-data",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(result.status.success());
        // the out.dir key differs by construction; scrub as in the train test
        let path = out.join("run_config.cfg");
        let text = fs::read_to_string(&path).unwrap();
        fs::write(
            &path,
            text.lines()
                .map(|l| {
                    if l.starts_with("out.dir = ") {
                        "out.dir = <scrubbed>"
                    } else {
                        l
                    }
                })
                .collect::<Vec<_>>()
                .join("\n"),
        )
        .unwrap();
    }
    assert_identical(&data_a, &data_b);

    // train a quick checkpoint, then dump twice
    let train_cfg = write_cfg(&dir, "train.cfg", SMOKE_TRAIN);
    let run_dir = dir.join("run");
    assert!(run(&[
        "train",
        "--config",
        train_cfg.to_str().unwrap(),
        "--out",
        run_dir.to_str().unwrap()
    ])
    .status
    .success());

    let dump_cfg = write_cfg(
        &dir,
        "dump.cfg",
        &format!(
            "dump.checkpoint = {}\ndump.dataset = {}\ndump.scene = scene_000001\n",
            run_dir.join("checkpoint").display(),
            data_a.display()
        ),
    );
    let (dump_a, dump_b) = (dir.join("wa"), dir.join("wb"));
    for out in [&dump_a, &dump_b] {
        let result = run(&[
            "dump-weights",
            "--config",
            dump_cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(
            result.status.success(),
            "{}",
            String::from_utf8_lossy(&result.stderr)
        );
        let path = out.join("run_config.cfg");
        let text = fs::read_to_string(&path).unwrap();
        fs::write(
            &path,
            text.lines()
                .map(|l| {
                    if l.starts_with("out.dir = ") {
                        "out.dir = <scrubbed>"
                    } else {
                        l
                    }
                })
                .collect::<Vec<_>>()
                .join("\n"),
        )
        .unwrap();
    }
    assert_identical(&dump_a, &dump_b);
    println!("PASS criterion 7 (cli determinism): gen-data and dump-weights reruns byte-identical");
    let _ = fs::remove_dir_all(&dir);
}

#[test]
fn dump_weights_file_cardinality() {
    // 2 objects and 2 levels must yield 2*2 positive maps + 2 negative maps
    let dir = scratch("cardinality");
    // a dataset whose scenes always hold exactly 2 large objects
    let gen_cfg = write_cfg(
        &dir,
        "gen.cfg",
        "data.scenes = 3\ndata.seed = 3\nscene.objects_min = 2\nscene.objects_max = 2\n\
         scene.max_overlap_iou = 0.2\n",
    );
    let data = dir.join("data");
    assert!(run(&[
        "gen-data",
        "--config",
        gen_cfg.to_str().unwrap(),
        "--out",
        data.to_str().unwrap()
    ])
    .status
    .success());

    let train_cfg = write_cfg(&dir, "train.cfg", SMOKE_TRAIN);
    let run_dir = dir.join("run");
    assert!(run(&[
        "train",
        "--config",
        train_cfg.to_str().unwrap(),
        "--out",
        run_dir.to_str().unwrap()
    ])
    .status
    .success());

    // find a stored scene with exactly 2 annotated objects
    let annotations = fs::read_to_string(data.join("annotations.txt")).unwrap();
    let scene_id = (0..3)
        .map(|i| format!("scene_{i:06}"))
        .find(|id| {
            annotations
                .lines()
                .filter(|l| l.starts_with(id.as_str()))
                .count()
                == 2
        })
        .expect("a 2-object scene exists");

    let dump_cfg = write_cfg(
        &dir,
        "dump.cfg",
        &format!(
            "dump.checkpoint = {}\ndump.dataset = {}\ndump.scene = {scene_id}\n",
            run_dir.join("checkpoint").display(),
            data.display()
        ),
    );
    let out = dir.join("dump");
    assert!(run(&[
        "dump-weights",
        "--config",
        dump_cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap()
    ])
    .status
    .success());

    let names: Vec<String> = fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    let pos = names.iter().filter(|n| n.ends_with("_pos.csv")).count();
    let neg = names.iter().filter(|n| n.ends_with("_neg.csv")).count();
    assert_eq!(
        pos, 4,
        "expected 2 objects x 2 levels positive maps, got {names:?}"
    );
    assert_eq!(neg, 2, "expected one negative map per level, got {names:?}");
    let _ = fs::remove_dir_all(&dir);
}

#[test]
fn exported_positive_weights_sum_to_one_per_object() {
    let dir = scratch("wsum");
    let cfg = write_cfg(&dir, "train.cfg", SMOKE_TRAIN);
    let out = dir.join("run");
    assert!(run(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap()
    ])
    .status
    .success());

    let csv = fs::read_to_string(out.join("probe_positive.csv")).unwrap();
    let mut sums: std::collections::BTreeMap<usize, f64> = Default::default();
    for line in csv.lines().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        let object: usize = fields[0].parse().unwrap();
        let w: f64 = fields[7].parse().unwrap();
        *sums.entry(object).or_insert(0.0) += w;
    }
    assert!(!sums.is_empty());
    for (object, total) in sums {
        assert!(
            (total - 1.0).abs() < 1e-6,
            "object {object}: exported w+ sums to {total}"
        );
    }
    let _ = fs::remove_dir_all(&dir);
}

#[test]
fn exit_codes_follow_the_contract() {
    let dir = scratch("exits");
    let cfg = write_cfg(&dir, "ok.cfg", "data.scenes = 2\n");

    // 0: success
    let out = dir.join("ok");
    assert_eq!(
        run(&[
            "gen-data",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap()
        ])
        .status
        .code(),
        Some(0)
    );

    // 0: a healthy gradient suite
    let quick = write_cfg(&dir, "quick_gc.cfg", "gradcheck.seeds = 1\n");
    let gc_ok = dir.join("gc_ok");
    assert_eq!(
        run(&[
            "gradcheck",
            "--config",
            quick.to_str().unwrap(),
            "--out",
            gc_ok.to_str().unwrap()
        ])
        .status
        .code(),
        Some(0)
    );

    // 1: check failure (deliberately corrupted gradient suite)
    let bad = write_cfg(
        &dir,
        "bad.cfg",
        "gradcheck.corrupt = sigmoid\ngradcheck.seeds = 1\n",
    );
    let gc_out = dir.join("gc");
    let corrupted = run(&[
        "gradcheck",
        "--config",
        bad.to_str().unwrap(),
        "--out",
        gc_out.to_str().unwrap(),
    ]);
    assert_eq!(corrupted.status.code(), Some(1));
    assert!(
        String::from_utf8_lossy(&corrupted.stderr).contains("sigmoid"),
        "failure must name the op: {}",
        String::from_utf8_lossy(&corrupted.stderr)
    );

    // 2: missing config file (distinct from check failure)
    assert_eq!(
        run(&["train", "--config", "/nonexistent.cfg"])
            .status
            .code(),
        Some(2)
    );
    // 2: malformed config
    let malformed = write_cfg(&dir, "malformed.cfg", "no equals sign here\n");
    assert_eq!(
        run(&["train", "--config", malformed.to_str().unwrap()])
            .status
            .code(),
        Some(2)
    );
    // 2: unknown key, diagnostic carries the line
    let unknown = write_cfg(&dir, "unknown.cfg", "zzz.not_a_key = 1\n");
    let result = run(&["train", "--config", unknown.to_str().unwrap()]);
    assert_eq!(result.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&result.stderr).contains("line 1"));
    // 2: unknown strategy name, listing valid ones
    let result = run(&[
        "compare",
        "--config",
        cfg.to_str().unwrap(),
        "--strategy",
        "nope",
    ]);
    assert_eq!(result.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&result.stderr).contains("autoassign"));
    // 2: usage errors
    assert_eq!(
        run(&["bogus-command", "--config", cfg.to_str().unwrap()])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(run(&["train"]).status.code(), Some(2));
    // 2: missing scene id
    let dump = write_cfg(
        &dir,
        "dump.cfg",
        &format!(
            "dump.checkpoint = {0}\ndump.dataset = {0}\ndump.scene = scene_999999\n",
            out.display()
        ),
    );
    assert_eq!(
        run(&["dump-weights", "--config", dump.to_str().unwrap()])
            .status
            .code(),
        Some(2)
    );

    let _ = fs::remove_dir_all(&dir);
}

#[test]
fn seed_flag_overrides_config_seed() {
    let dir = scratch("seedflag");
    let cfg = write_cfg(&dir, "gen.cfg", "data.scenes = 3\ndata.seed = 11\n");
    let (a, b, c) = (dir.join("a"), dir.join("b"), dir.join("c"));
    assert!(run(&[
        "gen-data",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        a.to_str().unwrap()
    ])
    .status
    .success());
    assert!(run(&[
        "gen-data",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        b.to_str().unwrap(),
        "--seed",
        "12"
    ])
    .status
    .success());
    assert!(run(&[
        "gen-data",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        c.to_str().unwrap(),
        "--seed",
        "11"
    ])
    .status
    .success());

    let img = |d: &Path| fs::read(d.join("scene_000000.img")).unwrap();
    assert_ne!(img(&a), img(&b), "different seed must change the data");
    assert_eq!(
        img(&a),
        img(&c),
        "explicit seed equal to the config seed must match"
    );
    let _ = fs::remove_dir_all(&dir);
}
