//! Black-box tests of the `gclm-lab` binary: reproducibility, restart
//! semantics, manifest coverage, sweep indexing, and exit codes.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use gclm_lab::io::{hex, sha256_file};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gclm-lab"))
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

fn run(sub: &str, config: &Path) -> Output {
    bin().arg(sub).arg("--config").arg(config).output().unwrap()
}

fn run_ok(sub: &str, config: &Path) -> Output {
    let out = run(sub, config);
    assert!(
        out.status.success(),
        "{sub} failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

/// Sorted subdirectories of `<root>/out`.
fn out_dirs(root: &Path) -> Vec<PathBuf> {
    let mut dirs: Vec<PathBuf> = fs::read_dir(root.join("out"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    dirs
}

/// All regular files below `dir`, as paths relative to it.
fn files_below(dir: &Path) -> Vec<String> {
    fn walk(base: &Path, cur: &Path, acc: &mut Vec<String>) {
        for entry in fs::read_dir(cur).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                walk(base, &p, acc);
            } else {
                acc.push(p.strip_prefix(base).unwrap().to_string_lossy().into_owned());
            }
        }
    }
    let mut acc = Vec::new();
    walk(dir, dir, &mut acc);
    acc.sort();
    acc
}

fn manifest(dir: &Path) -> serde_json::Value {
    let text = fs::read_to_string(dir.join("manifest.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

const BASE: &str = r#"
[solver]
nu = 1.0
a = -2.0
cutoff = 16
dt = 0.01

[initial]
kind = "cosine"
mode = 1
amplitude = 1.0

[output]
stride = 10
spectra = true
attractor = true
histogram_bins = 4

[experiment]
horizon = 2.0
seed = 7
"#;

#[test]
fn rerun_is_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "run.toml", BASE);
    run_ok("simulate", &cfg);
    let dir = out_dirs(tmp.path()).pop().unwrap();
    let tracked = [
        "kb.csv",
        "moments.csv",
        "spectrum.csv",
        "flux.csv",
        "attractor.csv",
        "histogram.json",
        "config.toml",
        "checkpoints/final.ckpt",
    ];
    let first: Vec<Vec<u8>> = tracked.iter().map(|f| fs::read(dir.join(f)).unwrap()).collect();
    run_ok("simulate", &cfg);
    for (name, before) in tracked.iter().zip(&first) {
        let after = fs::read(dir.join(name)).unwrap();
        assert_eq!(&after, before, "{name} changed between identical runs");
    }
}

#[test]
fn manifest_covers_every_output_file() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "run.toml", BASE);
    run_ok("simulate", &cfg);
    let dir = out_dirs(tmp.path()).pop().unwrap();
    let m = manifest(&dir);
    assert_eq!(
        m["config_hash"].as_str().unwrap(),
        dir.file_name().unwrap().to_str().unwrap(),
        "output directory is not named after the config hash"
    );
    let mut listed: Vec<String> = m["files"]
        .as_array()
        .unwrap()
        .iter()
        .map(|f| f["path"].as_str().unwrap().to_string())
        .collect();
    listed.sort();
    let on_disk: Vec<String> = files_below(&dir)
        .into_iter()
        .filter(|p| p != "manifest.json")
        .collect();
    assert_eq!(listed, on_disk, "manifest does not list exactly the produced files");
    for f in m["files"].as_array().unwrap() {
        let path = dir.join(f["path"].as_str().unwrap());
        let digest = hex(&sha256_file(&path).unwrap());
        assert_eq!(f["sha256"].as_str().unwrap(), digest, "bad checksum for {path:?}");
        assert_eq!(f["bytes"].as_u64().unwrap(), fs::metadata(&path).unwrap().len());
    }
}

#[test]
fn restart_matches_uninterrupted_run() {
    // dt = 2^-7 keeps every sampled time exactly representable, so the
    // split run and the straight run pass through identical states.
    let tmp = tempfile::tempdir().unwrap();
    let solver = "[solver]\nnu = 1.0\na = -2.0\ncutoff = 16\ndt = 0.0078125\n";
    let initial = "[initial]\nkind = \"cosine\"\nmode = 1\namplitude = 1.0\n";
    let first = format!("{solver}{initial}[experiment]\nhorizon = 1.0\nseed = 3\n");
    let cfg1 = write_config(tmp.path(), "first.toml", &first);
    run_ok("simulate", &cfg1);
    let dir1 = out_dirs(tmp.path()).pop().unwrap();
    let ckpt_rel = format!(
        "out/{}/checkpoints/final.ckpt",
        dir1.file_name().unwrap().to_str().unwrap()
    );

    // Resuming keeps the identity hash, so the second leg lands in the
    // same directory and runs one more horizon from the checkpoint.
    let resume = format!(
        "{solver}{initial}[experiment]\nhorizon = 1.0\nseed = 3\nrestart_from = \"{ckpt_rel}\"\n"
    );
    let cfg2 = write_config(tmp.path(), "resume.toml", &resume);
    run_ok("simulate", &cfg2);
    assert_eq!(out_dirs(tmp.path()).len(), 1, "resume must reuse the base directory");
    assert_eq!(manifest(&dir1)["resumed"], serde_json::Value::Bool(true));
    let split = fs::read(dir1.join("checkpoints/final.ckpt")).unwrap();

    let straight = format!("{solver}{initial}[experiment]\nhorizon = 2.0\nseed = 3\n");
    let cfg3 = write_config(tmp.path(), "straight.toml", &straight);
    run_ok("simulate", &cfg3);
    let dir3 = out_dirs(tmp.path()).into_iter().find(|d| *d != dir1).unwrap();
    let whole = fs::read(dir3.join("checkpoints/final.ckpt")).unwrap();
    assert_eq!(split, whole, "restarted trajectory diverged from the uninterrupted one");
}

fn sweep_config(values: &str) -> String {
    format!(
        "[solver]\nnu = 1.0\na = -2.0\ncutoff = 16\ndt = 0.01\n\n\
         [initial]\nkind = \"cosine\"\nmode = 1\namplitude = 1.0\n\n\
         [experiment]\nmode = \"sweep\"\nhorizon = 2.0\nseed = 7\n\
         sweep_parameter = \"nu\"\nsweep_values = {values}\n"
    )
}

#[test]
fn sweep_index_is_sorted_and_order_independent() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "sweep.toml", &sweep_config("[2.0, 0.5, 1.0]"));
    run_ok("sweep", &cfg);
    // One sweep directory plus one leaf per value.
    let dirs = out_dirs(tmp.path());
    assert_eq!(dirs.len(), 4);
    let sweep_dir = dirs.iter().find(|d| d.join("index.json").exists()).unwrap().clone();
    let index: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(sweep_dir.join("index.json")).unwrap()).unwrap();
    assert_eq!(index["parameter"], "nu");
    let entries = index["entries"].as_array().unwrap();
    let values: Vec<f64> = entries.iter().map(|e| e["value"].as_f64().unwrap()).collect();
    assert_eq!(values, vec![0.5, 1.0, 2.0], "index not sorted by parameter value");
    for entry in entries {
        let leaf = tmp.path().join("out").join(entry["directory"].as_str().unwrap());
        assert!(leaf.join("manifest.json").exists(), "leaf without manifest: {leaf:?}");
        let leaf_cfg = fs::read_to_string(leaf.join("config.toml")).unwrap();
        assert!(
            leaf_cfg.contains("mode = \"simulate\"") && !leaf_cfg.contains("sweep_parameter"),
            "leaf config must re-run standalone"
        );
        assert!(!entry["kb"].as_array().unwrap().is_empty());
    }

    // The same values in a different order produce the same index entries.
    let cfg2 = write_config(tmp.path(), "sweep2.toml", &sweep_config("[0.5, 1.0, 2.0]"));
    run_ok("sweep", &cfg2);
    let dirs2 = out_dirs(tmp.path());
    let other_sweep = dirs2
        .iter()
        .find(|d| **d != sweep_dir && d.join("index.json").exists())
        .unwrap();
    let index2: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(other_sweep.join("index.json")).unwrap()).unwrap();
    assert_eq!(index["entries"], index2["entries"]);
}

#[test]
fn exit_codes_reflect_failure_class() {
    let tmp = tempfile::tempdir().unwrap();

    // Missing configuration file.
    let out = run("simulate", &tmp.path().join("absent.toml"));
    assert_eq!(out.status.code(), Some(2));

    // Unknown key.
    let bad = write_config(tmp.path(), "bad.toml", &BASE.replace("dt = 0.01", "dt = 0.01\nstep = 1"));
    let out = run("simulate", &bad);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("step"));

    // Declared mode must match the subcommand.
    let good = write_config(tmp.path(), "good.toml", BASE);
    let out = run("couple", &good);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("mode"));

    // Unparseable thread override from the environment.
    let out = bin()
        .arg("simulate")
        .arg("--config")
        .arg(&good)
        .env("GCLM_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));

    // Numerical blow-up is its own exit class and names the run.
    let boom = write_config(
        tmp.path(),
        "boom.toml",
        "[solver]\nnu = 0.0\na = -2.0\ncutoff = 16\ndt = 0.1\nblowup_threshold = 1e3\n\n\
         [forcing]\nprofile = \"zero\"\n\n\
         [initial]\nkind = \"cosine\"\nmode = 1\namplitude = 100.0\n\n\
         [experiment]\nhorizon = 10.0\n",
    );
    let out = run("simulate", &boom);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("[config "));
}

#[test]
fn selftest_and_thread_overrides_succeed() {
    let out = bin().arg("selftest").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("0 failed"), "{text}");

    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "run.toml", BASE);
    let out = bin()
        .arg("simulate")
        .arg("--config")
        .arg(&cfg)
        .arg("--threads")
        .arg("1")
        .env("GCLM_THREADS", "many") // the flag outranks the environment
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("1 worker"));
}
