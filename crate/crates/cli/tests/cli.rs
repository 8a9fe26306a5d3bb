use navfeat::grid::Grid;
use navfeat::hyperopt::{Config, SearchSpace};
use navfeat::io::{save_png_u8, save_rawg, write_manifest, RawSample};
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn navfeat(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_navfeat")).args(args).output().expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap_or(-1)
}

fn assert_ok(o: &Output) {
    assert_eq!(code(o), 0, "stdout: {}\nstderr: {}", String::from_utf8_lossy(&o.stdout), String::from_utf8_lossy(&o.stderr));
}

fn textured(w: usize, h: usize, seed: u32) -> Grid<u8> {
    Grid::from_fn(w, h, |x, y| {
        let mut v = (x as u32).wrapping_mul(374_761_393) ^ (y as u32).wrapping_mul(668_265_263) ^ seed;
        v = (v ^ (v >> 13)).wrapping_mul(1_274_126_177);
        let noise = (v >> 24) as f64;
        let wave = 60.0 * ((x as f64 * 0.11).sin() + (y as f64 * 0.07).cos());
        (128.0 + wave + 0.25 * (noise - 128.0)).clamp(0.0, 255.0) as u8
    })
}

/// Directory with synthetic homography pairs and their manifest.
fn synthetic_dataset(root: &Path) -> PathBuf {
    let imgs = root.join("src");
    std::fs::create_dir_all(&imgs).unwrap();
    save_png_u8(&imgs.join("tex.png"), &textured(256, 256, 7)).unwrap();
    let out = root.join("pairs");
    assert_ok(&navfeat(&["pair", "--input", s(&imgs), "--synthetic", "3", "--seed", "5", "--output", s(&out)]));
    out.join("manifest.csv")
}

#[test]
fn preprocess_empty_directory_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = navfeat(&["preprocess", "--input", s(dir.path()), "--output", s(&dir.path().join("out"))]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("no inputs"));
}

#[test]
fn preprocess_rejects_saturated_and_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let raw = dir.path().join("raw");
    std::fs::create_dir_all(&raw).unwrap();
    // Heavy bright tail, as from a lit target on a dark background.
    let good = Grid::from_fn(256, 256, |x, y| {
        let u = ((x * 256 + y) * 40503 % 65536) as f32 / 65536.0;
        1.0 / (1.0 - u + 1e-4)
    });
    let sat = Grid::from_fn(256, 256, |x, y| if (x + y) % 20 == 0 { 1000.0 } else { (x + y) as f32 });
    save_rawg(&raw.join("good.rawg"), &good, RawSample::F32).unwrap();
    save_rawg(&raw.join("sat.rawg"), &sat, RawSample::U16).unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        assert_ok(&navfeat(&["preprocess", "--input", s(&raw), "--output", s(&out)]));
        out
    };
    let a = run("out1");
    let b = run("out2");
    assert!(a.join("good.png").exists());
    assert!(!a.join("sat.png").exists());
    let rej = std::fs::read_to_string(a.join("rejections.csv")).unwrap();
    assert_eq!(rej.lines().count(), 2, "{rej}");
    assert!(rej.contains("sat.rawg,rejected,saturated"));
    for f in ["good.png", "rejections.csv", "summary.csv"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn evaluate_empty_manifest_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let m = dir.path().join("manifest.csv");
    write_manifest(&m, &[]).unwrap();
    let o = navfeat(&["evaluate", "--manifest", s(&m), "--oracle", "--output", s(&dir.path().join("out"))]);
    assert_eq!(code(&o), 2);
}

#[test]
fn invalid_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "seed = 1\nbogus = 2\n").unwrap();
    let o = navfeat(&["tune", "--config", s(&cfg), "--preset", "disk", "--output", s(dir.path())]);
    assert_eq!(code(&o), 2);
    let o = navfeat(&["tune", "--config", s(&dir.path().join("missing.toml")), "--output", s(dir.path())]);
    assert_eq!(code(&o), 2);
}

#[test]
fn oracle_self_test_is_perfect_and_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synthetic_dataset(dir.path());
    let run = |name: &str| {
        let out = dir.path().join(name);
        assert_ok(&navfeat(&["evaluate", "--manifest", s(&manifest), "--oracle", "--seed", "9", "--output", s(&out)]));
        out
    };
    let a = run("eval1");
    let b = run("eval2");
    for f in ["pairs.csv", "report.csv", "report.json"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(a.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["method"], "oracle");
    assert_eq!(report["skipped"], 0);
    assert_eq!(report["config_hash"].as_str().unwrap().len(), 16);
    let rows = report["rows"].as_array().unwrap();
    assert!(!rows.is_empty());
    for r in rows {
        assert_eq!(r["m_score"].as_f64(), Some(1.0));
        assert_eq!(r["fail_pct"].as_f64(), Some(0.0));
    }

    let rep = dir.path().join("rep");
    assert_ok(&navfeat(&["report", "--input", s(&a), "--output", s(&rep)]));
    let summary = std::fs::read_to_string(rep.join("summary.csv")).unwrap();
    assert!(summary.lines().nth(1).unwrap().contains(",oracle,"));
    assert!(rep.join("orientation_errors.csv").exists());
}

#[test]
fn baseline_maps_and_direct_extraction_agree() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synthetic_dataset(dir.path());
    let maps = dir.path().join("maps");
    assert_ok(&navfeat(&["extract", "--manifest", s(&manifest), "--output", s(&maps)]));
    let direct = dir.path().join("direct");
    let from_maps = dir.path().join("from_maps");
    assert_ok(&navfeat(&["evaluate", "--manifest", s(&manifest), "--baseline", "--output", s(&direct)]));
    assert_ok(&navfeat(&["evaluate", "--manifest", s(&manifest), "--features-dir", s(&maps), "--output", s(&from_maps)]));
    // Map files carry the level scale as f32, so coordinates agree to about
    // 1e-7 relative; counts must agree exactly.
    let rows = |p: PathBuf| -> Vec<Vec<String>> {
        csv::Reader::from_path(p).unwrap().records().map(|r| r.unwrap().iter().map(String::from).collect()).collect()
    };
    let (a, b) = (rows(direct.join("pairs.csv")), rows(from_maps.join("pairs.csv")));
    assert_eq!(a.len(), b.len());
    for (ra, rb) in a.iter().zip(&b) {
        for (k, (x, y)) in ra.iter().zip(rb).enumerate() {
            match (x.parse::<f64>(), y.parse::<f64>()) {
                (Ok(u), Ok(v)) if u.fract() != 0.0 || v.fract() != 0.0 => {
                    assert!((u - v).abs() <= 1e-4 * u.abs().max(1.0), "column {k}: {u} vs {v}")
                }
                _ => assert_eq!(x, y, "column {k}"),
            }
        }
    }

    // A missing map skips the pair and is counted.
    let victim = std::fs::read_dir(&maps).unwrap().map(|e| e.unwrap().path()).find(|p| s(p).ends_with(".0.dfm")).unwrap();
    std::fs::remove_file(victim).unwrap();
    let partial = dir.path().join("partial");
    assert_ok(&navfeat(&["evaluate", "--manifest", s(&manifest), "--features-dir", s(&maps), "--output", s(&partial)]));
    let report = std::fs::read_to_string(partial.join("report.json")).unwrap();
    assert!(!report.contains("\"skipped\": 0"), "{report}");
}

#[test]
fn augment_preview_writes_samples() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synthetic_dataset(dir.path());
    let out = dir.path().join("prev");
    assert_ok(&navfeat(&["augment-preview", "--manifest", s(&manifest), "--count", "2", "--output", s(&out)]));
    let csv = std::fs::read_to_string(out.join("preview.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
}

fn tune_config(dir: &Path) -> PathBuf {
    let cfg = dir.join("tune.toml");
    std::fs::write(&cfg, "seed = 11\njobs = 1\n[tune]\npreset = \"disk\"\nobjective = \"synthetic\"\n[tune.asha]\neta = 3\ntotal_trials = 27\n").unwrap();
    cfg
}

#[test]
fn tune_smoke_run_and_resume() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tune_config(dir.path());
    let full = dir.path().join("full");
    let o = navfeat(&["tune", "--config", s(&cfg), "--output", s(&full)]);
    assert_ok(&o);
    let stdout = String::from_utf8_lossy(&o.stdout).to_string();
    let full_trials: usize = stdout.split(", ").find(|p| p.ends_with("at full resource")).unwrap().split(' ').next().unwrap().parse().unwrap();
    assert!(full_trials >= 1, "{stdout}");

    let best: toml::Table = toml::from_str(&std::fs::read_to_string(full.join("best.toml")).unwrap()).unwrap();
    let config: Config = best["config"].clone().try_into().unwrap();
    assert!(SearchSpace::preset("disk").unwrap().contains(&config));

    // Interrupt after a third of the log, then resume.
    let log = std::fs::read_to_string(full.join("search.jsonl")).unwrap();
    let lines: Vec<&str> = log.lines().collect();
    let part = dir.path().join("part");
    std::fs::create_dir_all(&part).unwrap();
    std::fs::write(part.join("search.jsonl"), lines[..lines.len() / 3].join("\n") + "\n").unwrap();
    assert_ok(&navfeat(&["tune", "--config", s(&cfg), "--output", s(&part), "--resume"]));
    for f in ["trials.csv", "best.toml"] {
        assert_eq!(
            std::fs::read_to_string(full.join(f)).unwrap(),
            std::fs::read_to_string(part.join(f)).unwrap(),
            "{f}"
        );
    }

    // A fresh run with the same seed repeats itself.
    let again = dir.path().join("again");
    assert_ok(&navfeat(&["tune", "--config", s(&cfg), "--output", s(&again)]));
    assert_eq!(std::fs::read(full.join("search.jsonl")).unwrap(), std::fs::read(again.join("search.jsonl")).unwrap());
}

#[test]
fn pipeline_eval_rejects_training_parameters() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synthetic_dataset(dir.path());
    let o = navfeat(&[
        "tune", "--preset", "lafe", "--objective", "pipeline-eval", "--manifest", s(&manifest), "--output", s(&dir.path().join("t")),
    ]);
    assert_eq!(code(&o), 2);
}

#[test]
fn pipeline_eval_tunes_extraction() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synthetic_dataset(dir.path());
    let cfg = dir.path().join("t.toml");
    std::fs::write(&cfg, "[tune.asha]\neta = 3\nr0 = 1\nr_max = 3\ntotal_trials = 4\n[tune.suggester]\nkind = \"random\"\n").unwrap();
    let out = dir.path().join("t");
    assert_ok(&navfeat(&["tune", "--config", s(&cfg), "--objective", "pipeline-eval", "--manifest", s(&manifest), "--output", s(&out)]));
    let trials = std::fs::read_to_string(out.join("trials.csv")).unwrap();
    assert_eq!(trials.lines().count(), 5, "{trials}");
}
