use std::path::Path;
use std::process::{Command, Output};

use attnup::data_io::{
    load_pgm16, load_png, write_rgbd_dataset, write_sisr_dataset, Manifest, Role,
};
use attnup::fast::flops::attention_upsample_macs;

fn attnup(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_attnup"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn params_prints_layer_counts() {
    let o = attnup(&["params", "--cin", "64", "--cout", "64", "--k", "3"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.lines().any(|l| l == "deconv 36864"), "{out}");
    assert!(out.lines().any(|l| l == "attention 12480"), "{out}");
}

#[test]
fn gradcheck_default_suite_passes() {
    let o = attnup(&["gradcheck", "--seed", "7"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains("18 of 18 cases passed"));
    assert!(stderr(&o).contains("seed = 7"));
}

#[test]
fn gradcheck_fails_with_impossible_tolerance() {
    let o = attnup(&["gradcheck", "--tol", "0", "--max-coords", "4"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("FAIL"));
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(attnup(&[]).status.code(), Some(2));
    assert_eq!(attnup(&["params", "--bogus", "1"]).status.code(), Some(2));
    assert_eq!(attnup(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(attnup(&["params", "--k", "three"]).status.code(), Some(2));
    let o = attnup(&["eval-sisr", "--manifest", "m.tsv"]);
    assert_eq!(o.status.code(), Some(2), "source group is required");
}

#[test]
fn runtime_errors_exit_1() {
    let o = attnup(&["params", "--cout", "3"]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    let o = attnup(&[
        "eval-sisr",
        "--manifest",
        "/nonexistent/m.tsv",
        "--predictions",
        "/tmp",
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("/nonexistent/m.tsv"));
}

#[test]
fn help_lists_defaults() {
    let o = attnup(&["train-sisr", "--help"]);
    assert!(o.status.success());
    let h = stdout(&o);
    for needle in [
        "--lr <LR>",
        "[default: 0.001]",
        "[default: 2000]",
        "[default: 1200,1600]",
        "[default: 0.8]",
        "[default: 10]",
        "[default: 0.9,0.8,0.7,0.6]",
        "[default: 32]",
        "[default: attention]",
        "--config <PATH>",
    ] {
        assert!(h.contains(needle), "missing {needle}\n{h}");
    }
    for sub in [
        "eval-sisr",
        "train-joint",
        "eval-joint",
        "upsample",
        "bench",
        "gradcheck",
        "params",
    ] {
        let o = attnup(&[sub, "--help"]);
        assert!(o.status.success(), "{sub}");
        assert!(stdout(&o).contains("--config <PATH>"), "{sub}");
    }
    let h = stdout(&attnup(&["gradcheck", "--help"]));
    assert!(
        h.contains("[default: 0.0001]") && h.contains("[default: 0.00001]"),
        "{h}"
    );
}

#[test]
fn config_file_sets_flags_and_command_line_wins() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("layer.cfg");
    std::fs::write(&cfg, "# layer\nk = 5\ncin = 64\ncout = 64\n").unwrap();
    let o = attnup(&["params", "--config", p(&cfg)]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("attention 12608"), "{}", stdout(&o));
    let o = attnup(&["params", "--config", p(&cfg), "--k", "3"]);
    assert!(stdout(&o).contains("attention 12480"));
    assert!(stderr(&o).contains("k = 3"));
    let o = attnup(&["params", "--k", "3", "--config", p(&cfg)]);
    assert!(
        stdout(&o).contains("attention 12480"),
        "argv wins wherever --config sits"
    );

    std::fs::write(&cfg, "scales = 2\nscales = 4\n").unwrap();
    let o = attnup(&["params", "--config", p(&cfg)]);
    assert!(stderr(&o).contains("scales = 4"));
    std::fs::write(&cfg, "no_such_flag = 1\n").unwrap();
    assert_eq!(
        attnup(&["params", "--config", p(&cfg)]).status.code(),
        Some(2)
    );
    std::fs::write(&cfg, "k 3\n").unwrap();
    let o = attnup(&["params", "--config", p(&cfg)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains(":1:"));
    let o = attnup(&["params", "--config", p(&dir.path().join("missing.cfg"))]);
    assert_eq!(o.status.code(), Some(2));
}

fn eval_stems(manifest: &Path) -> Vec<String> {
    Manifest::load(manifest)
        .unwrap()
        .role(Role::Eval)
        .map(|r| r.target.file_stem().unwrap().to_string_lossy().into_owned())
        .collect()
}

#[test]
fn eval_sisr_identical_predictions_give_infinite_psnr() {
    let dir = tempfile::tempdir().unwrap();
    let m = write_sisr_dataset(&dir.path().join("data"), 1, 3, 24, 5).unwrap();
    let preds = dir.path().join("preds");
    std::fs::create_dir(&preds).unwrap();
    for s in eval_stems(&m) {
        std::fs::copy(
            dir.path().join("data").join(format!("{s}.png")),
            preds.join(format!("{s}.png")),
        )
        .unwrap();
    }
    let csv = dir.path().join("t.csv");
    let o = attnup(&[
        "eval-sisr",
        "--manifest",
        p(&m),
        "--predictions",
        p(&preds),
        "--csv",
        p(&csv),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("eval_000\tinf\t"), "{out}");
    let mean = out.lines().find(|l| l.starts_with("mean\t")).unwrap();
    assert!(mean.starts_with("mean\tinf\t"), "{mean}");
    let bicubic: f64 = mean.split('\t').nth(2).unwrap().parse().unwrap();
    assert!(bicubic.is_finite() && bicubic > 15.0);
    let table = std::fs::read_to_string(&csv).unwrap();
    assert!(table.starts_with("image,psnr_db,bicubic_psnr_db\n"));
}

fn sisr_train_args<'a>(m: &'a str, out: &'a str) -> Vec<&'a str> {
    vec![
        "train-sisr",
        "--manifest",
        m,
        "--out",
        out,
        "--features",
        "4",
        "--patch",
        "6",
        "--stride",
        "6",
        "--batch",
        "4",
        "--epochs",
        "2",
        "--max-steps",
        "3",
        "--augment",
        "false",
        "--seed",
        "3",
    ]
}

#[test]
fn sisr_train_eval_upsample_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let m = write_sisr_dataset(&dir.path().join("data"), 2, 2, 20, 9).unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = attnup(&sisr_train_args(p(&m), p(&out)));
        assert!(o.status.success(), "{}", stderr(&o));
        assert!(stdout(&o).contains("best_psnr_db\t"));
        assert!(stderr(&o).contains("seed = 3"));
        out
    };
    let a = run("a");
    let b = run("b");
    for f in ["best.atup", "last.atup", "metrics.csv"] {
        assert_eq!(
            std::fs::read(a.join(f)).unwrap(),
            std::fs::read(b.join(f)).unwrap(),
            "{f} differs between identical runs"
        );
    }
    let cfg = std::fs::read_to_string(a.join("config.txt")).unwrap();
    for line in [
        "batch = 4",
        "schedule = plateau",
        "augment = false",
        "scale = 2",
    ] {
        assert!(cfg.lines().any(|l| l == line), "{line}\n{cfg}");
    }

    let c = dir.path().join("c");
    std::fs::write(dir.path().join("again.cfg"), cfg.replace(p(&a), p(&c))).unwrap();
    let o = attnup(&["train-sisr", "--config", p(&dir.path().join("again.cfg"))]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(
        std::fs::read(a.join("last.atup")).unwrap(),
        std::fs::read(c.join("last.atup")).unwrap(),
        "config.txt reproduces the run"
    );

    let saved = dir.path().join("saved");
    let ck = a.join("best.atup");
    let o = attnup(&[
        "eval-sisr",
        "--manifest",
        p(&m),
        "--checkpoint",
        p(&ck),
        "--save-dir",
        p(&saved),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let mean = stdout(&o);
    assert!(mean.contains("mean\t"));
    assert_eq!(
        attnup(&[
            "eval-sisr",
            "--manifest",
            p(&m),
            "--checkpoint",
            p(&ck),
            "--scale",
            "4"
        ])
        .status
        .code(),
        Some(1)
    );

    let src = dir.path().join("data/eval_000.png");
    let up = dir.path().join("up.png");
    let o = attnup(&[
        "upsample",
        "--checkpoint",
        p(&ck),
        "--input",
        p(&src),
        "--out",
        p(&up),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let (i, u) = (load_png(&src).unwrap(), load_png(&up).unwrap());
    assert_eq!(
        (u.channels, u.height, u.width),
        (3, 2 * i.height, 2 * i.width)
    );
}

#[test]
fn joint_train_eval_upsample_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let m = write_rgbd_dataset(&dir.path().join("data"), 2, 1, 16, 4).unwrap();
    let out = dir.path().join("run");
    let o = attnup(&[
        "train-joint",
        "--manifest",
        p(&m),
        "--out",
        p(&out),
        "--factor",
        "2",
        "--patch",
        "4",
        "--stride",
        "4",
        "--batch",
        "2",
        "--epochs",
        "1",
        "--max-steps",
        "2",
        "--threads",
        "1",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("best_rmse\t"));
    let cfg = std::fs::read_to_string(out.join("config.txt")).unwrap();
    assert!(
        cfg.contains("batch = 2") && cfg.contains("schedule = step"),
        "{cfg}"
    );
    assert!(cfg.contains("augment = false"));

    let ck = out.join("best.atup");
    let saved = dir.path().join("saved");
    let o = attnup(&[
        "eval-joint",
        "--manifest",
        p(&m),
        "--checkpoint",
        p(&ck),
        "--save-dir",
        p(&saved),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out_s = stdout(&o);
    assert!(out_s.starts_with("image\trmse\tbicubic_rmse\n"), "{out_s}");
    let stem = &eval_stems(&m)[0];
    assert!(saved.join(format!("{stem}.pgm")).exists());

    let o = attnup(&[
        "eval-joint",
        "--manifest",
        p(&m),
        "--predictions",
        p(&dir.path().join("data")),
        "--factor",
        "2",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(
        stdout(&o).contains("mean\t0.000000\t"),
        "ground truth as prediction"
    );

    let depth = load_pgm16(&dir.path().join(format!("data/{stem}.pgm"))).unwrap();
    let lr = attnup::data_io::DepthMap::new(
        depth.height / 2,
        depth.width / 2,
        (0..depth.height / 2)
            .flat_map(|i| (0..depth.width / 2).map(move |j| (i, j)))
            .map(|(i, j)| depth.at(2 * i, 2 * j))
            .collect(),
    )
    .unwrap();
    let lr_path = dir.path().join("lr.pgm");
    attnup::data_io::save_pgm16(&lr_path, &lr).unwrap();
    let guide = dir
        .path()
        .join(format!("data/{}.png", stem.replace("_depth", "_rgb")));
    let up = dir.path().join("up.pgm");
    let o = attnup(&[
        "upsample",
        "--checkpoint",
        p(&ck),
        "--input",
        p(&lr_path),
        "--out",
        p(&up),
    ]);
    assert_eq!(o.status.code(), Some(1), "joint upsampling needs a guide");
    let o = attnup(&[
        "upsample",
        "--checkpoint",
        p(&ck),
        "--input",
        p(&lr_path),
        "--guide",
        p(&guide),
        "--out",
        p(&up),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let d = load_pgm16(&up).unwrap();
    assert_eq!((d.height, d.width), (depth.height, depth.width));
}

#[test]
fn bench_writes_csv_with_exact_flops() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("b.csv");
    let o = attnup(&[
        "bench",
        "--out",
        p(&csv),
        "--cin",
        "4",
        "--cout",
        "4",
        "--height",
        "8",
        "--width",
        "8",
        "--reps",
        "1",
        "--ops",
        "attention_ref,attention_fast",
        "--threads",
        "1,2",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(&csv).unwrap();
    let lines: Vec<_> = text.lines().collect();
    assert_eq!(
        lines[0],
        "op,Cin,Cout,H,W,S,K,threads,median_ns,flops,gflops,check"
    );
    assert_eq!(lines.len(), 5);
    let flops = 2 * attention_upsample_macs(4, 4, 8, 8, 2, 3);
    for row in &lines[1..] {
        let f: Vec<_> = row.split(',').collect();
        assert_eq!(f[9], flops.to_string(), "{row}");
    }
}
