use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use attnup::autodiff::{run_suite, GradcheckConfig};
use attnup::data_io::{
    bicubic_resize, load_pgm16, load_png, rgb_to_y, rgb_to_ycbcr, save_pgm16, save_png,
    ycbcr_to_rgb, DepthMap, ImageU8,
};
use attnup::fast::bench::{self, BenchConfig, BenchShape};
use attnup::fast::flops::{attention_upsample_macs, deconv_macs};
use attnup::models::{
    load_checkpoint, JointModel, JointSpec, Network, SisrModel, SisrSpec, UpsampleKind,
};
use attnup::par::Exec;
use attnup::reference::{count_params_attention, count_params_deconv};
use attnup::train::{
    crop, fmt_metric, joint_bicubic_baseline, joint_dataset, load_image_manifest,
    load_rgbd_manifest, score, sisr_bicubic_baseline, sisr_dataset, summarize, train,
    AugmentConfig, Dataset, EvalSummary, Schedule, TrainConfig,
};
use attnup::{Error, Result, SeededRng, Tensor};

use crate::args::*;
use crate::resolved::Resolved;

/// Stream id separating parameter initialisation from batch shuffling.
const INIT_STREAM: u64 = 1 << 40;

fn with_threads<R: Send>(t: &ThreadsArg, f: impl FnOnce() -> R + Send) -> R {
    match t.threads {
        Some(n) => Exec::new(n).install(f),
        None => f(),
    }
}

fn train_config(f: &TrainFlags, mut cfg: TrainConfig, res: &mut Resolved) -> Result<TrainConfig> {
    cfg.lr0 = f.lr;
    cfg.epochs = f.epochs;
    cfg.max_steps = f.max_steps;
    cfg.seed = f.seed;
    cfg.loss = f.loss;
    cfg.checkpoint_every = f.checkpoint_every;
    if let Some(b) = f.batch {
        cfg.batch_size = b;
    }
    if let Some(p) = f.patch {
        cfg.patch_size = p;
    }
    if let Some(s) = f.stride {
        cfg.patch_stride = s;
    }
    let kind = f.schedule.unwrap_or(match cfg.schedule {
        Schedule::Plateau { .. } => ScheduleKind::Plateau,
        Schedule::StepDecay { .. } => ScheduleKind::Step,
    });
    cfg.schedule = match kind {
        ScheduleKind::Plateau => Schedule::Plateau {
            factor: f.plateau_factor,
            patience: f.patience,
            threshold: f.plateau_threshold,
        },
        ScheduleKind::Step => Schedule::StepDecay {
            milestones: f.milestones.clone(),
            factor: f.decay_factor,
        },
    };
    let augment = f.augment.unwrap_or(cfg.augment.is_enabled());
    cfg.augment = if augment {
        AugmentConfig {
            scales: f.aug_scales.clone(),
            rotations: f.aug_rotations.clone(),
            compose: f.aug_compose,
        }
    } else {
        AugmentConfig::none()
    };
    cfg.validate()?;
    res.fill("batch", cfg.batch_size);
    res.fill(
        "schedule",
        cfg.schedule.kind().replace("step_decay", "step"),
    );
    res.fill("patch", cfg.patch_size);
    res.fill("stride", cfg.patch_stride);
    res.fill("augment", augment);
    Ok(cfg)
}

fn report_training(
    out: &Path,
    best_epoch: usize,
    best: &EvalSummary,
    base: &EvalSummary,
    steps: usize,
    depth: bool,
) {
    let (metric, b, m) = if depth {
        ("rmse", base.rmse, best.rmse)
    } else {
        ("psnr_db", base.psnr_db, best.psnr_db)
    };
    println!("steps\t{steps}");
    println!("best_epoch\t{best_epoch}");
    println!("best_{metric}\t{}", fmt_metric(m));
    println!("bicubic_{metric}\t{}", fmt_metric(b));
    println!("checkpoint\t{}", out.join("best.atup").display());
}

pub fn train_sisr(a: &TrainSisrArgs, res: &mut Resolved) -> Result<()> {
    let m = &a.model;
    let spec = SisrSpec {
        stem_kernel: m.stem_kernel,
        res_kernel: m.res_kernel,
        up_kernel: m.up_kernel,
        final_kernel: m.final_kernel,
        scale_logits: m.scale_logits,
        ..SisrSpec::new(m.scale, m.features, m.upsample)
    };
    spec.validate()?;
    let cfg = train_config(&a.train, TrainConfig::sisr(m.scale), res)?;
    res.announce(Some(&a.train.out))?;
    with_threads(&a.threads, || {
        let (train_imgs, eval_imgs) = load_image_manifest(&a.train.manifest)?;
        let data = sisr_dataset(&train_imgs, &eval_imgs, m.scale, &cfg)?;
        log::info!(
            "{} training patches from {} images, {} eval images",
            data.train.len(),
            train_imgs.len(),
            data.eval.len()
        );
        let base = sisr_bicubic_baseline(&data)?;
        let (model, init) = SisrModel::init(spec, &mut SeededRng::new(cfg.seed).fork(INIT_STREAM))?;
        let out = train(&model, &init, &data, &cfg, Some(&a.train.out))?;
        report_training(
            &a.train.out,
            out.best_epoch,
            &out.best_eval,
            &base,
            out.steps,
            false,
        );
        Ok(())
    })
}

pub fn train_joint(a: &TrainJointArgs, res: &mut Resolved) -> Result<()> {
    let m = &a.model;
    let mut spec = JointSpec::preset(&m.preset, m.factor)?;
    spec.attn_kernel = m.attn_kernel;
    spec.share_mixer = m.share_mixer;
    spec.scale_logits = m.scale_logits;
    spec.validate()?;
    let cfg = train_config(&a.train, TrainConfig::joint(m.factor), res)?;
    res.announce(Some(&a.train.out))?;
    with_threads(&a.threads, || {
        let (train_pairs, eval_pairs) = load_rgbd_manifest(&a.train.manifest)?;
        let data = joint_dataset(
            &train_pairs,
            &eval_pairs,
            m.factor,
            &cfg,
            a.depth.depth_scale,
        )?;
        log::info!(
            "{} training patches from {} pairs, {} eval pairs",
            data.train.len(),
            train_pairs.len(),
            data.eval.len()
        );
        let base = joint_bicubic_baseline(&data, m.factor)?;
        let (model, init) =
            JointModel::init(spec, &mut SeededRng::new(cfg.seed).fork(INIT_STREAM))?;
        let out = train(&model, &init, &data, &cfg, Some(&a.train.out))?;
        report_training(
            &a.train.out,
            out.best_epoch,
            &out.best_eval,
            &base,
            out.steps,
            true,
        );
        Ok(())
    })
}

/// Scores every eval item, printing one row per image and the mean.
fn eval_table(
    data: &Dataset,
    predict: impl Fn(usize) -> Result<Tensor<f32>>,
    baseline: Option<EvalSummary>,
    depth: bool,
    flags: &EvalFlags,
    save: impl Fn(&Path, &str, &Tensor<f32>) -> Result<()>,
) -> Result<()> {
    let mut items = Vec::with_capacity(data.eval.len());
    for (i, e) in data.eval.iter().enumerate() {
        let pred = predict(i)?;
        if let Some(dir) = &flags.save_dir {
            save(dir, &e.name, &pred)?;
        }
        items.push(score(&e.name, &pred, &e.sample.target, &data.scoring)?);
    }
    let summary = summarize(items);
    let metric = if depth { "rmse" } else { "psnr_db" };
    let pick = |s: &attnup::train::ItemScore| if depth { s.rmse } else { s.psnr_db };
    let mut table = format!("image,{metric}");
    if baseline.is_some() {
        write!(table, ",bicubic_{metric}").unwrap();
    }
    table.push('\n');
    for (k, s) in summary.items.iter().enumerate() {
        write!(table, "{},{}", s.name, fmt_metric(pick(s))).unwrap();
        if let Some(b) = &baseline {
            write!(table, ",{}", fmt_metric(pick(&b.items[k]))).unwrap();
        }
        table.push('\n');
    }
    let mean = if depth { summary.rmse } else { summary.psnr_db };
    write!(table, "mean,{}", fmt_metric(mean)).unwrap();
    if let Some(b) = &baseline {
        let bm = if depth { b.rmse } else { b.psnr_db };
        write!(table, ",{}", fmt_metric(bm)).unwrap();
    }
    table.push('\n');
    print!("{}", table.replace(',', "\t"));
    if let Some(p) = &flags.csv {
        std::fs::write(p, &table).map_err(|e| Error::io(p, e))?;
    }
    Ok(())
}

fn fit_to(pred: Tensor<f32>, target: &Tensor<f32>, name: &str) -> Result<Tensor<f32>> {
    let (_, h, w) = target.dims3()?;
    let (_, ph, pw) = pred.dims3()?;
    if ph < h || pw < w {
        return Err(Error::Shape(format!(
            "prediction for {name} is {ph}x{pw}, target is {h}x{w}"
        )));
    }
    crop(&pred, 0, 0, h, w)
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn save_y(dir: &Path, name: &str, y: &Tensor<f32>) -> Result<()> {
    ensure_dir(dir)?;
    let img = ImageU8::from_tensor(&y.map(|v| v.clamp(0.0, 1.0)))?;
    save_png(&dir.join(format!("{name}.png")), &img)
}

pub fn eval_sisr(a: &EvalSisrArgs, res: &mut Resolved) -> Result<()> {
    let src = &a.eval.source;
    let model = match &src.checkpoint {
        Some(p) => {
            let ps = load_checkpoint(p)?;
            let spec = SisrModel::infer_spec(&ps)?;
            if a.scale.is_some_and(|s| s != spec.scale) {
                return Err(Error::Config(format!(
                    "--scale {} disagrees with the {}× checkpoint",
                    a.scale.unwrap_or(0),
                    spec.scale
                )));
            }
            Some((SisrModel::from_params(spec, &ps)?, ps))
        }
        None => None,
    };
    let scale = model
        .as_ref()
        .map_or(a.scale.unwrap_or(2), |m| m.0.spec().scale);
    res.fill("scale", scale);
    res.announce(None)?;
    with_threads(&a.threads, || {
        let (_, eval) = load_image_manifest(&a.eval.manifest)?;
        if eval.is_empty() {
            return Err(Error::Config("manifest has no eval records".into()));
        }
        let data = sisr_dataset(&[], &eval, scale, &TrainConfig::sisr(scale))?;
        let baseline = if a.eval.baseline {
            Some(sisr_bicubic_baseline(&data)?)
        } else {
            None
        };
        let predict = |i: usize| -> Result<Tensor<f32>> {
            let e = &data.eval[i];
            match (&model, &src.predictions) {
                (Some((m, ps)), _) => m.predict(ps, &e.sample.inputs),
                (None, Some(dir)) => {
                    let img = load_png(&dir.join(format!("{}.png", e.name)))?;
                    fit_to(rgb_to_y(&img), &e.sample.target, &e.name)
                }
                (None, None) => unreachable!("clap requires a source"),
            }
        };
        eval_table(&data, predict, baseline, false, &a.eval, save_y)
    })
}

fn save_depth(scale: f64) -> impl Fn(&Path, &str, &Tensor<f32>) -> Result<()> {
    move |dir, name, d| {
        ensure_dir(dir)?;
        save_pgm16(
            &dir.join(format!("{name}.pgm")),
            &DepthMap::from_tensor(d, scale)?,
        )
    }
}

pub fn eval_joint(a: &EvalJointArgs, res: &mut Resolved) -> Result<()> {
    let src = &a.eval.source;
    let model = match &src.checkpoint {
        Some(p) => {
            let ps = load_checkpoint(p)?;
            let spec = JointModel::infer_spec(&ps)?;
            if a.factor.is_some_and(|f| f != spec.factor) {
                return Err(Error::Config(format!(
                    "--factor {} disagrees with the {}× checkpoint",
                    a.factor.unwrap_or(0),
                    spec.factor
                )));
            }
            Some((JointModel::from_params(spec, &ps)?, ps))
        }
        None => None,
    };
    let factor = model
        .as_ref()
        .map_or(a.factor.unwrap_or(4), |m| m.0.spec().factor);
    let ds = a.depth.depth_scale;
    res.fill("factor", factor);
    res.announce(None)?;
    with_threads(&a.threads, || {
        let (_, eval) = load_rgbd_manifest(&a.eval.manifest)?;
        if eval.is_empty() {
            return Err(Error::Config("manifest has no eval records".into()));
        }
        let data = joint_dataset(&[], &eval, factor, &TrainConfig::joint(factor), ds)?;
        let baseline = if a.eval.baseline {
            Some(joint_bicubic_baseline(&data, factor)?)
        } else {
            None
        };
        let predict = |i: usize| -> Result<Tensor<f32>> {
            let e = &data.eval[i];
            match (&model, &src.predictions) {
                (Some((m, ps)), _) => m.predict(ps, &e.sample.inputs),
                (None, Some(dir)) => {
                    let d = load_pgm16(&dir.join(format!("{}.pgm", e.name)))?;
                    fit_to(d.to_tensor(ds), &e.sample.target, &e.name)
                }
                (None, None) => unreachable!("clap requires a source"),
            }
        };
        eval_table(&data, predict, baseline, true, &a.eval, save_depth(ds))
    })
}

pub fn upsample(a: &UpsampleArgs, res: &mut Resolved) -> Result<()> {
    res.announce(None)?;
    let ps = load_checkpoint(&a.checkpoint)?;
    with_threads(&a.threads, || {
        if let Ok(spec) = SisrModel::infer_spec(&ps) {
            let s = spec.scale;
            let model = SisrModel::from_params(spec, &ps)?;
            let img = load_png(&a.input)?;
            let y = model
                .predict(&ps, &[rgb_to_y(&img)])?
                .map(|v| v.clamp(0.0, 1.0));
            let out = if img.channels == 3 {
                let ycc = rgb_to_ycbcr::<f32>(&img)?;
                let chroma = bicubic_resize(&ycc, s * img.height, s * img.width)?;
                let (_, h, w) = y.dims3()?;
                ycbcr_to_rgb(&Tensor::from_fn3(3, h, w, |c, i, j| {
                    if c == 0 {
                        y.at3(0, i, j)
                    } else {
                        chroma.at3(c, i, j)
                    }
                }))?
            } else {
                ImageU8::from_tensor(&y)?
            };
            save_png(&a.out, &out)?;
            println!(
                "{}x{} -> {}x{}  {}",
                img.width,
                img.height,
                out.width,
                out.height,
                a.out.display()
            );
            return Ok(());
        }
        let spec = JointModel::infer_spec(&ps)?;
        let model = JointModel::from_params(spec, &ps)?;
        let guide_path: &PathBuf = a
            .guide
            .as_ref()
            .ok_or_else(|| Error::Config("joint checkpoints need --guide".into()))?;
        let ds = a.depth.depth_scale;
        let depth = load_pgm16(&a.input)?;
        let guide = load_png(guide_path)?;
        let pred = model.predict(&ps, &[depth.to_tensor(ds), guide.to_tensor()])?;
        let out = DepthMap::from_tensor(&pred, ds)?;
        save_pgm16(&a.out, &out)?;
        println!(
            "{}x{} -> {}x{}  {}",
            depth.width,
            depth.height,
            out.width,
            out.height,
            a.out.display()
        );
        Ok(())
    })
}

pub fn bench(a: &BenchArgs, res: &mut Resolved) -> Result<()> {
    res.announce(None)?;
    let cfg = BenchConfig {
        ops: a.ops.clone(),
        shapes: vec![BenchShape {
            c_in: a.cin,
            c_out: a.cout,
            h: a.height,
            w: a.width,
            stride: a.stride,
            kernel: a.kernel,
        }],
        threads: a.threads.clone(),
        reps: a.reps,
        seed: a.seed,
    };
    let recs = bench::run(&cfg)?;
    let csv = bench::to_csv(&recs);
    match &a.out {
        Some(p) => std::fs::write(p, &csv).map_err(|e| Error::io(p, e))?,
        None => print!("{csv}"),
    }
    for r in &recs {
        eprintln!(
            "{:<15} threads {:>2}  median {:>10.3} ms  {:>7.2} GFLOP/s",
            r.op.name(),
            r.threads,
            r.median_ns as f64 / 1e6,
            r.gflops
        );
    }
    Ok(())
}

pub fn gradcheck(a: &GradcheckArgs, res: &mut Resolved) -> Result<bool> {
    res.announce(None)?;
    let cfg = GradcheckConfig {
        eps: a.eps,
        tol: a.tol,
        max_coords: a.max_coords,
        seed: a.seed,
    };
    let reports = with_threads(&a.threads, || run_suite(&cfg))?;
    let failed = reports.iter().filter(|r| !r.passed()).count();
    for r in &reports {
        println!("{}", r.summary());
    }
    println!(
        "{} of {} cases passed (eps {:e}, tol {:e})",
        reports.len() - failed,
        reports.len(),
        a.eps,
        a.tol
    );
    Ok(failed == 0)
}

pub fn params(a: &ParamsArgs, res: &mut Resolved) -> Result<()> {
    res.announce(None)?;
    let d = count_params_deconv(a.cin, a.cout, a.k)?;
    let at = count_params_attention(a.cin, a.cout, a.k)?;
    println!("deconv {d}");
    println!("attention {at}");
    println!("ratio {:.4}", d as f64 / at as f64);
    let (n, s) = (a.size, a.stride);
    println!(
        "flops {n}x{n} stride {s}: deconv {} attention {}",
        2 * deconv_macs(a.cin, a.cout, n, n, s, a.k),
        2 * attention_upsample_macs(a.cin, a.cout, n, n, s, a.k)
    );
    println!();
    println!("scale\tupsample\tparams\tflops_{n}x{n}");
    for &scale in &a.scales {
        let mut counts = Vec::new();
        for kind in [UpsampleKind::Attention, UpsampleKind::Deconv] {
            let spec = SisrSpec::new(scale, a.features, kind);
            spec.validate()?;
            counts.push(spec.num_params());
            println!(
                "{scale}\t{kind}\t{}\t{}",
                spec.num_params(),
                2 * spec.macs(n, n)
            );
        }
        println!(
            "{scale}\tratio\t{:.4}\t",
            counts[1] as f64 / counts[0] as f64
        );
    }
    Ok(())
}
