//! Optimisation, schedules, metrics, augmentation, patching and the
//! training loop.

mod adam;
mod augment;
mod config;
mod data;
mod metrics;
mod patches;
mod trainer;

pub use adam::{adam_step, AdamState};
pub use augment::{augment, downscale, rot90, rotate};
pub use config::{schedule_lr, AugmentConfig, LossKind, Schedule, TrainConfig};
pub use data::{
    joint_bicubic_baseline, joint_dataset, load_image_manifest, load_rgbd_manifest,
    sisr_bicubic_baseline, sisr_dataset, DEFAULT_DEPTH_SCALE,
};
pub use metrics::{crop_border, fmt_metric, mse, psnr, psnr_from_mse, rmse, PSNR_IDENTICAL};
pub use patches::{crop, depth_grid_sample, extract_patches, patch_origins, Patch};
pub use trainer::{
    batch_grads, evaluate, log_csv, sample_grads, score, summarize, train, Dataset, EvalItem,
    EvalSummary, ItemScore, LogRow, Sample, Scoring, Select, TrainOutcome, LOG_HEADER,
};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::ParamId;
    use crate::data_io::synth_texture_image;
    use crate::models::{load_checkpoint, SisrModel, SisrSpec, UpsampleKind};
    use crate::tensor::SeededRng;

    fn tiny() -> (SisrModel, crate::autodiff::ParamSet<f32>, Dataset) {
        let spec = SisrSpec::new(2, 4, UpsampleKind::Attention);
        let (model, ps) = SisrModel::init(spec, &mut SeededRng::new(1)).unwrap();
        let mut rng = SeededRng::new(2);
        let imgs = vec![synth_texture_image(24, 24, &mut rng)];
        let eval = vec![("e".to_string(), synth_texture_image(16, 16, &mut rng))];
        let data = sisr_dataset(&imgs, &eval, 2, &cfg()).unwrap();
        (model, ps, data)
    }

    fn cfg() -> TrainConfig {
        TrainConfig {
            batch_size: 3,
            epochs: 2,
            patch_size: 6,
            patch_stride: 6,
            augment: AugmentConfig::none(),
            seed: 9,
            ..TrainConfig::sisr(2)
        }
    }

    #[test]
    fn zero_epochs_keeps_initialisation() {
        let (model, ps, data) = tiny();
        let dir = tempfile::tempdir().unwrap();
        let c = TrainConfig { epochs: 0, ..cfg() };
        let out = train(&model, &ps, &data, &c, Some(dir.path())).unwrap();
        assert_eq!(out.best, ps);
        assert_eq!(load_checkpoint(&dir.path().join("best.atup")).unwrap(), ps);
        assert_eq!(load_checkpoint(&dir.path().join("last.atup")).unwrap(), ps);
        assert_eq!(out.log.len(), 1);
    }

    #[test]
    fn runs_are_deterministic_and_logged() {
        let (model, ps, data) = tiny();
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let c = TrainConfig {
            checkpoint_every: 1,
            ..cfg()
        };
        let ra = train(&model, &ps, &data, &c, Some(a.path())).unwrap();
        let rb = train(&model, &ps, &data, &c, Some(b.path())).unwrap();
        assert_eq!(ra.last, rb.last);
        assert_ne!(ra.last, ps);
        for f in ["metrics.csv", "best.atup", "last.atup", "epoch_2.atup"] {
            assert_eq!(
                std::fs::read(a.path().join(f)).unwrap(),
                std::fs::read(b.path().join(f)).unwrap(),
                "{f}"
            );
        }
        let csv = std::fs::read_to_string(a.path().join("metrics.csv")).unwrap();
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines[0], LOG_HEADER);
        assert_eq!(lines.len(), 1 + 1 + 2 * 2);
        assert!(lines[2].starts_with("1,train,"));
        assert!(!csv.contains('\r'));
        let best = ra.best_eval.psnr_db;
        for r in ra.log.iter().filter(|r| r.split == "eval") {
            assert!(best >= r.psnr_db.unwrap());
        }
    }

    #[test]
    fn max_steps_stops_early() {
        let (model, ps, data) = tiny();
        let c = TrainConfig {
            max_steps: Some(1),
            epochs: 5,
            ..cfg()
        };
        let out = train(&model, &ps, &data, &c, None).unwrap();
        assert_eq!(out.steps, 1);
        assert_eq!(out.log.last().unwrap().epoch, 1);
    }

    #[test]
    fn nan_aborts_and_keeps_last_good() {
        let (model, mut ps, data) = tiny();
        let dir = tempfile::tempdir().unwrap();
        ps.get_mut(ParamId(0)).data_mut()[0] = f32::NAN;
        let err = train(&model, &ps, &data, &cfg(), Some(dir.path())).unwrap_err();
        assert!(matches!(err, crate::Error::NonFinite(_)), "{err}");
        let last = load_checkpoint(&dir.path().join("last.atup")).unwrap();
        assert!(last.get(ParamId(0)).data()[0].is_nan());
        assert_eq!(last.get(ParamId(1)), ps.get(ParamId(1)));
    }
}
