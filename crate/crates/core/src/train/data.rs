//! Building training and eval sets from images, depth maps and manifests.

use std::path::Path;

use super::augment::augment;
use super::config::TrainConfig;
use super::patches::{crop, depth_grid_sample, extract_patches, patch_origins};
use super::trainer::{score, summarize, Dataset, EvalItem, EvalSummary, Sample, Scoring, Select};
use crate::data_io::{
    bicubic_resize, bicubic_upsample_anchored, load_pgm16, load_png, rgb_to_y, DepthMap, ImageU8,
    Manifest, Role,
};
use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// Depth counts per network unit used when none is given.
pub const DEFAULT_DEPTH_SCALE: f64 = 10000.0;

fn crop_to_multiple<T: Real>(x: &Tensor<T>, f: usize) -> Result<Tensor<T>> {
    let (_, h, w) = x.dims3()?;
    if h < f || w < f {
        return Err(Error::shape(format!(
            "{h}x{w} image smaller than factor {f}"
        )));
    }
    crop(x, 0, 0, h / f * f, w / f * f)
}

fn stem(p: &Path) -> String {
    p.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| p.display().to_string())
}

/// Luminance training patches and full-image eval pairs for `scale`× SISR.
pub fn sisr_dataset(
    train: &[ImageU8],
    eval: &[(String, ImageU8)],
    scale: usize,
    cfg: &TrainConfig,
) -> Result<Dataset> {
    let mut samples = Vec::new();
    for img in train {
        for v in augment(&rgb_to_y::<f32>(img), &cfg.augment)? {
            for p in extract_patches(&v, scale, cfg.patch_size, cfg.patch_stride)? {
                samples.push(Sample {
                    inputs: vec![p.lr],
                    target: p.hr,
                });
            }
        }
    }
    let mut items = Vec::new();
    for (name, img) in eval {
        let hr = crop_to_multiple(&rgb_to_y::<f32>(img), scale)?;
        let (_, h, w) = hr.dims3()?;
        let lr = bicubic_resize(&hr, h / scale, w / scale)?;
        items.push(EvalItem {
            name: name.clone(),
            sample: Sample {
                inputs: vec![lr],
                target: hr,
            },
        });
    }
    Ok(Dataset {
        train: samples,
        eval: items,
        scoring: Scoring {
            max_val: 1.0,
            rmse_unit: 1.0,
            border: scale,
            clamp: Some((0.0, 1.0)),
            select: Select::MaxPsnr,
        },
    })
}

/// Bicubic upscaling of each eval input to its target size, scored like a model.
pub fn sisr_bicubic_baseline(data: &Dataset) -> Result<EvalSummary> {
    let items = data
        .eval
        .iter()
        .map(|e| {
            let (_, h, w) = e.sample.target.dims3()?;
            let up = bicubic_resize(&e.sample.inputs[0], h, w)?;
            score(&e.name, &up, &e.sample.target, &data.scoring)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(summarize(items))
}

fn joint_views(
    depth: &DepthMap,
    rgb: &ImageU8,
    factor: usize,
    depth_scale: f64,
) -> Result<(Tensor<f32>, Tensor<f32>)> {
    if (depth.height, depth.width) != (rgb.height, rgb.width) {
        return Err(Error::shape(format!(
            "depth {}x{} and guide {}x{} differ",
            depth.height, depth.width, rgb.height, rgb.width
        )));
    }
    let d = crop_to_multiple(&depth.to_tensor::<f32>(depth_scale), factor)?;
    let g = crop_to_multiple(&rgb.to_tensor::<f32>(), factor)?;
    Ok((d, g))
}

/// Guided depth upsampling pairs. Inputs are `[grid-sampled depth, guide]`;
/// depth is divided by `depth_scale` and RMSE is reported in stored counts.
pub fn joint_dataset(
    train: &[(DepthMap, ImageU8)],
    eval: &[(String, DepthMap, ImageU8)],
    factor: usize,
    cfg: &TrainConfig,
    depth_scale: f64,
) -> Result<Dataset> {
    if depth_scale.is_nan() || depth_scale <= 0.0 {
        return Err(Error::Config(format!(
            "depth scale must be positive, got {depth_scale}"
        )));
    }
    let m = cfg.patch_size;
    let hm = m * factor;
    let mut samples = Vec::new();
    for (depth, rgb) in train {
        let (d, g) = joint_views(depth, rgb, factor, depth_scale)?;
        let dv = augment(&d, &cfg.augment)?;
        let gv = augment(&g, &cfg.augment)?;
        for (d, g) in dv.iter().zip(&gv) {
            let d = crop_to_multiple(d, factor)?;
            let g = crop_to_multiple(g, factor)?;
            let (_, h, w) = d.dims3()?;
            for (i, j) in patch_origins(h / factor, w / factor, m, cfg.patch_stride) {
                let hr = crop(&d, i * factor, j * factor, hm, hm)?;
                let guide = crop(&g, i * factor, j * factor, hm, hm)?;
                samples.push(Sample {
                    inputs: vec![depth_grid_sample(&hr, factor)?, guide],
                    target: hr,
                });
            }
        }
    }
    let mut items = Vec::new();
    for (name, depth, rgb) in eval {
        let (d, g) = joint_views(depth, rgb, factor, depth_scale)?;
        items.push(EvalItem {
            name: name.clone(),
            sample: Sample {
                inputs: vec![depth_grid_sample(&d, factor)?, g],
                target: d,
            },
        });
    }
    Ok(Dataset {
        train: samples,
        eval: items,
        scoring: Scoring {
            max_val: 65535.0 / depth_scale,
            rmse_unit: depth_scale,
            border: 0,
            clamp: None,
            select: Select::MinRmse,
        },
    })
}

/// Bicubic upsampling of the grid-sampled depth, anchored at the samples.
pub fn joint_bicubic_baseline(data: &Dataset, factor: usize) -> Result<EvalSummary> {
    let items = data
        .eval
        .iter()
        .map(|e| {
            let up = bicubic_upsample_anchored(&e.sample.inputs[0], factor)?;
            score(&e.name, &up, &e.sample.target, &data.scoring)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(summarize(items))
}

/// Train images and named eval images.
pub type ImageSplit = (Vec<ImageU8>, Vec<(String, ImageU8)>);

/// Train images and named eval images listed in a manifest.
pub fn load_image_manifest(path: &Path) -> Result<ImageSplit> {
    let m = Manifest::load(path)?;
    let train = m
        .role(Role::Train)
        .map(|r| load_png(&r.target))
        .collect::<Result<_>>()?;
    let eval = m
        .role(Role::Eval)
        .map(|r| Ok((stem(&r.target), load_png(&r.target)?)))
        .collect::<Result<_>>()?;
    Ok((train, eval))
}

type RgbdSplit = (Vec<(DepthMap, ImageU8)>, Vec<(String, DepthMap, ImageU8)>);

/// Depth targets with guide images from a manifest; every record needs a guide.
pub fn load_rgbd_manifest(path: &Path) -> Result<RgbdSplit> {
    let m = Manifest::load(path)?;
    let load = |r: &crate::data_io::Record| -> Result<(DepthMap, ImageU8)> {
        let guide = r.guide.as_ref().ok_or_else(|| Error::Manifest {
            path: path.to_path_buf(),
            line: 0,
            msg: format!("{} has no guide image", r.target.display()),
        })?;
        Ok((load_pgm16(&r.target)?, load_png(guide)?))
    };
    let train = m.role(Role::Train).map(load).collect::<Result<_>>()?;
    let eval = m
        .role(Role::Eval)
        .map(|r| {
            let (d, g) = load(r)?;
            Ok((stem(&r.target), d, g))
        })
        .collect::<Result<_>>()?;
    Ok((train, eval))
}
