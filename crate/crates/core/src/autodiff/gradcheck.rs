use super::params::{ParamId, ParamSet};
use super::tape::{Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::{SeededRng, Tensor};

#[derive(Clone, Debug)]
pub struct GradcheckConfig {
    /// Central-difference step.
    pub eps: f64,
    /// Largest accepted `|analytic − numeric| / max(1, |analytic|)`.
    pub tol: f64,
    /// Coordinates checked per parameter; larger tensors are sampled.
    pub max_coords: usize,
    pub seed: u64,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        GradcheckConfig {
            eps: 1e-4,
            tol: 1e-5,
            max_coords: 200,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ParamCheck {
    pub name: String,
    pub checked: usize,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
}

#[derive(Clone, Debug)]
pub struct GradcheckReport {
    pub case: String,
    pub params: Vec<ParamCheck>,
    pub tol: f64,
}

impl GradcheckReport {
    pub fn max_rel_err(&self) -> f64 {
        self.params.iter().map(|p| p.rel_err).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.max_rel_err() <= self.tol
    }

    pub fn summary(&self) -> String {
        let worst = self
            .params
            .iter()
            .max_by(|a, b| a.rel_err.total_cmp(&b.rel_err));
        match worst {
            Some(p) => format!(
                "{} {}: max rel err {:.3e} at {}[{}] (analytic {:.6e}, numeric {:.6e})",
                if self.passed() { "ok  " } else { "FAIL" },
                self.case,
                p.rel_err,
                p.name,
                p.worst_index,
                p.analytic,
                p.numeric
            ),
            None => format!("ok   {}: no parameters", self.case),
        }
    }
}

/// Compares tape gradients with central differences in `f64`.
///
/// `build` records the function on a tape and returns its output; the
/// checked scalar is the sum of squared differences between that output and
/// a fixed random target drawn from `cfg.seed`.
pub fn finite_diff_check<F>(
    case: &str,
    params: &ParamSet<f64>,
    build: F,
    cfg: &GradcheckConfig,
) -> Result<GradcheckReport>
where
    F: Fn(&mut Tape<f64>) -> Result<Var>,
{
    let mut rng = SeededRng::new(cfg.seed);
    let target = {
        let mut t = Tape::new(params);
        let y = build(&mut t)?;
        Tensor::uniform(t.value(y).shape().to_vec(), -1.0, 1.0, &mut rng)
    };
    let loss_of = |ps: &ParamSet<f64>| -> Result<f64> {
        let mut t = Tape::new(ps);
        let y = build(&mut t)?;
        let l = t.sse(y, &target)?;
        Ok(t.value(l).data()[0])
    };
    let grads = {
        let mut t = Tape::new(params);
        let y = build(&mut t)?;
        let l = t.sse(y, &target)?;
        t.backward(l)?
    };

    let mut work = params.clone();
    let mut report = GradcheckReport {
        case: case.to_string(),
        params: Vec::new(),
        tol: cfg.tol,
    };
    for id in params.ids() {
        let n = params.get(id).len();
        let coords: Vec<usize> = if n <= cfg.max_coords {
            (0..n).collect()
        } else {
            rng.sample_indices(n, cfg.max_coords)
        };
        let zeros = Tensor::zeros(params.get(id).shape().to_vec());
        let analytic = grads.get(id).unwrap_or(&zeros);
        let mut check = ParamCheck {
            name: params.name(id).to_string(),
            checked: coords.len(),
            worst_index: 0,
            analytic: 0.0,
            numeric: 0.0,
            rel_err: 0.0,
        };
        for &c in &coords {
            let num = central_difference(&mut work, id, c, cfg.eps, &loss_of)?;
            let ana = analytic.data()[c];
            let err = (ana - num).abs() / ana.abs().max(1.0);
            if !err.is_finite() {
                return Err(Error::NonFinite(format!(
                    "gradient check {case}: {}[{c}]",
                    params.name(id)
                )));
            }
            if err >= check.rel_err {
                check.rel_err = err;
                check.worst_index = c;
                check.analytic = ana;
                check.numeric = num;
            }
        }
        report.params.push(check);
    }
    Ok(report)
}

fn central_difference(
    work: &mut ParamSet<f64>,
    id: ParamId,
    c: usize,
    eps: f64,
    loss_of: &impl Fn(&ParamSet<f64>) -> Result<f64>,
) -> Result<f64> {
    let orig = work.get(id).data()[c];
    work.get_mut(id).data_mut()[c] = orig + eps;
    let up = loss_of(work)?;
    work.get_mut(id).data_mut()[c] = orig - eps;
    let down = loss_of(work)?;
    work.get_mut(id).data_mut()[c] = orig;
    Ok((up - down) / (2.0 * eps))
}
