//! Timing harness shared by the CLI `bench` command and the acceptance suite.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use super::flops::{attention_upsample_macs, deconv_macs};
use super::{attention_upsample_fast, transposed_conv2d_fast};
use crate::error::{Error, Result};
use crate::par::Exec;
use crate::reference::{attention_upsample, transposed_conv2d, AttnUpsampleParams, DeconvParams};
use crate::tensor::{SeededRng, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BenchOp {
    AttentionRef,
    AttentionFast,
    DeconvRef,
    DeconvFast,
}

impl BenchOp {
    pub const ALL: [BenchOp; 4] = [
        BenchOp::AttentionRef,
        BenchOp::AttentionFast,
        BenchOp::DeconvRef,
        BenchOp::DeconvFast,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BenchOp::AttentionRef => "attention_ref",
            BenchOp::AttentionFast => "attention_fast",
            BenchOp::DeconvRef => "deconv_ref",
            BenchOp::DeconvFast => "deconv_fast",
        }
    }

    fn is_attention(self) -> bool {
        matches!(self, BenchOp::AttentionRef | BenchOp::AttentionFast)
    }
}

impl fmt::Display for BenchOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BenchOp {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        BenchOp::ALL
            .into_iter()
            .find(|op| op.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown bench op {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BenchShape {
    pub c_in: usize,
    pub c_out: usize,
    pub h: usize,
    pub w: usize,
    pub stride: usize,
    pub kernel: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchRecord {
    pub op: BenchOp,
    pub shape: BenchShape,
    pub threads: usize,
    pub median_ns: u128,
    /// Floating-point operations (two per multiply-add).
    pub flops: u64,
    pub gflops: f64,
    /// Sum of the output elements.
    pub checksum: f64,
}

pub const CSV_HEADER: &str = "op,Cin,Cout,H,W,S,K,threads,median_ns,flops,gflops,check";

impl BenchRecord {
    pub fn csv_row(&self) -> String {
        let s = &self.shape;
        format!(
            "{},{},{},{},{},{},{},{},{},{},{:.4},{:.6e}",
            self.op,
            s.c_in,
            s.c_out,
            s.h,
            s.w,
            s.stride,
            s.kernel,
            self.threads,
            self.median_ns,
            self.flops,
            self.gflops,
            self.checksum
        )
    }
}

pub fn to_csv(records: &[BenchRecord]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out
}

#[derive(Clone, Debug)]
pub struct BenchConfig {
    pub ops: Vec<BenchOp>,
    pub shapes: Vec<BenchShape>,
    pub threads: Vec<usize>,
    /// Timed repetitions per configuration; one extra warm-up run is discarded.
    pub reps: usize,
    pub seed: u64,
}

struct Inputs {
    x: Tensor<f32>,
    attn: AttnUpsampleParams<f32>,
    deconv: DeconvParams<f32>,
}

fn run_op(op: BenchOp, inp: &Inputs) -> Result<Tensor<f32>> {
    match op {
        BenchOp::AttentionRef => attention_upsample(&inp.x, &inp.attn),
        BenchOp::AttentionFast => attention_upsample_fast(&inp.x, &inp.attn),
        BenchOp::DeconvRef => transposed_conv2d(&inp.x, &inp.deconv),
        BenchOp::DeconvFast => transposed_conv2d_fast(&inp.x, &inp.deconv),
    }
}

fn checksum(t: &Tensor<f32>) -> (f64, f64) {
    t.data().iter().fold((0.0, 0.0), |(s, l1), &v| {
        (s + v as f64, l1 + (v as f64).abs())
    })
}

/// Times every `(shape, op, threads)` combination. Each output checksum is
/// compared with the reference op on the same inputs; a mismatch beyond
/// `1e-4·‖ref‖₁` is an error.
pub fn run(cfg: &BenchConfig) -> Result<Vec<BenchRecord>> {
    let reps = cfg.reps.max(1);
    let mut records = Vec::new();
    for (si, &shape) in cfg.shapes.iter().enumerate() {
        let mut rng = SeededRng::new(cfg.seed).fork(si as u64);
        let inp = Inputs {
            x: Tensor::uniform([shape.c_in, shape.h, shape.w], -1.0, 1.0, &mut rng),
            attn: AttnUpsampleParams::init(
                shape.c_in,
                shape.c_out,
                shape.kernel,
                shape.stride,
                &mut rng,
            )?,
            deconv: DeconvParams::init(
                shape.c_in,
                shape.c_out,
                shape.kernel,
                shape.stride,
                &mut rng,
            )?,
        };
        let mut expected: [Option<(f64, f64)>; 2] = [None, None];
        for &op in &cfg.ops {
            let slot = usize::from(!op.is_attention());
            let macs = if op.is_attention() {
                attention_upsample_macs(
                    shape.c_in,
                    shape.c_out,
                    shape.h,
                    shape.w,
                    shape.stride,
                    shape.kernel,
                )
            } else {
                deconv_macs(
                    shape.c_in,
                    shape.c_out,
                    shape.h,
                    shape.w,
                    shape.stride,
                    shape.kernel,
                )
            };
            for &threads in &cfg.threads {
                let exec = Exec::new(threads);
                let (median_ns, out) = exec.install(|| -> Result<(u128, Tensor<f32>)> {
                    let mut out = run_op(op, &inp)?;
                    let mut times = Vec::with_capacity(reps);
                    for _ in 0..reps {
                        let t0 = Instant::now();
                        out = run_op(op, &inp)?;
                        times.push(t0.elapsed().as_nanos());
                    }
                    times.sort_unstable();
                    Ok((times[times.len() / 2], out))
                })?;
                let (cs, _) = checksum(&out);
                let (want, l1) = match expected[slot] {
                    Some(e) => e,
                    None => {
                        let reference = if op.is_attention() {
                            run_op(BenchOp::AttentionRef, &inp)?
                        } else {
                            run_op(BenchOp::DeconvRef, &inp)?
                        };
                        let e = checksum(&reference);
                        expected[slot] = Some(e);
                        e
                    }
                };
                if (cs - want).abs() > 1e-4 * l1.max(f64::MIN_POSITIVE) {
                    return Err(Error::Checksum {
                        op: op.name().to_string(),
                        got: cs,
                        expected: want,
                    });
                }
                let flops = 2 * macs;
                records.push(BenchRecord {
                    op,
                    shape,
                    threads: exec.threads(),
                    median_ns,
                    flops,
                    gflops: flops as f64 / median_ns.max(1) as f64,
                    checksum: cs,
                });
            }
        }
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_grid_is_header_only() {
        let cfg = BenchConfig {
            ops: BenchOp::ALL.to_vec(),
            shapes: vec![],
            threads: vec![1],
            reps: 3,
            seed: 0,
        };
        let recs = run(&cfg).unwrap();
        assert_eq!(to_csv(&recs), format!("{CSV_HEADER}\n"));
    }

    #[test]
    fn small_grid_runs_and_checks() {
        let cfg = BenchConfig {
            ops: BenchOp::ALL.to_vec(),
            shapes: vec![BenchShape {
                c_in: 4,
                c_out: 4,
                h: 6,
                w: 5,
                stride: 2,
                kernel: 3,
            }],
            threads: vec![1, 2],
            reps: 3,
            seed: 7,
        };
        let recs = run(&cfg).unwrap();
        assert_eq!(recs.len(), 8);
        let csv = to_csv(&recs);
        assert_eq!(csv.lines().count(), 9);
        for line in csv.lines().skip(1) {
            assert_eq!(line.split(',').count(), 12);
        }
        assert_eq!(recs[2].checksum, recs[3].checksum);
        assert!("attention_fast".parse::<BenchOp>().is_ok());
        assert!("nope".parse::<BenchOp>().is_err());
    }
}
