use crate::error::{Error, Result};

/// One surviving window offset along an axis for a given output phase.
///
/// For output index `i = S·I + phase`, offset `offset` reaches the
/// upsampled position `i + offset = S·(I + shift)`, i.e. low-resolution
/// index `I + shift`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AxisTap {
    pub offset: isize,
    pub shift: isize,
}

/// A 2-D tap: row and column offsets plus the flat low-resolution stride.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PhaseTap {
    pub dx: isize,
    pub dy: isize,
    pub flat: isize,
}

/// Valid neighbour offsets per output phase `(i mod S, j mod S)`.
///
/// The mask is periodic with period `S`, so the surviving offsets of a
/// `K×K` window depend only on the phase; the 2-D set is the product of the
/// per-axis sets. `K ≥ 2S−1` guarantees the zero-shift tap exists in every
/// phase, so no window is ever empty.
#[derive(Clone, Debug)]
pub struct PhasePlan {
    stride: usize,
    kernel: usize,
    axis: Vec<Vec<AxisTap>>,
    max_axis: usize,
}

impl PhasePlan {
    pub fn new(kernel: usize, stride: usize) -> Result<Self> {
        if kernel.is_multiple_of(2) || stride == 0 {
            return Err(Error::param(format!(
                "phase plan needs odd K and S ≥ 1, got K={kernel} S={stride}"
            )));
        }
        if kernel + 1 < 2 * stride {
            return Err(Error::param(format!(
                "kernel {kernel} < 2·stride−1 = {}",
                2 * stride - 1
            )));
        }
        let r = ((kernel - 1) / 2) as isize;
        let s = stride as isize;
        let axis: Vec<Vec<AxisTap>> = (0..s)
            .map(|phase| {
                (-r..=r)
                    .filter(|d| (phase + d).rem_euclid(s) == 0)
                    .map(|d| AxisTap {
                        offset: d,
                        shift: (phase + d).div_euclid(s),
                    })
                    .collect()
            })
            .collect();
        let max_axis = axis.iter().map(Vec::len).max().unwrap_or(0);
        Ok(PhasePlan {
            stride,
            kernel,
            axis,
            max_axis,
        })
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn kernel(&self) -> usize {
        self.kernel
    }

    pub fn radius(&self) -> usize {
        (self.kernel - 1) / 2
    }

    pub fn axis_taps(&self, phase: usize) -> &[AxisTap] {
        &self.axis[phase]
    }

    /// Upper bound on taps along one axis over all phases.
    pub fn max_axis_taps(&self) -> usize {
        self.max_axis
    }

    /// Coefficient slots reserved per output pixel (`max_axis_taps²`).
    pub fn slots(&self) -> usize {
        self.max_axis * self.max_axis
    }

    /// Number of unmasked neighbours for a phase, ignoring image borders.
    pub fn n_phase(&self, row_phase: usize, col_phase: usize) -> usize {
        self.axis[row_phase].len() * self.axis[col_phase].len()
    }

    /// The 2-D tap list of a phase for a low-resolution map of width `lr_w`.
    pub fn taps(&self, row_phase: usize, col_phase: usize, lr_w: usize) -> Vec<PhaseTap> {
        let mut out = Vec::with_capacity(self.n_phase(row_phase, col_phase));
        for rt in &self.axis[row_phase] {
            for ct in &self.axis[col_phase] {
                out.push(PhaseTap {
                    dx: rt.offset,
                    dy: ct.offset,
                    flat: rt.shift * lr_w as isize + ct.shift,
                });
            }
        }
        out
    }

    /// Position of `offset` within the tap list of `phase`.
    pub fn tap_index(&self, phase: usize, offset: isize) -> Option<usize> {
        self.axis[phase].iter().position(|t| t.offset == offset)
    }

    /// Upsampled-grid positions gathered for output `(i, j)` of an
    /// `S·lr_h × S·lr_w` map, border-clipped.
    pub fn neighbours(&self, i: usize, j: usize, lr_h: usize, lr_w: usize) -> Vec<(usize, usize)> {
        let s = self.stride;
        let (bi, bj) = ((i / s) as isize, (j / s) as isize);
        let mut out = Vec::new();
        for rt in &self.axis[i % s] {
            let a = bi + rt.shift;
            if a < 0 || a >= lr_h as isize {
                continue;
            }
            for ct in &self.axis[j % s] {
                let b = bj + ct.shift;
                if b < 0 || b >= lr_w as isize {
                    continue;
                }
                out.push((a as usize * s, b as usize * s));
            }
        }
        out
    }
}
