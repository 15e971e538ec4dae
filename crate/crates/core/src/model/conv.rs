//! Structured 2-D convolution (channels-last) and its lowering to a dense
//! affine map over the flattened `(row, col, channel)` layout.

use ndarray::{Array1, Array2, Array4, ArrayView1};
use serde::{Deserialize, Serialize};

use super::Affine;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Padding {
    Valid,
    Same,
}

#[derive(Debug, Clone)]
pub struct Conv2d {
    /// Kernel indexed `[kh, kw, cin, cout]`.
    pub kernel: Array4<f64>,
    /// One bias per output channel.
    pub bias: Array1<f64>,
    pub stride: [usize; 2],
    pub padding: Padding,
    pub(crate) in_hwc: [usize; 3],
    pub(crate) out_hwc: [usize; 3],
    pad_top: usize,
    pad_left: usize,
}

impl Conv2d {
    /// Builds the layer for an input of shape `in_hwc`. Returns `None` when
    /// the geometry yields an empty output.
    pub fn new(
        kernel: Array4<f64>,
        bias: Array1<f64>,
        stride: [usize; 2],
        padding: Padding,
        in_hwc: [usize; 3],
    ) -> Option<Self> {
        let (kh, kw, _, cout) = kernel.dim();
        let [h, w, _] = in_hwc;
        let [sh, sw] = stride;
        if sh == 0 || sw == 0 {
            return None;
        }
        let (oh, ow, pad_top, pad_left) = match padding {
            Padding::Valid => {
                if h < kh || w < kw {
                    return None;
                }
                ((h - kh) / sh + 1, (w - kw) / sw + 1, 0, 0)
            }
            Padding::Same => {
                let oh = h.div_ceil(sh);
                let ow = w.div_ceil(sw);
                let pad_h = ((oh - 1) * sh + kh).saturating_sub(h);
                let pad_w = ((ow - 1) * sw + kw).saturating_sub(w);
                (oh, ow, pad_h / 2, pad_w / 2)
            }
        };
        if oh == 0 || ow == 0 {
            return None;
        }
        Some(Self {
            kernel,
            bias,
            stride,
            padding,
            in_hwc,
            out_hwc: [oh, ow, cout],
            pad_top,
            pad_left,
        })
    }

    pub fn output_shape(&self) -> [usize; 3] {
        self.out_hwc
    }

    /// Visits every `(output index, input index, kernel weight)` triple.
    fn for_each_tap(&self, mut f: impl FnMut(usize, usize, f64)) {
        let (kh, kw, cin, cout) = self.kernel.dim();
        let [h, w, _] = self.in_hwc;
        let [oh, ow, _] = self.out_hwc;
        let [sh, sw] = self.stride;
        for orow in 0..oh {
            for ocol in 0..ow {
                for ki in 0..kh {
                    let irow = (orow * sh + ki) as isize - self.pad_top as isize;
                    if irow < 0 || irow >= h as isize {
                        continue;
                    }
                    for kj in 0..kw {
                        let icol = (ocol * sw + kj) as isize - self.pad_left as isize;
                        if icol < 0 || icol >= w as isize {
                            continue;
                        }
                        let in_base = (irow as usize * w + icol as usize) * cin;
                        let out_base = (orow * ow + ocol) * cout;
                        for ci in 0..cin {
                            for co in 0..cout {
                                f(out_base + co, in_base + ci, self.kernel[[ki, kj, ci, co]]);
                            }
                        }
                    }
                }
            }
        }
    }

    pub fn apply(&self, input: ArrayView1<'_, f64>) -> Array1<f64> {
        let [oh, ow, cout] = self.out_hwc;
        let mut out = Array1::zeros(oh * ow * cout);
        self.for_each_tap(|o, i, wgt| out[o] += wgt * input[i]);
        for (idx, v) in out.iter_mut().enumerate() {
            *v += self.bias[idx % cout];
        }
        out
    }

    pub fn lower(&self) -> Affine {
        let [oh, ow, cout] = self.out_hwc;
        let [h, w, cin] = self.in_hwc;
        let mut weights = Array2::zeros((oh * ow * cout, h * w * cin));
        self.for_each_tap(|o, i, wgt| weights[[o, i]] += wgt);
        let bias = Array1::from_shape_fn(oh * ow * cout, |idx| self.bias[idx % cout]);
        Affine { weights, bias }
    }
}
