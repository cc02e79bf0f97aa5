use ndarray::Array2;

use super::scoring::{GradSink, KINK_TOLERANCE};

/// ConvE weights: a bank of square kernels over the stacked `(2·k1) × k2` input and a
/// projection from the flattened feature maps back to `d`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams {
    pub filters: usize,
    pub kernel: usize,
    pub k1: usize,
    pub k2: usize,
    /// `filters × kernel × kernel`, row-major.
    pub filter_bank: Vec<f64>,
    /// `(filters · 2·k1 · k2) × d`.
    pub projection: Array2<f64>,
}

/// Reshape dims: `k1` is the largest divisor of `d` not above `√d`.
pub fn conve_shape(d: usize) -> (usize, usize) {
    let mut k1 = 1;
    let mut i = 1;
    while i * i <= d {
        if d.is_multiple_of(i) {
            k1 = i;
        }
        i += 1;
    }
    (k1, d / k1)
}

pub(crate) struct ConvForward {
    input: Vec<f64>,
    conv_pre: Vec<f64>,
    features: Vec<f64>,
    hidden_pre: Vec<f64>,
    pub hidden: Vec<f64>,
    pub kink: bool,
}

impl ConvParams {
    fn height(&self) -> usize {
        2 * self.k1
    }

    fn width(&self) -> usize {
        self.k2
    }

    /// Hidden vector `g(vec(g([a; r] ∗ w)) W)` for the stacked pair.
    pub(crate) fn forward(&self, a: &[f64], r: &[f64]) -> ConvForward {
        let (h, w, ks) = (self.height(), self.width(), self.kernel);
        let pad = ks / 2;
        let mut input = Vec::with_capacity(a.len() + r.len());
        input.extend_from_slice(a);
        input.extend_from_slice(r);
        let plane = h * w;
        let mut conv_pre = vec![0.0; self.filters * plane];
        for f in 0..self.filters {
            let kernel = &self.filter_bank[f * ks * ks..(f + 1) * ks * ks];
            let out = &mut conv_pre[f * plane..(f + 1) * plane];
            for i in 0..h {
                for j in 0..w {
                    let mut acc = 0.0;
                    for u in 0..ks {
                        let Some(y) = (i + u).checked_sub(pad).filter(|&y| y < h) else {
                            continue;
                        };
                        for v in 0..ks {
                            let Some(x) = (j + v).checked_sub(pad).filter(|&x| x < w) else {
                                continue;
                            };
                            acc += kernel[u * ks + v] * input[y * w + x];
                        }
                    }
                    out[i * w + j] = acc;
                }
            }
        }
        let mut kink = conv_pre.iter().any(|x| x.abs() < KINK_TOLERANCE);
        let features: Vec<f64> = conv_pre.iter().map(|&x| x.max(0.0)).collect();
        let hidden_pre = features_times_projection(&features, &self.projection);
        kink |= hidden_pre.iter().any(|x| x.abs() < KINK_TOLERANCE);
        let hidden = hidden_pre.iter().map(|&x| x.max(0.0)).collect();
        ConvForward {
            input,
            conv_pre,
            features,
            hidden_pre,
            hidden,
            kink,
        }
    }

    /// Backpropagates `d_hidden`, accumulating weight gradients into `sink` and
    /// returning the gradients for the two stacked inputs.
    pub(crate) fn backward<S: GradSink + ?Sized>(
        &self,
        fwd: &ConvForward,
        d_hidden: &[f64],
        sink: &mut S,
    ) -> (Vec<f64>, Vec<f64>) {
        let (h, w, ks) = (self.height(), self.width(), self.kernel);
        let pad = ks / 2;
        let d = d_hidden.len();
        let d_hidden_pre: Vec<f64> = d_hidden
            .iter()
            .zip(&fwd.hidden_pre)
            .map(|(g, &x)| if x > 0.0 { *g } else { 0.0 })
            .collect();

        let n_feat = fwd.features.len();
        let mut d_features = vec![0.0; n_feat];
        {
            let proj_grad = sink.conv_projection(n_feat * d);
            for (m, (&feat, df)) in fwd.features.iter().zip(d_features.iter_mut()).enumerate() {
                let row = self.projection.row(m);
                let grow = &mut proj_grad[m * d..(m + 1) * d];
                let mut acc = 0.0;
                for k in 0..d {
                    acc += row[k] * d_hidden_pre[k];
                    grow[k] += feat * d_hidden_pre[k];
                }
                *df = acc;
            }
        }

        let plane = h * w;
        let mut d_input = vec![0.0; fwd.input.len()];
        let filter_grad = sink.conv_filters(self.filter_bank.len());
        for f in 0..self.filters {
            let kernel = &self.filter_bank[f * ks * ks..(f + 1) * ks * ks];
            for i in 0..h {
                for j in 0..w {
                    let idx = f * plane + i * w + j;
                    if fwd.conv_pre[idx] <= 0.0 {
                        continue;
                    }
                    let g = d_features[idx];
                    for u in 0..ks {
                        let Some(y) = (i + u).checked_sub(pad).filter(|&y| y < h) else {
                            continue;
                        };
                        for v in 0..ks {
                            let Some(x) = (j + v).checked_sub(pad).filter(|&x| x < w) else {
                                continue;
                            };
                            filter_grad[f * ks * ks + u * ks + v] += g * fwd.input[y * w + x];
                            d_input[y * w + x] += g * kernel[u * ks + v];
                        }
                    }
                }
            }
        }
        let d_r = d_input.split_off(d);
        (d_input, d_r)
    }
}

fn features_times_projection(features: &[f64], projection: &Array2<f64>) -> Vec<f64> {
    let d = projection.ncols();
    let mut out = vec![0.0; d];
    for (m, &f) in features.iter().enumerate() {
        if f == 0.0 {
            continue;
        }
        for (o, w) in out.iter_mut().zip(projection.row(m)) {
            *o += f * w;
        }
    }
    out
}
