use ndarray::{Array2, ArrayView1};

use crate::sampling::{fit_apply_scaler, ScaleStats, ScalerMethod, WindowInstance, MIN_SCALE};

use super::tape::Mat;

/// A scaled minibatch in step-major layout.
#[derive(Debug, Clone)]
pub struct Batch {
    pub window: usize,
    pub horizon: usize,
    pub past_dim: usize,
    pub future_dim: usize,
    /// `B × (window + H)` scaled targets; horizon columns are zero when unknown.
    pub y: Mat,
    /// `B × window`, 1 for observed and 0 for padding.
    pub mask: Mat,
    /// One `B × P` matrix per past step.
    pub past_cov: Vec<Mat>,
    /// One `B × F` matrix per step of window and horizon.
    pub future_cov: Vec<Mat>,
    /// `B × H` loss weights: 1 for real targets, 0 for placeholders and
    /// for instances with degenerate scaling statistics.
    pub weights: Mat,
    /// Per-instance seasonal-naive scale of the observed past (scaled units).
    pub mase_denom: Vec<f64>,
    pub stats: Vec<ScaleStats>,
}

/// Seasonal-naive in-sample error of `y` at lag `m`, falling back to lag 1
/// for short windows and to 1 for flat windows.
fn instance_mase_denominator(y: &[f64], m: usize) -> f64 {
    let lag = if y.len() > m { m } else { 1 };
    if y.len() <= lag {
        return 1.0;
    }
    let d = y
        .windows(lag + 1)
        .map(|w| (w[lag] - w[0]).abs())
        .sum::<f64>()
        / (y.len() - lag) as f64;
    if d < 1e-8 {
        1.0
    } else {
        d
    }
}

impl Batch {
    /// Scales `instances` and lays them out for the networks.
    ///
    /// `known_future` marks whether the instances' future targets are real
    /// (training) or placeholders (forecasting).
    pub fn from_instances(
        instances: &[WindowInstance],
        scaler: ScalerMethod,
        mase_period: usize,
        known_future: bool,
    ) -> Self {
        assert!(!instances.is_empty(), "empty batch");
        let (scaled, stats) = fit_apply_scaler(instances, scaler);
        let b = scaled.len();
        let w = scaled[0].window();
        let h = scaled[0].horizon();
        let p = scaled[0].past_covariates.as_ref().map_or(0, |m| m.ncols());
        let f = scaled[0]
            .future_covariates
            .as_ref()
            .map_or(0, |m| m.ncols());
        let mut y = Array2::zeros((b, w + h));
        let mut mask = Array2::zeros((b, w));
        let mut past_cov = vec![Array2::zeros((b, p)); if p > 0 { w } else { 0 }];
        let mut future_cov = vec![Array2::zeros((b, f)); if f > 0 { w + h } else { 0 }];
        let mut mase_denom = Vec::with_capacity(b);
        for (i, inst) in scaled.iter().enumerate() {
            for t in 0..w {
                y[[i, t]] = inst.past_targets[t];
                mask[[i, t]] = if inst.past_mask[t] { 1.0 } else { 0.0 };
            }
            if known_future {
                for k in 0..h {
                    y[[i, w + k]] = inst.future_targets[k];
                }
            }
            if let Some(pc) = &inst.past_covariates {
                for (t, m) in past_cov.iter_mut().enumerate() {
                    m.row_mut(i).assign(&pc.row(t));
                }
            }
            if let Some(fc) = &inst.future_covariates {
                for (t, m) in future_cov.iter_mut().enumerate() {
                    m.row_mut(i).assign(&fc.row(t));
                }
            }
            let observed: Vec<f64> = inst.observed_past().collect();
            mase_denom.push(instance_mase_denominator(&observed, mase_period));
        }
        // Instances whose scale hit the floor would turn their targets into
        // ±1e10-sized values; they carry no usable signal and get zero weight.
        let mut weights = Array2::zeros((b, h));
        if known_future {
            for (i, st) in stats.iter().enumerate() {
                if st.scale > MIN_SCALE {
                    weights.row_mut(i).fill(1.0);
                }
            }
        }
        Self {
            window: w,
            horizon: h,
            past_dim: p,
            future_dim: f,
            y,
            mask,
            past_cov,
            future_cov,
            weights,
            mase_denom,
            stats,
        }
    }

    pub fn size(&self) -> usize {
        self.y.nrows()
    }

    /// Width of one encoder step: target, mask, past and future covariates.
    pub fn step_width(&self) -> usize {
        2 + self.past_dim + self.future_dim
    }

    /// Encoder input for step `t`. Steps at or beyond the window are
    /// appended forecasts: `y` supplies the value, the mask is 1 and past
    /// covariates are zero.
    pub fn step_features(&self, t: usize, y: ArrayView1<f64>) -> Mat {
        let b = self.size();
        let mut out = Array2::zeros((b, self.step_width()));
        out.column_mut(0).assign(&y);
        if t < self.window {
            out.column_mut(1).assign(&self.mask.column(t));
            for j in 0..self.past_dim {
                out.column_mut(2 + j).assign(&self.past_cov[t].column(j));
            }
        } else {
            out.column_mut(1).fill(1.0);
        }
        for j in 0..self.future_dim {
            out.column_mut(2 + self.past_dim + j)
                .assign(&self.future_cov[t].column(j));
        }
        out
    }

    /// Future covariates at horizon step `k` (`B × F`).
    pub fn horizon_cov(&self, k: usize) -> Mat {
        if self.future_dim == 0 {
            Array2::zeros((self.size(), 0))
        } else {
            self.future_cov[self.window + k].clone()
        }
    }

    /// Scaled horizon targets (`B × H`).
    pub fn future_targets(&self) -> Mat {
        self.y.slice(ndarray::s![.., self.window..]).to_owned()
    }

    /// Repeats every row `times` times (row `i·times + s`), for trajectory sampling.
    pub fn repeat_rows(&self, times: usize) -> Self {
        let rep = |m: &Mat| {
            let mut out = Array2::zeros((m.nrows() * times, m.ncols()));
            for i in 0..m.nrows() {
                for s in 0..times {
                    out.row_mut(i * times + s).assign(&m.row(i));
                }
            }
            out
        };
        Self {
            window: self.window,
            horizon: self.horizon,
            past_dim: self.past_dim,
            future_dim: self.future_dim,
            y: rep(&self.y),
            mask: rep(&self.mask),
            past_cov: self.past_cov.iter().map(rep).collect(),
            future_cov: self.future_cov.iter().map(rep).collect(),
            weights: rep(&self.weights),
            mase_denom: self
                .mase_denom
                .iter()
                .flat_map(|d| std::iter::repeat_n(*d, times))
                .collect(),
            stats: self
                .stats
                .iter()
                .flat_map(|s| std::iter::repeat_n(*s, times))
                .collect(),
        }
    }
}
