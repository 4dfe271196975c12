//! Output heads: raw network channels to distribution parameters, losses
//! with closed-form gradients, and point forecasts.

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, Normal, StudentT};
use statrs::function::gamma::{digamma, ln_gamma};

use super::spec::{DistKind, HeadKind, HeadSpec, InferenceKind, ScalarLoss};
use super::tape::{sigmoid, softplus, Mat};

const HALF_LN_TWO_PI: f64 = 0.918_938_533_204_672_8;

/// Head parameters for one step in scaled units.
///
/// Gaussian `[μ, σ]`, Student-t `[μ, σ, ν]`, quantile `[lower, median, upper]`
/// (as emitted, unsorted), scalar `[value]`.
pub fn step_params(head: &HeadSpec, raw: &[f64]) -> Vec<f64> {
    match head.kind {
        HeadKind::Distribution => match head.dist {
            DistKind::Gaussian => vec![raw[0], softplus(raw[1])],
            DistKind::StudentT => vec![raw[0], softplus(raw[1]), 2.0 + softplus(raw[2])],
        },
        HeadKind::Quantile => raw[..3].to_vec(),
        HeadKind::Scalar => vec![raw[0]],
    }
}

/// Quantile levels matching the quantile head's channels.
pub fn quantile_levels(head: &HeadSpec) -> [f64; 3] {
    [head.q_lower, 0.5, head.q_upper]
}

fn pinball(q: f64, y: f64, pred: f64) -> (f64, f64) {
    let u = y - pred;
    if u > 0.0 {
        (q * u, -q)
    } else {
        ((q - 1.0) * u, 1.0 - q)
    }
}

/// Per-element loss and its gradient w.r.t. the raw channels.
fn element_loss(head: &HeadSpec, raw: &[f64], y: f64, mase_denom: f64, grad: &mut [f64]) -> f64 {
    match head.kind {
        HeadKind::Distribution => {
            let mu = raw[0];
            let sigma = softplus(raw[1]);
            let z = (y - mu) / sigma;
            match head.dist {
                DistKind::Gaussian => {
                    grad[0] = -z / sigma;
                    grad[1] = (1.0 - z * z) / sigma * sigmoid(raw[1]);
                    HALF_LN_TWO_PI + sigma.ln() + 0.5 * z * z
                }
                DistKind::StudentT => {
                    let nu = 2.0 + softplus(raw[2]);
                    let z2 = z * z;
                    let log1p = (z2 / nu).ln_1p();
                    grad[0] = -(nu + 1.0) * z / (sigma * (nu + z2));
                    grad[1] =
                        (1.0 / sigma - (nu + 1.0) * z2 / (sigma * (nu + z2))) * sigmoid(raw[1]);
                    let dnu = 0.5 * (digamma(0.5 * nu) - digamma(0.5 * (nu + 1.0)))
                        + 0.5 / nu
                        + 0.5 * log1p
                        - (nu + 1.0) * z2 / (2.0 * nu * (nu + z2));
                    grad[2] = dnu * sigmoid(raw[2]);
                    -(ln_gamma(0.5 * (nu + 1.0))
                        - ln_gamma(0.5 * nu)
                        - 0.5 * (nu * std::f64::consts::PI).ln()
                        - sigma.ln()
                        - 0.5 * (nu + 1.0) * log1p)
                }
            }
        }
        HeadKind::Quantile => {
            let mut total = 0.0;
            for (c, q) in quantile_levels(head).into_iter().enumerate() {
                let (l, g) = pinball(q, y, raw[c]);
                total += l / 3.0;
                grad[c] = g / 3.0;
            }
            total
        }
        HeadKind::Scalar => {
            let d = raw[0] - y;
            match head.scalar_loss {
                ScalarLoss::L1 => {
                    grad[0] = d.signum();
                    d.abs()
                }
                ScalarLoss::L2 => {
                    grad[0] = 2.0 * d;
                    d * d
                }
                ScalarLoss::Mase => {
                    grad[0] = d.signum() / mase_denom;
                    d.abs() / mase_denom
                }
            }
        }
    }
}

/// Weighted mean loss over a `B × (H·C)` output block and its gradient.
///
/// `weights` is `B × H`; zero-weight elements contribute nothing and an
/// all-zero weight matrix yields a zero loss with zero gradient.
pub fn head_loss(
    head: &HeadSpec,
    raw: &Mat,
    targets: &Mat,
    weights: &Mat,
    mase_denom: &[f64],
) -> (f64, Mat) {
    let c = head.channels();
    let (b, h) = targets.dim();
    debug_assert_eq!(raw.dim(), (b, h * c));
    let mut grad = Array2::zeros(raw.dim());
    let total_weight: f64 = weights.sum();
    if total_weight <= 0.0 {
        return (0.0, grad);
    }
    let mut loss = 0.0;
    let mut g = vec![0.0; c];
    let mut buf = vec![0.0; c];
    for i in 0..b {
        for k in 0..h {
            let w = weights[[i, k]];
            if w == 0.0 {
                continue;
            }
            for (j, slot) in buf.iter_mut().enumerate() {
                *slot = raw[[i, k * c + j]];
            }
            let l = element_loss(head, &buf, targets[[i, k]], mase_denom[i], &mut g);
            loss += w * l;
            for (j, gj) in g.iter().enumerate() {
                grad[[i, k * c + j]] = w * gj / total_weight;
            }
        }
    }
    (loss / total_weight, grad)
}

/// Draws one value from the step distribution (scaled units).
pub fn sample_step<R: Rng + ?Sized>(head: &HeadSpec, params: &[f64], rng: &mut R) -> f64 {
    match (head.kind, head.dist) {
        (HeadKind::Distribution, DistKind::Gaussian) => {
            let (mu, sigma) = (params[0], params[1]);
            if sigma > 0.0 {
                mu + sigma * Normal::new(0.0, 1.0).expect("unit normal").sample(rng)
            } else {
                mu
            }
        }
        (HeadKind::Distribution, DistKind::StudentT) => {
            let (mu, sigma, nu) = (params[0], params[1], params[2]);
            if sigma > 0.0 {
                mu + sigma * StudentT::new(nu).expect("nu > 2").sample(rng)
            } else {
                mu
            }
        }
        _ => point_of_params(head, params),
    }
}

/// Deterministic point value of one step: the distribution mean, the median
/// quantile after sorting, or the scalar.
pub fn point_of_params(head: &HeadSpec, params: &[f64]) -> f64 {
    match head.kind {
        HeadKind::Distribution | HeadKind::Scalar => params[0],
        HeadKind::Quantile => sorted3(params)[1],
    }
}

/// The three quantile outputs in ascending order.
pub fn sorted3(params: &[f64]) -> [f64; 3] {
    let mut v = [params[0], params[1], params[2]];
    v.sort_by(f64::total_cmp);
    v
}

/// Reduces sampled values to a point according to the inference strategy.
pub fn reduce_samples(inference: InferenceKind, samples: &mut [f64]) -> f64 {
    match inference {
        InferenceKind::SampleMedian => {
            samples.sort_by(f64::total_cmp);
            let n = samples.len();
            if n % 2 == 1 {
                samples[n / 2]
            } else {
                0.5 * (samples[n / 2 - 1] + samples[n / 2])
            }
        }
        _ => {
            // shifted mean: exact when all samples coincide
            let first = samples[0];
            first + samples.iter().map(|v| v - first).sum::<f64>() / samples.len() as f64
        }
    }
}
