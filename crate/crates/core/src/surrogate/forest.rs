//! Regression forest over vectorized configurations.

use rand::seq::index::sample;
use rand::Rng;

use super::SurrogateError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForestParams {
    pub num_trees: usize,
    pub min_leaf: usize,
    /// Fraction of dimensions considered at each split (rounded up).
    pub feature_fraction: f64,
    /// Fit each tree on a bootstrap resample instead of the full data.
    pub bootstrap: bool,
    /// Fit `ln y` when every loss is positive.
    pub log_transform: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            num_trees: 50,
            min_leaf: 3,
            feature_fraction: 0.8,
            bootstrap: true,
            log_transform: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Leaf {
        value: f64,
        count: usize,
    },
    /// `x[dim] <= threshold` goes left.
    Split {
        dim: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

/// A regression tree stored as a node arena; node 0 is the root.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { value, .. } => return value,
                Node::Split {
                    dim,
                    threshold,
                    left,
                    right,
                } => i = if x[dim] <= threshold { left } else { right },
            }
        }
    }

    /// Leaves with their boxes: per dimension the half-open interval `(lo, hi]`.
    pub fn leaf_boxes(&self, dims: usize) -> Vec<(f64, Vec<(f64, f64)>)> {
        let mut out = Vec::new();
        let mut stack = vec![(0usize, vec![(f64::NEG_INFINITY, f64::INFINITY); dims])];
        while let Some((i, bounds)) = stack.pop() {
            match self.nodes[i] {
                Node::Leaf { value, .. } => out.push((value, bounds)),
                Node::Split {
                    dim,
                    threshold,
                    left,
                    right,
                } => {
                    let mut l = bounds.clone();
                    l[dim].1 = l[dim].1.min(threshold);
                    let mut r = bounds;
                    r[dim].0 = r[dim].0.max(threshold);
                    stack.push((right, r));
                    stack.push((left, l));
                }
            }
        }
        out
    }

    /// Split thresholds used on `dim`, sorted and deduplicated.
    pub fn thresholds(&self, dim: usize) -> Vec<f64> {
        let mut t: Vec<f64> = self
            .nodes
            .iter()
            .filter_map(|n| match *n {
                Node::Split {
                    dim: d, threshold, ..
                } if d == dim => Some(threshold),
                _ => None,
            })
            .collect();
        t.sort_by(f64::total_cmp);
        t.dedup();
        t
    }
}

struct Grower<'a, R: Rng + ?Sized> {
    x: &'a [Vec<f64>],
    y: &'a [f64],
    min_leaf: usize,
    n_features: usize,
    rng: &'a mut R,
    nodes: Vec<Node>,
}

impl<R: Rng + ?Sized> Grower<'_, R> {
    fn grow(&mut self, idx: &mut [usize]) -> usize {
        let id = self.nodes.len();
        let n = idx.len();
        let mean = idx.iter().map(|&i| self.y[i]).sum::<f64>() / n as f64;
        self.nodes.push(Node::Leaf {
            value: mean,
            count: n,
        });
        if n < 2 * self.min_leaf || idx.iter().all(|&i| self.y[i] == self.y[idx[0]]) {
            return id;
        }
        let d = self.x[0].len();
        let features = sample(self.rng, d, self.n_features.min(d));
        // best split by reduction of the sum of squared deviations
        let mut best: Option<(f64, usize, f64)> = None;
        let mut order: Vec<usize> = idx.to_vec();
        for dim in features.iter() {
            order.sort_by(|&a, &b| self.x[a][dim].total_cmp(&self.x[b][dim]).then(a.cmp(&b)));
            let total: f64 = order.iter().map(|&i| self.y[i] - mean).sum();
            let mut left_sum = 0.0;
            for k in 1..n {
                left_sum += self.y[order[k - 1]] - mean;
                let (lo, hi) = (self.x[order[k - 1]][dim], self.x[order[k]][dim]);
                if k < self.min_leaf || n - k < self.min_leaf || lo == hi {
                    continue;
                }
                // SSE reduction = S_l²/n_l + S_r²/n_r with centered sums
                let right_sum = total - left_sum;
                let gain = left_sum * left_sum / k as f64 + right_sum * right_sum / (n - k) as f64;
                // gains equal up to rounding keep the first split, so the
                // tree shape does not depend on the scale of the losses
                if best.is_none_or(|(g, _, _)| gain > g + 1e-9 * g.abs()) {
                    best = Some((gain, dim, 0.5 * (lo + hi)));
                }
            }
        }
        let Some((_, dim, threshold)) = best else {
            return id;
        };
        let split = partition(idx, |i| self.x[i][dim] <= threshold);
        let (l, r) = idx.split_at_mut(split);
        let left = self.grow(l);
        let right = self.grow(r);
        self.nodes[id] = Node::Split {
            dim,
            threshold,
            left,
            right,
        };
        id
    }
}

fn partition(idx: &mut [usize], pred: impl Fn(usize) -> bool) -> usize {
    let mut left: Vec<usize> = idx.iter().copied().filter(|&i| pred(i)).collect();
    let k = left.len();
    left.extend(idx.iter().copied().filter(|&i| !pred(i)));
    idx.copy_from_slice(&left);
    k
}

/// Regression forest; mean and variance come from the spread of per-tree
/// predictions.
#[derive(Debug, Clone, PartialEq)]
pub struct Forest {
    pub trees: Vec<Tree>,
    pub dims: usize,
    /// Trees predict `ln y`.
    pub log_space: bool,
}

impl Forest {
    pub fn fit<R: Rng + ?Sized>(
        x: &[Vec<f64>],
        y: &[f64],
        params: &ForestParams,
        rng: &mut R,
    ) -> Result<Self, SurrogateError> {
        if x.len() < 2 || x.len() != y.len() {
            return Err(SurrogateError::TooFewPoints(x.len().min(y.len())));
        }
        let dims = x[0].len();
        if dims == 0 || x.iter().any(|r| r.len() != dims) {
            return Err(SurrogateError::Shape(format!(
                "expected {dims}-dimensional rows"
            )));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(SurrogateError::Shape("non-finite loss".into()));
        }
        let log_space = params.log_transform && y.iter().all(|&v| v > 0.0);
        let target: Vec<f64> = if log_space {
            y.iter().map(|v| v.ln()).collect()
        } else {
            y.to_vec()
        };
        let n_features = ((params.feature_fraction * dims as f64).ceil() as usize).clamp(1, dims);
        let n = x.len();
        let mut trees = Vec::with_capacity(params.num_trees);
        for _ in 0..params.num_trees.max(1) {
            let mut idx: Vec<usize> = if params.bootstrap {
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            let mut g = Grower {
                x,
                y: &target,
                min_leaf: params.min_leaf.max(1),
                n_features,
                rng: &mut *rng,
                nodes: Vec::new(),
            };
            g.grow(&mut idx);
            trees.push(Tree { nodes: g.nodes });
        }
        Ok(Self {
            trees,
            dims,
            log_space,
        })
    }

    /// Mean and variance of the per-tree predictions, before any inverse
    /// transform.
    pub fn predict_raw(&self, x: &[f64]) -> (f64, f64) {
        let n = self.trees.len() as f64;
        let preds: Vec<f64> = self.trees.iter().map(|t| t.predict(x)).collect();
        let mean = preds.iter().sum::<f64>() / n;
        let var = preds.iter().map(|p| (p - mean) * (p - mean)).sum::<f64>() / n;
        (mean, var)
    }

    /// Predictive mean and variance in loss units; log-space forests use
    /// log-normal moments.
    pub fn predict(&self, x: &[f64]) -> (f64, f64) {
        let (m, v) = self.predict_raw(x);
        if self.log_space {
            let mean = (m + 0.5 * v).exp();
            let var = (v.exp() - 1.0) * (2.0 * m + v).exp();
            (mean, var.max(0.0))
        } else {
            (m, v.max(0.0))
        }
    }
}
