//! Minimal reverse-mode gradient engine over dense row-major matrices.
//!
//! A [`Tape`] records every operation of one forward pass. Parameters are
//! views into a flat weight vector; [`Tape::backward`] accumulates their
//! gradients into a flat vector with the same layout.

use std::rc::Rc;

use ndarray::{s, Array2, Axis, Zip};

use crate::clock::add_work;

pub type Mat = Array2<f64>;

/// Handle to a tape node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Param {
        offset: usize,
    },
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    OneMinus(Var),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Mask(Var, Rc<Mat>),
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize),
    ConcatRows(Vec<Var>),
    SliceRows(Var, usize),
    CausalConv {
        x: Var,
        w: Var,
        b: Var,
        steps: usize,
        kernel: usize,
        dilation: usize,
    },
    /// Scalar whose gradient w.r.t. `input` was computed in the forward pass.
    Fixed {
        input: Var,
        grad: Mat,
    },
}

#[derive(Debug)]
struct Node {
    value: Mat,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn work_for(m: &Mat) -> u64 {
    m.len() as u64
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Mat, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Mat {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[[0, 0]]
    }

    pub fn constant(&mut self, value: Mat) -> Var {
        self.push(value, Op::Leaf)
    }

    /// A `rows × cols` parameter stored row-major at `weights[offset..]`.
    pub fn param(&mut self, weights: &[f64], offset: usize, rows: usize, cols: usize) -> Var {
        let value =
            Array2::from_shape_vec((rows, cols), weights[offset..offset + rows * cols].to_vec())
                .expect("parameter slice has the declared shape");
        self.push(value, Op::Param { offset })
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        add_work((va.nrows() * va.ncols() * vb.ncols()) as u64);
        let value = va.dot(vb);
        self.push(value, Op::MatMul(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a) + self.value(b);
        add_work(work_for(&value));
        self.push(value, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a) - self.value(b);
        add_work(work_for(&value));
        self.push(value, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a) * self.value(b);
        add_work(work_for(&value));
        self.push(value, Op::Mul(a, b))
    }

    /// `a + b` with the single-row `b` broadcast over the rows of `a`.
    pub fn add_row(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a) + self.value(b);
        add_work(work_for(&value));
        self.push(value, Op::AddRow(a, b))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let value = self.value(a) * c;
        add_work(work_for(&value));
        self.push(value, Op::Scale(a, c))
    }

    pub fn one_minus(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(|x| 1.0 - x);
        add_work(work_for(&value));
        self.push(value, Op::OneMinus(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(sigmoid);
        add_work(4 * work_for(&value));
        self.push(value, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(f64::tanh);
        add_work(4 * work_for(&value));
        self.push(value, Op::Tanh(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(|x| x.max(0.0));
        add_work(work_for(&value));
        self.push(value, Op::Relu(a))
    }

    /// Elementwise product with a constant mask (dropout).
    pub fn mask(&mut self, a: Var, mask: Rc<Mat>) -> Var {
        let value = self.value(a) * &*mask;
        add_work(work_for(&value));
        self.push(value, Op::Mask(a, mask))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let value = ndarray::concatenate(Axis(1), &views).expect("row counts agree");
        add_work(work_for(&value));
        self.push(value, Op::ConcatCols(parts.to_vec()))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Var {
        let value = self.value(a).slice(s![.., start..end]).to_owned();
        add_work(work_for(&value));
        self.push(value, Op::SliceCols(a, start))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let value = ndarray::concatenate(Axis(0), &views).expect("column counts agree");
        add_work(work_for(&value));
        self.push(value, Op::ConcatRows(parts.to_vec()))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, end: usize) -> Var {
        let value = self.value(a).slice(s![start..end, ..]).to_owned();
        add_work(work_for(&value));
        self.push(value, Op::SliceRows(a, start))
    }

    /// Causal dilated 1-D convolution.
    ///
    /// `x` is `(steps·B) × C_in` with row `t·B + b`; `w` is `(kernel·C_in) × C_out`
    /// where tap `j` reads `x[t - j·dilation]` (zero before the start);
    /// `b` is `1 × C_out`.
    pub fn causal_conv(
        &mut self,
        x: Var,
        w: Var,
        b: Var,
        steps: usize,
        kernel: usize,
        dilation: usize,
    ) -> Var {
        let xv = self.value(x);
        let wv = self.value(w);
        let rows = xv.nrows();
        let batch = rows / steps;
        let cin = xv.ncols();
        let cout = wv.ncols();
        let mut value = Array2::zeros((rows, cout));
        value += self.value(b);
        for j in 0..kernel {
            let shift = j * dilation;
            if shift >= steps {
                break;
            }
            let n = (steps - shift) * batch;
            let wj = wv.slice(s![j * cin..(j + 1) * cin, ..]);
            let contrib = xv.slice(s![..n, ..]).dot(&wj);
            add_work((n * cin * cout) as u64);
            let mut dst = value.slice_mut(s![shift * batch.., ..]);
            dst += &contrib;
        }
        self.push(
            value,
            Op::CausalConv {
                x,
                w,
                b,
                steps,
                kernel,
                dilation,
            },
        )
    }

    /// Records a scalar with a precomputed gradient w.r.t. `input`.
    pub fn fixed(&mut self, input: Var, value: f64, grad: Mat) -> Var {
        debug_assert_eq!(grad.dim(), self.value(input).dim());
        self.push(Array2::from_elem((1, 1), value), Op::Fixed { input, grad })
    }

    /// Back-propagates from the scalar `root`, accumulating parameter
    /// gradients into `grad` (same layout as the weight vector).
    pub fn backward(&self, root: Var, grad: &mut [f64]) {
        let mut adj: Vec<Option<Mat>> = (0..=root.0).map(|_| None).collect();
        adj[root.0] = Some(Array2::ones(self.nodes[root.0].value.dim()));

        fn acc(adj: &mut [Option<Mat>], v: Var, g: Mat) {
            match &mut adj[v.0] {
                Some(existing) => *existing += &g,
                slot => *slot = Some(g),
            }
        }

        for idx in (0..=root.0).rev() {
            let Some(g) = adj[idx].take() else { continue };
            let node = &self.nodes[idx];
            add_work(2 * work_for(&g));
            match &node.op {
                Op::Leaf => {}
                Op::Param { offset } => {
                    let dst = &mut grad[*offset..*offset + g.len()];
                    for (d, v) in dst.iter_mut().zip(g.iter()) {
                        *d += v;
                    }
                }
                Op::MatMul(a, b) => {
                    let (va, vb) = (self.value(*a), self.value(*b));
                    add_work(2 * (va.nrows() * va.ncols() * vb.ncols()) as u64);
                    acc(&mut adj, *a, g.dot(&vb.t()));
                    acc(&mut adj, *b, va.t().dot(&g));
                }
                Op::Add(a, b) => {
                    acc(&mut adj, *b, g.clone());
                    acc(&mut adj, *a, g);
                }
                Op::Sub(a, b) => {
                    acc(&mut adj, *b, -&g);
                    acc(&mut adj, *a, g);
                }
                Op::Mul(a, b) => {
                    let ga = &g * self.value(*b);
                    let gb = &g * self.value(*a);
                    acc(&mut adj, *a, ga);
                    acc(&mut adj, *b, gb);
                }
                Op::AddRow(a, b) => {
                    acc(&mut adj, *b, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                    acc(&mut adj, *a, g);
                }
                Op::Scale(a, c) => acc(&mut adj, *a, g * *c),
                Op::OneMinus(a) => acc(&mut adj, *a, -g),
                Op::Sigmoid(a) => {
                    let mut d = g;
                    Zip::from(&mut d)
                        .and(&node.value)
                        .for_each(|d, &y| *d *= y * (1.0 - y));
                    acc(&mut adj, *a, d);
                }
                Op::Tanh(a) => {
                    let mut d = g;
                    Zip::from(&mut d)
                        .and(&node.value)
                        .for_each(|d, &y| *d *= 1.0 - y * y);
                    acc(&mut adj, *a, d);
                }
                Op::Relu(a) => {
                    let mut d = g;
                    Zip::from(&mut d).and(&node.value).for_each(|d, &y| {
                        if y <= 0.0 {
                            *d = 0.0
                        }
                    });
                    acc(&mut adj, *a, d);
                }
                Op::Mask(a, m) => acc(&mut adj, *a, g * &**m),
                Op::ConcatCols(parts) => {
                    let mut start = 0;
                    for &p in parts {
                        let w = self.value(p).ncols();
                        acc(&mut adj, p, g.slice(s![.., start..start + w]).to_owned());
                        start += w;
                    }
                }
                Op::SliceCols(a, start) => {
                    let src = self.value(*a);
                    let mut d = Array2::zeros(src.dim());
                    d.slice_mut(s![.., *start..*start + g.ncols()]).assign(&g);
                    acc(&mut adj, *a, d);
                }
                Op::ConcatRows(parts) => {
                    let mut start = 0;
                    for &p in parts {
                        let r = self.value(p).nrows();
                        acc(&mut adj, p, g.slice(s![start..start + r, ..]).to_owned());
                        start += r;
                    }
                }
                Op::SliceRows(a, start) => {
                    let src = self.value(*a);
                    let mut d = Array2::zeros(src.dim());
                    d.slice_mut(s![*start..*start + g.nrows(), ..]).assign(&g);
                    acc(&mut adj, *a, d);
                }
                Op::CausalConv {
                    x,
                    w,
                    b,
                    steps,
                    kernel,
                    dilation,
                } => {
                    let xv = self.value(*x);
                    let wv = self.value(*w);
                    let batch = xv.nrows() / steps;
                    let cin = xv.ncols();
                    let mut dx = Array2::zeros(xv.dim());
                    let mut dw = Array2::zeros(wv.dim());
                    for j in 0..*kernel {
                        let shift = j * dilation;
                        if shift >= *steps {
                            break;
                        }
                        let n = (steps - shift) * batch;
                        let gy = g.slice(s![shift * batch.., ..]);
                        let wj = wv.slice(s![j * cin..(j + 1) * cin, ..]);
                        add_work(2 * (n * cin * wv.ncols()) as u64);
                        let mut dxs = dx.slice_mut(s![..n, ..]);
                        dxs += &gy.dot(&wj.t());
                        let mut dws = dw.slice_mut(s![j * cin..(j + 1) * cin, ..]);
                        dws += &xv.slice(s![..n, ..]).t().dot(&gy);
                    }
                    acc(&mut adj, *b, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                    acc(&mut adj, *x, dx);
                    acc(&mut adj, *w, dw);
                }
                Op::Fixed { input, grad: local } => {
                    let scale = g[[0, 0]];
                    acc(&mut adj, *input, local * scale);
                }
            }
        }
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    /// Sum of all elements, as a tape scalar.
    fn sum(t: &mut Tape, v: Var) -> Var {
        let grad = Array2::ones(t.value(v).dim());
        let total = t.value(v).sum();
        t.fixed(v, total, grad)
    }

    fn numeric_grad(f: impl Fn(&[f64]) -> f64, w: &[f64]) -> Vec<f64> {
        let eps = 1e-6;
        (0..w.len())
            .map(|i| {
                let mut p = w.to_vec();
                p[i] += eps;
                let up = f(&p);
                p[i] -= 2.0 * eps;
                let down = f(&p);
                (up - down) / (2.0 * eps)
            })
            .collect()
    }

    fn assert_close(a: &[f64], b: &[f64], tol: f64) {
        for (x, y) in a.iter().zip(b) {
            assert!(
                (x - y).abs() <= tol * x.abs().max(y.abs()).max(1e-3),
                "{x} vs {y}"
            );
        }
    }

    #[test]
    fn linear_l2_gradient_matches_closed_form() {
        // loss = mean (y - X w)^2 at w = 0 -> grad = -2 mean(y x)
        let x = array![[1.0, 2.0], [3.0, -1.0], [0.5, 4.0]];
        let y = array![[1.0], [2.0], [-1.0]];
        let weights = vec![0.0, 0.0];
        let mut t = Tape::new();
        let xv = t.constant(x.clone());
        let w = t.param(&weights, 0, 2, 1);
        let pred = t.matmul(xv, w);
        let n = y.len() as f64;
        let diff = t.value(pred) - &y;
        let loss_value = diff.mapv(|d| d * d).sum() / n;
        let root = t.fixed(pred, loss_value, diff * (2.0 / n));
        let mut g = vec![0.0; 2];
        t.backward(root, &mut g);
        for j in 0..2 {
            let expected = -2.0 * (0..3).map(|i| y[[i, 0]] * x[[i, j]]).sum::<f64>() / n;
            assert!((g[j] - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn elementwise_ops_match_finite_differences() {
        let w0: Vec<f64> = (0..12).map(|i| 0.3 * (i as f64 * 0.7).sin()).collect();
        let f = |w: &[f64], grad: Option<&mut Vec<f64>>| {
            let mut t = Tape::new();
            let a = t.param(w, 0, 2, 3);
            let b = t.param(w, 6, 3, 2);
            let bias = t.param(w, 0, 1, 2);
            let m = t.matmul(a, b);
            let m = t.add_row(m, bias);
            let s = t.sigmoid(m);
            let th = t.tanh(m);
            let r = t.relu(m);
            let p = t.mul(s, th);
            let q = t.sub(p, r);
            let q = t.one_minus(q);
            let q = t.scale(q, 1.7);
            let cat = t.concat_cols(&[q, s]);
            let sl = t.slice_cols(cat, 1, 3);
            let rows = t.concat_rows(&[sl, th]);
            let top = t.slice_rows(rows, 1, 3);
            let sq = t.mul(top, top);
            let out = t.add(sq, top);
            let root = sum(&mut t, out);
            if let Some(g) = grad {
                t.backward(root, g);
            }
            t.scalar(root)
        };
        let mut g = vec![0.0; 12];
        f(&w0, Some(&mut g));
        let n = numeric_grad(|w| f(w, None), &w0);
        assert_close(&g, &n, 1e-6);
    }

    #[test]
    fn causal_conv_matches_finite_differences_and_is_causal() {
        let steps = 5;
        let batch = 2;
        let cin = 2;
        let cout = 3;
        let kernel = 2;
        let dilation = 2;
        let nx = steps * batch * cin;
        let nw = kernel * cin * cout;
        let w0: Vec<f64> = (0..nx + nw + cout)
            .map(|i| 0.4 * ((i * 7 % 11) as f64 - 5.0) / 5.0)
            .collect();
        let f = |w: &[f64], grad: Option<&mut Vec<f64>>| {
            let mut t = Tape::new();
            let x = t.param(w, 0, steps * batch, cin);
            let k = t.param(w, nx, kernel * cin, cout);
            let b = t.param(w, nx + nw, 1, cout);
            let y = t.causal_conv(x, k, b, steps, kernel, dilation);
            let y = t.tanh(y);
            let root = sum(&mut t, y);
            if let Some(g) = grad {
                t.backward(root, g);
            }
            t.scalar(root)
        };
        let mut g = vec![0.0; w0.len()];
        f(&w0, Some(&mut g));
        let n = numeric_grad(|w| f(w, None), &w0);
        assert_close(&g, &n, 1e-6);

        // output at step t only depends on steps t, t-2
        let mut t = Tape::new();
        let x = t.param(&w0, 0, steps * batch, cin);
        let k = t.param(&w0, nx, kernel * cin, cout);
        let b = t.param(&w0, nx + nw, 1, cout);
        let y = t.causal_conv(x, k, b, steps, kernel, dilation);
        let base = t.value(y).clone();
        let mut w1 = w0.clone();
        w1[4 * batch * cin] += 1.0; // step 4, batch 0, channel 0
        let mut t2 = Tape::new();
        let x = t2.param(&w1, 0, steps * batch, cin);
        let k = t2.param(&w1, nx, kernel * cin, cout);
        let b = t2.param(&w1, nx + nw, 1, cout);
        let y2 = t2.causal_conv(x, k, b, steps, kernel, dilation);
        let diff = t2.value(y2) - &base;
        for r in 0..steps * batch {
            let changed = diff.row(r).iter().any(|v| v.abs() > 0.0);
            assert_eq!(changed, r == 4 * batch, "row {r}");
        }
    }

    #[test]
    fn softplus_and_sigmoid_are_stable() {
        assert_eq!(softplus(-1e4), 0.0);
        assert!((softplus(1000.0) - 1000.0).abs() < 1e-9);
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
        assert_eq!(sigmoid(-1e4), 0.0);
        assert_eq!(sigmoid(1e4), 1.0);
    }
}
