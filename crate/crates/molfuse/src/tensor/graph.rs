//! Tape-based reverse-mode autodiff.
//!
//! Forward ops push a node holding the computed value and a backward
//! closure; `backward` walks the tape in reverse, handing each node its
//! output gradient and letting the closure scatter into parent slots.
//! Shape violations are contract bugs, so ops panic with a "shape mismatch"
//! message rather than returning errors.

use super::optim::{ParamId, ParamStore};
use super::Tensor;
use std::collections::HashMap;
use std::rc::Rc;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

pub struct Gradients {
    slots: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        self.slots[var.0].as_ref()
    }

    fn accumulate(&mut self, var: Var, shape: &[usize], f: impl FnOnce(&mut [f64])) {
        let slot = &mut self.slots[var.0];
        if slot.is_none() {
            *slot = Some(Tensor::zeros(shape.to_vec()));
        }
        f(&mut slot.as_mut().unwrap().data);
    }
}

type BackFn = Box<dyn Fn(&Tensor, &mut Gradients)>;

struct Node {
    value: Rc<Tensor>,
    back: Option<BackFn>,
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    params: Vec<(ParamId, Var)>,
    param_cache: HashMap<usize, Var>,
}

fn assert_shape(cond: bool, what: &str) {
    assert!(cond, "shape mismatch: {what}");
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    fn push(&mut self, value: Tensor, back: Option<BackFn>) -> Var {
        self.nodes.push(Node {
            value: Rc::new(value),
            back,
        });
        Var(self.nodes.len() - 1)
    }

    fn rc(&self, var: Var) -> Rc<Tensor> {
        Rc::clone(&self.nodes[var.0].value)
    }

    /// Constant leaf.
    pub fn input(&mut self, t: Tensor) -> Var {
        self.push(t, None)
    }

    /// Parameter leaf; repeated requests for the same parameter return the
    /// same node so its gradient accumulates in one slot.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(&var) = self.param_cache.get(&id.0) {
            return var;
        }
        let mut t = store.get(id).tensor.clone();
        t.grad = None;
        let var = self.push(t, None);
        self.param_cache.insert(id.0, var);
        self.params.push((id, var));
        var
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (self.rc(a), self.rc(b));
        assert_shape(ta.shape == tb.shape, "add operands differ");
        let data = ta.data.iter().zip(&tb.data).map(|(x, y)| x + y).collect();
        let shape = ta.shape.clone();
        let (sa, sb) = (ta.shape.clone(), tb.shape.clone());
        self.push(
            Tensor::new(shape, data),
            Some(Box::new(move |g, grads| {
                grads.accumulate(a, &sa, |d| {
                    d.iter_mut().zip(&g.data).for_each(|(x, y)| *x += y)
                });
                grads.accumulate(b, &sb, |d| {
                    d.iter_mut().zip(&g.data).for_each(|(x, y)| *x += y)
                });
            })),
        )
    }

    /// x [n,d] + bias [1,d] broadcast over rows.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Var {
        let (tx, tb) = (self.rc(x), self.rc(bias));
        assert_shape(
            tb.rows() == 1 && tb.cols() == tx.cols(),
            "bias must be [1, cols(x)]",
        );
        let (n, d) = (tx.rows(), tx.cols());
        let mut out = Tensor::zeros(vec![n, d]);
        for r in 0..n {
            for c in 0..d {
                *out.at_mut(r, c) = tx.at(r, c) + tb.at(0, c);
            }
        }
        let (sx, sb) = (tx.shape.clone(), tb.shape.clone());
        self.push(
            out,
            Some(Box::new(move |g, grads| {
                grads.accumulate(x, &sx, |dx| {
                    dx.iter_mut().zip(&g.data).for_each(|(a, b)| *a += b)
                });
                grads.accumulate(bias, &sb, |db| {
                    for r in 0..n {
                        for c in 0..d {
                            db[c] += g.at(r, c);
                        }
                    }
                });
            })),
        )
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (self.rc(a), self.rc(b));
        assert_shape(ta.shape == tb.shape, "mul operands differ");
        let data = ta.data.iter().zip(&tb.data).map(|(x, y)| x * y).collect();
        let shape = ta.shape.clone();
        let (sa, sb) = (ta.shape.clone(), tb.shape.clone());
        let (ca, cb) = (Rc::clone(&ta), Rc::clone(&tb));
        self.push(
            Tensor::new(shape, data),
            Some(Box::new(move |g, grads| {
                grads.accumulate(a, &sa, |d| {
                    for i in 0..d.len() {
                        d[i] += g.data[i] * cb.data[i];
                    }
                });
                grads.accumulate(b, &sb, |d| {
                    for i in 0..d.len() {
                        d[i] += g.data[i] * ca.data[i];
                    }
                });
            })),
        )
    }

    /// x [n,d] scaled row-wise by a column s [n,1].
    pub fn mul_broadcast_col(&mut self, x: Var, s: Var) -> Var {
        let (tx, ts) = (self.rc(x), self.rc(s));
        assert_shape(
            ts.cols() == 1 && ts.rows() == tx.rows(),
            "column factor must be [rows(x), 1]",
        );
        let (n, d) = (tx.rows(), tx.cols());
        let mut out = Tensor::zeros(vec![n, d]);
        for r in 0..n {
            for c in 0..d {
                *out.at_mut(r, c) = tx.at(r, c) * ts.at(r, 0);
            }
        }
        let (sx, ss) = (tx.shape.clone(), ts.shape.clone());
        self.push(
            out,
            Some(Box::new(move |g, grads| {
                grads.accumulate(x, &sx, |dx| {
                    for r in 0..n {
                        for c in 0..d {
                            dx[r * d + c] += g.at(r, c) * ts.at(r, 0);
                        }
                    }
                });
                grads.accumulate(s, &ss, |ds| {
                    for r in 0..n {
                        for c in 0..d {
                            ds[r] += g.at(r, c) * tx.at(r, c);
                        }
                    }
                });
            })),
        )
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        let tx = self.rc(x);
        let data = tx.data.iter().map(|v| v * factor).collect();
        let shape = tx.shape.clone();
        let sx = tx.shape.clone();
        self.push(
            Tensor::new(shape, data),
            Some(Box::new(move |g, grads| {
                grads.accumulate(x, &sx, |d| {
                    for i in 0..d.len() {
                        d[i] += factor * g.data[i];
                    }
                });
            })),
        )
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (self.rc(a), self.rc(b));
        assert_shape(ta.cols() == tb.rows(), "matmul inner dimensions differ");
        let (n, k, m) = (ta.rows(), ta.cols(), tb.cols());
        let mut out = Tensor::zeros(vec![n, m]);
        for r in 0..n {
            let a_row = &ta.data[r * k..(r + 1) * k];
            let out_row = &mut out.data[r * m..(r + 1) * m];
            for (i, &av) in a_row.iter().enumerate() {
                if av == 0.0 {
                    continue;
                }
                let b_row = &tb.data[i * m..(i + 1) * m];
                for (o, &bv) in out_row.iter_mut().zip(b_row) {
                    *o += av * bv;
                }
            }
        }
        let (sa, sb) = (ta.shape.clone(), tb.shape.clone());
        let (ca, cb) = (Rc::clone(&ta), Rc::clone(&tb));
        self.push(
            out,
            Some(Box::new(move |g, grads| {
                // dA = g B^T
                grads.accumulate(a, &sa, |da| {
                    for r in 0..n {
                        let g_row = &g.data[r * m..(r + 1) * m];
                        let da_row = &mut da[r * k..(r + 1) * k];
                        for (i, slot) in da_row.iter_mut().enumerate() {
                            let b_row = &cb.data[i * m..(i + 1) * m];
                            let mut acc = 0.0;
                            for (&gv, &bv) in g_row.iter().zip(b_row) {
                                acc += gv * bv;
                            }
                            *slot += acc;
                        }
                    }
                });
                // dB = A^T g
                grads.accumulate(b, &sb, |db| {
                    for r in 0..n {
                        let g_row = &g.data[r * m..(r + 1) * m];
                        let a_row = &ca.data[r * k..(r + 1) * k];
                        for (i, &av) in a_row.iter().enumerate() {
                            if av == 0.0 {
                                continue;
                            }
                            let db_row = &mut db[i * m..(i + 1) * m];
                            for (slot, &gv) in db_row.iter_mut().zip(g_row) {
                                *slot += av * gv;
                            }
                        }
                    }
                });
            })),
        )
    }

    /// Fully connected layer: x W + b.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Var {
        let xw = self.matmul(x, w);
        self.add_bias(xw, b)
    }

    pub fn transpose(&mut self, x: Var) -> Var {
        let tx = self.rc(x);
        let (n, m) = (tx.rows(), tx.cols());
        let mut out = Tensor::zeros(vec![m, n]);
        for r in 0..n {
            for c in 0..m {
                *out.at_mut(c, r) = tx.at(r, c);
            }
        }
        let sx = tx.shape.clone();
        self.push(
            out,
            Some(Box::new(move |g, grads| {
                grads.accumulate(x, &sx, |d| {
                    for r in 0..n {
                        for c in 0..m {
                            d[r * m + c] += g.at(c, r);
                        }
                    }
                });
            })),
        )
    }

    fn unary(&mut self, x: Var, f: impl Fn(f64) -> (f64, f64)) -> Var {
        let tx = self.rc(x);
        let mut value = Vec::with_capacity(tx.len());
        let mut slope = Vec::with_capacity(tx.len());
        for &v in &tx.data {
            let (y, dy) = f(v);
            value.push(y);
            slope.push(dy);
        }
        let shape = tx.shape.clone();
        let sx = tx.shape.clone();
        self.push(
            Tensor::new(shape, value),
            Some(Box::new(move |g, grads| {
                grads.accumulate(x, &sx, |d| {
                    for i in 0..d.len() {
                        d[i] += g.data[i] * slope[i];
                    }
                });
            })),
        )
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, |v| if v > 0.0 { (v, 1.0) } else { (0.0, 0.0) })
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, |v| {
            let y = sigmoid_scalar(v);
            (y, y * (1.0 - y))
        })
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, |v| {
            let y = v.tanh();
            (y, 1.0 - y * y)
        })
    }

    pub fn silu(&mut self, x: Var) -> Var {
        self.unary(x, |v| {
            let s = sigmoid_scalar(v);
            (v * s, s * (1.0 + v * (1.0 - s)))
        })
    }

    pub fn softplus(&mut self, x: Var) -> Var {
        self.unary(x, |v| (softplus_scalar(v), sigmoid_scalar(v)))
    }

    /// Clamp into [lo, hi]; gradient passes through inside the interval.
    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Var {
        self.unary(x, move |v| {
            if v < lo {
                (lo, 0.0)
            } else if v > hi {
                (hi, 0.0)
            } else {
                (v, 1.0)
            }
        })
    }

    /// Row-wise softmax with max subtraction.
    pub fn softmax_rows(&mut self, x: Var) -> Var {
        let tx = self.rc(x);
        let (n, m) = (tx.rows(), tx.cols());
        let mut out = Tensor::zeros(vec![n, m]);
        for r in 0..n {
            let row = &tx.data[r * m..(r + 1) * m];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for c in 0..m {
                let e = (row[c] - max).exp();
                out.data[r * m + c] = e;
                sum += e;
            }
            for c in 0..m {
                out.data[r * m + c] /= sum;
            }
        }
        let sx = tx.shape.clone();
        let y = Rc::new(out);
        let y_back = Rc::clone(&y);
        self.push(
            y.as_ref().clone(),
            Some(Box::new(move |g, grads| {
                grads.accumulate(x, &sx, |d| {
                    for r in 0..n {
                        let mut dot = 0.0;
                        for c in 0..m {
                            dot += g.at(r, c) * y_back.at(r, c);
                        }
                        for c in 0..m {
                            d[r * m + c] += y_back.at(r, c) * (g.at(r, c) - dot);
                        }
                    }
                });
            })),
        )
    }

    /// Causal depthwise 1-D convolution: y[t,c] = sum_k kernel[k,c] x[t-k,c],
    /// with zero left padding.
    pub fn conv1d_depthwise(&mut self, x: Var, kernel: Var) -> Var {
        let (tx, tk) = (self.rc(x), self.rc(kernel));
        assert_shape(tk.cols() == tx.cols(), "kernel channels differ from input");
        let (len, d, w) = (tx.rows(), tx.cols(), tk.rows());
        let mut out = Tensor::zeros(vec![len, d]);
        for t in 0..len {
            for c in 0..d {
                let mut acc = 0.0;
                for k in 0..w.min(t + 1) {
                    acc += tk.at(k, c) * tx.at(t - k, c);
                }
                out.data[t * d + c] = acc;
            }
        }
        let (sx, sk) = (tx.shape.clone(), tk.shape.clone());
        let (cx, ck) = (Rc::clone(&tx), Rc::clone(&tk));
        self.push(
            out,
            Some(Box::new(move |g, grads| {
                grads.accumulate(x, &sx, |dx| {
                    for t in 0..len {
                        for c in 0..d {
                            for k in 0..w.min(t + 1) {
                                dx[(t - k) * d + c] += ck.at(k, c) * g.at(t, c);
                            }
                        }
                    }
                });
                grads.accumulate(kernel, &sk, |dk| {
                    for t in 0..len {
                        for c in 0..d {
                            for k in 0..w.min(t + 1) {
                                dk[k * d + c] += cx.at(t - k, c) * g.at(t, c);
                            }
                        }
                    }
                });
            })),
        )
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (self.rc(a), self.rc(b));
        assert_shape(ta.rows() == tb.rows(), "concat_cols row counts differ");
        let (n, da, db) = (ta.rows(), ta.cols(), tb.cols());
        let mut out = Tensor::zeros(vec![n, da + db]);
        for r in 0..n {
            for c in 0..da {
                *out.at_mut(r, c) = ta.at(r, c);
            }
            for c in 0..db {
                *out.at_mut(r, da + c) = tb.at(r, c);
            }
        }
        let (sa, sb) = (ta.shape.clone(), tb.shape.clone());
        self.push(
            out,
            Some(Box::new(move |g, grads| {
                grads.accumulate(a, &sa, |d| {
                    for r in 0..n {
                        for c in 0..da {
                            d[r * da + c] += g.at(r, c);
                        }
                    }
                });
                grads.accumulate(b, &sb, |d| {
                    for r in 0..n {
                        for c in 0..db {
                            d[r * db + c] += g.at(r, da + c);
                        }
                    }
                });
            })),
        )
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Var {
        let tx = self.rc(x);
        assert_shape(start + len <= tx.cols(), "column slice out of range");
        let (n, d) = (tx.rows(), tx.cols());
        let mut out = Tensor::zeros(vec![n, len]);
        for r in 0..n {
            for c in 0..len {
                *out.at_mut(r, c) = tx.at(r, start + c);
            }
        }
        let sx = tx.shape.clone();
        self.push(
            out,
            Some(Box::new(move |g, grads| {
                grads.accumulate(x, &sx, |dx| {
                    for r in 0..n {
                        for c in 0..len {
                            dx[r * d + start + c] += g.at(r, c);
                        }
                    }
                });
            })),
        )
    }

    /// Select rows by index; indices may repeat (embedding lookup).
    pub fn gather_rows(&mut self, x: Var, indices: &[usize]) -> Var {
        let tx = self.rc(x);
        let (n, d) = (tx.rows(), tx.cols());
        for &i in indices {
            assert_shape(i < n, "gather index out of range");
        }
        let mut out = Tensor::zeros(vec![indices.len(), d]);
        for (r, &i) in indices.iter().enumerate() {
            for c in 0..d {
                *out.at_mut(r, c) = tx.at(i, c);
            }
        }
        let sx = tx.shape.clone();
        let idx: Vec<usize> = indices.to_vec();
        self.push(
            out,
            Some(Box::new(move |g, grads| {
                grads.accumulate(x, &sx, |dx| {
                    for (r, &i) in idx.iter().enumerate() {
                        for c in 0..d {
                            dx[i * d + c] += g.at(r, c);
                        }
                    }
                });
            })),
        )
    }

    /// Reinterpret the data with a new shape (same element count).
    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Var {
        let tx = self.rc(x);
        assert_shape(
            shape.iter().product::<usize>() == tx.len(),
            "reshape changes element count",
        );
        let sx = tx.shape.clone();
        let out = Tensor::new(shape, tx.data.clone());
        self.push(
            out,
            Some(Box::new(move |g, grads| {
                grads.accumulate(x, &sx, |d| {
                    for i in 0..d.len() {
                        d[i] += g.data[i];
                    }
                });
            })),
        )
    }

    /// Mean over rows: [n,d] -> [1,d].
    pub fn mean_rows(&mut self, x: Var) -> Var {
        let tx = self.rc(x);
        let (n, d) = (tx.rows(), tx.cols());
        let mut out = Tensor::zeros(vec![1, d]);
        for r in 0..n {
            for c in 0..d {
                out.data[c] += tx.at(r, c) / n as f64;
            }
        }
        let sx = tx.shape.clone();
        self.push(
            out,
            Some(Box::new(move |g, grads| {
                grads.accumulate(x, &sx, |dx| {
                    for r in 0..n {
                        for c in 0..d {
                            dx[r * d + c] += g.data[c] / n as f64;
                        }
                    }
                });
            })),
        )
    }

    /// Stack same-width tensors vertically.
    pub fn stack_rows(&mut self, vars: &[Var]) -> Var {
        assert!(!vars.is_empty(), "stack_rows of nothing");
        let parts: Vec<Rc<Tensor>> = vars.iter().map(|&v| self.rc(v)).collect();
        let d = parts[0].cols();
        for p in &parts {
            assert_shape(p.cols() == d, "stack_rows column counts differ");
        }
        let total: usize = parts.iter().map(|p| p.rows()).sum();
        let mut out = Tensor::zeros(vec![total, d]);
        let mut offset = 0;
        let mut spans = Vec::with_capacity(parts.len());
        for p in &parts {
            for r in 0..p.rows() {
                for c in 0..d {
                    *out.at_mut(offset + r, c) = p.at(r, c);
                }
            }
            spans.push((offset, p.rows(), p.shape.clone()));
            offset += p.rows();
        }
        let vars: Vec<Var> = vars.to_vec();
        self.push(
            out,
            Some(Box::new(move |g, grads| {
                for (&v, (off, rows, shape)) in vars.iter().zip(&spans) {
                    grads.accumulate(v, shape, |d_| {
                        for r in 0..*rows {
                            for c in 0..d {
                                d_[r * d + c] += g.at(off + r, c);
                            }
                        }
                    });
                }
            })),
        )
    }

    /// Mean squared error against a constant target.
    pub fn mse_loss(&mut self, pred: Var, target: &Tensor) -> Var {
        let tp = self.rc(pred);
        assert_shape(tp.shape == target.shape, "mse target shape differs");
        let n = tp.len() as f64;
        let value = tp
            .data
            .iter()
            .zip(&target.data)
            .map(|(p, t)| (p - t) * (p - t))
            .sum::<f64>()
            / n;
        let sx = tp.shape.clone();
        let target = target.data.clone();
        self.push(
            Tensor::scalar(value),
            Some(Box::new(move |g, grads| {
                let go = g.item();
                grads.accumulate(pred, &sx, |d| {
                    for i in 0..d.len() {
                        d[i] += go * 2.0 * (tp.data[i] - target[i]) / n;
                    }
                });
            })),
        )
    }

    /// Smooth L1 against a constant target: 0.5 x^2 for |x| < 1, |x| - 0.5
    /// otherwise, averaged over elements.
    pub fn smooth_l1_loss(&mut self, pred: Var, target: &Tensor) -> Var {
        let tp = self.rc(pred);
        assert_shape(tp.shape == target.shape, "smooth_l1 target shape differs");
        let n = tp.len() as f64;
        let mut value = 0.0;
        for (p, t) in tp.data.iter().zip(&target.data) {
            let r = p - t;
            value += if r.abs() < 1.0 {
                0.5 * r * r
            } else {
                r.abs() - 0.5
            };
        }
        value /= n;
        let sx = tp.shape.clone();
        let target = target.data.clone();
        self.push(
            Tensor::scalar(value),
            Some(Box::new(move |g, grads| {
                let go = g.item();
                grads.accumulate(pred, &sx, |d| {
                    for i in 0..d.len() {
                        let r = tp.data[i] - target[i];
                        let slope = if r.abs() < 1.0 { r } else { r.signum() };
                        d[i] += go * slope / n;
                    }
                });
            })),
        )
    }

    /// Mean cross entropy of row logits against class ids.
    pub fn cross_entropy_loss(&mut self, logits: Var, classes: &[usize]) -> Var {
        let tl = self.rc(logits);
        let (n, m) = (tl.rows(), tl.cols());
        assert_shape(classes.len() == n, "one class id per logit row");
        for &c in classes {
            assert_shape(c < m, "class id out of range");
        }
        let mut probs = Tensor::zeros(vec![n, m]);
        let mut value = 0.0;
        for r in 0..n {
            let row = &tl.data[r * m..(r + 1) * m];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for c in 0..m {
                let e = (row[c] - max).exp();
                probs.data[r * m + c] = e;
                sum += e;
            }
            for c in 0..m {
                probs.data[r * m + c] /= sum;
            }
            value += sum.ln() + max - row[classes[r]];
        }
        value /= n as f64;
        let sx = tl.shape.clone();
        let classes = classes.to_vec();
        self.push(
            Tensor::scalar(value),
            Some(Box::new(move |g, grads| {
                let go = g.item();
                grads.accumulate(logits, &sx, |d| {
                    for r in 0..n {
                        for c in 0..m {
                            let indicator = if classes[r] == c { 1.0 } else { 0.0 };
                            d[r * m + c] += go * (probs.at(r, c) - indicator) / n as f64;
                        }
                    }
                });
            })),
        )
    }

    /// Gaussian radial basis expansion of a constant distance matrix against
    /// learnable centers: out[p, k] = exp(-(d_p - center_k)^2 / (2 sigma^2)).
    pub fn gaussian_basis(&mut self, distances: &[f64], centers: Var, sigma: f64) -> Var {
        let tc = self.rc(centers);
        assert_shape(tc.rows() == 1, "centers must be a row vector");
        let k = tc.cols();
        let p = distances.len();
        let inv2s2 = 1.0 / (2.0 * sigma * sigma);
        let mut out = Tensor::zeros(vec![p, k]);
        for (i, &d) in distances.iter().enumerate() {
            for j in 0..k {
                let delta = d - tc.data[j];
                out.data[i * k + j] = (-delta * delta * inv2s2).exp();
            }
        }
        let sc = tc.shape.clone();
        let dist: Vec<f64> = distances.to_vec();
        let values = Rc::new(out);
        let values_back = Rc::clone(&values);
        self.push(
            values.as_ref().clone(),
            Some(Box::new(move |g, grads| {
                grads.accumulate(centers, &sc, |dc| {
                    for (i, &d) in dist.iter().enumerate() {
                        for j in 0..k {
                            let delta = d - tc.data[j];
                            // d/dcenter of exp(-(d-c)^2/(2s^2)) = y * (d-c)/s^2
                            dc[j] += g.at(i, j) * values_back.at(i, j) * delta * 2.0 * inv2s2;
                        }
                    }
                });
            })),
        )
    }

    /// Left-to-right selective-state-space recurrence.
    ///
    /// Per channel ch and state s:
    ///   x_t = exp(delta_t[ch] a[ch,s]) x_{t-1} + delta_t[ch] b_t[s] u_t[ch]
    ///   y_t[ch] = sum_s c_t[s] x_t[ch,s] + skip[ch] u_t[ch]
    /// with x_0 = 0.
    #[allow(clippy::too_many_arguments)]
    pub fn selective_scan(
        &mut self,
        u: Var,
        delta: Var,
        b: Var,
        c: Var,
        a: Var,
        skip: Var,
    ) -> Var {
        let (tu, td, tb, tc, ta, ts) = (
            self.rc(u),
            self.rc(delta),
            self.rc(b),
            self.rc(c),
            self.rc(a),
            self.rc(skip),
        );
        let (len, d) = (tu.rows(), tu.cols());
        let n_state = ta.cols();
        assert_shape(td.shape == tu.shape, "delta shape differs from input");
        assert_shape(
            tb.rows() == len && tb.cols() == n_state,
            "b must be [len, n_state]",
        );
        assert_shape(tc.shape == tb.shape, "c shape differs from b");
        assert_shape(ta.rows() == d, "a must be [channels, n_state]");
        assert_shape(
            ts.rows() == 1 && ts.cols() == d,
            "skip must be [1, channels]",
        );

        // states[t][ch * n_state + s] after step t
        let mut states = vec![vec![0.0f64; d * n_state]; len];
        let mut y = Tensor::zeros(vec![len, d]);
        for t in 0..len {
            for ch in 0..d {
                let dt = td.at(t, ch);
                let ut = tu.at(t, ch);
                let mut y_acc = 0.0;
                for s in 0..n_state {
                    let a_bar = (dt * ta.at(ch, s)).exp();
                    let prev = if t == 0 {
                        0.0
                    } else {
                        states[t - 1][ch * n_state + s]
                    };
                    let x = a_bar * prev + dt * tb.at(t, s) * ut;
                    states[t][ch * n_state + s] = x;
                    y_acc += tc.at(t, s) * x;
                }
                y.data[t * d + ch] = y_acc + ts.at(0, ch) * ut;
            }
        }

        let shapes = (
            tu.shape.clone(),
            td.shape.clone(),
            tb.shape.clone(),
            tc.shape.clone(),
            ta.shape.clone(),
            ts.shape.clone(),
        );
        self.push(
            y,
            Some(Box::new(move |g, grads| {
                let mut du = vec![0.0; len * d];
                let mut dd = vec![0.0; len * d];
                let mut db = vec![0.0; len * n_state];
                let mut dc = vec![0.0; len * n_state];
                let mut da = vec![0.0; d * n_state];
                let mut ds = vec![0.0; d];

                // dL/dx_t carried backwards per (ch, s)
                let mut dx = vec![0.0f64; d * n_state];
                for t in (0..len).rev() {
                    for ch in 0..d {
                        let gy = g.at(t, ch);
                        let dt = td.at(t, ch);
                        let ut = tu.at(t, ch);
                        ds[ch] += gy * ut;
                        du[t * d + ch] += gy * ts.at(0, ch);
                        for s in 0..n_state {
                            let xi = ch * n_state + s;
                            // y_t += c_t[s] x_t
                            dx[xi] += gy * tc.at(t, s);
                            dc[t * n_state + s] += gy * states[t][xi];
                        }
                        for s in 0..n_state {
                            let xi = ch * n_state + s;
                            let gx = dx[xi];
                            if gx == 0.0 {
                                continue;
                            }
                            let a_val = ta.at(ch, s);
                            let a_bar = (dt * a_val).exp();
                            let prev = if t == 0 { 0.0 } else { states[t - 1][xi] };
                            // x_t = a_bar x_{t-1} + dt b_t[s] u_t
                            da[ch * n_state + s] += gx * prev * a_bar * dt;
                            dd[t * d + ch] += gx * (prev * a_bar * a_val + tb.at(t, s) * ut);
                            db[t * n_state + s] += gx * dt * ut;
                            du[t * d + ch] += gx * dt * tb.at(t, s);
                            // propagate to x_{t-1}
                            dx[xi] = gx * a_bar;
                        }
                    }
                }

                grads.accumulate(u, &shapes.0, |dst| add_into(dst, &du));
                grads.accumulate(delta, &shapes.1, |dst| add_into(dst, &dd));
                grads.accumulate(b, &shapes.2, |dst| add_into(dst, &db));
                grads.accumulate(c, &shapes.3, |dst| add_into(dst, &dc));
                grads.accumulate(a, &shapes.4, |dst| add_into(dst, &da));
                grads.accumulate(skip, &shapes.5, |dst| add_into(dst, &ds));
            })),
        )
    }

    /// Batch-all triplet loss over stacked embeddings.
    ///
    /// `molecule` gives the molecule identity per row and `modality` the
    /// encoder it came from. Valid triplets: anchor/positive share a molecule
    /// across modalities, the negative is a different molecule. The summed
    /// hinge terms are divided by (count of positive terms + eps), with the
    /// count treated as a constant in the backward pass.
    pub fn triplet_loss(
        &mut self,
        embeddings: Var,
        molecule: &[usize],
        modality: &[usize],
        margin: f64,
        eps: f64,
    ) -> Var {
        let te = self.rc(embeddings);
        let (n, d) = (te.rows(), te.cols());
        assert_shape(molecule.len() == n, "one molecule id per embedding row");
        assert_shape(modality.len() == n, "one modality tag per embedding row");

        let dist = |i: usize, j: usize| -> f64 {
            let mut acc = 0.0;
            for c in 0..d {
                let delta = te.at(i, c) - te.at(j, c);
                acc += delta * delta;
            }
            acc.sqrt()
        };

        let mut triplets = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if molecule[i] != molecule[j] || modality[i] == modality[j] {
                    continue;
                }
                for k in 0..n {
                    if molecule[k] == molecule[i] {
                        continue;
                    }
                    let term = dist(i, j) - dist(i, k) + margin;
                    if term > 0.0 {
                        triplets.push((i, j, k));
                    }
                }
            }
        }
        let num_positive = triplets.len() as f64;
        let total: f64 = triplets
            .iter()
            .map(|&(i, j, k)| dist(i, j) - dist(i, k) + margin)
            .sum();
        let value = total / (num_positive + eps);

        let se = te.shape.clone();
        self.push(
            Tensor::scalar(value),
            Some(Box::new(move |g, grads| {
                let go = g.item() / (num_positive + eps);
                grads.accumulate(embeddings, &se, |de| {
                    let add_pair = |p: usize, q: usize, sign: f64, de: &mut [f64]| {
                        let dist_pq = {
                            let mut acc = 0.0;
                            for c in 0..d {
                                let delta = te.at(p, c) - te.at(q, c);
                                acc += delta * delta;
                            }
                            acc.sqrt()
                        };
                        if dist_pq == 0.0 {
                            return;
                        }
                        for c in 0..d {
                            let delta = (te.at(p, c) - te.at(q, c)) / dist_pq;
                            de[p * d + c] += sign * go * delta;
                            de[q * d + c] -= sign * go * delta;
                        }
                    };
                    for &(i, j, k) in &triplets {
                        add_pair(i, j, 1.0, de);
                        add_pair(i, k, -1.0, de);
                    }
                });
            })),
        )
    }

    /// Reverse the tape from a scalar loss.
    pub fn backward(&self, loss: Var) -> Gradients {
        assert_shape(self.value(loss).len() == 1, "backward needs a scalar loss");
        let mut grads = Gradients {
            slots: vec![None; self.nodes.len()],
        };
        grads.slots[loss.0] = Some(Tensor::scalar(1.0));
        for i in (0..self.nodes.len()).rev() {
            let Some(grad) = grads.slots[i].take() else {
                continue;
            };
            if let Some(back) = &self.nodes[i].back {
                back(&grad, &mut grads);
            }
            grads.slots[i] = Some(grad);
        }
        grads
    }

    /// Copy parameter gradients from a backward pass into the store's grad
    /// slots (overwriting them).
    pub fn write_param_grads(&self, grads: &Gradients, store: &mut ParamStore) {
        for &(id, var) in &self.params {
            let g = grads
                .get(var)
                .map(|t| t.data.clone())
                .unwrap_or_else(|| vec![0.0; store.get(id).tensor.len()]);
            store.get_mut(id).tensor.grad = Some(g);
        }
    }

    /// Parameters that were materialized in this graph.
    pub fn touched_params(&self) -> Vec<ParamId> {
        self.params.iter().map(|&(id, _)| id).collect()
    }

    pub fn var_of_param(&self, id: ParamId) -> Option<Var> {
        self.param_cache.get(&id.index()).copied()
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

pub fn sigmoid_scalar(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

pub fn softplus_scalar(v: f64) -> f64 {
    v.max(0.0) + (-v.abs()).exp().ln_1p()
}
