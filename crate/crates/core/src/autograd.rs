//! A small reverse-mode automatic differentiation tape over dense `f64`
//! matrices.
//!
//! Every value is an [`Array2<f64>`]; column vectors are `n × 1` matrices and
//! row vectors `1 × n`. Operations append nodes to a [`Tape`] and return a
//! [`Var`] handle. [`Tape::backward`] walks the tape in reverse and returns the
//! gradient of a scalar output with respect to every node that depends on a
//! variable leaf.

use std::cell::{Ref, RefCell};

use ndarray::{concatenate, s, Array2, Axis, Zip};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    AddBias(Var, Var),
    Scale(Var, f64),
    MulConst(Var, Array2<f64>),
    Tanh(Var),
    Relu(Var),
    Transpose(Var),
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    SelectCols(Var, Vec<usize>),
    NormalizeCols(Var),
    SoftmaxRows(Var),
    CrossEntropyLogits(Var, usize),
    NegLogProb(Var, usize, f64),
}

struct Node {
    value: Array2<f64>,
    op: Op,
    requires_grad: bool,
}

/// Records operations for a single forward pass.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
pub struct Gradients {
    grads: Vec<Option<Array2<f64>>>,
}

impl Gradients {
    pub fn get(&self, var: Var) -> Option<&Array2<f64>> {
        self.grads.get(var.0).and_then(Option::as_ref)
    }

    /// Gradient of `var`, or zeros of `shape` when nothing flowed into it.
    pub fn get_or_zeros(&self, var: Var, shape: (usize, usize)) -> Array2<f64> {
        self.get(var).cloned().unwrap_or_else(|| Array2::zeros(shape))
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Array2<f64>, op: Op, requires_grad: bool) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(nodes.len() - 1)
    }

    fn needs(&self, vars: &[Var]) -> bool {
        let nodes = self.nodes.borrow();
        vars.iter().any(|v| nodes[v.0].requires_grad)
    }

    /// A leaf that never receives a gradient.
    pub fn constant(&self, value: Array2<f64>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// A leaf whose gradient is tracked.
    pub fn variable(&self, value: Array2<f64>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    pub fn value(&self, var: Var) -> Ref<'_, Array2<f64>> {
        Ref::map(self.nodes.borrow(), |n| &n[var.0].value)
    }

    pub fn shape(&self, var: Var) -> (usize, usize) {
        self.value(var).dim()
    }

    /// Scalar value of a `1 × 1` node.
    pub fn scalar(&self, var: Var) -> f64 {
        let v = self.value(var);
        debug_assert_eq!(v.dim(), (1, 1));
        v[[0, 0]]
    }

    pub fn matmul(&self, a: Var, b: Var) -> Var {
        let value = {
            let (av, bv) = (self.value(a), self.value(b));
            assert_eq!(
                av.ncols(),
                bv.nrows(),
                "matmul shape mismatch: {:?} x {:?}",
                av.dim(),
                bv.dim()
            );
            av.dot(&*bv)
        };
        let rg = self.needs(&[a, b]);
        self.push(value, Op::MatMul(a, b), rg)
    }

    pub fn add(&self, a: Var, b: Var) -> Var {
        let value = {
            let (av, bv) = (self.value(a), self.value(b));
            assert_eq!(av.dim(), bv.dim(), "add shape mismatch");
            &*av + &*bv
        };
        let rg = self.needs(&[a, b]);
        self.push(value, Op::Add(a, b), rg)
    }

    /// Adds the column vector `bias` (`r × 1`) to every column of `x` (`r × c`).
    pub fn add_bias(&self, x: Var, bias: Var) -> Var {
        let value = {
            let (xv, bv) = (self.value(x), self.value(bias));
            assert_eq!(bv.dim(), (xv.nrows(), 1), "bias shape mismatch");
            &*xv + &*bv
        };
        let rg = self.needs(&[x, bias]);
        self.push(value, Op::AddBias(x, bias), rg)
    }

    pub fn scale(&self, x: Var, factor: f64) -> Var {
        let value = &*self.value(x) * factor;
        let rg = self.needs(&[x]);
        self.push(value, Op::Scale(x, factor), rg)
    }

    /// Element-wise product with a constant matrix of the same shape.
    pub fn mul_const(&self, x: Var, factor: Array2<f64>) -> Var {
        let value = {
            let xv = self.value(x);
            assert_eq!(xv.dim(), factor.dim(), "mul_const shape mismatch");
            &*xv * &factor
        };
        let rg = self.needs(&[x]);
        self.push(value, Op::MulConst(x, factor), rg)
    }

    pub fn tanh(&self, x: Var) -> Var {
        let value = self.value(x).mapv(f64::tanh);
        let rg = self.needs(&[x]);
        self.push(value, Op::Tanh(x), rg)
    }

    pub fn relu(&self, x: Var) -> Var {
        let value = self.value(x).mapv(|v| v.max(0.0));
        let rg = self.needs(&[x]);
        self.push(value, Op::Relu(x), rg)
    }

    pub fn transpose(&self, x: Var) -> Var {
        let value = self.value(x).t().to_owned();
        let rg = self.needs(&[x]);
        self.push(value, Op::Transpose(x), rg)
    }

    /// Vertical stacking; parts must share a column count.
    pub fn concat_rows(&self, parts: &[Var]) -> Var {
        let value = {
            let vals: Vec<_> = parts.iter().map(|&p| self.value(p)).collect();
            let views: Vec<_> = vals.iter().map(|v| v.view()).collect();
            concatenate(Axis(0), &views).expect("concat_rows shape mismatch")
        };
        let rg = self.needs(parts);
        self.push(value, Op::ConcatRows(parts.to_vec()), rg)
    }

    /// Horizontal stacking; parts must share a row count.
    pub fn concat_cols(&self, parts: &[Var]) -> Var {
        let value = {
            let vals: Vec<_> = parts.iter().map(|&p| self.value(p)).collect();
            let views: Vec<_> = vals.iter().map(|v| v.view()).collect();
            concatenate(Axis(1), &views).expect("concat_cols shape mismatch")
        };
        let rg = self.needs(parts);
        self.push(value, Op::ConcatCols(parts.to_vec()), rg)
    }

    pub fn select_cols(&self, x: Var, cols: &[usize]) -> Var {
        let value = self.value(x).select(Axis(1), cols);
        let rg = self.needs(&[x]);
        self.push(value, Op::SelectCols(x, cols.to_vec()), rg)
    }

    pub fn col(&self, x: Var, col: usize) -> Var {
        self.select_cols(x, &[col])
    }

    /// Scales every column to unit L2 norm. Zero columns stay zero, so a
    /// cosine built from two normalized matrices is 0 against a zero vector.
    pub fn normalize_cols(&self, x: Var) -> Var {
        let value = {
            let mut v = self.value(x).to_owned();
            for mut col in v.columns_mut() {
                let norm = col.dot(&col).sqrt();
                if norm > 0.0 {
                    col /= norm;
                }
            }
            v
        };
        let rg = self.needs(&[x]);
        self.push(value, Op::NormalizeCols(x), rg)
    }

    /// Pairwise cosine similarity between the columns of `a` (`d × m`) and
    /// `b` (`d × n`), giving `m × n`.
    pub fn cosine(&self, a: Var, b: Var) -> Var {
        let an = self.normalize_cols(a);
        let bn = self.normalize_cols(b);
        let at = self.transpose(an);
        self.matmul(at, bn)
    }

    /// Softmax along each row. With a mask, entries whose key is `false` get
    /// probability 0; a row with no admissible key becomes all zeros.
    pub fn softmax_rows(&self, x: Var, mask: Option<&[bool]>) -> Var {
        let value = {
            let xv = self.value(x);
            if let Some(m) = mask {
                assert_eq!(m.len(), xv.ncols(), "softmax mask length mismatch");
            }
            let mut out = Array2::zeros(xv.dim());
            for (row, mut orow) in xv.rows().into_iter().zip(out.rows_mut()) {
                let keep = |j: usize| mask.is_none_or(|m| m[j]);
                let max = row
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| keep(*j))
                    .map(|(_, &v)| v)
                    .fold(f64::NEG_INFINITY, f64::max);
                if max == f64::NEG_INFINITY {
                    continue;
                }
                let mut total = 0.0;
                for (j, &v) in row.iter().enumerate() {
                    if keep(j) {
                        let e = (v - max).exp();
                        orow[j] = e;
                        total += e;
                    }
                }
                orow /= total;
            }
            out
        };
        let rg = self.needs(&[x]);
        self.push(value, Op::SoftmaxRows(x), rg)
    }

    /// Cross-entropy of a logit column vector against the class `target`.
    pub fn cross_entropy_logits(&self, logits: Var, target: usize) -> Var {
        let value = {
            let l = self.value(logits);
            assert_eq!(l.ncols(), 1, "logits must be a column vector");
            let max = l.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + l.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            Array2::from_elem((1, 1), lse - l[[target, 0]])
        };
        let rg = self.needs(&[logits]);
        self.push(value, Op::CrossEntropyLogits(logits, target), rg)
    }

    /// `-ln(max(p[target], floor))` for a probability column vector.
    pub fn neg_log_prob(&self, probs: Var, target: usize, floor: f64) -> Var {
        let value = {
            let p = self.value(probs);
            Array2::from_elem((1, 1), -p[[target, 0]].max(floor).ln())
        };
        let rg = self.needs(&[probs]);
        self.push(value, Op::NegLogProb(probs, target, floor), rg)
    }

    /// Reverse sweep from the scalar `output`.
    pub fn backward(&self, output: Var) -> Gradients {
        let nodes = self.nodes.borrow();
        let mut grads: Vec<Option<Array2<f64>>> = (0..nodes.len()).map(|_| None).collect();
        assert_eq!(nodes[output.0].value.dim(), (1, 1), "backward needs a scalar");
        grads[output.0] = Some(Array2::ones((1, 1)));

        fn acc(grads: &mut [Option<Array2<f64>>], nodes: &[Node], v: Var, g: Array2<f64>) {
            if !nodes[v.0].requires_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => *existing += &g,
                slot @ None => *slot = Some(g),
            }
        }

        for id in (0..=output.0).rev() {
            let node = &nodes[id];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[id].take() else {
                continue;
            };
            match &node.op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let ga = g.dot(&nodes[b.0].value.t());
                    let gb = nodes[a.0].value.t().dot(&g);
                    acc(&mut grads, &nodes, *a, ga);
                    acc(&mut grads, &nodes, *b, gb);
                }
                Op::Add(a, b) => {
                    acc(&mut grads, &nodes, *a, g.clone());
                    acc(&mut grads, &nodes, *b, g.clone());
                }
                Op::AddBias(x, b) => {
                    let gb = g.sum_axis(Axis(1)).insert_axis(Axis(1));
                    acc(&mut grads, &nodes, *x, g.clone());
                    acc(&mut grads, &nodes, *b, gb);
                }
                Op::Scale(x, f) => acc(&mut grads, &nodes, *x, &g * *f),
                Op::MulConst(x, c) => acc(&mut grads, &nodes, *x, &g * c),
                Op::Tanh(x) => {
                    let mut gx = g.clone();
                    Zip::from(&mut gx)
                        .and(&node.value)
                        .for_each(|gx, &y| *gx *= 1.0 - y * y);
                    acc(&mut grads, &nodes, *x, gx);
                }
                Op::Relu(x) => {
                    let mut gx = g.clone();
                    Zip::from(&mut gx).and(&nodes[x.0].value).for_each(|gx, &v| {
                        if v <= 0.0 {
                            *gx = 0.0
                        }
                    });
                    acc(&mut grads, &nodes, *x, gx);
                }
                Op::Transpose(x) => acc(&mut grads, &nodes, *x, g.t().to_owned()),
                Op::ConcatRows(parts) => {
                    let mut start = 0;
                    for p in parts {
                        let rows = nodes[p.0].value.nrows();
                        let part = g.slice(s![start..start + rows, ..]).to_owned();
                        acc(&mut grads, &nodes, *p, part);
                        start += rows;
                    }
                }
                Op::ConcatCols(parts) => {
                    let mut start = 0;
                    for p in parts {
                        let cols = nodes[p.0].value.ncols();
                        let part = g.slice(s![.., start..start + cols]).to_owned();
                        acc(&mut grads, &nodes, *p, part);
                        start += cols;
                    }
                }
                Op::SelectCols(x, cols) => {
                    let mut gx = Array2::zeros(nodes[x.0].value.dim());
                    for (k, &c) in cols.iter().enumerate() {
                        let mut dst = gx.column_mut(c);
                        dst += &g.column(k);
                    }
                    acc(&mut grads, &nodes, *x, gx);
                }
                Op::NormalizeCols(x) => {
                    let input = &nodes[x.0].value;
                    let mut gx = Array2::zeros(input.dim());
                    for j in 0..input.ncols() {
                        let col = input.column(j);
                        let norm = col.dot(&col).sqrt();
                        if norm == 0.0 {
                            continue;
                        }
                        let u = node.value.column(j);
                        let gj = g.column(j);
                        let proj = u.dot(&gj);
                        let mut dst = gx.column_mut(j);
                        Zip::from(&mut dst)
                            .and(&gj)
                            .and(&u)
                            .for_each(|d, &gv, &uv| *d = (gv - uv * proj) / norm);
                    }
                    acc(&mut grads, &nodes, *x, gx);
                }
                Op::SoftmaxRows(x) => {
                    let y = &node.value;
                    let mut gx = Array2::zeros(y.dim());
                    for ((yr, gr), mut out) in y.rows().into_iter().zip(g.rows()).zip(gx.rows_mut()) {
                        let dot = yr.dot(&gr);
                        Zip::from(&mut out)
                            .and(&yr)
                            .and(&gr)
                            .for_each(|o, &yv, &gv| *o = yv * (gv - dot));
                    }
                    acc(&mut grads, &nodes, *x, gx);
                }
                Op::CrossEntropyLogits(l, target) => {
                    let lv = &nodes[l.0].value;
                    let max = lv.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let mut p = lv.mapv(|v| (v - max).exp());
                    let total = p.sum();
                    p /= total;
                    p[[*target, 0]] -= 1.0;
                    acc(&mut grads, &nodes, *l, p * g[[0, 0]]);
                }
                Op::NegLogProb(p, target, floor) => {
                    let pv = &nodes[p.0].value;
                    let mut gp = Array2::zeros(pv.dim());
                    let pt = pv[[*target, 0]];
                    if pt > *floor {
                        gp[[*target, 0]] = -g[[0, 0]] / pt;
                    }
                    acc(&mut grads, &nodes, *p, gp);
                }
            }
            grads[id] = Some(g);
        }
        Gradients { grads }
    }
}
