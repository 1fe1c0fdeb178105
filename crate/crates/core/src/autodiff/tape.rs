//! The computation graph: every op records a node holding its cached output
//! and enough structure to replay the chain rule in reverse.

use super::tensor::{matmul, matmul_nt, matmul_tn, Tensor};
use super::AdError;
use crate::math;
use alloc::vec;
use alloc::vec::Vec;

/// Handle to a node; only valid on the tape that produced it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Matmul(Var, Var),
    Add(Var, Var),
    /// matrix + broadcast 1×n row (bias).
    AddRow(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    /// k·x + c with constant scalars; only the slope matters going backward.
    Affine(Var, f64),
    Tanh(Var),
    Sigmoid(Var),
    Exp(Var),
    Log(Var),
    Relu(Var),
    Abs(Var),
    Softplus(Var),
    Softmax(Var),
    LogSoftmax(Var),
    ConcatCols(Var, Var),
    SliceCols(Var, usize, usize),
    ReduceSum(Var),
    ReduceMean(Var),
    /// Row lookup into a parameter matrix (embedding / one-hot matmul).
    GatherRows(Var, Vec<u32>),
    /// out[i] = x[i, idx[i]]; the cross-entropy target pick.
    PickPerRow(Var, Vec<u32>),
    Reshape(Var),
}

struct Node {
    op: Op,
    value: Tensor,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients per node after a backward pass; nodes the loss never touched
/// hold `None` (identically zero).
pub struct Grads {
    by_node: Vec<Option<Tensor>>,
}

impl Grads {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.by_node[v.0].as_ref()
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.by_node[v.0].take()
    }
}

impl Tape {
    pub fn new() -> Tape {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, op: Op, value: Tensor) -> Var {
        self.nodes.push(Node { op, value });
        Var(self.nodes.len() - 1)
    }

    /// Records an input tensor. Leaves are where gradients come to rest;
    /// whether one is trainable is the caller's bookkeeping.
    pub fn leaf(&mut self, t: Tensor) -> Var {
        self.push(Op::Leaf, t)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, AdError> {
        let v = matmul(self.value(a), self.value(b))?;
        Ok(self.push(Op::Matmul(a, b), v))
    }

    fn zip_same_shape(
        &mut self,
        op_name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Tensor, AdError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(AdError::ShapeMismatch {
                op: op_name,
                lhs: ta.shape().to_vec(),
                rhs: tb.shape().to_vec(),
            });
        }
        let data = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        Tensor::from_vec(ta.shape(), data).map_err(|_| AdError::NonFinite(op_name))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, AdError> {
        let v = self.zip_same_shape("add", a, b, |x, y| x + y)?;
        Ok(self.push(Op::Add(a, b), v))
    }

    /// a (m×n) plus row vector b (1×n), broadcast down the rows.
    pub fn add_row(&mut self, a: Var, b: Var) -> Result<Var, AdError> {
        let (m, n) = self.value(a).require_matrix("add_row")?;
        let (rb, nb) = self.value(b).require_matrix("add_row")?;
        if rb != 1 || nb != n {
            return Err(AdError::ShapeMismatch {
                op: "add_row",
                lhs: vec![m, n],
                rhs: vec![rb, nb],
            });
        }
        let mut v = self.value(a).clone();
        let row = self.value(b).data();
        for chunk in v.data_mut().chunks_exact_mut(n) {
            for (x, &r) in chunk.iter_mut().zip(row) {
                *x += r;
            }
        }
        Ok(self.push(Op::AddRow(a, b), v))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, AdError> {
        let v = self.zip_same_shape("sub", a, b, |x, y| x - y)?;
        Ok(self.push(Op::Sub(a, b), v))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, AdError> {
        let v = self.zip_same_shape("mul", a, b, |x, y| x * y)?;
        Ok(self.push(Op::Mul(a, b), v))
    }

    /// k·x + c.
    pub fn affine(&mut self, x: Var, k: f64, c: f64) -> Var {
        let v = self.value(x).map(|t| k * t + c);
        self.push(Op::Affine(x, k), v)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let v = self.value(x).map(math::tanh);
        self.push(Op::Tanh(x), v)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let v = self.value(x).map(math::sigmoid);
        self.push(Op::Sigmoid(x), v)
    }

    pub fn exp(&mut self, x: Var) -> Var {
        let v = self.value(x).map(math::exp);
        self.push(Op::Exp(x), v)
    }

    pub fn log(&mut self, x: Var) -> Var {
        let v = self.value(x).map(math::ln);
        self.push(Op::Log(x), v)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let v = self.value(x).map(|t| if t > 0.0 { t } else { 0.0 });
        self.push(Op::Relu(x), v)
    }

    pub fn abs(&mut self, x: Var) -> Var {
        let v = self.value(x).map(math::abs);
        self.push(Op::Abs(x), v)
    }

    pub fn softplus(&mut self, x: Var) -> Var {
        let v = self.value(x).map(math::softplus);
        self.push(Op::Softplus(x), v)
    }

    /// Row-wise softmax of a matrix.
    pub fn softmax(&mut self, x: Var) -> Result<Var, AdError> {
        let (_, n) = self.value(x).require_matrix("softmax")?;
        let mut v = self.value(x).clone();
        for row in v.data_mut().chunks_exact_mut(n) {
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for x in row.iter_mut() {
                *x = math::exp(*x - m);
                z += *x;
            }
            for x in row.iter_mut() {
                *x /= z;
            }
        }
        Ok(self.push(Op::Softmax(x), v))
    }

    /// Row-wise log-softmax (numerically stable).
    pub fn log_softmax(&mut self, x: Var) -> Result<Var, AdError> {
        let (_, n) = self.value(x).require_matrix("log_softmax")?;
        let mut v = self.value(x).clone();
        for row in v.data_mut().chunks_exact_mut(n) {
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = row.iter().map(|&x| math::exp(x - m)).sum();
            let lz = m + math::ln(z);
            for x in row.iter_mut() {
                *x -= lz;
            }
        }
        Ok(self.push(Op::LogSoftmax(x), v))
    }

    /// [a | b] along columns.
    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var, AdError> {
        let (ma, na) = self.value(a).require_matrix("concat_cols")?;
        let (mb, nb) = self.value(b).require_matrix("concat_cols")?;
        if ma != mb {
            return Err(AdError::ShapeMismatch {
                op: "concat_cols",
                lhs: vec![ma, na],
                rhs: vec![mb, nb],
            });
        }
        let mut data = Vec::with_capacity(ma * (na + nb));
        for i in 0..ma {
            data.extend_from_slice(&self.value(a).data()[i * na..(i + 1) * na]);
            data.extend_from_slice(&self.value(b).data()[i * nb..(i + 1) * nb]);
        }
        let v = Tensor::from_vec(&[ma, na + nb], data).unwrap();
        Ok(self.push(Op::ConcatCols(a, b), v))
    }

    /// Columns [start, start+len) of a matrix.
    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var, AdError> {
        let (m, n) = self.value(x).require_matrix("slice_cols")?;
        if start + len > n {
            return Err(AdError::BadIndex {
                op: "slice_cols",
                index: start + len,
                bound: n,
            });
        }
        let mut data = Vec::with_capacity(m * len);
        for i in 0..m {
            data.extend_from_slice(&self.value(x).data()[i * n + start..i * n + start + len]);
        }
        let v = Tensor::from_vec(&[m, len], data).unwrap();
        Ok(self.push(Op::SliceCols(x, start, len), v))
    }

    /// Sum of every element, as a scalar node.
    pub fn reduce_sum(&mut self, x: Var) -> Var {
        let s: f64 = self.value(x).data().iter().sum();
        self.push(Op::ReduceSum(x), Tensor::scalar(s))
    }

    /// Mean of every element, as a scalar node.
    pub fn reduce_mean(&mut self, x: Var) -> Var {
        let n = self.value(x).numel() as f64;
        let s: f64 = self.value(x).data().iter().sum();
        self.push(Op::ReduceMean(x), Tensor::scalar(s / n))
    }

    /// out[i, :] = w[idx[i], :].
    pub fn gather_rows(&mut self, w: Var, idx: &[u32]) -> Result<Var, AdError> {
        let (rows, n) = self.value(w).require_matrix("gather_rows")?;
        if let Some(&bad) = idx.iter().find(|&&i| i as usize >= rows) {
            return Err(AdError::BadIndex {
                op: "gather_rows",
                index: bad as usize,
                bound: rows,
            });
        }
        let mut data = Vec::with_capacity(idx.len() * n);
        for &i in idx {
            let i = i as usize;
            data.extend_from_slice(&self.value(w).data()[i * n..(i + 1) * n]);
        }
        let v = Tensor::from_vec(&[idx.len(), n], data).unwrap();
        Ok(self.push(Op::GatherRows(w, idx.to_vec()), v))
    }

    /// out[i, 0] = x[i, idx[i]] — picks one column per row.
    pub fn pick_per_row(&mut self, x: Var, idx: &[u32]) -> Result<Var, AdError> {
        let (m, n) = self.value(x).require_matrix("pick_per_row")?;
        if idx.len() != m {
            return Err(AdError::ShapeMismatch {
                op: "pick_per_row",
                lhs: vec![m, n],
                rhs: vec![idx.len()],
            });
        }
        if let Some(&bad) = idx.iter().find(|&&i| i as usize >= n) {
            return Err(AdError::BadIndex {
                op: "pick_per_row",
                index: bad as usize,
                bound: n,
            });
        }
        let data = idx
            .iter()
            .enumerate()
            .map(|(i, &j)| self.value(x).at(i, j as usize))
            .collect();
        let v = Tensor::from_vec(&[m, 1], data).unwrap();
        Ok(self.push(Op::PickPerRow(x, idx.to_vec()), v))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var, AdError> {
        let t = self.value(x);
        if shape.iter().product::<usize>() != t.numel() {
            return Err(AdError::ShapeMismatch {
                op: "reshape",
                lhs: t.shape().to_vec(),
                rhs: shape.to_vec(),
            });
        }
        let v = Tensor::from_vec(shape, t.data().to_vec()).unwrap();
        Ok(self.push(Op::Reshape(x), v))
    }

    /// x·w + b with b a 1×n bias row.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var, AdError> {
        let xw = self.matmul(x, w)?;
        self.add_row(xw, b)
    }

    /// Reverse sweep from a scalar loss. Nodes are created in topological
    /// order, so one reverse pass visits each exactly once; gradients from
    /// multiple consumers accumulate by summation.
    pub fn backward(&self, loss: Var) -> Result<Grads, AdError> {
        let lv = self.value(loss);
        if !lv.is_scalar() {
            return Err(AdError::NonScalarLoss(lv.shape().to_vec()));
        }
        let mut by_node: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        by_node[loss.0] = Some(Tensor::full(lv.shape(), 1.0));

        for id in (0..=loss.0).rev() {
            let Some(g) = by_node[id].take() else {
                continue;
            };
            self.step_back(id, &g, &mut by_node)?;
            by_node[id] = Some(g);
        }
        Ok(Grads { by_node })
    }

    fn step_back(
        &self,
        id: usize,
        g: &Tensor,
        grads: &mut [Option<Tensor>],
    ) -> Result<(), AdError> {
        fn acc(slot: &mut Option<Tensor>, delta: Tensor) {
            match slot {
                Some(t) => t.accumulate(&delta),
                None => *slot = Some(delta),
            }
        }

        match &self.nodes[id].op {
            Op::Leaf => {}
            Op::Matmul(a, b) => {
                acc(&mut grads[a.0], matmul_nt(g, self.value(*b))?);
                acc(&mut grads[b.0], matmul_tn(self.value(*a), g)?);
            }
            Op::Add(a, b) => {
                acc(&mut grads[a.0], g.clone());
                acc(&mut grads[b.0], g.clone());
            }
            Op::AddRow(a, b) => {
                acc(&mut grads[a.0], g.clone());
                let n = self.value(*b).cols();
                let mut row = Tensor::zeros(&[1, n]);
                for chunk in g.data().chunks_exact(n) {
                    for (r, &x) in row.data_mut().iter_mut().zip(chunk) {
                        *r += x;
                    }
                }
                acc(&mut grads[b.0], row);
            }
            Op::Sub(a, b) => {
                acc(&mut grads[a.0], g.clone());
                acc(&mut grads[b.0], g.map(|x| -x));
            }
            Op::Mul(a, b) => {
                let da = zip_map(g, self.value(*b), |gv, bv| gv * bv);
                let db = zip_map(g, self.value(*a), |gv, av| gv * av);
                acc(&mut grads[a.0], da);
                acc(&mut grads[b.0], db);
            }
            Op::Affine(x, k) => acc(&mut grads[x.0], g.map(|gv| k * gv)),
            Op::Tanh(x) => {
                let y = &self.nodes[id].value;
                acc(&mut grads[x.0], zip_map(g, y, |gv, yv| gv * (1.0 - yv * yv)));
            }
            Op::Sigmoid(x) => {
                let y = &self.nodes[id].value;
                acc(
                    &mut grads[x.0],
                    zip_map(g, y, |gv, yv| gv * yv * (1.0 - yv)),
                );
            }
            Op::Exp(x) => {
                let y = &self.nodes[id].value;
                acc(&mut grads[x.0], zip_map(g, y, |gv, yv| gv * yv));
            }
            Op::Log(x) => {
                let xv = self.value(*x);
                acc(&mut grads[x.0], zip_map(g, xv, |gv, x| gv / x));
            }
            Op::Relu(x) => {
                let xv = self.value(*x);
                acc(
                    &mut grads[x.0],
                    zip_map(g, xv, |gv, x| if x > 0.0 { gv } else { 0.0 }),
                );
            }
            Op::Abs(x) => {
                let xv = self.value(*x);
                acc(&mut grads[x.0], zip_map(g, xv, |gv, x| gv * math::sgn(x)));
            }
            Op::Softplus(x) => {
                let xv = self.value(*x);
                acc(
                    &mut grads[x.0],
                    zip_map(g, xv, |gv, x| gv * math::sigmoid(x)),
                );
            }
            Op::Softmax(x) => {
                // dx = y ∘ (g − ⟨g, y⟩_row)
                let y = &self.nodes[id].value;
                let n = y.cols();
                let mut dx = Tensor::zeros(&[y.rows(), n]);
                for ((grow, yrow), drow) in g
                    .data()
                    .chunks_exact(n)
                    .zip(y.data().chunks_exact(n))
                    .zip(dx.data_mut().chunks_exact_mut(n))
                {
                    let dot: f64 = grow.iter().zip(yrow).map(|(&a, &b)| a * b).sum();
                    for ((d, &gv), &yv) in drow.iter_mut().zip(grow).zip(yrow) {
                        *d = yv * (gv - dot);
                    }
                }
                acc(&mut grads[x.0], dx);
            }
            Op::LogSoftmax(x) => {
                // dx = g − exp(y) ∘ Σ_row g
                let y = &self.nodes[id].value;
                let n = y.cols();
                let mut dx = Tensor::zeros(&[y.rows(), n]);
                for ((grow, yrow), drow) in g
                    .data()
                    .chunks_exact(n)
                    .zip(y.data().chunks_exact(n))
                    .zip(dx.data_mut().chunks_exact_mut(n))
                {
                    let gsum: f64 = grow.iter().sum();
                    for ((d, &gv), &yv) in drow.iter_mut().zip(grow).zip(yrow) {
                        *d = gv - math::exp(yv) * gsum;
                    }
                }
                acc(&mut grads[x.0], dx);
            }
            Op::ConcatCols(a, b) => {
                let na = self.value(*a).cols();
                let nb = self.value(*b).cols();
                let m = g.rows();
                let mut da = Tensor::zeros(&[m, na]);
                let mut db = Tensor::zeros(&[m, nb]);
                for i in 0..m {
                    let grow = &g.data()[i * (na + nb)..(i + 1) * (na + nb)];
                    da.data_mut()[i * na..(i + 1) * na].copy_from_slice(&grow[..na]);
                    db.data_mut()[i * nb..(i + 1) * nb].copy_from_slice(&grow[na..]);
                }
                acc(&mut grads[a.0], da);
                acc(&mut grads[b.0], db);
            }
            Op::SliceCols(x, start, len) => {
                let (m, n) = (self.value(*x).rows(), self.value(*x).cols());
                let mut dx = Tensor::zeros(&[m, n]);
                for i in 0..m {
                    dx.data_mut()[i * n + start..i * n + start + len]
                        .copy_from_slice(&g.data()[i * len..(i + 1) * len]);
                }
                acc(&mut grads[x.0], dx);
            }
            Op::ReduceSum(x) => {
                let gv = g.data()[0];
                acc(&mut grads[x.0], Tensor::full(self.value(*x).shape(), gv));
            }
            Op::ReduceMean(x) => {
                let numel = self.value(*x).numel() as f64;
                let gv = g.data()[0] / numel;
                acc(&mut grads[x.0], Tensor::full(self.value(*x).shape(), gv));
            }
            Op::GatherRows(w, idx) => {
                let (rows, n) = (self.value(*w).rows(), self.value(*w).cols());
                let mut dw = Tensor::zeros(&[rows, n]);
                for (i, &r) in idx.iter().enumerate() {
                    let r = r as usize;
                    let grow = &g.data()[i * n..(i + 1) * n];
                    for (d, &gv) in dw.data_mut()[r * n..(r + 1) * n].iter_mut().zip(grow) {
                        *d += gv;
                    }
                }
                acc(&mut grads[w.0], dw);
            }
            Op::PickPerRow(x, idx) => {
                let (m, n) = (self.value(*x).rows(), self.value(*x).cols());
                let mut dx = Tensor::zeros(&[m, n]);
                for (i, &j) in idx.iter().enumerate() {
                    dx.data_mut()[i * n + j as usize] = g.data()[i];
                }
                acc(&mut grads[x.0], dx);
            }
            Op::Reshape(x) => {
                let shape = self.value(*x).shape();
                let dx = Tensor::from_vec(shape, g.data().to_vec()).unwrap();
                acc(&mut grads[x.0], dx);
            }
        }
        Ok(())
    }
}

fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    debug_assert_eq!(a.shape(), b.shape());
    let mut out = a.clone();
    for (x, &y) in out.data_mut().iter_mut().zip(b.data()) {
        *x = f(*x, y);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_gradient_is_two_x() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::scalar(3.0));
        let y = tape.mul(x, x).unwrap();
        let loss = tape.reduce_sum(y);
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[6.0]);
    }

    #[test]
    fn sum_of_matvec_gradient_broadcasts_v() {
        let mut tape = Tape::new();
        let w = tape.leaf(Tensor::from_vec(&[2, 3], vec![0.0; 6]).unwrap());
        let v = tape.leaf(Tensor::from_vec(&[3, 1], vec![1.0, -2.0, 0.5]).unwrap());
        let y = tape.matmul(w, v).unwrap();
        let loss = tape.reduce_sum(y);
        let grads = tape.backward(loss).unwrap();
        // d/dW sum(W·v) = 1·vᵀ in every row.
        assert_eq!(
            grads.get(w).unwrap().data(),
            &[1.0, -2.0, 0.5, 1.0, -2.0, 0.5]
        );
    }

    #[test]
    fn softmax_of_equal_logits_is_uniform() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::from_vec(&[2, 4], vec![0.7; 8]).unwrap());
        let y = tape.softmax(x).unwrap();
        for &p in tape.value(y).data() {
            assert!((p - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn tanh_zero_is_zero() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::zeros(&[1, 3]));
        let y = tape.tanh(x);
        assert_eq!(tape.value(y).data(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::zeros(&[2, 2]));
        let y = tape.tanh(x);
        assert!(matches!(
            tape.backward(y),
            Err(AdError::NonScalarLoss(shape)) if shape == vec![2, 2]
        ));
    }

    #[test]
    fn gradients_accumulate_across_consumers() {
        // y = x + x ⇒ dy/dx = 2.
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::scalar(5.0));
        let y = tape.add(x, x).unwrap();
        let loss = tape.reduce_sum(y);
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[2.0]);
    }

    #[test]
    fn untouched_nodes_have_no_gradient() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::scalar(1.0));
        let orphan = tape.leaf(Tensor::scalar(9.0));
        let loss = tape.reduce_sum(x);
        let grads = tape.backward(loss).unwrap();
        assert!(grads.get(orphan).is_none());
    }

    #[test]
    fn shape_errors_are_reported() {
        let mut tape = Tape::new();
        let a = tape.leaf(Tensor::zeros(&[2, 3]));
        let b = tape.leaf(Tensor::zeros(&[2, 3]));
        assert!(tape.matmul(a, b).is_err());
        assert!(tape.slice_cols(a, 2, 2).is_err());
        assert!(tape.pick_per_row(a, &[0, 3]).is_err());
        assert!(tape.gather_rows(a, &[2]).is_err());
        assert!(tape.reshape(a, &[7]).is_err());
        let c = tape.leaf(Tensor::zeros(&[3, 3]));
        assert!(tape.add(a, c).is_err());
        assert!(tape.concat_cols(a, c).is_err());
    }

    #[test]
    fn gather_rows_accumulates_duplicate_indices() {
        let mut tape = Tape::new();
        let w = tape.leaf(Tensor::from_vec(&[3, 2], vec![1., 2., 3., 4., 5., 6.]).unwrap());
        let g = tape.gather_rows(w, &[1, 1, 0]).unwrap();
        assert_eq!(tape.value(g).data(), &[3., 4., 3., 4., 1., 2.]);
        let loss = tape.reduce_sum(g);
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get(w).unwrap().data(), &[1., 1., 2., 2., 0., 0.]);
    }
}
