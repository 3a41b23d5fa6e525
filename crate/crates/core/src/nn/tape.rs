//! Reverse-mode automatic differentiation over batched tensors.
//!
//! A [`Tape`] records every operation of a forward pass as a node holding its
//! value. [`Tape::backward`] walks the nodes in reverse and accumulates
//! gradients into parameters and into leaves created with
//! [`Tape::variable`]. Nodes are tensors whose rows are independent batch
//! samples, so a whole minibatch shares one small graph.
//!
//! Besides the usual network primitives the tape has fused kinematic ops
//! (6D decoding, yaw extraction, yaw rotation, forward kinematics, heading
//! normalization and goal-direction saturation) with hand-derived adjoints.

use std::collections::HashMap;

use super::params::{ParamId, ParamStore};
use super::tensor::Tensor;
use crate::error::{Error, Result};

const NORM_FLOOR: f64 = 1e-12;
const DIRECTION_EPS: f64 = 1e-8;
const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(&self) -> usize {
        self.0
    }
}

/// Parent links and rest offsets for the fused forward-kinematics node.
#[derive(Debug, Clone)]
pub struct KinematicTree {
    pub parents: Vec<Option<usize>>,
    pub offsets: Vec<[f64; 3]>,
}

impl KinematicTree {
    pub fn from_skeleton(skeleton: &crate::body::Skeleton) -> Self {
        Self {
            parents: skeleton.parents().to_vec(),
            offsets: skeleton.offsets().iter().map(|o| [o.x, o.y, o.z]).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.parents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parents.is_empty()
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Param(ParamId),
    Affine { x: Var, w: Var, b: Var },
    LayerNorm { x: Var, gain: Var, bias: Var, xhat: Vec<f64>, rstd: Vec<f64> },
    Relu(Var),
    MulConst(Var, Tensor),
    ScaleShift { x: Var, scale: Vec<f64> },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Exp(Var),
    Clamp { x: Var, lo: f64, hi: f64 },
    Concat(Vec<Var>),
    Slice { x: Var, start: usize },
    Gather { x: Var, index: Vec<usize> },
    SumAll(Var),
    SumSq(Var),
    SixdToMat(Var),
    Yaw(Var),
    RotZ { x: Var, yaw: Var, chunk: usize, sign: f64 },
    MatVec { m: Var, v: Var },
    Fk { t: Var, root: Var, locals: Var, tree: KinematicTree, world: Vec<f64> },
    Normalize2(Var),
    Saturate2(Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Record of a forward computation.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: HashMap<ParamId, Var>,
    stamp: Option<(u64, u64)>,
}

/// Result of a backward pass.
#[derive(Debug)]
pub struct Gradients {
    nodes: Vec<Option<Tensor>>,
    params: Vec<Option<Tensor>>,
    param_shapes: Vec<(usize, usize)>,
}

impl Gradients {
    /// Gradient for a parameter (zeros when it did not influence the output).
    pub fn param(&self, id: ParamId) -> Tensor {
        match &self.params[id.index()] {
            Some(t) => t.clone(),
            None => {
                let (r, c) = self.param_shapes[id.index()];
                Tensor::zeros(r, c)
            }
        }
    }

    pub fn param_ref(&self, id: ParamId) -> Option<&Tensor> {
        self.params[id.index()].as_ref()
    }

    /// Gradient for a variable leaf, zeros-shaped `None` when unreached.
    pub fn var(&self, v: Var) -> Option<&Tensor> {
        self.nodes.get(v.0).and_then(Option::as_ref)
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    /// Adds `other` into `self` (same parameter layout).
    pub fn accumulate(&mut self, other: &Gradients) {
        for (a, b) in self.params.iter_mut().zip(&other.params) {
            match (a.as_mut(), b) {
                (Some(a), Some(b)) => a.add_assign(b),
                (None, Some(b)) => *a = Some(b.clone()),
                _ => {}
            }
        }
    }

    pub fn empty_for(store: &ParamStore) -> Self {
        Self {
            nodes: Vec::new(),
            params: vec![None; store.len()],
            param_shapes: store.ids().map(|id| store.get(id).shape()).collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.params.iter().flatten().all(Tensor::is_finite)
    }
}

fn sixd_decode(x: &[f64]) -> [f64; 9] {
    let a = [x[0], x[1], x[2]];
    let b = [x[3], x[4], x[5]];
    let na = norm3(&a).max(NORM_FLOOR);
    let e1 = [a[0] / na, a[1] / na, a[2] / na];
    let d = dot3(&e1, &b);
    let u = [b[0] - d * e1[0], b[1] - d * e1[1], b[2] - d * e1[2]];
    let nu = norm3(&u).max(NORM_FLOOR);
    let e2 = [u[0] / nu, u[1] / nu, u[2] / nu];
    let e3 = cross3(&e1, &e2);
    // row-major with columns e1, e2, e3
    [e1[0], e2[0], e3[0], e1[1], e2[1], e3[1], e1[2], e2[2], e3[2]]
}

fn sixd_backward(x: &[f64], g: &[f64], out: &mut [f64]) {
    let a = [x[0], x[1], x[2]];
    let b = [x[3], x[4], x[5]];
    let na = norm3(&a).max(NORM_FLOOR);
    let e1 = [a[0] / na, a[1] / na, a[2] / na];
    let d = dot3(&e1, &b);
    let u = [b[0] - d * e1[0], b[1] - d * e1[1], b[2] - d * e1[2]];
    let nu = norm3(&u).max(NORM_FLOOR);
    let e2 = [u[0] / nu, u[1] / nu, u[2] / nu];
    let col = |c: usize| [g[c], g[3 + c], g[6 + c]];
    let (mut g1, mut g2, g3) = (col(0), col(1), col(2));
    // e3 = e1 × e2
    let t1 = cross3(&e2, &g3);
    let t2 = cross3(&g3, &e1);
    for k in 0..3 {
        g1[k] += t1[k];
        g2[k] += t2[k];
    }
    // e2 = u / |u|
    let p = dot3(&e2, &g2);
    let gu: [f64; 3] = std::array::from_fn(|k| (g2[k] - e2[k] * p) / nu);
    // u = b − (e1·b) e1
    let q = dot3(&e1, &gu);
    for k in 0..3 {
        out[3 + k] += gu[k] - e1[k] * q;
        g1[k] -= d * gu[k] + b[k] * q;
    }
    // e1 = a / |a|
    let p1 = dot3(&e1, &g1);
    for k in 0..3 {
        out[k] += (g1[k] - e1[k] * p1) / na;
    }
}

fn norm3(v: &[f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

fn dot3(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross3(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// `a · b` for row-major 3×3 matrices.
fn mat_mul(a: &[f64], b: &[f64], out: &mut [f64]) {
    for r in 0..3 {
        for c in 0..3 {
            out[r * 3 + c] = a[r * 3] * b[c] + a[r * 3 + 1] * b[3 + c] + a[r * 3 + 2] * b[6 + c];
        }
    }
}

/// `out += a · bᵀ`.
fn mat_mul_bt_acc(a: &[f64], b: &[f64], out: &mut [f64]) {
    for r in 0..3 {
        for c in 0..3 {
            out[r * 3 + c] += a[r * 3] * b[c * 3] + a[r * 3 + 1] * b[c * 3 + 1] + a[r * 3 + 2] * b[c * 3 + 2];
        }
    }
}

/// `out += aᵀ · b`.
fn mat_mul_at_acc(a: &[f64], b: &[f64], out: &mut [f64]) {
    for r in 0..3 {
        for c in 0..3 {
            out[r * 3 + c] += a[r] * b[c] + a[3 + r] * b[3 + c] + a[6 + r] * b[6 + c];
        }
    }
}

fn saturation(d: f64) -> f64 {
    2.0 * (-(-d).exp_m1())
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

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// A constant input; gradients do not flow into it.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// A differentiable input whose gradient is reported by [`Gradients::var`].
    pub fn variable(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// The node for a stored parameter, created once per tape.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        match self.stamp {
            None => self.stamp = Some(store.stamp()),
            Some(s) => assert_eq!(s, store.stamp(), "tape mixes parameter stores or versions"),
        }
        if let Some(v) = self.params.get(&id) {
            return *v;
        }
        let v = self.push(store.get(id).clone(), Op::Param(id), true);
        self.params.insert(id, v);
        v
    }

    /// `x · wᵀ + b` with `x: [B, in]`, `w: [out, in]`, `b: [1, out]`.
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Var {
        let (xv, wv, bv) = (self.value(x), self.value(w), self.value(b));
        let (rows, inp) = xv.shape();
        let out = wv.rows();
        assert_eq!(wv.cols(), inp, "affine input width");
        assert_eq!(bv.len(), out, "affine bias width");
        let mut y = Tensor::zeros(rows, out);
        for r in 0..rows {
            let xr = xv.row_slice(r);
            let yr = y.row_slice_mut(r);
            for o in 0..out {
                let wr = wv.row_slice(o);
                let mut acc = bv.data()[o];
                for i in 0..inp {
                    acc += xr[i] * wr[i];
                }
                yr[o] = acc;
            }
        }
        let rg = self.rg(&[x, w, b]);
        self.push(y, Op::Affine { x, w, b }, rg)
    }

    /// Per-row normalization to zero mean and unit variance, then `gain·x̂ + bias`.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Var {
        let (xv, gv, bv) = (self.value(x), self.value(gain), self.value(bias));
        let (rows, cols) = xv.shape();
        let mut y = Tensor::zeros(rows, cols);
        let mut xhat = vec![0.0; rows * cols];
        let mut rstd = vec![0.0; rows];
        for r in 0..rows {
            let xr = xv.row_slice(r);
            let mean = xr.iter().sum::<f64>() / cols as f64;
            let var = xr.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / cols as f64;
            let rs = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            rstd[r] = rs;
            let yr = y.row_slice_mut(r);
            for c in 0..cols {
                let h = (xr[c] - mean) * rs;
                xhat[r * cols + c] = h;
                yr[c] = gv.data()[c] * h + bv.data()[c];
            }
        }
        let rg = self.rg(&[x, gain, bias]);
        self.push(y, Op::LayerNorm { x, gain, bias, xhat, rstd }, rg)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let mut y = self.value(x).clone();
        for v in y.data_mut() {
            *v = v.max(0.0);
        }
        let rg = self.rg(&[x]);
        self.push(y, Op::Relu(x), rg)
    }

    /// Element-wise product with a constant of the same shape.
    pub fn mul_const(&mut self, x: Var, c: Tensor) -> Var {
        let xv = self.value(x);
        assert_eq!(xv.shape(), c.shape(), "mul_const shape");
        let data = xv.data().iter().zip(c.data()).map(|(a, b)| a * b).collect();
        let y = Tensor::from_vec(xv.rows(), xv.cols(), data);
        let rg = self.rg(&[x]);
        self.push(y, Op::MulConst(x, c), rg)
    }

    /// Column-wise `x·scale + shift`, broadcast over rows.
    pub fn scale_shift(&mut self, x: Var, scale: &[f64], shift: &[f64]) -> Var {
        let xv = self.value(x);
        let cols = xv.cols();
        assert!(scale.len() == cols && shift.len() == cols, "scale_shift width");
        let mut y = xv.clone();
        for r in 0..y.rows() {
            for (c, v) in y.row_slice_mut(r).iter_mut().enumerate() {
                *v = *v * scale[c] + shift[c];
            }
        }
        let rg = self.rg(&[x]);
        self.push(y, Op::ScaleShift { x, scale: scale.to_vec() }, rg)
    }

    fn zip_with(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!(av.shape(), bv.shape(), "element-wise shape mismatch");
        let data = av.data().iter().zip(bv.data()).map(|(x, y)| f(*x, *y)).collect();
        Tensor::from_vec(av.rows(), av.cols(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let y = self.zip_with(a, b, |x, y| x + y);
        let rg = self.rg(&[a, b]);
        self.push(y, Op::Add(a, b), rg)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let y = self.zip_with(a, b, |x, y| x - y);
        let rg = self.rg(&[a, b]);
        self.push(y, Op::Sub(a, b), rg)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let y = self.zip_with(a, b, |x, y| x * y);
        let rg = self.rg(&[a, b]);
        self.push(y, Op::Mul(a, b), rg)
    }

    pub fn scale(&mut self, x: Var, k: f64) -> Var {
        let mut y = self.value(x).clone();
        y.scale(k);
        let rg = self.rg(&[x]);
        self.push(y, Op::Scale(x, k), rg)
    }

    pub fn exp(&mut self, x: Var) -> Var {
        let mut y = self.value(x).clone();
        for v in y.data_mut() {
            *v = v.exp();
        }
        let rg = self.rg(&[x]);
        self.push(y, Op::Exp(x), rg)
    }

    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Var {
        let mut y = self.value(x).clone();
        for v in y.data_mut() {
            *v = v.clamp(lo, hi);
        }
        let rg = self.rg(&[x]);
        self.push(y, Op::Clamp { x, lo, hi }, rg)
    }

    /// Column-wise concatenation.
    pub fn concat(&mut self, parts: &[Var]) -> Var {
        let rows = self.value(parts[0]).rows();
        let cols: usize = parts.iter().map(|p| self.value(*p).cols()).sum();
        let mut y = Tensor::zeros(rows, cols);
        for r in 0..rows {
            let mut off = 0;
            for p in parts {
                let pv = self.value(*p);
                assert_eq!(pv.rows(), rows, "concat rows");
                let w = pv.cols();
                y.row_slice_mut(r)[off..off + w].copy_from_slice(pv.row_slice(r));
                off += w;
            }
        }
        let rg = self.rg(parts);
        self.push(y, Op::Concat(parts.to_vec()), rg)
    }

    /// Columns `start..start + len`.
    pub fn slice(&mut self, x: Var, start: usize, len: usize) -> Var {
        let xv = self.value(x);
        assert!(start + len <= xv.cols(), "slice out of range");
        let mut y = Tensor::zeros(xv.rows(), len);
        for r in 0..xv.rows() {
            y.row_slice_mut(r).copy_from_slice(&xv.row_slice(r)[start..start + len]);
        }
        let rg = self.rg(&[x]);
        self.push(y, Op::Slice { x, start }, rg)
    }

    /// Picks columns by index (repeats allowed).
    pub fn gather(&mut self, x: Var, index: &[usize]) -> Var {
        let xv = self.value(x);
        assert!(index.iter().all(|i| *i < xv.cols()), "gather index out of range");
        let mut y = Tensor::zeros(xv.rows(), index.len());
        for r in 0..xv.rows() {
            let xr = xv.row_slice(r);
            for (o, i) in y.row_slice_mut(r).iter_mut().zip(index) {
                *o = xr[*i];
            }
        }
        let rg = self.rg(&[x]);
        self.push(y, Op::Gather { x, index: index.to_vec() }, rg)
    }

    pub fn sum_all(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        let rg = self.rg(&[x]);
        self.push(Tensor::scalar(s), Op::SumAll(x), rg)
    }

    pub fn sum_sq(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().map(|v| v * v).sum();
        let rg = self.rg(&[x]);
        self.push(Tensor::scalar(s), Op::SumSq(x), rg)
    }

    /// Gram-Schmidt decode of every 6-wide chunk into a row-major 3×3 matrix.
    pub fn sixd_to_mat(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        assert_eq!(xv.cols() % 6, 0, "sixd_to_mat width");
        let k = xv.cols() / 6;
        let mut y = Tensor::zeros(xv.rows(), 9 * k);
        for r in 0..xv.rows() {
            let xr = xv.row_slice(r);
            let yr = y.row_slice_mut(r);
            for j in 0..k {
                yr[9 * j..9 * j + 9].copy_from_slice(&sixd_decode(&xr[6 * j..6 * j + 6]));
            }
        }
        let rg = self.rg(&[x]);
        self.push(y, Op::SixdToMat(x), rg)
    }

    /// `atan2(a_y, a_x)` of a `[B, 6]` rotation: the global yaw.
    pub fn yaw(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        assert_eq!(xv.cols(), 6, "yaw expects one 6D rotation per row");
        let data = (0..xv.rows()).map(|r| xv.get(r, 1).atan2(xv.get(r, 0))).collect();
        let y = Tensor::from_vec(xv.rows(), 1, data);
        let rg = self.rg(&[x]);
        self.push(y, Op::Yaw(x), rg)
    }

    /// Rotates the first two components of each `chunk`-wide group by
    /// `sign · yaw` about z.
    pub fn rot_z(&mut self, x: Var, yaw: Var, chunk: usize, sign: f64) -> Var {
        let (xv, yv) = (self.value(x), self.value(yaw));
        assert!(chunk >= 2 && xv.cols() % chunk == 0, "rot_z chunking");
        assert_eq!(yv.shape(), (xv.rows(), 1), "rot_z yaw shape");
        let mut y = xv.clone();
        for r in 0..xv.rows() {
            let (s, c) = (sign * yv.get(r, 0)).sin_cos();
            let yr = y.row_slice_mut(r);
            for g in yr.chunks_exact_mut(chunk) {
                let (a, b) = (g[0], g[1]);
                g[0] = c * a - s * b;
                g[1] = s * a + c * b;
            }
        }
        let rg = self.rg(&[x, yaw]);
        self.push(y, Op::RotZ { x, yaw, chunk, sign }, rg)
    }

    /// `m · v` for `m: [B, 9]` row-major and `v: [B, 3]`.
    pub fn mat_vec(&mut self, m: Var, v: Var) -> Var {
        let (mv, vv) = (self.value(m), self.value(v));
        assert_eq!(mv.cols(), 9, "mat_vec matrix width");
        assert_eq!(vv.shape(), (mv.rows(), 3), "mat_vec vector shape");
        let mut y = Tensor::zeros(mv.rows(), 3);
        for r in 0..mv.rows() {
            let (a, b) = (mv.row_slice(r), vv.row_slice(r));
            for i in 0..3 {
                y.row_slice_mut(r)[i] = a[3 * i] * b[0] + a[3 * i + 1] * b[1] + a[3 * i + 2] * b[2];
            }
        }
        let rg = self.rg(&[m, v]);
        self.push(y, Op::MatVec { m, v }, rg)
    }

    /// Joint positions `[B, 3J]` from translation `[B, 3]`, root rotation
    /// matrix `[B, 9]` and local joint matrices `[B, 9J]`.
    pub fn forward_kinematics(&mut self, t: Var, root: Var, locals: Var, tree: &KinematicTree) -> Var {
        let (tv, rv, lv) = (self.value(t), self.value(root), self.value(locals));
        let n = tree.len();
        let rows = tv.rows();
        assert_eq!(lv.cols(), 9 * n, "fk local matrices width");
        assert_eq!(rv.cols(), 9, "fk root width");
        let mut y = Tensor::zeros(rows, 3 * n);
        let mut world = vec![0.0; rows * 9 * n];
        for r in 0..rows {
            let (tr, rr, lr) = (tv.row_slice(r), rv.row_slice(r), lv.row_slice(r));
            let w = &mut world[r * 9 * n..(r + 1) * 9 * n];
            let p = y.row_slice_mut(r);
            for j in 0..n {
                let mut wj = [0.0; 9];
                match tree.parents[j] {
                    None => {
                        p[3 * j..3 * j + 3].copy_from_slice(tr);
                        mat_mul(rr, &lr[9 * j..9 * j + 9], &mut wj);
                    }
                    Some(par) => {
                        let o = tree.offsets[j];
                        let wp = &w[9 * par..9 * par + 9];
                        for i in 0..3 {
                            p[3 * j + i] = p[3 * par + i] + wp[3 * i] * o[0] + wp[3 * i + 1] * o[1] + wp[3 * i + 2] * o[2];
                        }
                        mat_mul(wp, &lr[9 * j..9 * j + 9], &mut wj);
                    }
                }
                w[9 * j..9 * j + 9].copy_from_slice(&wj);
            }
        }
        let rg = self.rg(&[t, root, locals]);
        self.push(
            y,
            Op::Fk {
                t,
                root,
                locals,
                tree: tree.clone(),
                world,
            },
            rg,
        )
    }

    /// Unit-normalizes each 2-wide chunk; chunks shorter than 1e-8 become zero.
    pub fn normalize2(&mut self, x: Var) -> Var {
        let mut y = self.value(x).clone();
        assert_eq!(y.cols() % 2, 0, "normalize2 width");
        for g in y.data_mut().chunks_exact_mut(2) {
            let n = (g[0] * g[0] + g[1] * g[1]).sqrt();
            if n < DIRECTION_EPS {
                g[0] = 0.0;
                g[1] = 0.0;
            } else {
                g[0] /= n;
                g[1] /= n;
            }
        }
        let rg = self.rg(&[x]);
        self.push(y, Op::Normalize2(x), rg)
    }

    /// `v ↦ 2(1 − e^{−|v|}) v/|v|` on each 2-wide chunk.
    pub fn saturate2(&mut self, x: Var) -> Var {
        let mut y = self.value(x).clone();
        assert_eq!(y.cols() % 2, 0, "saturate2 width");
        for g in y.data_mut().chunks_exact_mut(2) {
            let d = (g[0] * g[0] + g[1] * g[1]).sqrt();
            if d < DIRECTION_EPS {
                g[0] = 0.0;
                g[1] = 0.0;
            } else {
                let h = saturation(d) / d;
                g[0] *= h;
                g[1] *= h;
            }
        }
        let rg = self.rg(&[x]);
        self.push(y, Op::Saturate2(x), rg)
    }

    /// Reverse pass from `output`, seeded with `seed` (same shape as the output).
    pub fn backward(&self, output: Var, seed: &Tensor, store: &ParamStore) -> Result<Gradients> {
        if let Some(stamp) = self.stamp {
            if stamp != store.stamp() {
                return Err(Error::StaleTape);
            }
        }
        assert_eq!(self.value(output).shape(), seed.shape(), "seed shape");
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        let mut pgrads: Vec<Option<Tensor>> = vec![None; store.len()];
        grads[output.0] = Some(seed.clone());

        for i in (0..=output.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let g = match &node.op {
                Op::Leaf => continue,
                _ => match grads[i].take() {
                    Some(g) => g,
                    None => continue,
                },
            };
            self.backprop_node(node, &g, &mut grads, &mut pgrads);
        }
        Ok(Gradients {
            nodes: grads,
            params: pgrads,
            param_shapes: store.ids().map(|id| store.get(id).shape()).collect(),
        })
    }

    fn backprop_node(
        &self,
        node: &Node,
        g: &Tensor,
        grads: &mut [Option<Tensor>],
        pgrads: &mut [Option<Tensor>],
    ) {
        let val = |v: Var| &self.nodes[v.0].value;
        let want = |v: Var| self.nodes[v.0].requires_grad;
        let mut acc = |v: Var, t: Tensor| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&t),
                slot @ None => *slot = Some(t),
            }
        };
        match &node.op {
            Op::Leaf => {}
            Op::Param(id) => match &mut pgrads[id.index()] {
                Some(existing) => existing.add_assign(g),
                slot @ None => *slot = Some(g.clone()),
            },
            Op::Affine { x, w, b } => {
                let (xv, wv) = (val(*x), val(*w));
                let (rows, inp) = xv.shape();
                let out = wv.rows();
                if want(*x) {
                    let mut gx = Tensor::zeros(rows, inp);
                    for r in 0..rows {
                        let gr = g.row_slice(r);
                        let gxr = gx.row_slice_mut(r);
                        for o in 0..out {
                            let go = gr[o];
                            if go == 0.0 {
                                continue;
                            }
                            for (a, wv) in gxr.iter_mut().zip(wv.row_slice(o)) {
                                *a += go * wv;
                            }
                        }
                    }
                    acc(*x, gx);
                }
                if want(*w) {
                    let mut gw = Tensor::zeros(out, inp);
                    for r in 0..rows {
                        let gr = g.row_slice(r);
                        let xr = xv.row_slice(r);
                        for o in 0..out {
                            let go = gr[o];
                            if go == 0.0 {
                                continue;
                            }
                            for (a, xv) in gw.row_slice_mut(o).iter_mut().zip(xr) {
                                *a += go * xv;
                            }
                        }
                    }
                    acc(*w, gw);
                }
                if want(*b) {
                    let mut gb = Tensor::zeros(1, out);
                    for r in 0..rows {
                        for (a, v) in gb.data_mut().iter_mut().zip(g.row_slice(r)) {
                            *a += v;
                        }
                    }
                    acc(*b, gb);
                }
            }
            Op::LayerNorm { x, gain, bias, xhat, rstd } => {
                let (rows, cols) = g.shape();
                let gv = val(*gain);
                if want(*gain) || want(*bias) {
                    let mut gg = Tensor::zeros(1, cols);
                    let mut gb = Tensor::zeros(1, cols);
                    for r in 0..rows {
                        for c in 0..cols {
                            let gi = g.get(r, c);
                            gg.data_mut()[c] += gi * xhat[r * cols + c];
                            gb.data_mut()[c] += gi;
                        }
                    }
                    acc(*gain, gg);
                    acc(*bias, gb);
                }
                if want(*x) {
                    let mut gx = Tensor::zeros(rows, cols);
                    for r in 0..rows {
                        let h = &xhat[r * cols..(r + 1) * cols];
                        let gh: Vec<f64> = (0..cols).map(|c| g.get(r, c) * gv.data()[c]).collect();
                        let m1 = gh.iter().sum::<f64>() / cols as f64;
                        let m2 = gh.iter().zip(h).map(|(a, b)| a * b).sum::<f64>() / cols as f64;
                        let gxr = gx.row_slice_mut(r);
                        for c in 0..cols {
                            gxr[c] = rstd[r] * (gh[c] - m1 - h[c] * m2);
                        }
                    }
                    acc(*x, gx);
                }
            }
            Op::Relu(x) => {
                let xv = val(*x);
                let data = g.data().iter().zip(xv.data()).map(|(gi, xi)| if *xi > 0.0 { *gi } else { 0.0 }).collect();
                acc(*x, Tensor::from_vec(g.rows(), g.cols(), data));
            }
            Op::MulConst(x, c) => {
                let data = g.data().iter().zip(c.data()).map(|(a, b)| a * b).collect();
                acc(*x, Tensor::from_vec(g.rows(), g.cols(), data));
            }
            Op::ScaleShift { x, scale } => {
                let mut gx = g.clone();
                for r in 0..gx.rows() {
                    for (v, s) in gx.row_slice_mut(r).iter_mut().zip(scale) {
                        *v *= s;
                    }
                }
                acc(*x, gx);
            }
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.clone());
            }
            Op::Sub(a, b) => {
                acc(*a, g.clone());
                let mut n = g.clone();
                n.scale(-1.0);
                acc(*b, n);
            }
            Op::Mul(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                if want(*a) {
                    let data = g.data().iter().zip(bv.data()).map(|(x, y)| x * y).collect();
                    acc(*a, Tensor::from_vec(g.rows(), g.cols(), data));
                }
                if want(*b) {
                    let data = g.data().iter().zip(av.data()).map(|(x, y)| x * y).collect();
                    acc(*b, Tensor::from_vec(g.rows(), g.cols(), data));
                }
            }
            Op::Scale(x, k) => {
                let mut gx = g.clone();
                gx.scale(*k);
                acc(*x, gx);
            }
            Op::Exp(x) => {
                let data = g.data().iter().zip(node.value.data()).map(|(a, y)| a * y).collect();
                acc(*x, Tensor::from_vec(g.rows(), g.cols(), data));
            }
            Op::Clamp { x, lo, hi } => {
                let xv = val(*x);
                let data = g
                    .data()
                    .iter()
                    .zip(xv.data())
                    .map(|(a, v)| if *v >= *lo && *v <= *hi { *a } else { 0.0 })
                    .collect();
                acc(*x, Tensor::from_vec(g.rows(), g.cols(), data));
            }
            Op::Concat(parts) => {
                let mut off = 0;
                for p in parts {
                    let w = val(*p).cols();
                    if want(*p) {
                        let mut gp = Tensor::zeros(g.rows(), w);
                        for r in 0..g.rows() {
                            gp.row_slice_mut(r).copy_from_slice(&g.row_slice(r)[off..off + w]);
                        }
                        acc(*p, gp);
                    }
                    off += w;
                }
            }
            Op::Slice { x, start } => {
                let xv = val(*x);
                let mut gx = Tensor::zeros(xv.rows(), xv.cols());
                let w = g.cols();
                for r in 0..g.rows() {
                    gx.row_slice_mut(r)[*start..*start + w].copy_from_slice(g.row_slice(r));
                }
                acc(*x, gx);
            }
            Op::Gather { x, index } => {
                let xv = val(*x);
                let mut gx = Tensor::zeros(xv.rows(), xv.cols());
                for r in 0..g.rows() {
                    let (gr, out) = (g.row_slice(r), gx.row_slice_mut(r));
                    for (k, i) in index.iter().enumerate() {
                        out[*i] += gr[k];
                    }
                }
                acc(*x, gx);
            }
            Op::SumAll(x) => {
                let xv = val(*x);
                acc(*x, Tensor::filled(xv.rows(), xv.cols(), g.item()));
            }
            Op::SumSq(x) => {
                let xv = val(*x);
                let k = 2.0 * g.item();
                let data = xv.data().iter().map(|v| k * v).collect();
                acc(*x, Tensor::from_vec(xv.rows(), xv.cols(), data));
            }
            Op::SixdToMat(x) => {
                let xv = val(*x);
                let mut gx = Tensor::zeros(xv.rows(), xv.cols());
                for r in 0..xv.rows() {
                    let xr = xv.row_slice(r);
                    let gr = g.row_slice(r);
                    let gxr = gx.row_slice_mut(r);
                    for j in 0..xv.cols() / 6 {
                        sixd_backward(&xr[6 * j..6 * j + 6], &gr[9 * j..9 * j + 9], &mut gxr[6 * j..6 * j + 6]);
                    }
                }
                acc(*x, gx);
            }
            Op::Yaw(x) => {
                let xv = val(*x);
                let mut gx = Tensor::zeros(xv.rows(), 6);
                for r in 0..xv.rows() {
                    let (ax, ay) = (xv.get(r, 0), xv.get(r, 1));
                    let r2 = ax * ax + ay * ay;
                    if r2 > 0.0 {
                        let gr = g.get(r, 0);
                        gx.row_slice_mut(r)[0] = -gr * ay / r2;
                        gx.row_slice_mut(r)[1] = gr * ax / r2;
                    }
                }
                acc(*x, gx);
            }
            Op::RotZ { x, yaw, chunk, sign } => {
                let yv = val(*yaw);
                let out = &node.value;
                let mut gx = g.clone();
                let mut gyaw = Tensor::zeros(yv.rows(), 1);
                for r in 0..g.rows() {
                    let (s, c) = (sign * yv.get(r, 0)).sin_cos();
                    let mut gy = 0.0;
                    let orow = out.row_slice(r);
                    for (k, gch) in gx.row_slice_mut(r).chunks_exact_mut(*chunk).enumerate() {
                        let (g0, g1) = (gch[0], gch[1]);
                        gch[0] = c * g0 + s * g1;
                        gch[1] = -s * g0 + c * g1;
                        let (o0, o1) = (orow[k * chunk], orow[k * chunk + 1]);
                        gy += -g0 * o1 + g1 * o0;
                    }
                    gyaw.row_slice_mut(r)[0] = sign * gy;
                }
                if want(*x) {
                    acc(*x, gx);
                }
                acc(*yaw, gyaw);
            }
            Op::MatVec { m, v } => {
                let (mv, vv) = (val(*m), val(*v));
                let mut gm = Tensor::zeros(mv.rows(), 9);
                let mut gv = Tensor::zeros(vv.rows(), 3);
                for r in 0..mv.rows() {
                    let (a, b, gr) = (mv.row_slice(r), vv.row_slice(r), g.row_slice(r));
                    for i in 0..3 {
                        for j in 0..3 {
                            gm.row_slice_mut(r)[3 * i + j] = gr[i] * b[j];
                            gv.row_slice_mut(r)[j] += a[3 * i + j] * gr[i];
                        }
                    }
                }
                acc(*m, gm);
                acc(*v, gv);
            }
            Op::Fk { t, root, locals, tree, world } => {
                let n = tree.len();
                let (rv, lv) = (val(*root), val(*locals));
                let rows = g.rows();
                let mut gt = Tensor::zeros(rows, 3);
                let mut groot = Tensor::zeros(rows, 9);
                let mut glocal = Tensor::zeros(rows, 9 * n);
                for r in 0..rows {
                    let w = &world[r * 9 * n..(r + 1) * 9 * n];
                    let lr = lv.row_slice(r);
                    let mut gp = g.row_slice(r).to_vec();
                    let mut gw = vec![0.0; 9 * n];
                    for j in (0..n).rev() {
                        let gwj: [f64; 9] = gw[9 * j..9 * j + 9].try_into().expect("nine");
                        match tree.parents[j] {
                            Some(p) => {
                                let o = tree.offsets[j];
                                for i in 0..3 {
                                    let gpi = gp[3 * j + i];
                                    gp[3 * p + i] += gpi;
                                    for c in 0..3 {
                                        gw[9 * p + 3 * i + c] += gpi * o[c];
                                    }
                                }
                                let mut tmp = [0.0; 9];
                                mat_mul_bt_acc(&gwj, &lr[9 * j..9 * j + 9], &mut tmp);
                                for k in 0..9 {
                                    gw[9 * p + k] += tmp[k];
                                }
                                let wp = &w[9 * p..9 * p + 9];
                                mat_mul_at_acc(wp, &gwj, &mut glocal.row_slice_mut(r)[9 * j..9 * j + 9]);
                            }
                            None => {
                                gt.row_slice_mut(r).copy_from_slice(&gp[3 * j..3 * j + 3]);
                                mat_mul_bt_acc(&gwj, &lr[9 * j..9 * j + 9], groot.row_slice_mut(r));
                                mat_mul_at_acc(rv.row_slice(r), &gwj, &mut glocal.row_slice_mut(r)[9 * j..9 * j + 9]);
                            }
                        }
                    }
                }
                acc(*t, gt);
                acc(*root, groot);
                acc(*locals, glocal);
            }
            Op::Normalize2(x) => {
                let xv = val(*x);
                let mut gx = Tensor::zeros(xv.rows(), xv.cols());
                for ((gc, xc), (yc, oc)) in g
                    .data()
                    .chunks_exact(2)
                    .zip(xv.data().chunks_exact(2))
                    .zip(node.value.data().chunks_exact(2).zip(gx.data_mut().chunks_exact_mut(2)))
                {
                    let n = (xc[0] * xc[0] + xc[1] * xc[1]).sqrt();
                    if n < DIRECTION_EPS {
                        continue;
                    }
                    let p = yc[0] * gc[0] + yc[1] * gc[1];
                    oc[0] = (gc[0] - yc[0] * p) / n;
                    oc[1] = (gc[1] - yc[1] * p) / n;
                }
                acc(*x, gx);
            }
            Op::Saturate2(x) => {
                let xv = val(*x);
                let mut gx = Tensor::zeros(xv.rows(), xv.cols());
                for ((gc, xc), oc) in g
                    .data()
                    .chunks_exact(2)
                    .zip(xv.data().chunks_exact(2))
                    .zip(gx.data_mut().chunks_exact_mut(2))
                {
                    let d = (xc[0] * xc[0] + xc[1] * xc[1]).sqrt();
                    if d < DIRECTION_EPS {
                        oc[0] = 2.0 * gc[0];
                        oc[1] = 2.0 * gc[1];
                        continue;
                    }
                    let s = saturation(d);
                    let h = s / d;
                    let ds = 2.0 * (-d).exp();
                    let dh = (ds * d - s) / (d * d);
                    let vg = xc[0] * gc[0] + xc[1] * gc[1];
                    oc[0] = h * gc[0] + dh / d * vg * xc[0];
                    oc[1] = h * gc[1] + dh / d * vg * xc[1];
                }
                acc(*x, gx);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use approx::assert_abs_diff_eq;
    use nalgebra::Vector3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::body::{forward_kinematics, sixd_to_matrix, yaw_of, Pose, RotationSixD, Skeleton};

    fn random(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
        Tensor::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect())
    }

    /// Compares tape gradients of `Σ w ⊙ f(inputs)` with central differences.
    fn check<F>(inputs: Vec<Tensor>, f: F, tol: f64)
    where
        F: Fn(&mut Tape, &[Var]) -> Var,
    {
        let store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let eval = |ins: &[Tensor], weights: Option<&Tensor>| -> (Tensor, f64) {
            let mut tape = Tape::new();
            let vars: Vec<Var> = ins.iter().map(|t| tape.variable(t.clone())).collect();
            let y = f(&mut tape, &vars);
            let v = tape.value(y).clone();
            let s = weights.map_or(0.0, |w| v.data().iter().zip(w.data()).map(|(a, b)| a * b).sum());
            (v, s)
        };
        let (y, _) = eval(&inputs, None);
        let w = random(&mut rng, y.rows(), y.cols());

        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.variable(t.clone())).collect();
        let out = f(&mut tape, &vars);
        let grads = tape.backward(out, &w, &store).unwrap();

        let h = 1e-6;
        for (k, input) in inputs.iter().enumerate() {
            let analytic = grads.var(vars[k]).cloned().unwrap_or_else(|| Tensor::zeros(input.rows(), input.cols()));
            for e in 0..input.len() {
                let mut plus = inputs.clone();
                plus[k].data_mut()[e] += h;
                let mut minus = inputs.clone();
                minus[k].data_mut()[e] -= h;
                let numeric = (eval(&plus, Some(&w)).1 - eval(&minus, Some(&w)).1) / (2.0 * h);
                let a = analytic.data()[e];
                assert!(
                    (a - numeric).abs() <= tol * (1.0 + numeric.abs()),
                    "input {k} element {e}: analytic {a} numeric {numeric}"
                );
            }
        }
    }

    #[test]
    fn affine_and_layer_norm_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ins = vec![random(&mut rng, 3, 4), random(&mut rng, 5, 4), random(&mut rng, 1, 5)];
        check(ins, |t, v| t.affine(v[0], v[1], v[2]), 1e-6);
        let ins = vec![random(&mut rng, 3, 6), random(&mut rng, 1, 6), random(&mut rng, 1, 6)];
        check(ins, |t, v| t.layer_norm(v[0], v[1], v[2]), 1e-5);
    }

    #[test]
    fn elementwise_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let ins = vec![random(&mut rng, 2, 5), random(&mut rng, 2, 5)];
        check(
            ins,
            |t, v| {
                let a = t.mul(v[0], v[1]);
                let b = t.exp(v[1]);
                let c = t.sub(a, b);
                let d = t.scale(c, -1.5);
                let e = t.clamp(d, -0.8, 0.8);
                let f = t.add(e, v[0]);
                let g = t.relu(f);
                let h = t.scale_shift(g, &[1.0, 2.0, 3.0, 4.0, 5.0], &[0.1; 5]);
                t.mul_const(h, Tensor::filled(2, 5, 0.5))
            },
            1e-6,
        );
    }

    #[test]
    fn structural_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ins = vec![random(&mut rng, 2, 3), random(&mut rng, 2, 4)];
        check(
            ins,
            |t, v| {
                let c = t.concat(&[v[0], v[1], v[0]]);
                let s = t.slice(c, 2, 6);
                let s = t.gather(s, &[5, 0, 0, 3]);
                let a = t.sum_sq(s);
                let b = t.sum_all(c);
                t.add(a, b)
            },
            1e-6,
        );
    }

    #[test]
    fn sixd_decode_matches_nalgebra_and_differentiates() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = random(&mut rng, 3, 12);
        let mut tape = Tape::new();
        let v = tape.constant(x.clone());
        let m = tape.sixd_to_mat(v);
        for r in 0..3 {
            for j in 0..2 {
                let reference = sixd_to_matrix(&RotationSixD::from_slice(&x.row_slice(r)[6 * j..6 * j + 6])).unwrap();
                for a in 0..3 {
                    for b in 0..3 {
                        assert_abs_diff_eq!(tape.value(m).get(r, 9 * j + 3 * a + b), reference[(a, b)], epsilon = 1e-12);
                    }
                }
            }
        }
        check(vec![x], |t, v| t.sixd_to_mat(v[0]), 1e-5);
    }

    #[test]
    fn yaw_and_rotation_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let r6 = random(&mut rng, 2, 6);
        let mut tape = Tape::new();
        let v = tape.constant(r6.clone());
        let y = tape.yaw(v);
        for r in 0..2 {
            let reference = yaw_of(&RotationSixD::from_slice(r6.row_slice(r)));
            assert_abs_diff_eq!(tape.value(y).get(r, 0), reference, epsilon = 1e-12);
        }
        check(vec![r6], |t, v| t.yaw(v[0]), 1e-5);

        let ins = vec![random(&mut rng, 2, 9), random(&mut rng, 2, 1)];
        check(ins.clone(), |t, v| t.rot_z(v[0], v[1], 3, 1.0), 1e-6);
        check(ins, |t, v| t.rot_z(v[0], v[1], 3, -1.0), 1e-6);
    }

    #[test]
    fn direction_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let ins = vec![random(&mut rng, 3, 4)];
        check(ins.clone(), |t, v| t.normalize2(v[0]), 1e-5);
        check(ins, |t, v| t.saturate2(v[0]), 1e-5);
        let ins = vec![random(&mut rng, 2, 9), random(&mut rng, 2, 3)];
        check(ins, |t, v| t.mat_vec(v[0], v[1]), 1e-6);
    }

    #[test]
    fn saturation_is_bounded_and_aligned() {
        let mut tape = Tape::new();
        let v = tape.constant(Tensor::from_vec(1, 4, vec![30.0, 40.0, 0.0, 0.0]));
        let s = tape.saturate2(v);
        let out = tape.value(s);
        let mag = 2.0 * (1.0 - (-50.0f64).exp());
        assert_abs_diff_eq!(out.get(0, 0), 0.6 * mag, epsilon = 1e-12);
        assert_abs_diff_eq!(out.get(0, 1), 0.8 * mag, epsilon = 1e-12);
        assert_eq!((out.get(0, 2), out.get(0, 3)), (0.0, 0.0));
    }

    #[test]
    fn fused_fk_matches_pose_route() {
        let skeleton = Skeleton::desk();
        let tree = KinematicTree::from_skeleton(&skeleton);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let raw = random(&mut rng, 1, 9 + 6 * skeleton.joint_count());
        let pose = Pose::from_slice(raw.data(), skeleton.joint_count()).unwrap().orthonormalized().unwrap();
        let expected = forward_kinematics(&pose, &skeleton).unwrap();

        let mut tape = Tape::new();
        let x = tape.constant(Tensor::row(pose.to_vec()));
        let tr = tape.slice(x, 0, 3);
        let root6 = tape.slice(x, 3, 6);
        let joints6 = tape.slice(x, 9, 6 * skeleton.joint_count());
        let root = tape.sixd_to_mat(root6);
        let locals = tape.sixd_to_mat(joints6);
        let p = tape.forward_kinematics(tr, root, locals, &tree);
        for j in 0..skeleton.joint_count() {
            let got = Vector3::from_row_slice(&tape.value(p).row_slice(0)[3 * j..3 * j + 3]);
            assert_abs_diff_eq!(got, expected.get(j), epsilon = 1e-12);
        }
    }

    #[test]
    fn fused_fk_gradients() {
        let skeleton = Skeleton::desk();
        let tree = KinematicTree::from_skeleton(&skeleton);
        let n = skeleton.joint_count();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let ins = vec![random(&mut rng, 2, 3), random(&mut rng, 2, 6), random(&mut rng, 2, 6 * n)];
        check(
            ins,
            |t, v| {
                let root = t.sixd_to_mat(v[1]);
                let locals = t.sixd_to_mat(v[2]);
                t.forward_kinematics(v[0], root, locals, &tree)
            },
            1e-5,
        );
    }

    #[test]
    fn parameter_gradients_and_stale_tape() {
        let mut store = ParamStore::new();
        let w = store.add("w", Tensor::from_vec(1, 2, vec![2.0, -1.0]));
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::from_vec(1, 2, vec![3.0, 4.0]));
        let wv = tape.param(&store, w);
        assert_eq!(tape.param(&store, w), wv);
        let y = tape.mul(x, wv);
        let s = tape.sum_all(y);
        let g = tape.backward(s, &Tensor::scalar(1.0), &store).unwrap();
        assert_eq!(g.param(w).data(), &[3.0, 4.0]);

        store.get_mut(w).data_mut()[0] = 0.0;
        assert!(matches!(tape.backward(s, &Tensor::scalar(1.0), &store), Err(Error::StaleTape)));
    }

    #[test]
    fn rotation_identity_passes_through_sixd() {
        let mut tape = Tape::new();
        let v = tape.constant(Tensor::row(RotationSixD::identity().to_array().to_vec()));
        let m = tape.sixd_to_mat(v);
        assert_eq!(tape.value(m).data(), &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
    }
}
