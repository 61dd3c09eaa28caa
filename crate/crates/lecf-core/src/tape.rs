//! Vector-valued reverse-mode autodiff tape.
//!
//! Each node holds a small `f64` vector; scalars are length-1 vectors. The
//! tape is eager: values are computed when a node is recorded, so forward
//! results can be read out without a separate evaluation pass. `backward`
//! runs a single reverse sweep and exposes the adjoint of every node.
//!
//! The op set is exactly what the model forward pass needs; it is not a
//! general tensor library.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

use crate::math;

/// Handle to a tape node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(u32);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Neg(Var),
    /// vector * scalar
    Scale(Var, Var),
    ScaleConst(Var, f64),
    AddConst(Var),
    /// vector / scalar
    DivScalar(Var, Var),
    /// row-major (rows x cols) matrix times cols-vector
    MatVec { w: Var, x: Var, rows: usize, cols: usize },
    Concat(Box<[Var]>),
    Dot(Var, Var),
    LorentzInner(Var, Var),
    /// sum of squared space coordinates (indices >= 1)
    SpatialSqNorm(Var),
    SqNorm(Var),
    /// extract coordinate 0 as a scalar
    Time(Var),
    /// drop coordinate 0
    Spatial(Var),
    Silu(Var),
    Exp(Var),
    Sqrt(Var),
    Abs(Var),
    Relu(Var),
    AcoshClamped(Var),
}

struct Node {
    value: Box<[f64]>,
    op: Op,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Vec<f64>, op: Op) -> Var {
        let id = self.nodes.len() as u32;
        self.nodes.push(Node { value: value.into_boxed_slice(), op });
        Var(id)
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0 as usize].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        let val = self.value(v);
        debug_assert_eq!(val.len(), 1);
        val[0]
    }

    pub fn leaf(&mut self, values: &[f64]) -> Var {
        self.push(values.to_vec(), Op::Leaf)
    }

    pub fn leaf_scalar(&mut self, value: f64) -> Var {
        self.push(vec![value], Op::Leaf)
    }

    pub fn zeros(&mut self, len: usize) -> Var {
        self.push(vec![0.0; len], Op::Leaf)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v: Vec<f64> =
            self.value(a).iter().zip(self.value(b)).map(|(x, y)| x + y).collect();
        self.push(v, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v: Vec<f64> =
            self.value(a).iter().zip(self.value(b)).map(|(x, y)| x - y).collect();
        self.push(v, Op::Sub(a, b))
    }

    pub fn neg(&mut self, a: Var) -> Var {
        let v: Vec<f64> = self.value(a).iter().map(|x| -x).collect();
        self.push(v, Op::Neg(a))
    }

    pub fn scale(&mut self, a: Var, s: Var) -> Var {
        let sv = self.scalar(s);
        let v: Vec<f64> = self.value(a).iter().map(|x| x * sv).collect();
        self.push(v, Op::Scale(a, s))
    }

    pub fn scale_const(&mut self, a: Var, c: f64) -> Var {
        let v: Vec<f64> = self.value(a).iter().map(|x| x * c).collect();
        self.push(v, Op::ScaleConst(a, c))
    }

    pub fn add_const(&mut self, a: Var, c: f64) -> Var {
        let v: Vec<f64> = self.value(a).iter().map(|x| x + c).collect();
        self.push(v, Op::AddConst(a))
    }

    pub fn div_scalar(&mut self, a: Var, s: Var) -> Var {
        let sv = self.scalar(s);
        let v: Vec<f64> = self.value(a).iter().map(|x| x / sv).collect();
        self.push(v, Op::DivScalar(a, s))
    }

    pub fn matvec(&mut self, w: Var, x: Var, rows: usize, cols: usize) -> Var {
        debug_assert_eq!(self.value(w).len(), rows * cols);
        debug_assert_eq!(self.value(x).len(), cols);
        let mut out = vec![0.0; rows];
        {
            let wv = self.value(w);
            let xv = self.value(x);
            for (r, o) in out.iter_mut().enumerate() {
                *o = math::dot(&wv[r * cols..(r + 1) * cols], xv);
            }
        }
        self.push(out, Op::MatVec { w, x, rows, cols })
    }

    pub fn concat(&mut self, parts: &[Var]) -> Var {
        let mut v = Vec::new();
        for p in parts {
            v.extend_from_slice(self.value(*p));
        }
        self.push(v, Op::Concat(parts.to_vec().into_boxed_slice()))
    }

    pub fn dot(&mut self, a: Var, b: Var) -> Var {
        let v = math::dot(self.value(a), self.value(b));
        self.push(vec![v], Op::Dot(a, b))
    }

    pub fn lorentz_inner(&mut self, a: Var, b: Var) -> Var {
        let av = self.value(a);
        let bv = self.value(b);
        let v = -av[0] * bv[0] + math::dot(&av[1..], &bv[1..]);
        self.push(vec![v], Op::LorentzInner(a, b))
    }

    pub fn spatial_sq_norm(&mut self, a: Var) -> Var {
        let v = math::sq_norm(&self.value(a)[1..]);
        self.push(vec![v], Op::SpatialSqNorm(a))
    }

    pub fn sq_norm(&mut self, a: Var) -> Var {
        let v = math::sq_norm(self.value(a));
        self.push(vec![v], Op::SqNorm(a))
    }

    pub fn time(&mut self, a: Var) -> Var {
        let v = self.value(a)[0];
        self.push(vec![v], Op::Time(a))
    }

    pub fn spatial(&mut self, a: Var) -> Var {
        let v = self.value(a)[1..].to_vec();
        self.push(v, Op::Spatial(a))
    }

    pub fn silu(&mut self, a: Var) -> Var {
        let v: Vec<f64> = self.value(a).iter().map(|&x| x * sigmoid(x)).collect();
        self.push(v, Op::Silu(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let v: Vec<f64> = self.value(a).iter().map(|&x| math::exp(x)).collect();
        self.push(v, Op::Exp(a))
    }

    pub fn sqrt(&mut self, a: Var) -> Var {
        let v: Vec<f64> = self.value(a).iter().map(|&x| math::sqrt(x)).collect();
        self.push(v, Op::Sqrt(a))
    }

    pub fn abs(&mut self, a: Var) -> Var {
        let v: Vec<f64> = self.value(a).iter().map(|&x| x.abs()).collect();
        self.push(v, Op::Abs(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v: Vec<f64> = self.value(a).iter().map(|&x| x.max(0.0)).collect();
        self.push(v, Op::Relu(a))
    }

    pub fn acosh_clamped(&mut self, a: Var) -> Var {
        let v: Vec<f64> = self.value(a).iter().map(|&x| math::acosh_clamped(x)).collect();
        self.push(v, Op::AcoshClamped(a))
    }

    /// Reverse sweep from a scalar root. Returns per-node adjoints, readable
    /// via [`Gradients::get`].
    pub fn backward(&self, root: Var) -> Gradients {
        debug_assert_eq!(self.value(root).len(), 1);
        let mut adj: Vec<Option<Box<[f64]>>> = vec![None; self.nodes.len()];
        adj[root.0 as usize] = Some(vec![1.0].into_boxed_slice());

        for idx in (0..=root.0 as usize).rev() {
            let Some(up) = adj[idx].take() else { continue };
            // put it back for the caller; we only needed ownership to satisfy
            // the borrow checker while mutating other slots
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => {}
                Op::Add(a, b) => {
                    accumulate(&mut adj, self, *a, &up, |g, u| g + u);
                    accumulate(&mut adj, self, *b, &up, |g, u| g + u);
                }
                Op::Sub(a, b) => {
                    accumulate(&mut adj, self, *a, &up, |g, u| g + u);
                    accumulate(&mut adj, self, *b, &up, |g, u| g - u);
                }
                Op::Neg(a) => accumulate(&mut adj, self, *a, &up, |g, u| g - u),
                Op::Scale(a, s) => {
                    let sv = self.scalar(*s);
                    let av = &self.nodes[a.0 as usize].value;
                    let ds: f64 = up.iter().zip(av.iter()).map(|(u, x)| u * x).sum();
                    add_scaled(&mut adj, self, *a, &up, sv);
                    add_scalar(&mut adj, self, *s, ds);
                }
                Op::ScaleConst(a, c) => add_scaled(&mut adj, self, *a, &up, *c),
                Op::AddConst(a) => accumulate(&mut adj, self, *a, &up, |g, u| g + u),
                Op::DivScalar(a, s) => {
                    let sv = self.scalar(*s);
                    let av = &self.nodes[a.0 as usize].value;
                    let ds: f64 =
                        up.iter().zip(av.iter()).map(|(u, x)| -u * x / (sv * sv)).sum();
                    add_scaled(&mut adj, self, *a, &up, 1.0 / sv);
                    add_scalar(&mut adj, self, *s, ds);
                }
                Op::MatVec { w, x, rows, cols } => {
                    let wv = &self.nodes[w.0 as usize].value;
                    let xv = &self.nodes[x.0 as usize].value;
                    let slot = ensure(&mut adj, self, *w);
                    for r in 0..*rows {
                        for c in 0..*cols {
                            slot[r * cols + c] += up[r] * xv[c];
                        }
                    }
                    let slot = ensure(&mut adj, self, *x);
                    for c in 0..*cols {
                        let mut v = 0.0;
                        for r in 0..*rows {
                            v += wv[r * cols + c] * up[r];
                        }
                        slot[c] += v;
                    }
                }
                Op::Concat(parts) => {
                    let mut offset = 0;
                    for p in parts.iter() {
                        let len = self.nodes[p.0 as usize].value.len();
                        let slot = ensure(&mut adj, self, *p);
                        for k in 0..len {
                            slot[k] += up[offset + k];
                        }
                        offset += len;
                    }
                }
                Op::Dot(a, b) => {
                    let u = up[0];
                    let av = self.nodes[a.0 as usize].value.clone();
                    let bv = self.nodes[b.0 as usize].value.clone();
                    add_scaled(&mut adj, self, *a, &bv, u);
                    add_scaled(&mut adj, self, *b, &av, u);
                }
                Op::LorentzInner(a, b) => {
                    let u = up[0];
                    let mut av = self.nodes[a.0 as usize].value.clone();
                    let mut bv = self.nodes[b.0 as usize].value.clone();
                    av[0] = -av[0];
                    bv[0] = -bv[0];
                    add_scaled(&mut adj, self, *a, &bv, u);
                    add_scaled(&mut adj, self, *b, &av, u);
                }
                Op::SpatialSqNorm(a) => {
                    let u = up[0];
                    let av = self.nodes[a.0 as usize].value.clone();
                    let slot = ensure(&mut adj, self, *a);
                    for k in 1..av.len() {
                        slot[k] += 2.0 * av[k] * u;
                    }
                }
                Op::SqNorm(a) => {
                    let u = up[0];
                    let av = self.nodes[a.0 as usize].value.clone();
                    add_scaled(&mut adj, self, *a, &av, 2.0 * u);
                }
                Op::Time(a) => {
                    let slot = ensure(&mut adj, self, *a);
                    slot[0] += up[0];
                }
                Op::Spatial(a) => {
                    let slot = ensure(&mut adj, self, *a);
                    for k in 0..up.len() {
                        slot[k + 1] += up[k];
                    }
                }
                Op::Silu(a) => {
                    let av = self.nodes[a.0 as usize].value.clone();
                    let slot = ensure(&mut adj, self, *a);
                    for (k, &x) in av.iter().enumerate() {
                        let s = sigmoid(x);
                        slot[k] += up[k] * (s + x * s * (1.0 - s));
                    }
                }
                Op::Exp(a) => {
                    let v = node.value.clone();
                    let slot = ensure(&mut adj, self, *a);
                    for k in 0..v.len() {
                        slot[k] += up[k] * v[k];
                    }
                }
                Op::Sqrt(a) => {
                    let v = node.value.clone();
                    let slot = ensure(&mut adj, self, *a);
                    for k in 0..v.len() {
                        if v[k] > 0.0 {
                            slot[k] += up[k] * 0.5 / v[k];
                        }
                    }
                }
                Op::Abs(a) => {
                    let av = self.nodes[a.0 as usize].value.clone();
                    let slot = ensure(&mut adj, self, *a);
                    for (k, &x) in av.iter().enumerate() {
                        slot[k] += up[k] * if x >= 0.0 { 1.0 } else { -1.0 };
                    }
                }
                Op::Relu(a) => {
                    let av = self.nodes[a.0 as usize].value.clone();
                    let slot = ensure(&mut adj, self, *a);
                    for (k, &x) in av.iter().enumerate() {
                        if x > 0.0 {
                            slot[k] += up[k];
                        }
                    }
                }
                Op::AcoshClamped(a) => {
                    let av = self.nodes[a.0 as usize].value.clone();
                    let slot = ensure(&mut adj, self, *a);
                    for (k, &x) in av.iter().enumerate() {
                        slot[k] += up[k] * math::acosh_clamped_deriv(x);
                    }
                }
            }
            adj[idx] = Some(up);
        }
        Gradients { adj }
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + math::exp(-x))
}

fn ensure<'a>(
    adj: &'a mut Vec<Option<Box<[f64]>>>,
    tape: &Tape,
    v: Var,
) -> &'a mut [f64] {
    let slot = &mut adj[v.0 as usize];
    if slot.is_none() {
        let len = tape.nodes[v.0 as usize].value.len();
        *slot = Some(vec![0.0; len].into_boxed_slice());
    }
    slot.as_mut().unwrap()
}

fn accumulate(
    adj: &mut Vec<Option<Box<[f64]>>>,
    tape: &Tape,
    v: Var,
    up: &[f64],
    f: impl Fn(f64, f64) -> f64,
) {
    let slot = ensure(adj, tape, v);
    for (g, u) in slot.iter_mut().zip(up) {
        *g = f(*g, *u);
    }
}

fn add_scaled(adj: &mut Vec<Option<Box<[f64]>>>, tape: &Tape, v: Var, up: &[f64], c: f64) {
    let slot = ensure(adj, tape, v);
    for (g, u) in slot.iter_mut().zip(up) {
        *g += c * u;
    }
}

fn add_scalar(adj: &mut Vec<Option<Box<[f64]>>>, tape: &Tape, v: Var, d: f64) {
    let slot = ensure(adj, tape, v);
    slot[0] += d;
}

/// Adjoints produced by [`Tape::backward`].
pub struct Gradients {
    adj: Vec<Option<Box<[f64]>>>,
}

impl Gradients {
    /// Gradient of the root with respect to `v`; `None` if `v` never
    /// influenced the root.
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.adj[v.0 as usize].as_deref()
    }

    /// Gradient as an owned vector, zeros if the node was unreachable.
    pub fn get_or_zeros(&self, v: Var, len: usize) -> Vec<f64> {
        match self.get(v) {
            Some(g) => g.to_vec(),
            None => vec![0.0; len],
        }
    }
}
