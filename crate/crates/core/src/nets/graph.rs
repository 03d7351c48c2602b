//! Tape-based reverse-mode differentiation over [`Tensor`]s.
//!
//! Binary elementwise ops broadcast their right operand when it is `1×1`,
//! `1×cols` or `rows×1`.

use alloc::vec;
use alloc::vec::Vec;

use super::kernels;
use super::{Float, NetError, ParamId, ParamStore, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

#[derive(Debug, Clone)]
enum Op<F> {
    Input,
    Param(ParamId),
    Affine { x: NodeId, w: NodeId, b: NodeId },
    Elu(NodeId),
    Tanh(NodeId),
    Exp(NodeId),
    Log(NodeId),
    Square(NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Min(NodeId, NodeId),
    Scale(NodeId, F),
    Clip(NodeId, F, F),
    Sum(NodeId),
    Mean(NodeId),
    Concat(Vec<NodeId>),
    Slice { x: NodeId, start: usize },
    GaussianLogp { mean: NodeId, log_std: NodeId, actions: NodeId },
    KlStdNormal { mu: NodeId, log_sigma: NodeId },
}

#[derive(Debug, Clone)]
struct Node<F> {
    op: Op<F>,
    value: Tensor<F>,
}

#[derive(Debug, Clone, Default)]
pub struct Graph<F> {
    nodes: Vec<Node<F>>,
    consumed: bool,
}

fn mismatch(op: &'static str, expected: (usize, usize), found: (usize, usize)) -> NetError {
    NetError::ShapeMismatch { op, expected, found }
}

/// Index into a broadcast operand of shape `b` for element `(r, c)`.
fn bidx(b: (usize, usize), r: usize, c: usize) -> usize {
    let rr = if b.0 == 1 { 0 } else { r };
    let cc = if b.1 == 1 { 0 } else { c };
    rr * b.1 + cc
}

fn broadcastable(a: (usize, usize), b: (usize, usize)) -> bool {
    (b.0 == a.0 || b.0 == 1) && (b.1 == a.1 || b.1 == 1)
}

impl<F: Float> Graph<F> {
    pub fn new() -> Self {
        Self { nodes: Vec::new(), consumed: false }
    }

    pub fn value(&self, id: NodeId) -> &Tensor<F> {
        &self.nodes[id.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: Op<F>, value: Tensor<F>) -> NodeId {
        self.consumed = false;
        self.nodes.push(Node { op, value });
        NodeId(self.nodes.len() - 1)
    }

    fn shape(&self, id: NodeId) -> (usize, usize) {
        self.nodes[id.0].value.shape()
    }

    /// Constant leaf; receives no gradient.
    pub fn input(&mut self, t: Tensor<F>) -> NodeId {
        self.push(Op::Input, t)
    }

    /// Leaf bound to a stored parameter; gradients flow back into the store.
    pub fn param(&mut self, store: &ParamStore<F>, id: ParamId) -> NodeId {
        let t = store.get(id).tensor();
        self.push(Op::Param(id), t)
    }

    pub fn affine(&mut self, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId, NetError> {
        let (out, inp) = self.shape(w);
        if self.shape(x).1 != inp {
            return Err(mismatch("affine", (self.shape(x).0, inp), self.shape(x)));
        }
        if self.shape(b) != (1, out) {
            return Err(mismatch("affine bias", (1, out), self.shape(b)));
        }
        let y = kernels::affine(self.value(x), &self.value(w).data, &self.value(b).data, out);
        Ok(self.push(Op::Affine { x, w, b }, y))
    }

    fn unary(&mut self, a: NodeId, op: Op<F>, f: impl Fn(F) -> F) -> NodeId {
        let y = self.value(a).map(f);
        self.push(op, y)
    }

    pub fn elu(&mut self, a: NodeId) -> NodeId {
        self.unary(a, Op::Elu(a), kernels::elu)
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        self.unary(a, Op::Tanh(a), F::tanh)
    }

    pub fn exp(&mut self, a: NodeId) -> NodeId {
        self.unary(a, Op::Exp(a), F::exp)
    }

    pub fn log(&mut self, a: NodeId) -> NodeId {
        self.unary(a, Op::Log(a), F::ln)
    }

    pub fn square(&mut self, a: NodeId) -> NodeId {
        self.unary(a, Op::Square(a), |x| x * x)
    }

    pub fn scale(&mut self, a: NodeId, c: F) -> NodeId {
        self.unary(a, Op::Scale(a, c), |x| x * c)
    }

    pub fn clip(&mut self, a: NodeId, lo: F, hi: F) -> NodeId {
        self.unary(a, Op::Clip(a, lo, hi), |x| x.max(lo).min(hi))
    }

    fn binary(
        &mut self,
        a: NodeId,
        b: NodeId,
        name: &'static str,
        op: Op<F>,
        f: impl Fn(F, F) -> F,
    ) -> Result<NodeId, NetError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if !broadcastable(sa, sb) {
            return Err(mismatch(name, sa, sb));
        }
        let mut y = Tensor::zeros(sa.0, sa.1);
        let (va, vb) = (&self.value(a).data, &self.value(b).data);
        for r in 0..sa.0 {
            for c in 0..sa.1 {
                y.data[r * sa.1 + c] = f(va[r * sa.1 + c], vb[bidx(sb, r, c)]);
            }
        }
        Ok(self.push(op, y))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NetError> {
        self.binary(a, b, "add", Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NetError> {
        self.binary(a, b, "sub", Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NetError> {
        self.binary(a, b, "mul", Op::Mul(a, b), |x, y| x * y)
    }

    /// Elementwise minimum; ties send the gradient to `a`.
    pub fn min(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NetError> {
        if self.shape(a) != self.shape(b) {
            return Err(mismatch("min", self.shape(a), self.shape(b)));
        }
        self.binary(a, b, "min", Op::Min(a, b), |x, y| if x <= y { x } else { y })
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let s = self.value(a).data.iter().fold(F::zero(), |acc, x| acc + *x);
        self.push(Op::Sum(a), Tensor::filled(1, 1, s))
    }

    pub fn mean(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a);
        let n = F::lit(v.data.len().max(1) as f64);
        let s = v.data.iter().fold(F::zero(), |acc, x| acc + *x);
        self.push(Op::Mean(a), Tensor::filled(1, 1, s / n))
    }

    /// Column-wise concatenation.
    pub fn concat(&mut self, parts: &[NodeId]) -> Result<NodeId, NetError> {
        let rows = self.shape(parts[0]).0;
        let mut cols = 0;
        for p in parts {
            if self.shape(*p).0 != rows {
                return Err(mismatch("concat", (rows, self.shape(*p).1), self.shape(*p)));
            }
            cols += self.shape(*p).1;
        }
        let mut y = Tensor::zeros(rows, cols);
        for r in 0..rows {
            let mut off = 0;
            for p in parts {
                let v = self.value(*p);
                y.row_mut(r)[off..off + v.cols].copy_from_slice(v.row(r));
                off += v.cols;
            }
        }
        Ok(self.push(Op::Concat(parts.to_vec()), y))
    }

    /// Columns `start..start + len`.
    pub fn slice(&mut self, x: NodeId, start: usize, len: usize) -> Result<NodeId, NetError> {
        let (rows, cols) = self.shape(x);
        if start + len > cols {
            return Err(mismatch("slice", (rows, start + len), (rows, cols)));
        }
        let mut y = Tensor::zeros(rows, len);
        for r in 0..rows {
            y.row_mut(r).copy_from_slice(&self.value(x).row(r)[start..start + len]);
        }
        Ok(self.push(Op::Slice { x, start }, y))
    }

    /// Row-wise log-density of `actions` under `N(mean, exp(log_std)²)`;
    /// `log_std` is `1×d`. Output is `rows×1`.
    pub fn gaussian_logp(&mut self, mean: NodeId, log_std: NodeId, actions: NodeId) -> Result<NodeId, NetError> {
        let sm = self.shape(mean);
        if self.shape(actions) != sm {
            return Err(mismatch("gaussian_logp actions", sm, self.shape(actions)));
        }
        if self.shape(log_std) != (1, sm.1) {
            return Err(mismatch("gaussian_logp log_std", (1, sm.1), self.shape(log_std)));
        }
        let y = kernels::gaussian_logp(self.value(mean), &self.value(log_std).data, self.value(actions));
        Ok(self.push(Op::GaussianLogp { mean, log_std, actions }, y))
    }

    /// Row-wise `KL(N(μ, σ²) ‖ N(0, I))`. Output is `rows×1`.
    pub fn kl_std_normal(&mut self, mu: NodeId, log_sigma: NodeId) -> Result<NodeId, NetError> {
        if self.shape(mu) != self.shape(log_sigma) {
            return Err(mismatch("kl_std_normal", self.shape(mu), self.shape(log_sigma)));
        }
        let y = kernels::kl_std_normal(self.value(mu), self.value(log_sigma));
        Ok(self.push(Op::KlStdNormal { mu, log_sigma }, y))
    }

    /// Accumulates `∂loss/∂p` into the gradient of every parameter reachable
    /// from `loss`. The tape can be differentiated once.
    pub fn backward(&mut self, loss: NodeId, store: &mut ParamStore<F>) -> Result<(), NetError> {
        if self.consumed {
            return Err(NetError::GraphConsumed);
        }
        if self.shape(loss) != (1, 1) {
            return Err(NetError::NonScalarLoss);
        }
        self.consumed = true;
        let mut grads: Vec<Option<Tensor<F>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::filled(1, 1, F::one()));
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            let y = &node.value;
            match &node.op {
                Op::Input => {}
                Op::Param(id) => {
                    for (acc, d) in store.get_mut(*id).grad.iter_mut().zip(&g.data) {
                        *acc = *acc + *d;
                    }
                }
                Op::Affine { x, w, b } => {
                    let xv = &self.nodes[x.0].value;
                    let wv = &self.nodes[w.0].value;
                    let (n, k) = xv.shape();
                    let out = wv.rows;
                    let mut dx = Tensor::zeros(n, k);
                    let mut dw = Tensor::zeros(out, k);
                    if n > 0 && k > 0 && out > 0 {
                        // SAFETY: dy is n×out, W is out×k, x is n×k, all row-major;
                        // dyᵀ is read through strides (1, out).
                        unsafe {
                            F::gemm(
                                n,
                                out,
                                k,
                                F::one(),
                                g.data.as_ptr(),
                                out as isize,
                                1,
                                wv.data.as_ptr(),
                                k as isize,
                                1,
                                F::zero(),
                                dx.data.as_mut_ptr(),
                                k as isize,
                                1,
                            );
                            F::gemm(
                                out,
                                n,
                                k,
                                F::one(),
                                g.data.as_ptr(),
                                1,
                                out as isize,
                                xv.data.as_ptr(),
                                k as isize,
                                1,
                                F::zero(),
                                dw.data.as_mut_ptr(),
                                k as isize,
                                1,
                            );
                        }
                    }
                    let mut db = Tensor::zeros(1, out);
                    for r in 0..n {
                        for (acc, d) in db.data.iter_mut().zip(g.row(r)) {
                            *acc = *acc + *d;
                        }
                    }
                    accumulate(&mut grads, *x, dx);
                    accumulate(&mut grads, *w, dw);
                    accumulate(&mut grads, *b, db);
                }
                Op::Elu(a) => {
                    let xv = &self.nodes[a.0].value;
                    let d = zip3(&g, xv, y, |g, x, y| if x > F::zero() { g } else { g * (y + F::one()) });
                    accumulate(&mut grads, *a, d);
                }
                Op::Tanh(a) => {
                    let d = zip3(&g, y, y, |g, y, _| g * (F::one() - y * y));
                    accumulate(&mut grads, *a, d);
                }
                Op::Exp(a) => {
                    let d = zip3(&g, y, y, |g, y, _| g * y);
                    accumulate(&mut grads, *a, d);
                }
                Op::Log(a) => {
                    let d = zip3(&g, &self.nodes[a.0].value, y, |g, x, _| g / x);
                    accumulate(&mut grads, *a, d);
                }
                Op::Square(a) => {
                    let two = F::lit(2.0);
                    let d = zip3(&g, &self.nodes[a.0].value, y, |g, x, _| two * x * g);
                    accumulate(&mut grads, *a, d);
                }
                Op::Scale(a, c) => {
                    let c = *c;
                    accumulate(&mut grads, *a, g.map(|v| v * c));
                }
                Op::Clip(a, lo, hi) => {
                    let (lo, hi) = (*lo, *hi);
                    let d = zip3(&g, &self.nodes[a.0].value, y, |g, x, _| {
                        if x >= lo && x <= hi {
                            g
                        } else {
                            F::zero()
                        }
                    });
                    accumulate(&mut grads, *a, d);
                }
                Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::Min(a, b) => {
                    let av = &self.nodes[a.0].value;
                    let bv = &self.nodes[b.0].value;
                    let sb = bv.shape();
                    let mut da = Tensor::zeros(av.rows, av.cols);
                    let mut db = Tensor::zeros(sb.0, sb.1);
                    for r in 0..av.rows {
                        for c in 0..av.cols {
                            let i = r * av.cols + c;
                            let j = bidx(sb, r, c);
                            let gi = g.data[i];
                            let (ga, gb) = match node.op {
                                Op::Add(..) => (gi, gi),
                                Op::Sub(..) => (gi, -gi),
                                Op::Mul(..) => (gi * bv.data[j], gi * av.data[i]),
                                _ => {
                                    if av.data[i] <= bv.data[j] {
                                        (gi, F::zero())
                                    } else {
                                        (F::zero(), gi)
                                    }
                                }
                            };
                            da.data[i] = ga;
                            db.data[j] = db.data[j] + gb;
                        }
                    }
                    let (a, b) = (*a, *b);
                    accumulate(&mut grads, a, da);
                    accumulate(&mut grads, b, db);
                }
                Op::Sum(a) => {
                    let (r, c) = self.nodes[a.0].value.shape();
                    accumulate(&mut grads, *a, Tensor::filled(r, c, g.scalar()));
                }
                Op::Mean(a) => {
                    let (r, c) = self.nodes[a.0].value.shape();
                    let n = F::lit((r * c).max(1) as f64);
                    accumulate(&mut grads, *a, Tensor::filled(r, c, g.scalar() / n));
                }
                Op::Concat(parts) => {
                    let mut off = 0;
                    for p in parts {
                        let (rows, cols) = self.nodes[p.0].value.shape();
                        let mut d = Tensor::zeros(rows, cols);
                        for r in 0..rows {
                            d.row_mut(r).copy_from_slice(&g.row(r)[off..off + cols]);
                        }
                        off += cols;
                        accumulate(&mut grads, *p, d);
                    }
                }
                Op::Slice { x, start } => {
                    let (rows, cols) = self.nodes[x.0].value.shape();
                    let mut d = Tensor::zeros(rows, cols);
                    for r in 0..rows {
                        d.row_mut(r)[*start..*start + g.cols].copy_from_slice(g.row(r));
                    }
                    accumulate(&mut grads, *x, d);
                }
                Op::GaussianLogp { mean, log_std, actions } => {
                    let mv = &self.nodes[mean.0].value;
                    let sv = &self.nodes[log_std.0].value;
                    let av = &self.nodes[actions.0].value;
                    let mut dm = Tensor::zeros(mv.rows, mv.cols);
                    let mut ds = Tensor::zeros(1, mv.cols);
                    for r in 0..mv.rows {
                        let gr = g.data[r];
                        for c in 0..mv.cols {
                            let inv_var = (F::lit(-2.0) * sv.data[c]).exp();
                            let diff = av.data[r * mv.cols + c] - mv.data[r * mv.cols + c];
                            dm.data[r * mv.cols + c] = gr * diff * inv_var;
                            ds.data[c] = ds.data[c] + gr * (diff * diff * inv_var - F::one());
                        }
                    }
                    let (mean, log_std) = (*mean, *log_std);
                    accumulate(&mut grads, mean, dm);
                    accumulate(&mut grads, log_std, ds);
                }
                Op::KlStdNormal { mu, log_sigma } => {
                    let mv = &self.nodes[mu.0].value;
                    let sv = &self.nodes[log_sigma.0].value;
                    let mut dm = Tensor::zeros(mv.rows, mv.cols);
                    let mut ds = Tensor::zeros(mv.rows, mv.cols);
                    for r in 0..mv.rows {
                        let gr = g.data[r];
                        for c in 0..mv.cols {
                            let i = r * mv.cols + c;
                            dm.data[i] = gr * mv.data[i];
                            ds.data[i] = gr * ((F::lit(2.0) * sv.data[i]).exp() - F::one());
                        }
                    }
                    let (mu, log_sigma) = (*mu, *log_sigma);
                    accumulate(&mut grads, mu, dm);
                    accumulate(&mut grads, log_sigma, ds);
                }
            }
        }
        Ok(())
    }
}

fn zip3<F: Float>(g: &Tensor<F>, a: &Tensor<F>, b: &Tensor<F>, f: impl Fn(F, F, F) -> F) -> Tensor<F> {
    Tensor {
        rows: g.rows,
        cols: g.cols,
        data: g.data.iter().zip(&a.data).zip(&b.data).map(|((g, a), b)| f(*g, *a, *b)).collect(),
    }
}

fn accumulate<F: Float>(grads: &mut [Option<Tensor<F>>], id: NodeId, d: Tensor<F>) {
    match &mut grads[id.0] {
        Some(acc) => {
            for (a, v) in acc.data.iter_mut().zip(&d.data) {
                *a = *a + *v;
            }
        }
        slot @ None => *slot = Some(d),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn store_with(values: &[f64], rows: usize, cols: usize) -> (ParamStore<f64>, ParamId) {
        let mut s = ParamStore::new();
        let id = s.add("x".into(), rows, cols, values.to_vec());
        (s, id)
    }

    #[test]
    fn sum_gradient_is_ones() {
        let (mut s, id) = store_with(&[1.0, -2.0, 3.0, 0.5], 2, 2);
        let mut g = Graph::new();
        let x = g.param(&s, id);
        let l = g.sum(x);
        g.backward(l, &mut s).unwrap();
        assert_eq!(s.get(id).grad, vec![1.0; 4]);
    }

    #[test]
    fn squared_norm_gradient() {
        let x0 = [1.0, -2.0, 3.0];
        let (mut s, id) = store_with(&x0, 1, 3);
        let mut g = Graph::new();
        let x = g.param(&s, id);
        let sq = g.square(x);
        let l = g.sum(sq);
        g.backward(l, &mut s).unwrap();
        assert_eq!(s.get(id).grad, x0.iter().map(|v| 2.0 * v).collect::<Vec<_>>());
    }

    #[test]
    fn second_backward_is_rejected() {
        let (mut s, id) = store_with(&[1.0], 1, 1);
        let mut g = Graph::new();
        let x = g.param(&s, id);
        let l = g.sum(x);
        g.backward(l, &mut s).unwrap();
        assert_eq!(g.backward(l, &mut s), Err(NetError::GraphConsumed));
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let (mut s, id) = store_with(&[1.0, 2.0], 1, 2);
        let mut g = Graph::new();
        let x = g.param(&s, id);
        assert_eq!(g.backward(x, &mut s), Err(NetError::NonScalarLoss));
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let mut g = Graph::<f64>::new();
        let a = g.input(Tensor::zeros(2, 3));
        let b = g.input(Tensor::zeros(3, 2));
        assert!(matches!(g.add(a, b), Err(NetError::ShapeMismatch { .. })));
    }

    /// Central-difference check of every op on one random scalar objective.
    #[test]
    fn every_op_matches_finite_differences() {
        let mut rng = seeded(11);
        let mut s = ParamStore::<f64>::new();
        let w = s.add_uniform("w".into(), 3, 4, 0.8, &mut rng);
        let b = s.add_uniform("b".into(), 1, 3, 0.5, &mut rng);
        let ls = s.add_uniform("ls".into(), 1, 2, 0.5, &mut rng);
        let x = s.add_uniform("x".into(), 5, 4, 1.0, &mut rng);
        let acts: Vec<f64> = (0..10).map(|_| crate::rng::uniform(&mut rng, -1.0, 1.0)).collect();
        let build = |s: &ParamStore<f64>, g: &mut Graph<f64>| -> NodeId {
            let (xn, wn, bn, lsn) = (g.param(s, x), g.param(s, w), g.param(s, b), g.param(s, ls));
            let h = g.affine(xn, wn, bn).unwrap();
            let e = g.elu(h);
            let t = g.tanh(e);
            let m = g.slice(t, 0, 2).unwrap();
            let act = g.input(Tensor::from_vec(5, 2, acts.clone()).unwrap());
            let lp = g.gaussian_logp(m, lsn, act).unwrap();
            let r = g.exp(lp);
            let cl = g.clip(r, 0.05, 0.4);
            let mn = g.min(r, cl).unwrap();
            let mu = g.slice(e, 1, 2).unwrap();
            let kl = g.kl_std_normal(mu, m).unwrap();
            let sqr = g.square(h);
            let shifted = g.add(sqr, bn).unwrap();
            let lg = g.log(shifted);
            let cat = g.concat(&[mn, kl, lg]).unwrap();
            let sc = g.scale(cat, 0.7);
            let prod = g.mul(sc, mn).unwrap();
            let diff = g.sub(prod, mn).unwrap();
            let a = g.mean(diff);
            let bsum = g.sum(kl);
            g.add(a, bsum).unwrap()
        };
        // keep log's argument positive: square + b with |b| <= 0.5 can go negative
        s.get_mut(b).data.iter_mut().for_each(|v| *v = v.abs() + 0.1);
        let mut g = Graph::new();
        let loss = build(&s, &mut g);
        g.backward(loss, &mut s).unwrap();
        let h = 1e-6;
        for id in [w, b, ls, x] {
            for k in 0..s.get(id).data.len() {
                let orig = s.get(id).data[k];
                let eval = |v: f64| {
                    let mut t = s.clone();
                    t.get_mut(id).data[k] = v;
                    let mut g = Graph::new();
                    let l = build(&t, &mut g);
                    g.value(l).scalar()
                };
                let fd = (eval(orig + h) - eval(orig - h)) / (2.0 * h);
                let an = s.get(id).grad[k];
                let err = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-3);
                assert!(err < 1e-4, "param {id:?}[{k}]: fd {fd} analytic {an}");
            }
        }
    }
}
