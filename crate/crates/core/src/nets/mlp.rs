use alloc::format;
use alloc::vec::Vec;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::kernels;
use super::{Float, Graph, NetError, NodeId, ParamId, ParamStore, Tensor};

/// Layer widths of an ELU multilayer perceptron with a linear output layer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input: usize,
    pub hidden: Vec<usize>,
    pub output: usize,
}

impl MlpSpec {
    pub fn widths(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let dims: Vec<usize> =
            core::iter::once(self.input).chain(self.hidden.iter().copied()).chain([self.output]).collect();
        (0..dims.len() - 1).map(move |i| (dims[i], dims[i + 1]))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub spec: MlpSpec,
    /// `(weight out×in, bias 1×out)` per layer.
    pub layers: Vec<(ParamId, ParamId)>,
}

impl Mlp {
    /// Registers `{prefix}.{i}.weight` / `{prefix}.{i}.bias` with entries
    /// from `U(±1/√fan_in)`; the output layer is further scaled by `output_gain`.
    pub fn init<F: Float, R: Rng + ?Sized>(
        prefix: &str,
        spec: MlpSpec,
        output_gain: f64,
        store: &mut ParamStore<F>,
        rng: &mut R,
    ) -> Self {
        assert!(!spec.hidden.is_empty(), "an MLP needs at least one hidden layer");
        let n = spec.hidden.len() + 1;
        let layers = spec
            .widths()
            .enumerate()
            .map(|(i, (fan_in, fan_out))| {
                let gain = if i + 1 == n { output_gain } else { 1.0 };
                let bound = gain / libm::sqrt(fan_in as f64);
                let w = store.add_uniform(format!("{prefix}.{i}.weight"), fan_out, fan_in, bound, rng);
                let b = store.add_uniform(format!("{prefix}.{i}.bias"), 1, fan_out, bound, rng);
                (w, b)
            })
            .collect();
        Self { spec, layers }
    }

    /// Re-binds an MLP to parameters already present in `store`.
    pub fn bind<F: Float>(prefix: &str, spec: MlpSpec, store: &ParamStore<F>) -> Result<Self, NetError> {
        let layers = (0..spec.hidden.len() + 1)
            .map(|i| Ok((store.require(&format!("{prefix}.{i}.weight"))?, store.require(&format!("{prefix}.{i}.bias"))?)))
            .collect::<Result<Vec<_>, NetError>>()?;
        for ((w, _), (fan_in, fan_out)) in layers.iter().zip(spec.widths()) {
            let p = store.get(*w);
            if (p.rows, p.cols) != (fan_out, fan_in) {
                return Err(NetError::ShapeMismatch { op: "bind", expected: (fan_out, fan_in), found: (p.rows, p.cols) });
            }
        }
        Ok(Self { spec, layers })
    }

    pub fn param_ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        self.layers.iter().flat_map(|(w, b)| [*w, *b])
    }

    pub fn forward<F: Float>(&self, g: &mut Graph<F>, store: &ParamStore<F>, x: NodeId) -> Result<NodeId, NetError> {
        let mut h = x;
        let last = self.layers.len() - 1;
        for (i, (w, b)) in self.layers.iter().enumerate() {
            let (wn, bn) = (g.param(store, *w), g.param(store, *b));
            h = g.affine(h, wn, bn)?;
            if i < last {
                h = g.elu(h);
            }
        }
        Ok(h)
    }

    /// Forward pass without recording a tape.
    pub fn infer<F: Float>(&self, store: &ParamStore<F>, x: &Tensor<F>) -> Result<Tensor<F>, NetError> {
        if x.cols != self.spec.input {
            return Err(NetError::ShapeMismatch { op: "mlp", expected: (x.rows, self.spec.input), found: x.shape() });
        }
        let last = self.layers.len() - 1;
        let mut h = x.clone();
        for (i, (w, b)) in self.layers.iter().enumerate() {
            let wp = store.get(*w);
            h = kernels::affine(&h, &wp.data, &store.get(*b).data, wp.rows);
            if i < last {
                h = h.map(kernels::elu);
            }
        }
        Ok(h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{seeded, uniform};
    use alloc::vec;

    fn spec() -> MlpSpec {
        MlpSpec { input: 5, hidden: vec![7, 6], output: 3 }
    }

    #[test]
    fn zero_network_outputs_zero() {
        let mut s = ParamStore::<f64>::new();
        let m = Mlp::init("m", spec(), 1.0, &mut s, &mut seeded(0));
        for id in m.param_ids().collect::<Vec<_>>() {
            s.get_mut(id).data.iter_mut().for_each(|v| *v = 0.0);
        }
        let y = m.infer(&s, &Tensor::filled(2, 5, 0.7)).unwrap();
        assert!(y.data.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn identity_layer_applies_elu() {
        let mut s = ParamStore::<f64>::new();
        let m = Mlp::init("m", MlpSpec { input: 3, hidden: vec![3], output: 3 }, 1.0, &mut s, &mut seeded(0));
        let (w0, b0) = m.layers[0];
        let (w1, b1) = m.layers[1];
        for (id, v) in [(w0, 1.0), (w1, 1.0)] {
            let p = s.get_mut(id);
            p.data.iter_mut().enumerate().for_each(|(i, x)| *x = if i % 4 == 0 { v } else { 0.0 });
        }
        for id in [b0, b1] {
            s.get_mut(id).data.iter_mut().for_each(|x| *x = 0.0);
        }
        let x = Tensor::from_vec(1, 3, vec![-1.0, 0.0, 2.0]).unwrap();
        let y = m.infer(&s, &x).unwrap();
        assert_eq!(y.data, vec![libm::expm1(-1.0), 0.0, 2.0]);
    }

    #[test]
    fn wrong_input_width_is_an_error() {
        let mut s = ParamStore::<f32>::new();
        let m = Mlp::init("m", spec(), 1.0, &mut s, &mut seeded(0));
        assert!(matches!(m.infer(&s, &Tensor::zeros(1, 4)), Err(NetError::ShapeMismatch { .. })));
    }

    #[test]
    fn graph_and_inference_agree_bitwise() {
        let mut s = ParamStore::<f32>::new();
        let m = Mlp::init("m", spec(), 1.0, &mut s, &mut seeded(3));
        let mut rng = seeded(4);
        let x = Tensor::from_vec(9, 5, (0..45).map(|_| uniform(&mut rng, -2.0, 2.0) as f32).collect()).unwrap();
        let mut g = Graph::new();
        let xn = g.input(x.clone());
        let y = m.forward(&mut g, &s, xn).unwrap();
        assert_eq!(g.value(y), &m.infer(&s, &x).unwrap());
    }

    #[test]
    fn jacobian_vector_products_match_finite_differences() {
        let mut s = ParamStore::<f64>::new();
        let m = Mlp::init("m", spec(), 1.0, &mut s, &mut seeded(5));
        let mut rng = seeded(6);
        let x0: Vec<f64> = (0..5).map(|_| uniform(&mut rng, -1.0, 1.0)).collect();
        let u: Vec<f64> = (0..3).map(|_| uniform(&mut rng, -1.0, 1.0)).collect();
        let dir: Vec<f64> = (0..5).map(|_| uniform(&mut rng, -1.0, 1.0)).collect();
        // uᵀ J dir through reverse mode: gradient of uᵀ y w.r.t. x, dotted with dir
        let xid = s.add("input".into(), 1, 5, x0.clone());
        let mut g = Graph::new();
        let xn = g.param(&s, xid);
        let y = m.forward(&mut g, &s, xn).unwrap();
        let un = g.input(Tensor::from_vec(1, 3, u.clone()).unwrap());
        let p = g.mul(y, un).unwrap();
        let l = g.sum(p);
        g.backward(l, &mut s).unwrap();
        let analytic: f64 = s.get(xid).grad.iter().zip(&dir).map(|(a, b)| a * b).sum();
        let h = 1e-4;
        let f = |t: f64| {
            let x: Vec<f64> = x0.iter().zip(&dir).map(|(a, d)| a + t * d).collect();
            let y = m.infer(&s, &Tensor::from_vec(1, 5, x).unwrap()).unwrap();
            y.data.iter().zip(&u).map(|(a, b)| a * b).sum::<f64>()
        };
        let fd = (f(h) - f(-h)) / (2.0 * h);
        assert!((fd - analytic).abs() / analytic.abs().max(1e-8) < 1e-4, "fd {fd} analytic {analytic}");
    }
}
