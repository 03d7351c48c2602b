use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use rand::Rng;

use super::{Float, NetError, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamId(pub usize);

/// A named, trainable tensor and its accumulated gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Param<F> {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<F>,
    pub grad: Vec<F>,
}

impl<F: Float> Param<F> {
    pub fn tensor(&self) -> Tensor<F> {
        Tensor { rows: self.rows, cols: self.cols, data: self.data.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore<F> {
    params: Vec<Param<F>>,
}

impl<F: Float> ParamStore<F> {
    pub fn new() -> Self {
        Self { params: Vec::new() }
    }

    pub fn add(&mut self, name: String, rows: usize, cols: usize, data: Vec<F>) -> ParamId {
        assert_eq!(data.len(), rows * cols, "parameter {name} has wrong length");
        assert!(self.find(&name).is_none(), "duplicate parameter {name}");
        self.params.push(Param { name, rows, cols, grad: vec![F::zero(); data.len()], data });
        ParamId(self.params.len() - 1)
    }

    /// Entries drawn from `U(-bound, bound)`.
    pub fn add_uniform<R: Rng + ?Sized>(
        &mut self,
        name: String,
        rows: usize,
        cols: usize,
        bound: f64,
        rng: &mut R,
    ) -> ParamId {
        let data = (0..rows * cols).map(|_| F::lit(crate::rng::uniform(rng, -bound, bound))).collect();
        self.add(name, rows, cols, data)
    }

    pub fn get(&self, id: ParamId) -> &Param<F> {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Param<F> {
        &mut self.params[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn require(&self, name: &str) -> Result<ParamId, NetError> {
        self.find(name).ok_or_else(|| NetError::UnknownParam(name.into()))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param<F>)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    /// Ids whose names start with `prefix`.
    pub fn ids_with_prefix(&self, prefix: &str) -> Vec<ParamId> {
        self.iter().filter(|(_, p)| p.name.starts_with(prefix)).map(|(id, _)| id).collect()
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.iter_mut().for_each(|g| *g = F::zero());
        }
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.data.len()).sum()
    }

    pub fn cast<G: Float>(&self) -> ParamStore<G> {
        let conv = |v: &[F]| v.iter().map(|x| G::lit(x.as_f64())).collect();
        ParamStore {
            params: self
                .params
                .iter()
                .map(|p| Param { name: p.name.clone(), rows: p.rows, cols: p.cols, data: conv(&p.data), grad: conv(&p.grad) })
                .collect(),
        }
    }

    /// Copies values of every parameter that `other` also has (matched by name and shape).
    pub fn copy_matching_from(&mut self, other: &ParamStore<F>) -> usize {
        let mut copied = 0;
        for p in &mut self.params {
            if let Some(id) = other.find(&p.name) {
                let src = other.get(id);
                if src.rows == p.rows && src.cols == p.cols {
                    p.data.clone_from(&src.data);
                    copied += 1;
                }
            }
        }
        copied
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn uniform_init_respects_bound() {
        let mut s = ParamStore::<f32>::new();
        let id = s.add_uniform("w".into(), 8, 16, 0.25, &mut seeded(1));
        assert!(s.get(id).data.iter().all(|v| v.abs() <= 0.25));
        assert_eq!(s.find("w"), Some(id));
        assert_eq!(s.num_scalars(), 128);
    }

    #[test]
    fn cast_preserves_values() {
        let mut s = ParamStore::<f32>::new();
        s.add("a".into(), 1, 3, vec![0.1, -2.5, 3.0]);
        let d = s.cast::<f64>();
        assert_eq!(d.get(ParamId(0)).data, vec![0.1f32 as f64, -2.5, 3.0]);
    }
}
