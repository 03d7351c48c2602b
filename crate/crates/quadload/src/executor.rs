use quadload_core::rl::Executor;
use rayon::prelude::*;

/// Steps environments on the rayon pool. Each item carries its own random
/// stream, so results match [`quadload_core::rl::Sequential`] exactly.
#[derive(Debug, Clone, Copy, Default)]
pub struct RayonExecutor;

impl Executor for RayonExecutor {
    fn run<T: Send, F: Fn(usize, &mut T) + Sync>(&self, items: &mut [T], f: F) {
        items.par_iter_mut().enumerate().for_each(|(i, item)| f(i, item));
    }
}
