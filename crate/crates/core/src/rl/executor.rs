/// Runs a closure over every item of a slice, possibly in parallel.
///
/// Implementations must call `f` exactly once per item; results must not
/// depend on scheduling, so every item carries its own rng.
pub trait Executor {
    fn run<T: Send, F: Fn(usize, &mut T) + Sync>(&self, items: &mut [T], f: F);
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl Executor for Sequential {
    fn run<T: Send, F: Fn(usize, &mut T) + Sync>(&self, items: &mut [T], f: F) {
        for (i, item) in items.iter_mut().enumerate() {
            f(i, item);
        }
    }
}
