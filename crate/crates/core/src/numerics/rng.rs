use rand::{Rng as _, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Seedable, portable random source. ChaCha8 is counter-based and produces
/// the same stream on every platform, which the determinism tests rely on.
pub struct SeedRng {
    inner: ChaCha8Rng,
}

impl SeedRng {
    pub fn new(seed: u64) -> Self {
        SeedRng { inner: ChaCha8Rng::seed_from_u64(seed) }
    }

    /// Derive an independent child stream. Used to give each subsystem its
    /// own generator so adding draws in one place never shifts another.
    pub fn split(&mut self) -> SeedRng {
        SeedRng::new(self.inner.next_u64())
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.inner.gen::<f64>()
    }

    /// Standard normal via Box-Muller.
    pub fn normal(&mut self) -> f64 {
        let u1 = self.inner.gen::<f64>().max(f64::MIN_POSITIVE);
        let u2 = self.inner.gen::<f64>();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    pub fn below(&mut self, n: usize) -> usize {
        self.inner.gen_range(0..n)
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.inner.gen_range(0..=i);
            items.swap(i, j);
        }
    }
}
