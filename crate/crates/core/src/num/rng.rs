use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Counter-based random stream.
///
/// A stream is a ChaCha8 keystream selected by `(seed, stream)`; the counter
/// is the keystream word position. Streams produced by [`RngStream::split`]
/// use distinct stream ids under the same key and therefore never overlap.
#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream: u64,
    rng: ChaCha8Rng,
}

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    fn with_stream(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        RngStream { seed, stream, rng }
    }

    /// Restores a stream at an exact `(seed, stream, counter)` position.
    pub fn at(seed: u64, stream: u64, counter: u128) -> Self {
        let mut s = Self::with_stream(seed, stream);
        s.rng.set_word_pos(counter);
        s
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    pub fn counter(&self) -> u128 {
        self.rng.get_word_pos()
    }

    /// Child stream `id`; independent of how far the parent has advanced.
    pub fn split(&self, id: u64) -> RngStream {
        Self::with_stream(self.seed, mix(self.stream ^ mix(id.wrapping_add(1))))
    }

    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    pub fn normals(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.normal()).collect()
    }

    pub fn below(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_position_same_draws() {
        let mut a = RngStream::new(7);
        a.uniform();
        let pos = a.counter();
        let x = a.uniform();
        let mut b = RngStream::at(7, 0, pos);
        assert_eq!(x, b.uniform());
    }

    #[test]
    fn split_ignores_parent_progress() {
        let a = RngStream::new(3);
        let mut b = RngStream::new(3);
        for _ in 0..10 {
            b.uniform();
        }
        assert_eq!(a.split(5).uniform(), b.split(5).uniform());
        assert_ne!(a.split(5).uniform(), a.split(6).uniform());
    }
}
