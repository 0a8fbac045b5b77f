//! Deterministic inputs shared by the benchmarks.

use synthdoc_core::lstm::Batch;

const WORDS: &[&str] = &[
    "the", "euro", "opposition", "bank", "currency", "of", "and", "vote", "britain", "single", "treaty",
    "market", "central", "pound", "referendum", "union", "a", "in", "rates", "sterling",
];

/// `n` space-separated words drawn from a fixed list by a linear congruential walk.
pub fn text(n: usize) -> String {
    let mut x: u64 = 12345;
    let mut out = String::with_capacity(n * 7);
    for i in 0..n {
        x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        if i > 0 {
            out.push(' ');
        }
        out.push_str(WORDS[(x >> 33) as usize % WORDS.len()]);
    }
    out
}

/// A `batch × len` window over a cyclic symbol stream.
pub fn batch(vocab: usize, batch: usize, len: usize) -> Batch {
    let stream = |b: usize, off: usize| (0..len).map(|t| (b * 7 + t * 3 + off) % vocab).collect();
    Batch {
        inputs: (0..batch).map(|b| stream(b, 0)).collect(),
        targets: (0..batch).map(|b| stream(b, 3)).collect(),
    }
}

#[cfg(test)]
mod tests {
    #[test]
    fn fixtures_are_deterministic() {
        assert_eq!(super::text(50), super::text(50));
        assert_eq!(super::text(3).split(' ').count(), 3);
        let b = super::batch(10, 4, 20);
        assert_eq!(b.inputs.len(), 4);
        assert!(b.targets.iter().flatten().all(|&t| t < 10));
    }
}
