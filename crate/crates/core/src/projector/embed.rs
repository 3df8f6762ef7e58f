use sha2::{Digest, Sha256};

use super::TokenMatrix;

/// Stand-in for the generator's text encoder: each whitespace token maps to a
/// fixed pseudo-random vector derived from its hash and the seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashEmbedder {
    pub width: usize,
    pub seed: u64,
}

impl HashEmbedder {
    pub fn new(width: usize, seed: u64) -> Self {
        Self { width, seed }
    }

    /// One row per whitespace-separated token; an empty text gives zero rows.
    pub fn embed(&self, text: &str) -> TokenMatrix {
        let tokens: Vec<&str> = text.split_whitespace().collect();
        let rows: Vec<Vec<f64>> = tokens.iter().map(|t| self.token_vector(t)).collect();
        TokenMatrix::from_fn(rows.len(), self.width, |r, c| rows[r][c])
    }

    fn token_vector(&self, token: &str) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.width);
        let mut block = 0u64;
        while out.len() < self.width {
            let mut h = Sha256::new();
            h.update(self.seed.to_le_bytes());
            h.update(block.to_le_bytes());
            h.update(token.to_lowercase().as_bytes());
            for chunk in h.finalize().chunks_exact(4) {
                if out.len() == self.width {
                    break;
                }
                let v = u32::from_le_bytes(chunk.try_into().unwrap());
                out.push(v as f64 / u32::MAX as f64 * 2.0 - 1.0);
            }
            block += 1;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stable_per_token() {
        let e = HashEmbedder::new(20, 1);
        let m = e.embed("a fox and a Fox");
        assert_eq!(m.shape(), (5, 20));
        assert_eq!(m.row(0), m.row(3));
        assert_eq!(m.row(1), m.row(4));
        assert_ne!(m.row(0), m.row(1));
        assert!(m.data().iter().all(|v| (-1.0..=1.0).contains(v)));
        assert_ne!(HashEmbedder::new(20, 2).embed("fox").row(0), m.row(1));
        assert_eq!(e.embed("  ").rows(), 0);
    }
}
