use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};

use super::NnError;

pub const EMBED_DIM: usize = 384;

fn word_vector(word: &str) -> Vec<f64> {
    let digest = Sha256::digest(word.as_bytes());
    let seed = u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..EMBED_DIM).map(|_| StandardNormal.sample(&mut rng)).collect()
}

/// Hashed bag-of-words embedding: lowercase word tokens, one fixed Gaussian
/// vector per word, mean-pooled and L2-normalised.
pub fn embed_text(text: &str) -> Result<Vec<f64>, NnError> {
    let lower = text.to_lowercase();
    let words: Vec<&str> = lower.split(|c: char| !c.is_alphanumeric()).filter(|w| !w.is_empty()).collect();
    if words.is_empty() {
        return Err(NnError::Embedding(format!("no words in {text:?}")));
    }
    let mut acc = vec![0.0; EMBED_DIM];
    for w in &words {
        for (a, v) in acc.iter_mut().zip(word_vector(w)) {
            *a += v;
        }
    }
    let norm = acc.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(NnError::Embedding(format!("degenerate embedding for {text:?}")));
    }
    Ok(acc.into_iter().map(|v| v / norm).collect())
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    dot / (na * nb)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_unit_norm() {
        let a = embed_text("Bring me the red heart.").unwrap();
        assert_eq!(a, embed_text("Bring me the red heart.").unwrap());
        assert_eq!(a.len(), EMBED_DIM);
        for s in ["Rotate the block.", "x", "Sweep the block without touching the pan."] {
            let n = embed_text(s).unwrap().iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((n - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn case_and_punctuation_insensitive() {
        assert_eq!(embed_text("Rotate the BLOCK").unwrap(), embed_text("rotate the block.").unwrap());
    }

    #[test]
    fn distinct_tokens_differ() {
        let a = embed_text("Bring me a tomato.").unwrap();
        let b = embed_text("Bring me an apple.").unwrap();
        assert!(cosine(&a, &b) < 1.0);
    }

    #[test]
    fn empty_is_an_error() {
        assert!(matches!(embed_text(""), Err(NnError::Embedding(_))));
        assert!(matches!(embed_text(" .,"), Err(NnError::Embedding(_))));
    }
}
