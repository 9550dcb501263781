//! Deterministic trigram hash embedder. Bit-reproducible across platforms,
//! so indexes and tests built from it never drift.

use super::{EmbedError, Embedder, EmbeddingVector};
use crate::hash::fnv1a64;

/// Embeds text by hashing character trigrams into a signed bucket histogram:
/// lowercase, collapse whitespace runs to single spaces, slide 3-char windows
/// (shorter texts hash as one token), FNV-1a each window XOR the seed, add
/// +1/-1 (by the hash's top bit) into `hash mod dimension`, then L2-normalize.
/// An all-zero accumulator becomes the first basis vector.
pub fn local_hash_embed(text: &str, dimension: usize, seed: u64) -> Vec<f32> {
    assert!(dimension >= 2, "embedding dimension must be at least 2");

    let canon = canonicalize(text);
    let chars: Vec<char> = canon.chars().collect();

    let mut acc = vec![0f32; dimension];
    let mut buf = String::with_capacity(12);
    let mut accumulate = |token: &str| {
        let h = fnv1a64(token.as_bytes()) ^ seed;
        let bucket = (h % dimension as u64) as usize;
        let sign = if h >> 63 == 0 { 1f32 } else { -1f32 };
        acc[bucket] += sign;
    };

    if chars.len() < 3 {
        accumulate(&canon);
    } else {
        for window in chars.windows(3) {
            buf.clear();
            buf.extend(window);
            accumulate(&buf);
        }
    }

    let norm_sq: f64 = acc.iter().map(|&v| f64::from(v) * f64::from(v)).sum();
    if norm_sq == 0.0 {
        acc[0] = 1.0;
        return acc;
    }
    let norm = norm_sq.sqrt();
    acc.iter().map(|&v| (f64::from(v) / norm) as f32).collect()
}

fn canonicalize(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut in_whitespace = false;
    for ch in text.chars() {
        if ch.is_whitespace() {
            if !in_whitespace {
                out.push(' ');
            }
            in_whitespace = true;
        } else {
            out.extend(ch.to_lowercase());
            in_whitespace = false;
        }
    }
    out
}

/// Offline embedding provider backed by [`local_hash_embed`]. A pure function
/// of `(text, dimension, seed)`.
#[derive(Debug, Clone)]
pub struct LocalHashEmbedder {
    dimension: usize,
    seed: u64,
}

impl LocalHashEmbedder {
    pub fn new(dimension: usize, seed: u64) -> Result<Self, EmbedError> {
        if dimension < 2 {
            return Err(EmbedError::InvalidConfig(format!(
                "dimension must be at least 2, got {dimension}"
            )));
        }
        Ok(Self { dimension, seed })
    }
}

impl Embedder for LocalHashEmbedder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed_text(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        if text.trim().is_empty() {
            return Err(EmbedError::EmptyText);
        }
        Ok(EmbeddingVector {
            values: local_hash_embed(text, self.dimension, self.seed),
            source_id: None,
        })
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        if let Some(empty) = texts.iter().position(|t| t.trim().is_empty()) {
            return Err(EmbedError::BatchChunkFailed {
                start: empty,
                end: empty + 1,
                source: Box::new(EmbedError::EmptyText),
            });
        }
        #[cfg(feature = "parallel")]
        {
            use rayon::prelude::*;
            Ok(texts
                .par_iter()
                .map(|t| EmbeddingVector {
                    values: local_hash_embed(t, self.dimension, self.seed),
                    source_id: None,
                })
                .collect())
        }
        #[cfg(not(feature = "parallel"))]
        {
            Ok(texts
                .iter()
                .map(|t| EmbeddingVector {
                    values: local_hash_embed(t, self.dimension, self.seed),
                    source_id: None,
                })
                .collect())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn bits(values: &[f32]) -> Vec<u32> {
        values.iter().map(|v| v.to_bits()).collect()
    }

    // Golden vectors below were computed by hand-executing the hashing steps
    // in an independent implementation and frozen as f32 bit patterns.

    #[test]
    fn golden_abc_d8_s42() {
        let v = local_hash_embed("abc", 8, 42);
        let expected = [
            0x0000_0000u32,
            0xBF80_0000, // -1.0
            0x0000_0000,
            0x0000_0000,
            0x0000_0000,
            0x0000_0000,
            0x0000_0000,
            0x0000_0000,
        ];
        assert_eq!(bits(&v), expected);
    }

    #[test]
    fn golden_multi_trigram_d8_s7() {
        let v = local_hash_embed("patent retrieval", 8, 7);
        let expected = [
            0x0000_0000u32,
            0x0000_0000,
            0x3F00_0000, // 0.5
            0x3F00_0000,
            0xBF00_0000, // -0.5
            0xBF00_0000,
            0x0000_0000,
            0x0000_0000,
        ];
        assert_eq!(bits(&v), expected);
    }

    #[test]
    fn golden_case_and_whitespace_folding_d6_s42() {
        let v = local_hash_embed("Hello  World", 6, 42);
        let expected = [
            0x3F64_F92Eu32, // 2/sqrt(5)
            0x0000_0000,
            0x3EE4_F92E, // 1/sqrt(5)
            0x0000_0000,
            0x0000_0000,
            0x0000_0000,
        ];
        assert_eq!(bits(&v), expected);
        assert_eq!(bits(&local_hash_embed("hello world", 6, 42)), expected);
    }

    #[test]
    fn golden_short_text_whole_token_d4_s1() {
        let v = local_hash_embed("ab", 4, 1);
        assert_eq!(bits(&v), [0, 0, 0, 0x3F80_0000]);
    }

    #[test]
    fn aaa_has_unit_norm() {
        let v = EmbeddingVector {
            values: local_hash_embed("aaa", 8, 42),
            source_id: None,
        };
        assert!((v.l2_norm() - 1.0).abs() < 1e-4);
    }

    #[test]
    fn embedding_is_deterministic() {
        let a = local_hash_embed("semiconductor wafer etching", 64, 9);
        let b = local_hash_embed("semiconductor wafer etching", 64, 9);
        assert_eq!(bits(&a), bits(&b));
    }

    #[test]
    fn different_seeds_give_different_vectors() {
        let a = local_hash_embed("semiconductor wafer etching", 64, 1);
        let b = local_hash_embed("semiconductor wafer etching", 64, 2);
        assert_ne!(a, b);
    }

    #[test]
    fn random_text_pairs_rarely_collide() {
        let mut rng = ChaCha8Rng::seed_from_u64(1234);
        let mut collisions = 0;
        for _ in 0..1000 {
            let a = random_text(&mut rng);
            let mut b = random_text(&mut rng);
            while b == a {
                b = random_text(&mut rng);
            }
            if local_hash_embed(&a, 64, 42) == local_hash_embed(&b, 64, 42) {
                collisions += 1;
            }
        }
        assert!(collisions <= 5, "{collisions} collisions in 1000 pairs");
    }

    fn random_text(rng: &mut ChaCha8Rng) -> String {
        let len = rng.random_range(6..20);
        (0..len)
            .map(|_| char::from(rng.random_range(b'a'..=b'z')))
            .collect()
    }

    #[test]
    fn batch_equals_elementwise_map() {
        let embedder = LocalHashEmbedder::new(16, 3).unwrap();
        let texts: Vec<String> = ["one", "two", "three", "four"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let batch = embedder.embed_batch(&texts).unwrap();
        for (text, vector) in texts.iter().zip(&batch) {
            assert_eq!(vector, &embedder.embed_text(text).unwrap());
        }
    }

    #[test]
    fn permuted_batch_gives_permuted_output() {
        let embedder = LocalHashEmbedder::new(16, 3).unwrap();
        let texts: Vec<String> = ["a1", "b2", "c3"].iter().map(|s| s.to_string()).collect();
        let permuted: Vec<String> = vec![texts[2].clone(), texts[0].clone(), texts[1].clone()];
        let out = embedder.embed_batch(&texts).unwrap();
        let out_permuted = embedder.embed_batch(&permuted).unwrap();
        assert_eq!(out_permuted[0], out[2]);
        assert_eq!(out_permuted[1], out[0]);
        assert_eq!(out_permuted[2], out[1]);
    }

    #[test]
    fn batch_with_empty_text_reports_index() {
        let embedder = LocalHashEmbedder::new(16, 3).unwrap();
        let texts: Vec<String> = ["ok", " ", "fine"].iter().map(|s| s.to_string()).collect();
        match embedder.embed_batch(&texts) {
            Err(EmbedError::BatchChunkFailed { start: 1, end: 2, source }) => {
                assert!(matches!(*source, EmbedError::EmptyText));
            }
            other => panic!("unexpected result: {other:?}"),
        }
    }
}
