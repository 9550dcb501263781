//! Inner-product scoring lanes over index entries: a sequential lane and,
//! with the `parallel` feature, a rayon data-parallel lane.

use super::Entry;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Scans smaller than this stay on the sequential lane even when the
/// parallel feature is enabled; fork-join overhead dominates tiny scans.
pub const PARALLEL_CUTOVER: usize = 1024;

/// Inner product accumulated in 64-bit partial sums, returned as the 32-bit
/// score used for ranking. Negative zero is canonicalized to keep tie
/// ordering platform-stable.
pub fn dot(a: &[f32], b: &[f32]) -> f32 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0f64;
    for (&x, &y) in a.iter().zip(b) {
        acc += f64::from(x) * f64::from(y);
    }
    let score = acc as f32;
    if score == 0.0 {
        0.0
    } else {
        score
    }
}

pub fn score_all_seq(entries: &[Entry], query: &[f32]) -> Vec<f32> {
    entries.iter().map(|e| dot(&e.vector, query)).collect()
}

#[cfg(feature = "parallel")]
pub fn score_all_par(entries: &[Entry], query: &[f32]) -> Vec<f32> {
    entries.par_iter().map(|e| dot(&e.vector, query)).collect()
}

pub(crate) fn score_all(entries: &[Entry], query: &[f32]) -> Vec<f32> {
    #[cfg(feature = "parallel")]
    if entries.len() >= PARALLEL_CUTOVER {
        return score_all_par(entries, query);
    }
    score_all_seq(entries, query)
}

pub(crate) fn score_subset(entries: &[Entry], positions: &[u32], query: &[f32]) -> Vec<f32> {
    #[cfg(feature = "parallel")]
    if positions.len() >= PARALLEL_CUTOVER {
        return positions
            .par_iter()
            .map(|&p| dot(&entries[p as usize].vector, query))
            .collect();
    }
    positions
        .iter()
        .map(|&p| dot(&entries[p as usize].vector, query))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(doc_id: &str, vector: Vec<f32>) -> Entry {
        Entry {
            doc_id: doc_id.to_string(),
            vector,
        }
    }

    #[test]
    fn dot_matches_hand_computation() {
        assert_eq!(dot(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]), 32.0);
        assert_eq!(dot(&[1.0, 0.0], &[0.0, 1.0]), 0.0);
    }

    #[test]
    fn negative_zero_is_canonicalized() {
        let score = dot(&[-0.0, 0.0], &[5.0, 0.0]);
        assert_eq!(score.to_bits(), 0f32.to_bits());
    }

    #[test]
    fn sequential_lane_scores_in_entry_order() {
        let entries = vec![entry("a", vec![1.0, 0.0]), entry("b", vec![0.0, 1.0])];
        assert_eq!(score_all_seq(&entries, &[2.0, 3.0]), vec![2.0, 3.0]);
    }

    #[cfg(feature = "parallel")]
    #[test]
    fn parallel_lane_matches_sequential_lane() {
        let entries: Vec<Entry> = (0..4096)
            .map(|i| entry(&format!("d{i}"), vec![i as f32 * 0.5, 1.0 - i as f32, 0.25]))
            .collect();
        let query = [0.3, -0.7, 1.9];
        assert_eq!(score_all_par(&entries, &query), score_all_seq(&entries, &query));
    }
}
