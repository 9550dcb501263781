//! Seeded k-means for IVF partitions: k-means++ initialization, Lloyd
//! iterations with empty-cluster reseeding, deterministic for a fixed seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Entry;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

pub(crate) const MAX_ITERATIONS: usize = 25;
pub(crate) const CONVERGENCE_EPS: f64 = 1e-6;

/// Point counts below this are assigned sequentially even when the parallel
/// feature is enabled.
pub const PARALLEL_CUTOVER: usize = 256;

pub(crate) struct Clustering {
    pub centroids: Vec<Vec<f32>>,
    pub assignments: Vec<u32>,
}

fn l2_sq(a: &[f32], b: &[f32]) -> f64 {
    let mut acc = 0f64;
    for (&x, &y) in a.iter().zip(b) {
        let d = f64::from(x) - f64::from(y);
        acc += d * d;
    }
    acc
}

/// Index of the L2-nearest centroid; ties resolve to the lowest index.
pub fn nearest_centroid(vector: &[f32], centroids: &[Vec<f32>]) -> u32 {
    let mut best = 0u32;
    let mut best_d = f64::INFINITY;
    for (i, c) in centroids.iter().enumerate() {
        let d = l2_sq(vector, c);
        if d < best_d {
            best_d = d;
            best = i as u32;
        }
    }
    best
}

pub fn assign_all_seq(entries: &[Entry], centroids: &[Vec<f32>]) -> Vec<u32> {
    entries
        .iter()
        .map(|e| nearest_centroid(&e.vector, centroids))
        .collect()
}

#[cfg(feature = "parallel")]
pub fn assign_all_par(entries: &[Entry], centroids: &[Vec<f32>]) -> Vec<u32> {
    entries
        .par_iter()
        .map(|e| nearest_centroid(&e.vector, centroids))
        .collect()
}

pub(crate) fn assign_all(entries: &[Entry], centroids: &[Vec<f32>]) -> Vec<u32> {
    #[cfg(feature = "parallel")]
    if entries.len() >= PARALLEL_CUTOVER {
        return assign_all_par(entries, centroids);
    }
    assign_all_seq(entries, centroids)
}

pub(crate) fn train(entries: &[Entry], nlist: usize, seed: u64) -> Clustering {
    debug_assert!(nlist >= 1 && entries.len() >= nlist);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = init_plus_plus(entries, nlist, &mut rng);
    let mut assignments = assign_all(entries, &centroids);
    for _ in 0..MAX_ITERATIONS {
        let (next, displacement) = update_step(entries, &assignments, &centroids);
        centroids = next;
        assignments = assign_all(entries, &centroids);
        if displacement < CONVERGENCE_EPS {
            break;
        }
    }
    Clustering {
        centroids,
        assignments,
    }
}

/// k-means++: each next center is drawn with probability proportional to the
/// squared distance from the nearest already-chosen center.
fn init_plus_plus(entries: &[Entry], nlist: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f32>> {
    let n = entries.len();
    let mut chosen = vec![false; n];
    let first = rng.random_range(0..n);
    chosen[first] = true;

    let mut centroids = Vec::with_capacity(nlist);
    centroids.push(entries[first].vector.clone());
    let mut d2: Vec<f64> = entries
        .iter()
        .map(|e| l2_sq(&e.vector, &centroids[0]))
        .collect();

    while centroids.len() < nlist {
        let total: f64 = d2.iter().sum();
        let idx = if total > 0.0 {
            let r = rng.random::<f64>() * total;
            let mut cum = 0.0;
            let mut pick = None;
            for (i, &w) in d2.iter().enumerate() {
                if w <= 0.0 {
                    continue;
                }
                cum += w;
                if cum >= r {
                    pick = Some(i);
                    break;
                }
            }
            pick.unwrap_or_else(|| d2.iter().rposition(|&w| w > 0.0).unwrap_or(0))
        } else {
            // every remaining point coincides with a center
            chosen.iter().position(|&c| !c).unwrap_or(0)
        };
        chosen[idx] = true;
        let center = entries[idx].vector.clone();
        for (i, e) in entries.iter().enumerate() {
            let d = l2_sq(&e.vector, &center);
            if d < d2[i] {
                d2[i] = d;
            }
        }
        centroids.push(center);
    }
    centroids
}

/// One Lloyd update: new centroids are cluster means (64-bit accumulation),
/// emptied clusters are reseeded with the points farthest from their own
/// centroids, and the maximum centroid displacement is returned.
fn update_step(
    entries: &[Entry],
    assignments: &[u32],
    old: &[Vec<f32>],
) -> (Vec<Vec<f32>>, f64) {
    let nlist = old.len();
    let dim = old[0].len();
    let mut sums = vec![0f64; nlist * dim];
    let mut counts = vec![0usize; nlist];
    for (e, &a) in entries.iter().zip(assignments) {
        let row = &mut sums[a as usize * dim..(a as usize + 1) * dim];
        for (s, &v) in row.iter_mut().zip(&e.vector) {
            *s += f64::from(v);
        }
        counts[a as usize] += 1;
    }

    let mut next: Vec<Vec<f32>> = (0..nlist)
        .map(|j| {
            if counts[j] == 0 {
                old[j].clone()
            } else {
                let inv = 1.0 / counts[j] as f64;
                sums[j * dim..(j + 1) * dim]
                    .iter()
                    .map(|&s| (s * inv) as f32)
                    .collect()
            }
        })
        .collect();

    let mut reseed_used = vec![false; entries.len()];
    for j in 0..nlist {
        if counts[j] > 0 {
            continue;
        }
        let mut pick: Option<(usize, f64)> = None;
        for (i, e) in entries.iter().enumerate() {
            if reseed_used[i] {
                continue;
            }
            let d = l2_sq(&e.vector, &next[assignments[i] as usize]);
            if pick.map_or(true, |(_, best)| d > best) {
                pick = Some((i, d));
            }
        }
        if let Some((i, _)) = pick {
            reseed_used[i] = true;
            next[j] = entries[i].vector.clone();
        }
    }

    let displacement = old
        .iter()
        .zip(&next)
        .map(|(a, b)| l2_sq(a, b).sqrt())
        .fold(0f64, f64::max);
    (next, displacement)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entries_from(vectors: &[Vec<f32>]) -> Vec<Entry> {
        vectors
            .iter()
            .enumerate()
            .map(|(i, v)| Entry {
                doc_id: format!("d{i}"),
                vector: v.clone(),
            })
            .collect()
    }

    #[test]
    fn single_cluster_centroid_is_the_mean() {
        let entries = entries_from(&[
            vec![1.0, 0.0],
            vec![3.0, 2.0],
            vec![5.0, 4.0],
        ]);
        let clustering = train(&entries, 1, 7);
        assert_eq!(clustering.assignments, vec![0, 0, 0]);
        assert_eq!(clustering.centroids[0], vec![3.0, 2.0]);
    }

    #[test]
    fn training_is_deterministic_for_a_seed() {
        let entries = entries_from(
            &(0..40)
                .map(|i| vec![(i % 7) as f32, (i % 5) as f32, i as f32 * 0.1])
                .collect::<Vec<_>>(),
        );
        let a = train(&entries, 4, 11);
        let b = train(&entries, 4, 11);
        assert_eq!(a.assignments, b.assignments);
        assert_eq!(a.centroids, b.centroids);
    }

    #[test]
    fn nlist_equal_to_size_isolates_every_point() {
        let entries = entries_from(&[
            vec![0.0, 0.0],
            vec![10.0, 0.0],
            vec![0.0, 10.0],
            vec![10.0, 10.0],
        ]);
        let clustering = train(&entries, 4, 3);
        let mut counts = [0usize; 4];
        for &a in &clustering.assignments {
            counts[a as usize] += 1;
        }
        assert_eq!(counts, [1, 1, 1, 1]);
    }

    #[test]
    fn nearest_centroid_ties_resolve_to_lowest_index() {
        let centroids = vec![vec![1.0, 0.0], vec![-1.0, 0.0]];
        assert_eq!(nearest_centroid(&[0.0, 0.0], &centroids), 0);
    }
}
