//! Lloyd's k-means, used for both the IVF coarse quantizer and PRF
//! feedback clustering.
//!
//! Initialization samples `k` distinct row indices from the caller's RNG.
//! Each iteration assigns every row to its nearest centroid (squared L2,
//! ties to the lower centroid index), repairs empty clusters, and moves each
//! centroid to the mean of its members.
//!
//! Repair visits empty clusters in index order. For each, the largest
//! cluster (ties to the lower index) is split: its members are ordered by
//! distance to their centroid, farthest first (ties by row index), and the
//! first half is moved to the empty cluster. With at least `k` rows a
//! cluster of size two or more always exists, so every cluster ends the
//! iteration non-empty.

use rand::Rng;
use rayon::prelude::*;

use crate::linalg::squared_distance;

pub const DEFAULT_ITERATIONS: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeans {
    pub dim: usize,
    /// `k x dim`, row-major.
    pub centroids: Vec<f32>,
    /// Cluster of each input row after the last iteration.
    pub assignments: Vec<u32>,
}

impl KMeans {
    pub fn k(&self) -> usize {
        self.centroids.len() / self.dim
    }

    pub fn centroid(&self, c: usize) -> &[f32] {
        &self.centroids[c * self.dim..(c + 1) * self.dim]
    }
}

/// Index of the centroid nearest to `v`, ties to the lower index.
pub fn nearest_centroid(v: &[f32], centroids: &[f32], dim: usize) -> u32 {
    let mut best = 0u32;
    let mut best_d = f32::INFINITY;
    for (c, centroid) in centroids.chunks_exact(dim).enumerate() {
        let d = squared_distance(v, centroid);
        if d < best_d {
            best_d = d;
            best = c as u32;
        }
    }
    best
}

/// Assigns every row of `data` to its nearest centroid.
pub fn assign(data: &[f32], centroids: &[f32], dim: usize) -> Vec<u32> {
    data.par_chunks_exact(dim)
        .map(|row| nearest_centroid(row, centroids, dim))
        .collect()
}

/// Runs Lloyd's algorithm on the row-major `data`.
///
/// Panics if `k` is zero or exceeds the number of rows; callers clamp first.
pub fn lloyd<R: Rng + ?Sized>(
    data: &[f32],
    dim: usize,
    k: usize,
    iterations: usize,
    rng: &mut R,
) -> KMeans {
    let n = data.len() / dim;
    assert!(k >= 1 && k <= n, "k-means needs 1 <= k <= rows (k={k}, rows={n})");

    let seeds = rand::seq::index::sample(rng, n, k);
    let mut centroids = Vec::with_capacity(k * dim);
    for i in seeds.iter() {
        centroids.extend_from_slice(&data[i * dim..(i + 1) * dim]);
    }
    let mut assignments = vec![0u32; n];

    for _ in 0..iterations {
        assignments = assign(data, &centroids, dim);
        repair_empty(data, dim, &centroids, &mut assignments, k);
        centroids = means(data, dim, &assignments, k);
    }

    KMeans {
        dim,
        centroids,
        assignments,
    }
}

fn repair_empty(data: &[f32], dim: usize, centroids: &[f32], assignments: &mut [u32], k: usize) {
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, &c) in assignments.iter().enumerate() {
        members[c as usize].push(i);
    }
    for empty in 0..k {
        if !members[empty].is_empty() {
            continue;
        }
        let largest = (0..k)
            .max_by(|&a, &b| members[a].len().cmp(&members[b].len()).then(b.cmp(&a)))
            .expect("k >= 1");
        let centroid = &centroids[largest * dim..(largest + 1) * dim];
        let mut by_distance: Vec<(f32, usize)> = members[largest]
            .iter()
            .map(|&i| (squared_distance(&data[i * dim..(i + 1) * dim], centroid), i))
            .collect();
        by_distance.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        let moved = by_distance.len() / 2;
        let mut moving: Vec<usize> = by_distance[..moved].iter().map(|&(_, i)| i).collect();
        moving.sort_unstable();
        for &i in &moving {
            assignments[i] = empty as u32;
        }
        members[largest].retain(|i| moving.binary_search(i).is_err());
        members[empty] = moving;
    }
}

fn means(data: &[f32], dim: usize, assignments: &[u32], k: usize) -> Vec<f32> {
    let mut sums = vec![0.0f64; k * dim];
    let mut counts = vec![0usize; k];
    for (row, &c) in data.chunks_exact(dim).zip(assignments) {
        let c = c as usize;
        counts[c] += 1;
        for (s, &x) in sums[c * dim..(c + 1) * dim].iter_mut().zip(row) {
            *s += f64::from(x);
        }
    }
    sums.chunks_exact(dim)
        .zip(&counts)
        .flat_map(|(s, &cnt)| s.iter().map(move |&x| (x / cnt.max(1) as f64) as f32))
        .collect()
}
