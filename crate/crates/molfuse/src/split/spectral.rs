//! Spectral clustering on a Tanimoto affinity matrix.
//!
//! Normalized Laplacian L = I - D^{-1/2} A D^{-1/2}, full eigensolve via
//! cyclic Jacobi (dense symmetric, fine at desk scale), smallest-k
//! eigenvectors row-normalized, then k-means with k-means++ seeding under a
//! fixed stream. Molecules with zero affinity to everything are left out of
//! the eigenproblem and assigned to the nearest centroid afterwards.

use crate::cliff::tanimoto;
use crate::fingerprint::BitFingerprint;
use crate::rng::SeedStream;

use super::{ClusterLabel, SplitError};

pub const JACOBI_TOLERANCE: f64 = 1e-10;
const JACOBI_MAX_SWEEPS: usize = 100;
const KMEANS_RESTARTS: usize = 100;
const KMEANS_MAX_ITERS: usize = 300;

/// Dense symmetric matrix in row-major order.
pub(crate) struct SymMatrix {
    pub n: usize,
    pub data: Vec<f64>,
}

impl SymMatrix {
    fn zeros(n: usize) -> Self {
        SymMatrix {
            n,
            data: vec![0.0; n * n],
        }
    }
    #[inline]
    fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }
    #[inline]
    fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix.
///
/// Returns (eigenvalues, eigenvectors as columns), sorted ascending by
/// eigenvalue. Iterates sweeps until the off-diagonal Frobenius norm drops
/// below `tol`.
pub(crate) fn jacobi_eigen(m: &SymMatrix, tol: f64) -> (Vec<f64>, SymMatrix) {
    let n = m.n;
    let mut a = SymMatrix {
        n,
        data: m.data.clone(),
    };
    let mut v = SymMatrix::zeros(n);
    for i in 0..n {
        v.set(i, i, 1.0);
    }

    for _sweep in 0..JACOBI_MAX_SWEEPS {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a.get(p, q) * a.get(p, q);
            }
        }
        if (2.0 * off).sqrt() < tol {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a.get(p, q);
                if apq.abs() < tol * 1e-3 {
                    continue;
                }
                let theta = (a.get(q, q) - a.get(p, p)) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;

                for i in 0..n {
                    let aip = a.get(i, p);
                    let aiq = a.get(i, q);
                    a.set(i, p, c * aip - s * aiq);
                    a.set(i, q, s * aip + c * aiq);
                }
                for i in 0..n {
                    let api = a.get(p, i);
                    let aqi = a.get(q, i);
                    a.set(p, i, c * api - s * aqi);
                    a.set(q, i, s * api + c * aqi);
                }
                for i in 0..n {
                    let vip = v.get(i, p);
                    let viq = v.get(i, q);
                    v.set(i, p, c * vip - s * viq);
                    v.set(i, q, s * vip + c * viq);
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a.get(i, i).partial_cmp(&a.get(j, j)).unwrap());
    let eigenvalues: Vec<f64> = order.iter().map(|&i| a.get(i, i)).collect();
    let mut vectors = SymMatrix::zeros(n);
    for (col, &src) in order.iter().enumerate() {
        for row in 0..n {
            vectors.set(row, col, v.get(row, src));
        }
    }
    (eigenvalues, vectors)
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Lloyd's algorithm with k-means++ seeding. Returns (labels, inertia).
fn kmeans_once(rows: &[Vec<f64>], k: usize, rng: &mut SeedStream) -> (Vec<usize>, f64) {
    let n = rows.len();
    let dim = rows[0].len();

    // k-means++ seeding
    let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(k);
    centroids.push(rows[rng.index(n)].clone());
    let mut min_d2: Vec<f64> = rows
        .iter()
        .map(|r| squared_distance(r, &centroids[0]))
        .collect();
    while centroids.len() < k {
        let total: f64 = min_d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.next_f64() * total;
            let mut chosen = n - 1;
            for (i, &w) in min_d2.iter().enumerate() {
                if target < w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            chosen
        } else {
            // all points coincide with some centroid; take the lowest index
            // not yet used as a centroid
            (0..n)
                .find(|&i| !centroids.iter().any(|c| c == &rows[i]))
                .unwrap_or(0)
        };
        centroids.push(rows[next].clone());
        for (i, row) in rows.iter().enumerate() {
            let d = squared_distance(row, centroids.last().unwrap());
            if d < min_d2[i] {
                min_d2[i] = d;
            }
        }
    }

    let mut labels = vec![0usize; n];
    for _ in 0..KMEANS_MAX_ITERS {
        let mut changed = false;
        for (i, row) in rows.iter().enumerate() {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (c, centroid) in centroids.iter().enumerate() {
                let d = squared_distance(row, centroid);
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            if labels[i] != best {
                labels[i] = best;
                changed = true;
            }
        }

        // empty-cluster repair: move the point farthest from its centroid
        loop {
            let mut counts = vec![0usize; k];
            for &l in &labels {
                counts[l] += 1;
            }
            let Some(empty) = counts.iter().position(|&c| c == 0) else {
                break;
            };
            let victim = (0..n)
                .filter(|&i| counts[labels[i]] > 1)
                .max_by(|&i, &j| {
                    let di = squared_distance(&rows[i], &centroids[labels[i]]);
                    let dj = squared_distance(&rows[j], &centroids[labels[j]]);
                    di.partial_cmp(&dj).unwrap().then(j.cmp(&i))
                })
                .expect("n >= k guarantees a donor cluster");
            labels[victim] = empty;
            changed = true;
        }

        for (c, centroid) in centroids.iter_mut().enumerate() {
            let members: Vec<&Vec<f64>> = rows
                .iter()
                .zip(&labels)
                .filter(|(_, &l)| l == c)
                .map(|(r, _)| r)
                .collect();
            if members.is_empty() {
                continue;
            }
            for d in 0..dim {
                centroid[d] = members.iter().map(|m| m[d]).sum::<f64>() / members.len() as f64;
            }
        }
        if !changed {
            break;
        }
    }

    let inertia: f64 = rows
        .iter()
        .zip(&labels)
        .map(|(r, &l)| squared_distance(r, &centroids[l]))
        .sum();
    (labels, inertia)
}

/// Best of `KMEANS_RESTARTS` runs by inertia; ties keep the earlier run.
pub(crate) fn kmeans(rows: &[Vec<f64>], k: usize, rng: &mut SeedStream) -> Vec<usize> {
    let mut best_labels = None;
    let mut best_inertia = f64::INFINITY;
    for _ in 0..KMEANS_RESTARTS {
        let (labels, inertia) = kmeans_once(rows, k, rng);
        if inertia < best_inertia {
            best_inertia = inertia;
            best_labels = Some(labels);
        }
    }
    best_labels.expect("at least one restart")
}

/// Cluster fingerprints into k groups by spectral embedding of the Tanimoto
/// affinity graph.
pub fn spectral_cluster(
    fingerprints: &[BitFingerprint],
    k: usize,
    seed: u64,
) -> Result<Vec<ClusterLabel>, SplitError> {
    let n = fingerprints.len();
    if n < k || k == 0 {
        return Err(SplitError::InsufficientData {
            needed: k.max(1),
            got: n,
        });
    }

    let mut affinity = SymMatrix::zeros(n);
    for i in 0..n {
        for j in (i + 1)..n {
            let t = tanimoto(&fingerprints[i], &fingerprints[j])
                .map_err(|e| SplitError::Affinity(e.to_string()))?;
            affinity.set(i, j, t);
            affinity.set(j, i, t);
        }
    }

    let degree: Vec<f64> = (0..n)
        .map(|i| (0..n).map(|j| affinity.get(i, j)).sum())
        .collect();
    let connected: Vec<usize> = (0..n).filter(|&i| degree[i] > 0.0).collect();

    let embedding: Vec<Vec<f64>> = if connected.len() < k {
        // no usable affinity structure; fall back to index order round-robin
        return Ok((0..n)
            .map(|i| ClusterLabel {
                index: i,
                cluster: i % k,
            })
            .collect());
    } else {
        let m = connected.len();
        let mut laplacian = SymMatrix::zeros(m);
        for (bi, &i) in connected.iter().enumerate() {
            for (bj, &j) in connected.iter().enumerate() {
                let norm = affinity.get(i, j) / (degree[i] * degree[j]).sqrt();
                let l = if bi == bj { 1.0 - norm } else { -norm };
                laplacian.set(bi, bj, l);
            }
        }
        let (_values, vectors) = jacobi_eigen(&laplacian, JACOBI_TOLERANCE);
        let mut rows = vec![vec![0.0; k]; n];
        for (bi, &i) in connected.iter().enumerate() {
            for c in 0..k {
                rows[i][c] = vectors.get(bi, c);
            }
            let norm: f64 = rows[i].iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.0 {
                for x in rows[i].iter_mut() {
                    *x /= norm;
                }
            }
        }
        rows
    };

    let mut rng = SeedStream::new(seed, "kmeans");
    let connected_rows: Vec<Vec<f64>> = connected.iter().map(|&i| embedding[i].clone()).collect();
    let connected_labels = kmeans(&connected_rows, k, &mut rng);

    // centroids of the final labeling, for the post-hoc isolated assignment
    let dim = k;
    let mut centroids = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (row, &l) in connected_rows.iter().zip(&connected_labels) {
        counts[l] += 1;
        for d in 0..dim {
            centroids[l][d] += row[d];
        }
    }
    for (c, count) in counts.iter().enumerate() {
        if *count > 0 {
            for d in 0..dim {
                centroids[c][d] /= *count as f64;
            }
        }
    }

    let mut labels = vec![usize::MAX; n];
    for (bi, &i) in connected.iter().enumerate() {
        labels[i] = connected_labels[bi];
    }
    for i in 0..n {
        if labels[i] == usize::MAX {
            let zero = vec![0.0; dim];
            let nearest = (0..k)
                .min_by(|&a, &b| {
                    squared_distance(&zero, &centroids[a])
                        .partial_cmp(&squared_distance(&zero, &centroids[b]))
                        .unwrap()
                        .then(a.cmp(&b))
                })
                .unwrap();
            labels[i] = nearest;
        }
    }

    Ok(labels
        .into_iter()
        .enumerate()
        .map(|(index, cluster)| ClusterLabel { index, cluster })
        .collect())
}

/// Adjusted Rand index between two labelings.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len();
    let ka = a.iter().max().map_or(0, |&m| m + 1);
    let kb = b.iter().max().map_or(0, |&m| m + 1);
    let mut table = vec![vec![0usize; kb]; ka];
    for i in 0..n {
        table[a[i]][b[i]] += 1;
    }
    let choose2 = |x: usize| (x * x.saturating_sub(1)) as f64 / 2.0;
    let sum_ij: f64 = table
        .iter()
        .flat_map(|row| row.iter())
        .map(|&x| choose2(x))
        .sum();
    let sum_a: f64 = table.iter().map(|row| choose2(row.iter().sum())).sum();
    let sum_b: f64 = (0..kb)
        .map(|j| choose2(table.iter().map(|row| row[j]).sum()))
        .sum();
    let expected = sum_a * sum_b / choose2(n);
    let max_index = (sum_a + sum_b) / 2.0;
    if (max_index - expected).abs() < 1e-300 {
        return 1.0;
    }
    (sum_ij - expected) / (max_index - expected)
}
