//! k-means with k-means++ seeding, internal validity indices, and the k scan.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Deref, RangeInclusive};

use serde::{Deserialize, Serialize};

use crate::matrix::{dist, sq_dist};
use crate::rng::{derive_seed, SeededRng};
use crate::{Error, Matrix, Result};

pub const MAX_LLOYD_ITER: usize = 300;
pub const LLOYD_REL_TOL: f64 = 1e-6;

/// Latent codes, one row per sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentMatrix {
    pub sample_ids: Vec<String>,
    pub values: Matrix,
}

impl Deref for LatentMatrix {
    type Target = Matrix;

    fn deref(&self) -> &Matrix {
        &self.values
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusteringSolution {
    pub k: usize,
    pub labels: Vec<usize>,
    pub centroids: Matrix,
    pub inertia: f64,
    pub n_init: usize,
    pub seed: u64,
}

impl ClusteringSolution {
    pub fn sizes(&self) -> Vec<usize> {
        cluster_sizes(&self.labels, self.k)
    }
}

pub fn cluster_sizes(labels: &[usize], k: usize) -> Vec<usize> {
    let mut sizes = vec![0; k];
    for &l in labels {
        sizes[l] += 1;
    }
    sizes
}

/// One seeded k-means++ / Lloyd run.
#[derive(Debug, Clone)]
pub struct LloydRun {
    pub labels: Vec<usize>,
    pub centroids: Matrix,
    pub inertia: f64,
    /// Inertia after every Lloyd iteration.
    pub trace: Vec<f64>,
}

fn distinct_rows(z: &Matrix) -> usize {
    let mut rows: Vec<Vec<u64>> = z
        .row_iter()
        .map(|r| r.iter().map(|x| (x + 0.0).to_bits()).collect())
        .collect();
    rows.sort_unstable();
    rows.dedup();
    rows.len()
}

/// Row indices sorted lexicographically by value (stable for equal rows).
fn canonical_order(z: &Matrix) -> Vec<usize> {
    let mut order: Vec<usize> = (0..z.rows()).collect();
    order.sort_by(|&a, &b| {
        z.row(a)
            .iter()
            .zip(z.row(b))
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(core::cmp::Ordering::Equal)
    });
    order
}

fn kmeans_pp(z: &Matrix, k: usize, rng: &mut SeededRng) -> Matrix {
    let n = z.rows();
    let mut centroids = Matrix::zeros(k, z.cols());
    let first = rng.below(n);
    centroids.row_mut(0).copy_from_slice(z.row(first));
    let mut d2: Vec<f64> = z.row_iter().map(|r| sq_dist(r, z.row(first))).collect();
    for c in 1..k {
        let total: f64 = d2.iter().sum();
        let target = rng.uniform() * total;
        let mut acc = 0.0;
        let mut pick = None;
        for (i, &d) in d2.iter().enumerate() {
            if d > 0.0 {
                acc += d;
                pick = Some(i);
                if acc > target {
                    break;
                }
            }
        }
        let pick = pick.unwrap_or_else(|| rng.below(n));
        centroids.row_mut(c).copy_from_slice(z.row(pick));
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(z.row(i), z.row(pick)));
        }
    }
    centroids
}

fn assign(z: &Matrix, centroids: &Matrix, labels: &mut [usize]) {
    for (i, label) in labels.iter_mut().enumerate() {
        let row = z.row(i);
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for c in 0..centroids.rows() {
            let d = sq_dist(row, centroids.row(c));
            if d < best_d {
                best_d = d;
                best = c;
            }
        }
        *label = best;
    }
}

fn means(z: &Matrix, labels: &[usize], k: usize) -> (Matrix, Vec<usize>) {
    let mut sums = Matrix::zeros(k, z.cols());
    let mut counts = vec![0usize; k];
    for (i, &l) in labels.iter().enumerate() {
        counts[l] += 1;
        for (s, x) in sums.row_mut(l).iter_mut().zip(z.row(i)) {
            *s += x;
        }
    }
    for (c, &n) in counts.iter().enumerate() {
        if n > 0 {
            for s in sums.row_mut(c) {
                *s /= n as f64;
            }
        }
    }
    (sums, counts)
}

/// Moves the point farthest from its centroid into each empty cluster.
fn repair_empty(
    z: &Matrix,
    labels: &mut [usize],
    centroids: &Matrix,
    counts: &mut [usize],
) -> bool {
    let mut repaired = false;
    for e in 0..counts.len() {
        if counts[e] > 0 {
            continue;
        }
        let far = (0..labels.len())
            .filter(|&i| counts[labels[i]] > 1)
            .map(|i| (i, sq_dist(z.row(i), centroids.row(labels[i]))))
            .fold(None::<(usize, f64)>, |best, (i, d)| match best {
                Some((_, bd)) if bd >= d => best,
                _ => Some((i, d)),
            });
        if let Some((i, _)) = far {
            counts[labels[i]] -= 1;
            labels[i] = e;
            counts[e] = 1;
            repaired = true;
        }
    }
    repaired
}

fn inertia_of(z: &Matrix, labels: &[usize], centroids: &Matrix) -> f64 {
    labels
        .iter()
        .enumerate()
        .map(|(i, &l)| sq_dist(z.row(i), centroids.row(l)))
        .sum()
}

/// A single k-means++ seeded Lloyd run. Callers validate `k`.
pub fn lloyd(z: &Matrix, k: usize, seed: u64) -> LloydRun {
    let mut rng = SeededRng::new(seed);
    let mut centroids = kmeans_pp(z, k, &mut rng);
    let mut labels = vec![0usize; z.rows()];
    let mut trace = Vec::new();
    let mut prev = f64::INFINITY;
    for _ in 0..MAX_LLOYD_ITER {
        assign(z, &centroids, &mut labels);
        let (mut m, mut counts) = means(z, &labels, k);
        if repair_empty(z, &mut labels, &m, &mut counts) {
            m = means(z, &labels, k).0;
        }
        centroids = m;
        let cur = inertia_of(z, &labels, &centroids);
        trace.push(cur);
        if cur == 0.0 || prev - cur <= LLOYD_REL_TOL * prev {
            break;
        }
        prev = cur;
    }
    let inertia = *trace.last().unwrap_or(&0.0);
    LloydRun {
        labels,
        centroids,
        inertia,
        trace,
    }
}

fn check_k(z: &Matrix, k: usize) -> Result<()> {
    if k < 2 || k > z.rows() {
        return Err(Error::KTooLarge { k, n: z.rows() });
    }
    let distinct = distinct_rows(z);
    if distinct < k {
        return Err(Error::DegenerateData { distinct, k });
    }
    Ok(())
}

/// Best-inertia solution over `n_init` restarts.
///
/// Restart `i` is seeded with `derive_seed(seed, i)`; ties keep the lowest
/// restart index.
pub fn kmeans(z: &Matrix, k: usize, n_init: usize, seed: u64) -> Result<ClusteringSolution> {
    check_k(z, k)?;
    if n_init == 0 {
        return Err(Error::InvalidConfig("n_init must be at least 1"));
    }
    // Runs on a canonical row order so that permuting the input samples
    // permutes the labels and nothing else.
    let order = canonical_order(z);
    let zc = z.select_rows(&order);
    let mut best: Option<LloydRun> = None;
    for i in 0..n_init {
        let run = lloyd(&zc, k, derive_seed(seed, i as u64));
        if best.as_ref().map_or(true, |b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    let best = best.expect("n_init >= 1");
    let mut labels = vec![0; z.rows()];
    for (pos, &orig) in order.iter().enumerate() {
        labels[orig] = best.labels[pos];
    }
    Ok(ClusteringSolution {
        k,
        labels,
        centroids: best.centroids,
        inertia: best.inertia,
        n_init,
        seed,
    })
}

fn present_clusters(labels: &[usize]) -> (usize, Vec<usize>) {
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let sizes = cluster_sizes(labels, k);
    let present = sizes.iter().filter(|&&s| s > 0).count();
    (present, sizes)
}

/// Mean silhouette width with Euclidean distance; singletons score 0.
pub fn silhouette(z: &Matrix, labels: &[usize]) -> Result<f64> {
    Ok(silhouette_samples(z, labels)?.iter().sum::<f64>() / labels.len() as f64)
}

pub fn silhouette_samples(z: &Matrix, labels: &[usize]) -> Result<Vec<f64>> {
    let n = z.rows();
    if labels.len() != n {
        return Err(Error::LengthMismatch(labels.len(), n));
    }
    if n < 3 {
        return Err(Error::TooFewSamples { needed: 3, got: n });
    }
    let (present, sizes) = present_clusters(labels);
    if present < 2 {
        return Err(Error::SingleCluster);
    }
    let k = sizes.len();
    // per-sample distance sums to every cluster
    let mut sums = Matrix::zeros(n, k);
    for i in 0..n {
        for j in (i + 1)..n {
            let d = dist(z.row(i), z.row(j));
            sums[(i, labels[j])] += d;
            sums[(j, labels[i])] += d;
        }
    }
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let own = labels[i];
        if sizes[own] == 1 {
            out.push(0.0);
            continue;
        }
        let a = sums[(i, own)] / (sizes[own] - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != own && sizes[c] > 0)
            .map(|c| sums[(i, c)] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let m = a.max(b);
        out.push(if m > 0.0 { (b - a) / m } else { 0.0 });
    }
    Ok(out)
}

/// Davies–Bouldin index over the non-empty clusters of `labels`.
pub fn davies_bouldin(z: &Matrix, labels: &[usize]) -> Result<f64> {
    if labels.len() != z.rows() {
        return Err(Error::LengthMismatch(labels.len(), z.rows()));
    }
    let (present, sizes) = present_clusters(labels);
    if present < 2 {
        return Err(Error::SingleCluster);
    }
    let k = sizes.len();
    let (centroids, _) = means(z, labels, k);
    let mut scatter = vec![0.0; k];
    for (i, &l) in labels.iter().enumerate() {
        scatter[l] += dist(z.row(i), centroids.row(l));
    }
    let live: Vec<usize> = (0..k).filter(|&c| sizes[c] > 0).collect();
    for &c in &live {
        scatter[c] /= sizes[c] as f64;
    }
    let mut total = 0.0;
    for &i in &live {
        let mut worst = 0.0f64;
        for &j in &live {
            if i == j {
                continue;
            }
            let d = dist(centroids.row(i), centroids.row(j));
            if d == 0.0 {
                return Err(Error::CoincidentCentroids(i.min(j), i.max(j)));
            }
            worst = worst.max((scatter[i] + scatter[j]) / d);
        }
        total += worst;
    }
    Ok(total / live.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KScanEntry {
    pub k: usize,
    pub silhouette: f64,
    pub dbi: f64,
    pub inertia: f64,
    pub sizes: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KScanResult {
    pub entries: Vec<KScanEntry>,
    #[serde(skip)]
    pub solutions: Vec<ClusteringSolution>,
}

impl KScanResult {
    /// Entry with the highest silhouette (smallest k on ties).
    pub fn best_by_silhouette(&self) -> Option<&KScanEntry> {
        self.entries
            .iter()
            .fold(None, |best: Option<&KScanEntry>, e| match best {
                Some(b) if b.silhouette >= e.silhouette => Some(b),
                _ => Some(e),
            })
    }

    pub fn entry(&self, k: usize) -> Option<&KScanEntry> {
        self.entries.iter().find(|e| e.k == k)
    }

    pub fn solution(&self, k: usize) -> Option<&ClusteringSolution> {
        self.solutions.iter().find(|s| s.k == k)
    }
}

/// k-means plus both indices for every k in `ks`, all with the same seed.
pub fn scan_k(
    z: &Matrix,
    ks: RangeInclusive<usize>,
    n_init: usize,
    seed: u64,
) -> Result<KScanResult> {
    let mut entries = Vec::new();
    let mut solutions = Vec::new();
    for k in ks {
        let sol = kmeans(z, k, n_init, seed)?;
        entries.push(KScanEntry {
            k,
            silhouette: silhouette(z, &sol.labels)?,
            dbi: davies_bouldin(z, &sol.labels)?,
            inertia: sol.inertia,
            sizes: sol.sizes(),
        });
        solutions.push(sol);
    }
    Ok(KScanResult { entries, solutions })
}
