//! Multi-seed cluster stability.
//!
//! Each k is clustered `R` times with seeds `base_seed .. base_seed + R`.
//! Run 0 is the reference; every other run is relabeled onto it by an exact
//! maximum-overlap assignment ([`hungarian`]) and each reference cluster's
//! stability is its mean Jaccard index against the aligned clusters.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::RangeInclusive;

use serde::{Deserialize, Serialize};

use crate::clustering::{cluster_sizes, davies_bouldin, kmeans, silhouette, ClusteringSolution};
use crate::{Error, Matrix, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    /// `perm[row] = column`.
    pub perm: Vec<usize>,
    pub cost: f64,
}

/// Shortest-augmenting-path Hungarian method with row/column potentials.
fn solve(cost: &[f64], n: usize) -> (Vec<usize>, f64) {
    if n == 0 {
        return (Vec::new(), 0.0);
    }
    let at = |i: usize, j: usize| cost[(i - 1) * n + (j - 1)];
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    // col_row[j]: row matched to column j (1-based, 0 = none)
    let mut col_row = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        col_row[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = col_row[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = at(i0, j) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[col_row[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if col_row[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            col_row[j0] = col_row[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut perm = vec![0; n];
    for j in 1..=n {
        perm[col_row[j] - 1] = j - 1;
    }
    let total = perm.iter().enumerate().map(|(i, &j)| cost[i * n + j]).sum();
    (perm, total)
}

fn sub_cost(cost: &Matrix, rows: &[usize], cols: &[usize]) -> Vec<f64> {
    let mut out = Vec::with_capacity(rows.len() * cols.len());
    for &i in rows {
        for &j in cols {
            out.push(cost[(i, j)]);
        }
    }
    out
}

/// Exact minimum-cost perfect assignment on a square matrix.
///
/// Among optimal assignments the lexicographically smallest permutation is
/// returned: rows are fixed in order to the lowest column that still admits
/// an optimal completion.
pub fn hungarian(cost: &Matrix) -> Result<Assignment> {
    let (r, c) = cost.shape();
    if r != c {
        return Err(Error::NonSquare { rows: r, cols: c });
    }
    if !cost.is_finite() {
        return Err(Error::NonFinite);
    }
    let n = r;
    let (_, optimum) = solve(cost.as_slice(), n);
    let scale: f64 = cost.as_slice().iter().map(|x| x.abs()).fold(0.0, f64::max);
    let tol = 1e-12 * (1.0 + scale) * n.max(1) as f64;

    let mut target = optimum;
    let mut free_cols: Vec<usize> = (0..n).collect();
    let mut perm = Vec::with_capacity(n);
    for i in 0..n {
        let rest_rows: Vec<usize> = ((i + 1)..n).collect();
        let mut chosen = None;
        for (pos, &j) in free_cols.iter().enumerate() {
            if rest_rows.is_empty() {
                chosen = Some(pos);
                break;
            }
            let cols: Vec<usize> = free_cols.iter().copied().filter(|&x| x != j).collect();
            let (_, rest) = solve(&sub_cost(cost, &rest_rows, &cols), rest_rows.len());
            if cost[(i, j)] + rest <= target + tol {
                chosen = Some(pos);
                break;
            }
        }
        // The optimum always admits a completion; fall back to the first column
        // only if rounding rejected every candidate.
        let pos = chosen.unwrap_or(0);
        let j = free_cols.remove(pos);
        target -= cost[(i, j)];
        perm.push(j);
    }
    let cost_total = perm.iter().enumerate().map(|(i, &j)| cost[(i, j)]).sum();
    Ok(Assignment {
        perm,
        cost: cost_total,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelAlignment {
    /// `permutation[run_cluster] = reference_cluster`.
    pub permutation: Vec<usize>,
    /// `overlap[(reference_cluster, run_cluster)]` sample counts.
    pub overlap: Matrix,
    /// Run labels mapped into reference label space.
    pub aligned: Vec<usize>,
}

impl LabelAlignment {
    /// Samples on which the aligned run agrees with the reference.
    pub fn agreement(&self) -> usize {
        self.permutation
            .iter()
            .enumerate()
            .map(|(run_c, &ref_c)| self.overlap[(ref_c, run_c)] as usize)
            .sum()
    }
}

/// Relabels `run` onto `reference` by maximizing total overlap.
pub fn align(reference: &[usize], run: &[usize], k: usize) -> Result<LabelAlignment> {
    if reference.len() != run.len() {
        return Err(Error::LengthMismatch(reference.len(), run.len()));
    }
    if let Some(&label) = reference.iter().chain(run).find(|&&l| l >= k) {
        return Err(Error::LabelOutOfRange { label, k });
    }
    let mut overlap = Matrix::zeros(k, k);
    for (&a, &b) in reference.iter().zip(run) {
        overlap[(a, b)] += 1.0;
    }
    // rows = run clusters, columns = reference clusters
    let cost = Matrix::from_fn(k, k, |run_c, ref_c| -overlap[(ref_c, run_c)]);
    let permutation = hungarian(&cost)?.perm;
    let aligned = run.iter().map(|&l| permutation[l]).collect();
    Ok(LabelAlignment {
        permutation,
        overlap,
        aligned,
    })
}

/// Thresholds of the rare-and-stable discovery rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiscoveryRule {
    /// A cluster is rare when its prevalence is strictly below this.
    pub rare_below: f64,
    /// A cluster is stable when its Jaccard index is at least this.
    pub stable_at_least: f64,
}

impl Default for DiscoveryRule {
    fn default() -> Self {
        Self {
            rare_below: 0.10,
            stable_at_least: 0.60,
        }
    }
}

impl DiscoveryRule {
    pub fn is_rare(&self, prevalence: f64) -> bool {
        prevalence < self.rare_below
    }

    pub fn is_stable(&self, jaccard: f64) -> bool {
        jaccard >= self.stable_at_least
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterStability {
    pub k: usize,
    pub cluster: usize,
    pub size: usize,
    pub prevalence: f64,
    pub jaccard: f64,
    pub rare: bool,
    pub stable: bool,
}

impl ClusterStability {
    pub fn is_hit(&self) -> bool {
        self.rare && self.stable
    }
}

/// `|a ∩ b| / |a ∪ b|` for clusters `ca` of `a` and `cb` of `b`.
pub fn jaccard(a: &[usize], ca: usize, b: &[usize], cb: usize) -> f64 {
    let mut inter = 0usize;
    let mut union = 0usize;
    for (&x, &y) in a.iter().zip(b) {
        let (ia, ib) = (x == ca, y == cb);
        if ia && ib {
            inter += 1;
        }
        if ia || ib {
            union += 1;
        }
    }
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Per-cluster mean Jaccard of `runs[1..]` (already aligned) against `runs[0]`.
pub fn jaccard_from_runs(aligned_runs: &[Vec<usize>], k: usize) -> Vec<f64> {
    let reference = &aligned_runs[0];
    let others = &aligned_runs[1..];
    (0..k)
        .map(|c| {
            if others.is_empty() {
                return 1.0;
            }
            others
                .iter()
                .map(|r| jaccard(reference, c, r, c))
                .sum::<f64>()
                / others.len() as f64
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityAtK {
    pub k: usize,
    pub reference: ClusteringSolution,
    pub silhouette: f64,
    pub dbi: f64,
    pub clusters: Vec<ClusterStability>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct StabilityParams {
    pub runs: usize,
    pub base_seed: u64,
    pub n_init: usize,
}

impl Default for StabilityParams {
    fn default() -> Self {
        Self {
            runs: 20,
            base_seed: 42,
            n_init: 10,
        }
    }
}

pub fn jaccard_stability(
    z: &Matrix,
    k: usize,
    params: StabilityParams,
    rule: DiscoveryRule,
) -> Result<StabilityAtK> {
    if params.runs < 2 {
        return Err(Error::InvalidConfig("stability needs at least two runs"));
    }
    let n = z.rows();
    let mut reference = None;
    let mut aligned = Vec::with_capacity(params.runs);
    for r in 0..params.runs {
        let sol = kmeans(z, k, params.n_init, params.base_seed + r as u64)?;
        match &reference {
            None => {
                aligned.push(sol.labels.clone());
                reference = Some(sol);
            }
            Some(ref_sol) => aligned.push(align(&ref_sol.labels, &sol.labels, k)?.aligned),
        }
    }
    let reference = reference.expect("runs >= 2");
    let jac = jaccard_from_runs(&aligned, k);
    let sizes = cluster_sizes(&reference.labels, k);
    let clusters = (0..k)
        .map(|c| {
            let prevalence = sizes[c] as f64 / n as f64;
            ClusterStability {
                k,
                cluster: c,
                size: sizes[c],
                prevalence,
                jaccard: jac[c],
                rare: rule.is_rare(prevalence),
                stable: rule.is_stable(jac[c]),
            }
        })
        .collect();
    Ok(StabilityAtK {
        k,
        silhouette: silhouette(z, &reference.labels)?,
        dbi: davies_bouldin(z, &reference.labels)?,
        reference,
        clusters,
    })
}

/// The selected rare-and-stable cluster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscoveryChoice {
    pub k: usize,
    pub cluster: usize,
    pub size: usize,
    pub prevalence: f64,
    pub jaccard: f64,
    pub silhouette: f64,
    pub dbi: f64,
    /// Member sample indices in the reference run.
    pub members: Vec<usize>,
    pub rationale: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscoveryReport {
    pub rule: DiscoveryRule,
    pub params: StabilityParams,
    pub per_k: Vec<StabilityAtK>,
    pub hits: Vec<ClusterStability>,
    pub chosen: Option<DiscoveryChoice>,
}

impl DiscoveryReport {
    pub fn rows(&self) -> impl Iterator<Item = &ClusterStability> {
        self.per_k.iter().flat_map(|s| s.clusters.iter())
    }

    pub fn at_k(&self, k: usize) -> Option<&StabilityAtK> {
        self.per_k.iter().find(|s| s.k == k)
    }

    /// Reference-run members of every hit.
    pub fn hit_members(&self) -> Vec<(usize, usize, Vec<usize>)> {
        self.hits
            .iter()
            .map(|h| {
                let labels = &self.at_k(h.k).expect("hit k scanned").reference.labels;
                let members = (0..labels.len())
                    .filter(|&i| labels[i] == h.cluster)
                    .collect();
                (h.k, h.cluster, members)
            })
            .collect()
    }
}

pub const CHOICE_RATIONALE: &str =
    "smallest k among rare-and-stable hits; ties by higher silhouette, then smaller prevalence";

/// Stability for every k in `ks` and selection of the simplest hit.
pub fn discovery_scan(
    z: &Matrix,
    ks: RangeInclusive<usize>,
    params: StabilityParams,
    rule: DiscoveryRule,
) -> Result<DiscoveryReport> {
    let mut per_k = Vec::new();
    for k in ks {
        per_k.push(jaccard_stability(z, k, params, rule)?);
    }
    let hits: Vec<ClusterStability> = per_k
        .iter()
        .flat_map(|s| s.clusters.iter())
        .filter(|c| c.is_hit())
        .cloned()
        .collect();
    let chosen = hits
        .iter()
        .map(|h| (h, per_k.iter().find(|s| s.k == h.k).expect("scanned")))
        .min_by(|(a, sa), (b, sb)| {
            a.k.cmp(&b.k)
                .then(sb.silhouette.total_cmp(&sa.silhouette))
                .then(a.prevalence.total_cmp(&b.prevalence))
                .then(a.cluster.cmp(&b.cluster))
        })
        .map(|(h, s)| DiscoveryChoice {
            k: h.k,
            cluster: h.cluster,
            size: h.size,
            prevalence: h.prevalence,
            jaccard: h.jaccard,
            silhouette: s.silhouette,
            dbi: s.dbi,
            members: (0..z.rows())
                .filter(|&i| s.reference.labels[i] == h.cluster)
                .collect(),
            rationale: String::from(CHOICE_RATIONALE),
        });
    Ok(DiscoveryReport {
        rule,
        params,
        per_k,
        hits,
        chosen,
    })
}

/// High-restart k-means used for the reported solution.
pub fn final_refit(z: &Matrix, k: usize, n_init: usize, seed: u64) -> Result<ClusteringSolution> {
    kmeans(z, k, n_init, seed)
}

/// The refit cluster that aligns with `reference_cluster`.
pub fn matching_cluster(
    reference: &[usize],
    refit: &[usize],
    k: usize,
    reference_cluster: usize,
) -> Result<usize> {
    let a = align(reference, refit, k)?;
    Ok(a.permutation
        .iter()
        .position(|&r| r == reference_cluster)
        .expect("alignment is a bijection"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;
    use approx::assert_abs_diff_eq;

    #[test]
    fn hungarian_small_cases() {
        let a = hungarian(&Matrix::from_rows(&[[1.0, 2.0], [2.0, 1.0]]).unwrap()).unwrap();
        assert_eq!(a.perm, vec![0, 1]);
        assert_eq!(a.cost, 2.0);
        let diag = Matrix::from_fn(4, 4, |i, j| if i == j { 0.0 } else { 3.0 });
        let a = hungarian(&diag).unwrap();
        assert_eq!(a.perm, vec![0, 1, 2, 3]);
        assert_eq!(a.cost, 0.0);
    }

    #[test]
    fn hungarian_lexicographic_tie_break() {
        let flat = Matrix::from_fn(3, 3, |_, _| 1.0);
        assert_eq!(hungarian(&flat).unwrap().perm, vec![0, 1, 2]);
        let m = Matrix::from_rows(&[[1.0, 0.0, 5.0], [0.0, 1.0, 5.0], [5.0, 5.0, 0.0]]).unwrap();
        assert_eq!(hungarian(&m).unwrap().perm, vec![1, 0, 2]);
        // two optima of cost 2; lexicographically smallest wins
        let t = Matrix::from_rows(&[[1.0, 1.0], [1.0, 1.0]]).unwrap();
        assert_eq!(hungarian(&t).unwrap().perm, vec![0, 1]);
    }

    #[test]
    fn hungarian_errors() {
        assert!(matches!(
            hungarian(&Matrix::zeros(2, 3)),
            Err(Error::NonSquare { .. })
        ));
        let mut m = Matrix::zeros(2, 2);
        m[(0, 1)] = f64::NAN;
        assert!(matches!(hungarian(&m), Err(Error::NonFinite)));
        assert!(hungarian(&Matrix::zeros(0, 0)).unwrap().perm.is_empty());
    }

    #[test]
    fn align_swapped_labels() {
        let reference = [0, 0, 1, 1, 2];
        let run = [1, 1, 0, 0, 2];
        let a = align(&reference, &run, 3).unwrap();
        assert_eq!(a.permutation, vec![1, 0, 2]);
        assert_eq!(a.aligned, reference.to_vec());
        let same = align(&reference, &reference, 3).unwrap();
        assert_eq!(same.permutation, vec![0, 1, 2]);
        assert!(matches!(
            align(&[0, 3], &[0, 1], 3),
            Err(Error::LabelOutOfRange { label: 3, .. })
        ));
    }

    #[test]
    fn jaccard_definition() {
        // S = {1,2,3}, S' = {2,3,4} over samples 0..5
        let a = [0, 1, 1, 1, 0];
        let b = [0, 0, 1, 1, 1];
        assert_abs_diff_eq!(jaccard(&a, 1, &b, 1), 0.5);
        let j = jaccard_from_runs(&[a.to_vec(), b.to_vec()], 2);
        assert_abs_diff_eq!(j[1], 0.5);
    }

    #[test]
    fn separated_blobs_are_perfectly_stable() {
        let mut rng = SeededRng::new(12);
        let centers = [0.0, 30.0, 60.0];
        let z = Matrix::from_fn(90, 2, |i, d| {
            rng.normal() + centers[i % 3] * (d as f64 + 1.0)
        });
        let s = jaccard_stability(
            &z,
            3,
            StabilityParams {
                runs: 6,
                base_seed: 1,
                n_init: 3,
            },
            DiscoveryRule::default(),
        )
        .unwrap();
        assert!(s.clusters.iter().all(|c| c.jaccard == 1.0));
    }

    #[test]
    fn two_balanced_blobs_give_no_hits() {
        let mut rng = SeededRng::new(2);
        let z = Matrix::from_fn(60, 2, |i, _| {
            rng.normal() * 0.2 + if i < 30 { 0.0 } else { 9.0 }
        });
        let rep = discovery_scan(
            &z,
            2..=2,
            StabilityParams {
                runs: 5,
                base_seed: 0,
                n_init: 3,
            },
            DiscoveryRule::default(),
        )
        .unwrap();
        assert!(rep.hits.is_empty());
        assert!(rep.chosen.is_none());
    }

    #[test]
    fn small_stable_cluster_is_discovered() {
        let mut rng = SeededRng::new(21);
        // 54 + 54 + 6 samples: the third group is 5.3% of the cohort
        let z = Matrix::from_fn(114, 2, |i, d| {
            let c = if i < 54 {
                [0.0, 0.0]
            } else if i < 108 {
                [20.0, 0.0]
            } else {
                [10.0, 25.0]
            };
            c[d] + rng.normal()
        });
        let rep = discovery_scan(
            &z,
            2..=4,
            StabilityParams {
                runs: 8,
                base_seed: 3,
                n_init: 5,
            },
            DiscoveryRule::default(),
        )
        .unwrap();
        let chosen = rep.chosen.expect("hit");
        assert_eq!(chosen.k, 3);
        assert_eq!(chosen.members, (108..114).collect::<Vec<_>>());
    }

    #[test]
    fn flags_use_strict_and_inclusive_bounds() {
        let rule = DiscoveryRule::default();
        assert!(!rule.is_rare(0.10));
        assert!(rule.is_rare(0.0999));
        assert!(rule.is_stable(0.60));
        assert!(!rule.is_stable(0.5999));
    }
}
