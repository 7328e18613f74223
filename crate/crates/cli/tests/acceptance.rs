//! Acceptance checks. Prints one PASS/FAIL/SKIP line per check and exits
//! non-zero if any check fails, other than the listed known failures.
//!
//! Checks that need the UCI RNA-seq cohort run only when `RARESUB_UCI_DIR`
//! names a directory holding its `data.csv` and `labels.csv`.

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::time::{Duration, Instant};

use raresub::pipeline::{self, WithinResult};
use raresub::{io, RunConfig};
use raresub_core::autoencoder::{build_with_hidden, gradient_check, AeConfig};
use raresub_core::clustering::{davies_bouldin, scan_k, silhouette};
use raresub_core::rng::SeededRng;
use raresub_core::stability::hungarian;
use raresub_core::stats::{bh_fdr, chi_square_independence, gamma_q, t_cdf};
use raresub_core::synth::{generate, SyntheticData, SyntheticSpec};
use raresub_core::Matrix;

const UCI_ENV: &str = "RARESUB_UCI_DIR";

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

fn verdict(ok: bool, detail: String) -> Outcome {
    if ok {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

// ---- independent oracles ----

fn brute_force_assignment(cost: &Matrix) -> (Vec<usize>, f64) {
    fn rec(
        cost: &Matrix,
        row: usize,
        used: &mut Vec<bool>,
        cur: &mut Vec<usize>,
        best: &mut (Vec<usize>, f64),
    ) {
        let n = cost.rows();
        if row == n {
            let total: f64 = cur.iter().enumerate().map(|(i, &j)| cost[(i, j)]).sum();
            if total < best.1 {
                *best = (cur.clone(), total);
            }
            return;
        }
        for j in 0..n {
            if !used[j] {
                used[j] = true;
                cur.push(j);
                rec(cost, row + 1, used, cur, best);
                cur.pop();
                used[j] = false;
            }
        }
    }
    let n = cost.rows();
    let mut best = (Vec::new(), f64::INFINITY);
    rec(cost, 0, &mut vec![false; n], &mut Vec::new(), &mut best);
    best
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn silhouette_oracle(z: &Matrix, labels: &[usize]) -> f64 {
    let n = z.rows();
    let k = labels.iter().max().unwrap() + 1;
    let mut total = 0.0;
    for i in 0..n {
        let mean_to = |c: usize| {
            let others: Vec<usize> = (0..n).filter(|&j| j != i && labels[j] == c).collect();
            others
                .iter()
                .map(|&j| euclid(z.row(i), z.row(j)))
                .sum::<f64>()
                / others.len() as f64
        };
        if labels.iter().filter(|&&l| l == labels[i]).count() == 1 {
            continue;
        }
        let a = mean_to(labels[i]);
        let b = (0..k)
            .filter(|&c| c != labels[i] && labels.contains(&c))
            .map(mean_to)
            .fold(f64::INFINITY, f64::min);
        total += (b - a) / a.max(b);
    }
    total / n as f64
}

fn dbi_oracle(z: &Matrix, labels: &[usize]) -> f64 {
    let k = labels.iter().max().unwrap() + 1;
    let d = z.cols();
    let members = |c: usize| (0..z.rows()).filter(move |&i| labels[i] == c);
    let centroid = |c: usize| {
        let idx: Vec<usize> = members(c).collect();
        (0..d)
            .map(|j| idx.iter().map(|&i| z[(i, j)]).sum::<f64>() / idx.len() as f64)
            .collect::<Vec<_>>()
    };
    let cents: Vec<Vec<f64>> = (0..k).map(centroid).collect();
    let scatter: Vec<f64> = (0..k)
        .map(|c| {
            let idx: Vec<usize> = members(c).collect();
            idx.iter()
                .map(|&i| euclid(z.row(i), &cents[c]))
                .sum::<f64>()
                / idx.len() as f64
        })
        .collect();
    (0..k)
        .map(|i| {
            (0..k)
                .filter(|&j| j != i)
                .map(|j| (scatter[i] + scatter[j]) / euclid(&cents[i], &cents[j]))
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .sum::<f64>()
        / k as f64
}

fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, eps: f64) -> f64 {
    fn step(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        eps: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * eps {
            return left + right + delta / 15.0;
        }
        // halving stops at a floor so roundoff cannot force full depth
        let eps = (eps / 2.0).max(1e-15);
        step(f, a, m, fa, flm, fm, left, eps, depth - 1)
            + step(f, m, b, fm, frm, fb, right, eps, depth - 1)
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    step(f, a, b, fa, fm, fb, whole, eps, 30)
}

/// Student t CDF through the substitution t = sqrt(df) tan(u), which turns
/// the density into cos(u)^(df - 1) on [0, pi/2).
fn t_cdf_oracle(x: f64, df: f64) -> f64 {
    let g = |u: f64| u.cos().powf(df - 1.0);
    let upto = (x.abs() / df.sqrt()).atan();
    let whole = simpson(&g, 0.0, std::f64::consts::FRAC_PI_2, 1e-12);
    let part = simpson(&g, 0.0, upto, 1e-12);
    0.5 + 0.5 * x.signum() * part / whole
}

fn gamma_q_oracle(a: f64, x: f64) -> f64 {
    // scaled so the integrand peaks at 1 (mode a - 1)
    let peak = if a > 1.0 {
        (a - 1.0) * (a - 1.0).ln() - (a - 1.0)
    } else {
        0.0
    };
    let g = |t: f64| {
        if t <= 0.0 {
            if a == 1.0 {
                1.0
            } else {
                0.0
            }
        } else {
            ((a - 1.0) * t.ln() - t - peak).exp()
        }
    };
    let upper = a + 60.0 + 12.0 * a.sqrt();
    let whole = simpson(&g, 0.0, upper, 1e-12);
    simpson(&g, x, upper, 1e-12) / whole
}

fn bh_oracle(p: &[f64]) -> Vec<f64> {
    let m = p.len();
    // rank of each value: how many p-values are <= it
    let rank: Vec<usize> = p
        .iter()
        .map(|&pi| p.iter().filter(|&&pj| pj <= pi).count())
        .collect();
    (0..m)
        .map(|i| {
            (0..m)
                .filter(|&j| p[j] >= p[i])
                .map(|j| (p[j] * m as f64 / rank[j] as f64).min(1.0))
                .fold(1.0, f64::min)
        })
        .collect()
}

fn oracle_suites() -> Outcome {
    let start = Instant::now();
    let mut problems = Vec::new();
    let mut rng = SeededRng::new(2024);

    let mut hungarian_cases = 0;
    for k in 5..=7 {
        for case in 0..200 {
            let integer = case % 2 == 0;
            let cost = Matrix::from_fn(k, k, |_, _| {
                if integer {
                    rng.below(30) as f64
                } else {
                    rng.uniform_range(-5.0, 5.0)
                }
            });
            let fast = hungarian(&cost).unwrap();
            let (perm, best) = brute_force_assignment(&cost);
            if fast.cost != best || (integer && fast.perm != perm) {
                problems.push(format!(
                    "hungarian k={k} case {case}: {} vs {best}",
                    fast.cost
                ));
            }
            hungarian_cases += 1;
        }
    }

    let mut cluster_err = 0.0f64;
    for _ in 0..50 {
        let n = 6 + rng.below(35);
        let d = 1 + rng.below(4);
        let k = 2 + rng.below(4.min(n / 2 - 1));
        let mut labels: Vec<usize> = (0..n)
            .map(|i| if i < k { i } else { rng.below(k) })
            .collect();
        rng.shuffle(&mut labels);
        let z = Matrix::from_fn(n, d, |i, _| labels[i] as f64 * 1.5 + rng.normal());
        cluster_err = cluster_err
            .max((silhouette(&z, &labels).unwrap() - silhouette_oracle(&z, &labels)).abs())
            .max((davies_bouldin(&z, &labels).unwrap() - dbi_oracle(&z, &labels)).abs());
    }
    if !(cluster_err < 1e-9) {
        problems.push(format!("silhouette/DBI max error {cluster_err:e}"));
    }

    let mut special_err = 0.0f64;
    for _ in 0..50 {
        let df = 10f64.powf(rng.uniform_range(0.0, 1.8));
        let x = rng.uniform_range(-8.0, 8.0);
        special_err = special_err.max((t_cdf(x, df) - t_cdf_oracle(x, df)).abs());
    }
    for _ in 0..50 {
        let a = rng.uniform_range(1.0, 15.0);
        let x = rng.uniform_range(0.0, 30.0);
        special_err = special_err.max((gamma_q(a, x) - gamma_q_oracle(a, x)).abs());
    }
    if !(special_err < 1e-7) {
        problems.push(format!("t_cdf/gamma_q max error {special_err:e}"));
    }

    for case in 0..200 {
        let m = 1 + rng.below(40);
        // coarse grid so ties are common
        let p: Vec<f64> = (0..m)
            .map(|_| match rng.below(10) {
                0 => 0.0,
                1 => 1.0,
                _ if case % 2 == 0 => rng.below(20) as f64 / 20.0,
                _ => rng.uniform(),
            })
            .collect();
        if bh_fdr(&p).unwrap() != bh_oracle(&p) {
            problems.push(format!("bh_fdr case {case} differs"));
        }
    }

    let mut grad_err = 0.0f64;
    for seed in 0..10u64 {
        let input_dim = 4 + seed as usize % 4;
        let cfg = AeConfig {
            input_dim,
            latent_dim: 2 + seed as usize % 3,
            seed,
            ..AeConfig::default()
        };
        let mut model = build_with_hidden(&cfg, 8, 6).unwrap();
        let mut r = SeededRng::new(seed + 1000);
        // fresh nets have zero biases, so a sample whose previous layer is
        // all-inactive sits exactly on a ReLU kink; nonzero biases avoid that
        for layer in &mut model.layers {
            for b in &mut layer.bias {
                *b = r.uniform_range(-0.2, 0.2);
            }
        }
        let x = Matrix::from_fn(5 + seed as usize % 3, input_dim, |_, _| r.normal());
        grad_err = grad_err.max(gradient_check(&model, &x, 1e-3).max_rel_error);
    }
    if !(grad_err < 1e-5) {
        problems.push(format!("gradient check max relative error {grad_err:e}"));
    }

    let elapsed = start.elapsed();
    if elapsed > Duration::from_secs(60) {
        problems.push(format!("took {elapsed:.1?}"));
    }
    let detail = format!(
        "{hungarian_cases} assignments exact, clustering err {cluster_err:.1e}, special fn err {special_err:.1e}, \
         BH exact, grad rel err {grad_err:.1e}, {elapsed:.1?}"
    );
    if problems.is_empty() {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(format!("{detail}; {}", problems.join("; ")))
    }
}

// ---- planted subtype ----

fn set_jaccard(a: &BTreeSet<&str>, b: &BTreeSet<&str>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 0.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

fn planted_run(effect_size: f64, seed: u64) -> (SyntheticData, WithinResult) {
    let spec = SyntheticSpec {
        effect_size,
        seed,
        ..SyntheticSpec::default()
    };
    let data = generate(&spec).unwrap();
    let result = pipeline::discover(&data.matrix, &RunConfig::default()).unwrap();
    (data, result)
}

/// Jaccard between the planted members and the best rare-and-stable hit
/// (0 without a hit), plus the best over all hits.
fn recovery(data: &SyntheticData, result: &WithinResult) -> (f64, f64) {
    let planted: BTreeSet<&str> = data.member_ids.iter().map(String::as_str).collect();
    let ids = &result.embedding.scaled.sample_ids;
    let as_set = |m: &[usize]| m.iter().map(|&i| ids[i].as_str()).collect::<BTreeSet<_>>();
    let best = result
        .discovery
        .chosen
        .as_ref()
        .map_or(0.0, |c| set_jaccard(&as_set(&c.members), &planted));
    let any = result
        .discovery
        .hit_members()
        .iter()
        .map(|(_, _, m)| set_jaccard(&as_set(m), &planted))
        .fold(0.0, f64::max);
    (best, any)
}

fn planted_subtype(shared: &mut Option<(SyntheticData, WithinResult)>) -> Outcome {
    let start = Instant::now();
    let (data, result) = planted_run(3.0, 1);
    let n_hits = result.discovery.hits.len();
    let (best, _) = recovery(&data, &result);

    let planted: BTreeSet<&str> = data.marker_gene_ids.iter().map(String::as_str).collect();
    let top: Vec<&str> = result
        .de
        .as_ref()
        .map(|de| {
            de.table
                .rows
                .iter()
                .take(80)
                .map(|r| r.gene_id.as_str())
                .collect()
        })
        .unwrap_or_default();
    let planted_in_top = top.iter().filter(|g| planted.contains(*g)).count();
    let recall = planted_in_top as f64 / planted.len() as f64;
    let share_of_top = planted_in_top as f64 / 80.0;

    let mut null_recovered = 0;
    let mut null_detail = Vec::new();
    for seed in 1..=10 {
        let (d, r) = planted_run(0.0, seed);
        let (_, any) = recovery(&d, &r);
        if any >= 0.8 {
            null_recovered += 1;
        }
        null_detail.push(format!("{any:.2}"));
    }
    let elapsed = start.elapsed();

    let ok = n_hits >= 1
        && best >= 0.8
        && recall >= 0.8
        && null_recovered <= 1
        && elapsed < Duration::from_secs(300);
    let detail = format!(
        "{n_hits} hits, planted-member Jaccard {best:.3}, {planted_in_top}/60 planted genes in top 80 \
         (recall {recall:.2}, share of top 80 {share_of_top:.2}), null recovered {null_recovered}/10 \
         [{}], {elapsed:.1?}",
        null_detail.join(" ")
    );
    *shared = Some((data, result));
    verdict(ok, detail)
}

// ---- DE determinism ----

fn de_determinism(shared: &Option<(SyntheticData, WithinResult)>) -> Outcome {
    let Some((_, result)) = shared else {
        return Outcome::Fail("planted run unavailable".into());
    };
    let (Some(fin), Some(de)) = (&result.final_cluster, &result.de) else {
        return Outcome::Fail("planted run produced no cluster to test".into());
    };
    let dir = tempfile::tempdir().unwrap();
    let ids = &result.embedding.scaled.sample_ids;
    pipeline::write_assignments(dir.path(), ids, &fin.labels).unwrap();
    let path = dir.path().join("clusters.csv");
    let labels = pipeline::labels_for(ids, &io::read_assignments(&path).unwrap(), &path).unwrap();
    let cfg = RunConfig::default();
    let bits = |t: &raresub_core::diffexpr::DeTable| {
        t.rows
            .iter()
            .map(|r| (r.gene_id.clone(), r.p.to_bits(), r.fdr.to_bits()))
            .collect::<Vec<_>>()
    };
    let again = pipeline::run_de(&result.embedding.scaled, &labels, fin.cluster, &cfg).unwrap();
    let third = pipeline::run_de(&result.embedding.scaled, &labels, fin.cluster, &cfg).unwrap();
    let same = bits(&again.table) == bits(&de.table) && bits(&third.table) == bits(&de.table);
    verdict(
        same,
        format!(
            "{} genes, p/FDR bit-identical after reloading clusters.csv: {same}",
            de.table.rows.len()
        ),
    )
}

// ---- published contingency table ----

fn published_contingency() -> Outcome {
    let counts = [
        [240.0, 0.0, 60.0, 0.0, 0.0, 0.0],
        [0.0, 0.0, 0.0, 0.0, 0.0, 78.0],
        [0.0, 0.0, 1.0, 0.0, 145.0, 0.0],
        [0.0, 0.0, 4.0, 136.0, 0.0, 1.0],
        [0.0, 136.0, 0.0, 0.0, 0.0, 0.0],
    ];
    let r = chi_square_independence(&Matrix::from_rows(&counts).unwrap()).unwrap();
    let ok = (r.cramers_v - 0.887).abs() <= 0.001;
    verdict(
        ok,
        format!(
            "chi2 {:.2}, dof {}, V {:.4} (target 0.887 +/- 0.001; sqrt(chi2/(n min(r,c))) gives {:.4})",
            r.chi2,
            r.dof,
            r.cramers_v,
            r.cramers_v_min_dim()
        ),
    )
}

// ---- UCI cohort ----

fn uci_config() -> Option<RunConfig> {
    let dir = PathBuf::from(std::env::var_os(UCI_ENV)?);
    Some(RunConfig {
        data: Some(dir.join("data.csv")),
        labels: Some(dir.join("labels.csv")),
        ..RunConfig::default()
    })
}

fn skip_uci() -> Outcome {
    Outcome::Skip(format!(
        "set {UCI_ENV} to a directory with the UCI data.csv and labels.csv"
    ))
}

fn pan_control() -> Outcome {
    let Some(mut cfg) = uci_config() else {
        return skip_uci();
    };
    cfg.k_min = 5;
    cfg.k_max = 7;
    let cohort = pipeline::load_cohort(&cfg, None).unwrap();
    let r = pipeline::pan(&cohort.matrix, &cfg).unwrap();
    let capture = r
        .table
        .modal_clusters()
        .iter()
        .map(|&(_, f)| f)
        .fold(1.0, f64::min);
    let ok = r.chi_square.p_underflow && r.chi_square.cramers_v >= 0.80 && capture >= 0.80;
    verdict(
        ok,
        format!(
            "k {}, p {:e} (underflow {}), V {:.3}, worst modal capture {capture:.3}",
            r.k, r.chi_square.p_value, r.chi_square.p_underflow, r.chi_square.cramers_v
        ),
    )
}

fn within_bands() -> Outcome {
    let Some(cfg) = uci_config() else {
        return skip_uci();
    };
    let cohort = pipeline::load_cohort(&cfg, Some("KIRC")).unwrap();
    let mut found = 0;
    let mut detail = Vec::new();
    let mut bands_ok = false;
    for (i, seed) in [42u64, 43, 44].into_iter().enumerate() {
        let run_cfg = RunConfig {
            seed,
            ..cfg.clone()
        };
        let e = pipeline::embed(&cohort.matrix, &run_cfg).unwrap();
        if i == 0 {
            let scan = scan_k(&e.z, 2..=10, run_cfg.scan_n_init, seed).unwrap();
            let s2 = scan.entry(2).unwrap().silhouette;
            let d5 = scan.entry(5).unwrap().dbi;
            bands_ok = (s2 - 0.140).abs() <= 0.07 && (d5 - 2.045).abs() <= 0.5;
            detail.push(format!("silhouette(k=2) {s2:.3}, DBI(k=5) {d5:.3}"));
        }
        let r = pipeline::discover_embedded(e, &run_cfg).unwrap();
        let hit = r
            .discovery
            .hits
            .iter()
            .any(|h| (0.04..=0.10).contains(&h.prevalence) && h.jaccard >= 0.60);
        found += usize::from(hit);
        detail.push(format!(
            "seed {seed}: {} hits, qualifying {hit}",
            r.discovery.hits.len()
        ));
    }
    verdict(bands_ok && found >= 2, detail.join("; "))
}

fn uci_de_effect() -> Outcome {
    let Some(mut cfg) = uci_config() else {
        return skip_uci();
    };
    cfg.class = Some("KIRC".into());
    let cohort = pipeline::load_cohort(&cfg, Some("KIRC")).unwrap();
    let r = pipeline::discover(&cohort.matrix, &cfg).unwrap();
    let Some(top) = r.de.as_ref().and_then(|de| de.table.rows.first()) else {
        return Outcome::Fail("no rare-and-stable cluster to test".into());
    };
    verdict(
        top.effect.abs() >= 1.0,
        format!("top gene {} effect {:.3}", top.gene_id, top.effect),
    )
}

/// Checks whose target is known to be unreachable with the standard
/// definitions used here (see the README). They still run and print FAIL,
/// but only an unexpected outcome affects the exit status.
const KNOWN_FAILURES: &[&str] = &["published contingency table"];

#[derive(Clone, Copy, PartialEq)]
enum Status {
    Ok,
    Failed,
    KnownFailure,
    UnexpectedPass,
}

fn run(name: &str, check: impl FnOnce() -> Outcome) -> Status {
    let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
        let msg = e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        Outcome::Fail(format!("panicked: {msg}"))
    });
    let known = KNOWN_FAILURES.contains(&name);
    let (tag, detail, status) = match outcome {
        Outcome::Pass(d) if known => ("PASS", d, Status::UnexpectedPass),
        Outcome::Pass(d) => ("PASS", d, Status::Ok),
        Outcome::Fail(d) if known => ("FAIL", format!("{d} [known failure]"), Status::KnownFailure),
        Outcome::Fail(d) => ("FAIL", d, Status::Failed),
        Outcome::Skip(d) => ("SKIP", d, Status::Ok),
    };
    println!("{tag} {name}: {detail}");
    status
}

fn main() {
    let mut shared = None;
    let statuses = [
        run("oracle suites", oracle_suites),
        run("planted subtype end to end", || {
            planted_subtype(&mut shared)
        }),
        run("pan-cancer control (UCI)", pan_control),
        run("within-KIRC bands (UCI)", within_bands),
        run("DE determinism", || de_determinism(&shared)),
        run("DE leading effect (UCI)", uci_de_effect),
        run("published contingency table", published_contingency),
    ];
    let count = |s: Status| statuses.iter().filter(|&&x| x == s).count();
    let (failed, known, surprise) = (
        count(Status::Failed),
        count(Status::KnownFailure),
        count(Status::UnexpectedPass),
    );
    println!(
        "{} failed ({known} known), {surprise} unexpected passes",
        failed + known
    );
    if failed + surprise > 0 {
        std::process::exit(1);
    }
}
