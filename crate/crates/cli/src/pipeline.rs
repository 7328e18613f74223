//! Pipeline stages and the artifacts each subcommand writes.

use std::path::Path;

use log::{info, warn};
use raresub_core::autoencoder::{self, AutoencoderModel, TrainHistory};
use raresub_core::clustering::{scan_k, ClusteringSolution, KScanResult};
use raresub_core::contingency::{contingency, ContingencyTable};
use raresub_core::data::{self, CohortFilter, ExpressionMatrix, JoinStats, ValidationSummary};
use raresub_core::diffexpr::{self, DeTable, MarkerSelection};
use raresub_core::preprocess::{prepare, ScaledMatrix};
use raresub_core::projection::{pca2, separation, Projection};
use raresub_core::stability::{
    discovery_scan, final_refit, jaccard_stability, matching_cluster, DiscoveryChoice,
    DiscoveryReport, StabilityAtK,
};
use raresub_core::stats::ContingencyResult;
use raresub_core::synth::{self, SyntheticData};
use raresub_core::Matrix;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{Result, RunError};
use crate::figures;
use crate::io::{self, write_csv, write_json};

#[derive(Debug, Clone)]
pub struct Cohort {
    pub matrix: ExpressionMatrix,
    pub join: JoinStats,
    pub validation: ValidationSummary,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CohortSummary {
    pub n_samples: usize,
    pub n_genes: usize,
    pub class: Option<String>,
    pub join: JoinStats,
    pub validation: ValidationSummary,
    pub class_counts: std::collections::BTreeMap<String, usize>,
}

impl Cohort {
    pub fn summary(&self, class: Option<&str>) -> CohortSummary {
        CohortSummary {
            n_samples: self.matrix.n_samples(),
            n_genes: self.matrix.n_genes(),
            class: class.map(str::to_owned),
            join: self.join.clone(),
            validation: self.validation,
            class_counts: self.matrix.class_counts(),
        }
    }
}

/// Joins data with labels, optionally keeps one class, and rejects NaN/Inf.
pub fn load_cohort(cfg: &RunConfig, class: Option<&str>) -> Result<Cohort> {
    let (data_path, label_path) = cfg.require_data()?;
    info!("reading {}", data_path.display());
    let raw = io::read_expression(data_path)?;
    let labels = io::read_labels(label_path)?;
    let (joined, join) = data::inner_join(&raw, &labels)?;
    info!(
        "joined {} samples ({} dropped from data, {} from labels)",
        join.n_joined, join.dropped_from_data, join.dropped_from_labels
    );
    let matrix = match class {
        Some(c) => data::filter_class(&joined, &CohortFilter::new(c))?,
        None => joined,
    };
    let validation = data::validate(&matrix);
    if validation.nan_count + validation.inf_count > 0 {
        return Err(RunError::input(
            data_path,
            format!(
                "{} NaN and {} infinite values",
                validation.nan_count, validation.inf_count
            ),
        ));
    }
    Ok(Cohort {
        matrix,
        join,
        validation,
    })
}

#[derive(Debug, Clone)]
pub struct Embedding {
    pub scaled: ScaledMatrix,
    pub model: AutoencoderModel,
    pub history: TrainHistory,
    pub z: Matrix,
}

/// log1p, HVG selection, z-scoring, autoencoder training, encoding.
pub fn embed(m: &ExpressionMatrix, cfg: &RunConfig) -> Result<Embedding> {
    let scaled = prepare(m, cfg.top_n, cfg.variance)?;
    let ae = cfg.ae_config(scaled.cols());
    let model = autoencoder::build(&ae)?;
    info!(
        "training autoencoder {:?} on {} x {}",
        model.layer_shapes(),
        scaled.rows(),
        scaled.cols()
    );
    let (model, history) = autoencoder::train(model, &scaled.values, &ae)?;
    info!(
        "stopped at epoch {}, best epoch {} (val mse {:.5})",
        history.stopped_epoch, history.best_epoch, history.best_val_mse
    );
    let z = model.encode(&scaled.values)?;
    Ok(Embedding {
        scaled,
        model,
        history,
        z,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FinalCluster {
    pub k: usize,
    pub n_init: usize,
    pub seed: u64,
    pub reference_cluster: usize,
    /// Id of the matching cluster in the refit.
    pub cluster: usize,
    pub size: usize,
    pub prevalence: f64,
    /// Fraction of samples whose refit label agrees with the aligned reference.
    pub agreement: f64,
    pub silhouette: f64,
    pub dbi: f64,
    pub member_ids: Vec<String>,
    pub labels: Vec<usize>,
    /// Separation of the cluster in the 2-D projection.
    pub separation: f64,
}

#[derive(Debug, Clone)]
pub struct DeOutputs {
    pub table: DeTable,
    pub markers: MarkerSelection,
}

#[derive(Debug, Clone)]
pub struct WithinResult {
    pub embedding: Embedding,
    pub discovery: DiscoveryReport,
    pub projection: Projection,
    pub final_cluster: Option<FinalCluster>,
    pub de: Option<DeOutputs>,
}

pub fn run_de(
    scaled: &ScaledMatrix,
    labels: &[usize],
    cluster: usize,
    cfg: &RunConfig,
) -> Result<DeOutputs> {
    let table = diffexpr::de_cluster_vs_rest(scaled, labels, cluster)?;
    let markers = diffexpr::select_markers(&table, &cfg.markers);
    if markers.shortfall_up + markers.shortfall_down > 0 {
        warn!(
            "marker shortfall: {} up, {} down below FDR {}",
            markers.shortfall_up, markers.shortfall_down, cfg.markers.fdr_threshold
        );
    }
    Ok(DeOutputs { table, markers })
}

fn refit(
    e: &Embedding,
    choice: &DiscoveryChoice,
    reference: &ClusteringSolution,
    cfg: &RunConfig,
    proj: &Projection,
) -> Result<FinalCluster> {
    let k = choice.k;
    let sol = final_refit(&e.z, k, cfg.final_n_init, cfg.seed)?;
    let cluster = matching_cluster(&reference.labels, &sol.labels, k, choice.cluster)?;
    let aligned = raresub_core::stability::align(&reference.labels, &sol.labels, k)?;
    let n = sol.labels.len();
    let members: Vec<usize> = (0..n).filter(|&i| sol.labels[i] == cluster).collect();
    Ok(FinalCluster {
        k,
        n_init: cfg.final_n_init,
        seed: cfg.seed,
        reference_cluster: choice.cluster,
        cluster,
        size: members.len(),
        prevalence: members.len() as f64 / n as f64,
        agreement: aligned.agreement() as f64 / n as f64,
        silhouette: raresub_core::clustering::silhouette(&e.z, &sol.labels)?,
        dbi: raresub_core::clustering::davies_bouldin(&e.z, &sol.labels)?,
        member_ids: members
            .iter()
            .map(|&i| e.scaled.sample_ids[i].clone())
            .collect(),
        separation: separation(&proj.coords, &sol.labels, cluster)?,
        labels: sol.labels,
    })
}

/// Discovery on an existing embedding: stability scan, refit, DE.
pub fn discover_embedded(embedding: Embedding, cfg: &RunConfig) -> Result<WithinResult> {
    info!(
        "stability scan k = {}..={} ({} runs each)",
        cfg.k_min, cfg.k_max, cfg.stability.runs
    );
    let discovery = discovery_scan(&embedding.z, cfg.k_min..=cfg.k_max, cfg.stability, cfg.rule)?;
    let projection = pca2(&embedding.z)?;
    let (final_cluster, de) = match &discovery.chosen {
        Some(choice) => {
            info!(
                "chosen k = {}, cluster {} ({} samples)",
                choice.k, choice.cluster, choice.size
            );
            let reference = &discovery
                .at_k(choice.k)
                .expect("chosen k scanned")
                .reference;
            let fin = refit(&embedding, choice, reference, cfg, &projection)?;
            let de = run_de(&embedding.scaled, &fin.labels, fin.cluster, cfg)?;
            (Some(fin), Some(de))
        }
        None => {
            info!("no rare-and-stable cluster found");
            (None, None)
        }
    };
    Ok(WithinResult {
        embedding,
        discovery,
        projection,
        final_cluster,
        de,
    })
}

pub fn discover(m: &ExpressionMatrix, cfg: &RunConfig) -> Result<WithinResult> {
    discover_embedded(embed(m, cfg)?, cfg)
}

#[derive(Debug, Clone)]
pub struct PanResult {
    pub embedding: Embedding,
    pub scan: KScanResult,
    pub k: usize,
    pub stability: StabilityAtK,
    pub table: ContingencyTable,
    pub chi_square: ContingencyResult,
    pub projection: Projection,
}

/// Pan-cohort control: silhouette-selected k, stability at that k, and the
/// class-by-cluster association.
pub fn pan(m: &ExpressionMatrix, cfg: &RunConfig) -> Result<PanResult> {
    let classes = m
        .class_labels()
        .ok_or(raresub_core::Error::MissingLabels)?
        .to_vec();
    let embedding = embed(m, cfg)?;
    let scan = scan_k(
        &embedding.z,
        cfg.k_min..=cfg.k_max,
        cfg.scan_n_init,
        cfg.seed,
    )?;
    let k = scan.best_by_silhouette().expect("non-empty k range").k;
    info!("silhouette-selected k = {k}");
    let stability = jaccard_stability(&embedding.z, k, cfg.stability, cfg.rule)?;
    let labels = &scan.solution(k).expect("scanned").labels;
    let table = contingency(&classes, labels)?;
    let chi_square = table.chi_square()?;
    let projection = pca2(&embedding.z)?;
    Ok(PanResult {
        embedding,
        scan,
        k,
        stability,
        table,
        chi_square,
        projection,
    })
}

// ---- writers ----

fn f(v: f64) -> String {
    format!("{v:?}")
}

pub fn write_kscan(dir: &Path, scan: &[raresub_core::clustering::KScanEntry]) -> Result<()> {
    let rows = scan.iter().map(|e| {
        let sizes: Vec<String> = e.sizes.iter().map(usize::to_string).collect();
        vec![
            e.k.to_string(),
            f(e.silhouette),
            f(e.dbi),
            f(e.inertia),
            sizes.join(";"),
        ]
    });
    write_csv(
        &dir.join("kscan.csv"),
        &["k", "silhouette", "dbi", "inertia", "sizes"],
        rows,
    )?;
    figures::emit(
        &dir.join("figures"),
        figures::SILHOUETTE,
        &figures::silhouette_table(scan),
    )?;
    figures::emit(
        &dir.join("figures"),
        figures::DBI,
        &figures::dbi_table(scan),
    )
}

pub fn kscan_from_discovery(d: &DiscoveryReport) -> Vec<raresub_core::clustering::KScanEntry> {
    d.per_k
        .iter()
        .map(|s| raresub_core::clustering::KScanEntry {
            k: s.k,
            silhouette: s.silhouette,
            dbi: s.dbi,
            inertia: s.reference.inertia,
            sizes: s.reference.sizes(),
        })
        .collect()
}

pub fn write_stability(dir: &Path, rows: &[&StabilityAtK]) -> Result<()> {
    let out = rows.iter().flat_map(|s| s.clusters.iter()).map(|c| {
        vec![
            c.k.to_string(),
            c.cluster.to_string(),
            c.size.to_string(),
            f(c.prevalence),
            f(c.jaccard),
            c.rare.to_string(),
            c.stable.to_string(),
            c.is_hit().to_string(),
        ]
    });
    write_csv(
        &dir.join("stability.csv"),
        &[
            "k",
            "cluster",
            "size",
            "prevalence",
            "jaccard",
            "rare",
            "stable",
            "hit",
        ],
        out,
    )
}

pub fn write_training(dir: &Path, h: &TrainHistory) -> Result<()> {
    let rows =
        (0..h.epochs()).map(|e| vec![(e + 1).to_string(), f(h.train_mse[e]), f(h.val_mse[e])]);
    write_csv(
        &dir.join("training.csv"),
        &["epoch", "train_mse", "val_mse"],
        rows,
    )
}

pub fn write_assignments(dir: &Path, ids: &[String], labels: &[usize]) -> Result<()> {
    let rows = ids
        .iter()
        .zip(labels)
        .map(|(i, l)| vec![i.clone(), l.to_string()]);
    write_csv(&dir.join("clusters.csv"), &["sample_id", "cluster"], rows)
}

pub fn write_latent(dir: &Path, ids: &[String], z: &Matrix) -> Result<()> {
    let mut header = vec!["sample_id".to_string()];
    header.extend((0..z.cols()).map(|j| format!("z{j}")));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows = ids.iter().zip(z.row_iter()).map(|(id, r)| {
        std::iter::once(id.clone())
            .chain(r.iter().map(|v| f(*v)))
            .collect::<Vec<_>>()
    });
    write_csv(&dir.join("latent.csv"), &header, rows)
}

/// DE table, markers, volcano and heatmap for one cluster.
pub fn write_de(
    dir: &Path,
    scaled: &ScaledMatrix,
    labels: &[usize],
    cluster: usize,
    de: &DeOutputs,
    cfg: &RunConfig,
) -> Result<()> {
    let rows = de.table.rows.iter().map(|r| {
        vec![
            r.gene_id.clone(),
            f(r.effect),
            f(r.t),
            f(r.df),
            f(r.p),
            f(r.fdr),
        ]
    });
    write_csv(
        &dir.join(format!("de_c{cluster}.csv")),
        &["gene", "effect", "t", "df", "p", "fdr"],
        rows,
    )?;
    write_json(&dir.join("markers.json"), &de.markers)?;
    let figs = dir.join("figures");
    let v = diffexpr::volcano_data(
        &de.table,
        cfg.volcano.fdr_threshold,
        cfg.volcano.effect_threshold,
    );
    figures::emit(&figs, figures::VOLCANO, &figures::volcano_table(&v))?;
    if de.markers.is_empty() {
        io::write_text(
            &figs.join("NOTE.txt"),
            "heatmap skipped: no significant markers\n",
        )?;
    } else {
        let h = diffexpr::heatmap_data(scaled, labels, cluster, &de.markers)?;
        figures::emit(&figs, figures::HEATMAP, &figures::heatmap_table(&h))?;
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct DiscoveryJson<'a> {
    pub rule: raresub_core::stability::DiscoveryRule,
    pub params: raresub_core::stability::StabilityParams,
    pub k_range: [usize; 2],
    pub hits: &'a [raresub_core::stability::ClusterStability],
    pub chosen: Option<ChosenJson<'a>>,
    pub final_refit: Option<&'a FinalCluster>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ChosenJson<'a> {
    #[serde(flatten)]
    pub choice: &'a DiscoveryChoice,
    pub member_ids: Vec<String>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub epochs: usize,
    pub best_epoch: usize,
    pub best_val_mse: f64,
    pub n_train: usize,
    pub n_val: usize,
}

impl From<&TrainHistory> for TrainingSummary {
    fn from(h: &TrainHistory) -> Self {
        Self {
            epochs: h.epochs(),
            best_epoch: h.best_epoch,
            best_val_mse: h.best_val_mse,
            n_train: h.n_train,
            n_val: h.n_val,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct WithinSummary {
    pub n_samples: usize,
    pub n_genes: usize,
    pub k_chosen: Option<usize>,
    pub rare_cluster: Option<usize>,
    pub prevalence: Option<f64>,
    pub jaccard: Option<f64>,
    pub silhouette: Option<f64>,
    pub dbi: Option<f64>,
    pub n_hits: usize,
    pub final_cluster: Option<usize>,
    pub final_size: Option<usize>,
    pub final_agreement: Option<f64>,
    pub separation: Option<f64>,
    pub top_gene: Option<String>,
    pub top_gene_effect: Option<f64>,
    pub training: TrainingSummary,
    pub notes: Vec<String>,
}

pub fn write_within(dir: &Path, r: &WithinResult, cfg: &RunConfig) -> Result<WithinSummary> {
    let e = &r.embedding;
    let ids = &e.scaled.sample_ids;
    write_training(dir, &e.history)?;
    write_latent(dir, ids, &e.z)?;
    write_kscan(dir, &kscan_from_discovery(&r.discovery))?;
    let all: Vec<&StabilityAtK> = r.discovery.per_k.iter().collect();
    write_stability(dir, &all)?;

    let chosen = r.discovery.chosen.as_ref();
    let dj = DiscoveryJson {
        rule: r.discovery.rule,
        params: r.discovery.params,
        k_range: [cfg.k_min, cfg.k_max],
        hits: &r.discovery.hits,
        chosen: chosen.map(|c| ChosenJson {
            choice: c,
            member_ids: c.members.iter().map(|&i| ids[i].clone()).collect(),
        }),
        final_refit: r.final_cluster.as_ref(),
    };
    write_json(&dir.join("discovery.json"), &dj)?;

    let figs = dir.join("figures");
    let mut summary = WithinSummary {
        n_samples: e.scaled.rows(),
        n_genes: e.scaled.cols(),
        n_hits: r.discovery.hits.len(),
        training: (&e.history).into(),
        ..WithinSummary::default()
    };
    let shown_k = chosen.map_or(cfg.k_min, |c| c.k);
    let at_k = r.discovery.at_k(shown_k).expect("k scanned");
    let hl = chosen.map(|c| c.cluster);
    figures::emit(
        &figs,
        figures::CLUSTER_SIZES,
        &figures::sizes_table(at_k, hl),
    )?;
    figures::emit(
        &figs,
        figures::STABILITY,
        &figures::stability_table(at_k, cfg.rule.stable_at_least, hl),
    )?;

    match (chosen, &r.final_cluster, &r.de) {
        (Some(c), Some(fin), Some(de)) => {
            summary.k_chosen = Some(c.k);
            summary.rare_cluster = Some(c.cluster);
            summary.prevalence = Some(c.prevalence);
            summary.jaccard = Some(c.jaccard);
            summary.silhouette = Some(c.silhouette);
            summary.dbi = Some(c.dbi);
            summary.final_cluster = Some(fin.cluster);
            summary.final_size = Some(fin.size);
            summary.final_agreement = Some(fin.agreement);
            summary.separation = Some(fin.separation);
            summary.top_gene = de.table.rows.first().map(|r| r.gene_id.clone());
            summary.top_gene_effect = de.table.rows.first().map(|r| r.effect);
            write_assignments(dir, ids, &fin.labels)?;
            let lt = figures::latent_table(ids, &r.projection, &fin.labels, Some(fin.cluster));
            figures::emit(&figs, figures::LATENT, &lt)?;
            write_de(dir, &e.scaled, &fin.labels, fin.cluster, de, cfg)?;
        }
        _ => {
            let note = "no rare-and-stable cluster: volcano and heatmap skipped";
            summary.notes.push(note.into());
            io::write_text(&figs.join("NOTE.txt"), &format!("{note}\n"))?;
            let labels = &at_k.reference.labels;
            write_assignments(dir, ids, labels)?;
            figures::emit(
                &figs,
                figures::LATENT,
                &figures::latent_table(ids, &r.projection, labels, None),
            )?;
        }
    }
    write_json(&dir.join("summary.json"), &summary)?;
    Ok(summary)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PanSummary {
    pub n_samples: usize,
    pub n_genes: usize,
    pub k_chosen: usize,
    pub silhouette: f64,
    pub dbi: f64,
    pub chi2: f64,
    pub dof: usize,
    pub p_value: f64,
    pub p_underflow: bool,
    pub cramers_v: f64,
    pub cramers_v_min_dim: f64,
    pub min_expected: f64,
    /// Per class: modal cluster and the fraction of the class it holds.
    pub modal_capture: Vec<(String, usize, f64)>,
    pub training: TrainingSummary,
}

pub fn write_pan(dir: &Path, r: &PanResult) -> Result<PanSummary> {
    let e = &r.embedding;
    let ids = &e.scaled.sample_ids;
    write_training(dir, &e.history)?;
    write_latent(dir, ids, &e.z)?;
    write_kscan(dir, &r.scan.entries)?;
    write_stability(dir, &[&r.stability])?;
    let labels = &r.scan.solution(r.k).expect("scanned").labels;
    write_assignments(dir, ids, labels)?;

    let mut header = vec!["class".to_string()];
    header.extend(r.table.col_labels.iter().map(|c| format!("C{c}")));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    for (name, m) in [
        ("contingency.csv", &r.table.counts),
        ("contingency_proportions.csv", &r.table.proportions),
    ] {
        let rows = r.table.row_labels.iter().zip(m.row_iter()).map(|(c, row)| {
            std::iter::once(c.clone())
                .chain(row.iter().map(|v| f(*v)))
                .collect::<Vec<_>>()
        });
        write_csv(&dir.join(name), &header, rows)?;
    }

    let figs = dir.join("figures");
    figures::emit(
        &figs,
        figures::CLUSTER_SIZES,
        &figures::sizes_table(&r.stability, None),
    )?;
    figures::emit(
        &figs,
        figures::STABILITY,
        &figures::stability_table(&r.stability, 0.60, None),
    )?;
    figures::emit(
        &figs,
        figures::LATENT,
        &figures::latent_table(ids, &r.projection, labels, None),
    )?;

    let entry = r.scan.entry(r.k).expect("scanned");
    let chi = &r.chi_square;
    let summary = PanSummary {
        n_samples: e.scaled.rows(),
        n_genes: e.scaled.cols(),
        k_chosen: r.k,
        silhouette: entry.silhouette,
        dbi: entry.dbi,
        chi2: chi.chi2,
        dof: chi.dof,
        p_value: chi.p_value,
        p_underflow: chi.p_underflow,
        cramers_v: chi.cramers_v,
        cramers_v_min_dim: chi.cramers_v_min_dim(),
        min_expected: chi.min_expected,
        modal_capture: r
            .table
            .row_labels
            .iter()
            .zip(r.table.modal_clusters())
            .map(|(c, (k, p))| (c.clone(), k, p))
            .collect(),
        training: (&e.history).into(),
    };
    write_json(&dir.join("summary.json"), &summary)?;
    Ok(summary)
}

#[derive(Debug, Clone, Serialize)]
pub struct GroundTruth<'a> {
    pub member_ids: &'a [String],
    pub marker_gene_ids: &'a [String],
    pub up_marker_ids: &'a [String],
    pub spec: &'a synth::SyntheticSpec,
}

pub fn write_synth(dir: &Path, d: &SyntheticData, spec: &synth::SyntheticSpec) -> Result<()> {
    io::write_expression(&dir.join("data.csv"), &d.matrix)?;
    let classes = d.matrix.class_labels().expect("generator sets classes");
    io::write_labels(&dir.join("labels.csv"), d.matrix.sample_ids(), classes)?;
    let gt = GroundTruth {
        member_ids: &d.member_ids,
        marker_gene_ids: &d.marker_gene_ids,
        up_marker_ids: &d.up_marker_ids,
        spec,
    };
    write_json(&dir.join("ground_truth.json"), &gt)
}

/// Aligns a `sample_id,cluster` file with the cohort's sample order.
pub fn labels_for(
    ids: &[String],
    assignments: &[(String, usize)],
    path: &Path,
) -> Result<Vec<usize>> {
    let map: std::collections::HashMap<&str, usize> =
        assignments.iter().map(|(s, c)| (s.as_str(), *c)).collect();
    ids.iter()
        .map(|id| {
            map.get(id.as_str())
                .copied()
                .ok_or_else(|| RunError::input(path, format!("no cluster for sample `{id}`")))
        })
        .collect()
}
