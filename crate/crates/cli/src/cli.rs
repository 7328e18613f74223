use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use raresub_core::clustering::scan_k;
use raresub_core::stability::discovery_scan;
use raresub_core::synth::{self, SyntheticSpec};

use crate::config::RunConfig;
use crate::error::{Result, RunError};
use crate::figures;
use crate::io::{self, write_json};
use crate::manifest::{create_run_dir, RunManifest};
use crate::pipeline;

pub const OUT_ENV: &str = "RARESUB_OUT";

#[derive(Debug, Parser)]
#[command(name = "raresub", version)]
#[command(about = "Stability-aware rare-subtype discovery in expression data")]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// JSON config; absent fields take their defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Expression CSV (samples in rows).
    #[arg(long, global = true)]
    pub data: Option<PathBuf>,

    /// Label CSV (sample id, class).
    #[arg(long, global = true)]
    pub labels: Option<PathBuf>,

    /// Output root; each run writes a timestamped directory under it.
    #[arg(long, global = true, env = OUT_ENV)]
    pub out: Option<PathBuf>,

    #[arg(long, global = true)]
    pub seed: Option<u64>,

    #[arg(long, global = true)]
    pub k_min: Option<usize>,

    #[arg(long, global = true)]
    pub k_max: Option<usize>,

    /// Seeded runs per k in the stability analysis.
    #[arg(long, global = true)]
    pub runs: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Join data with labels and report what was kept
    Ingest {
        #[arg(long)]
        class: Option<String>,
    },
    /// Generate a synthetic cohort with a planted rare subtype
    Synth {
        /// Generator spec (JSON); overrides the config's `synth` section.
        #[arg(long)]
        spec: Option<PathBuf>,
    },
    /// Pan-cohort control: k scan, stability at the best k, class association
    Pan,
    /// Full discovery pipeline on one class
    Within {
        #[arg(long)]
        class: Option<String>,
    },
    /// Autoencoder plus k scan only
    ScanK {
        #[arg(long)]
        class: Option<String>,
    },
    /// Autoencoder plus multi-seed stability and the discovery rule
    Stability {
        #[arg(long)]
        class: Option<String>,
    },
    /// Cluster-vs-rest differential expression for a fixed assignment
    De {
        #[arg(long)]
        class: Option<String>,
        #[arg(long)]
        cluster: Option<usize>,
        /// `sample_id,cluster` CSV, e.g. clusters.csv from an earlier run.
        #[arg(long)]
        assignments: Option<PathBuf>,
    },
    /// Re-render figures from the CSV twins of an earlier run
    Report {
        #[arg(long)]
        from: PathBuf,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Ingest { .. } => "ingest",
            Self::Synth { .. } => "synth",
            Self::Pan => "pan",
            Self::Within { .. } => "within",
            Self::ScanK { .. } => "scan-k",
            Self::Stability { .. } => "stability",
            Self::De { .. } => "de",
            Self::Report { .. } => "report",
        }
    }

    fn class(&self) -> Option<&String> {
        match self {
            Self::Ingest { class }
            | Self::Within { class }
            | Self::ScanK { class }
            | Self::Stability { class }
            | Self::De { class, .. } => class.as_ref(),
            _ => None,
        }
    }
}

/// Config file, then flag overrides.
pub fn effective_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let c = &cli.common;
    if c.data.is_some() {
        cfg.data = c.data.clone();
    }
    if c.labels.is_some() {
        cfg.labels = c.labels.clone();
    }
    if c.out.is_some() {
        cfg.out = c.out.clone();
    }
    if let Some(s) = c.seed {
        cfg.seed = s;
        cfg.stability.base_seed = s;
    }
    if let Some(k) = c.k_min {
        cfg.k_min = k;
    }
    if let Some(k) = c.k_max {
        cfg.k_max = k;
    }
    if let Some(r) = c.runs {
        cfg.stability.runs = r;
    }
    if let Some(class) = cli.command.class() {
        cfg.class = Some(class.clone());
    }
    match &cli.command {
        Command::De {
            cluster,
            assignments,
            ..
        } => {
            if cluster.is_some() {
                cfg.cluster = *cluster;
            }
            if assignments.is_some() {
                cfg.assignments = assignments.clone();
            }
        }
        Command::Synth { spec: Some(p) } => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| RunError::Config(format!("{}: {e}", p.display())))?;
            cfg.synth = serde_json::from_str::<SyntheticSpec>(&text)
                .map_err(|e| RunError::Config(format!("{}: {e}", p.display())))?;
        }
        _ => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Runs one subcommand and returns its run directory.
pub fn run(cli: &Cli) -> Result<PathBuf> {
    let cfg = effective_config(cli)?;
    let command = cli.command.name();
    let root = cfg.out.clone().unwrap_or_else(|| PathBuf::from("runs"));
    let dir = create_run_dir(&root, command)?;
    info!("run directory {}", dir.display());
    write_json(&dir.join("config.json"), &cfg)?;
    let mut manifest = RunManifest::new(command, &cfg);
    if !matches!(cli.command, Command::Synth { .. } | Command::Report { .. }) {
        let (d, l) = cfg.require_data()?;
        manifest.add_input(d)?;
        manifest.add_input(l)?;
    }
    let class = cfg.class.as_deref();
    match &cli.command {
        Command::Ingest { .. } => {
            let cohort = pipeline::load_cohort(&cfg, class)?;
            write_json(&dir.join("cohort.json"), &cohort.summary(class))?;
        }
        Command::Synth { .. } => {
            let data = synth::generate(&cfg.synth)?;
            pipeline::write_synth(&dir, &data, &cfg.synth)?;
        }
        Command::Pan => {
            if class.is_some() {
                warn!("pan uses every class; ignoring the class filter");
            }
            let cohort = pipeline::load_cohort(&cfg, None)?;
            let result = pipeline::pan(&cohort.matrix, &cfg)?;
            let s = pipeline::write_pan(&dir, &result)?;
            info!(
                "k = {}, chi2 = {:.2}, V = {:.4}",
                s.k_chosen, s.chi2, s.cramers_v
            );
        }
        Command::Within { .. } => {
            let class = class.ok_or_else(|| RunError::Config("within needs --class".into()))?;
            let cohort = pipeline::load_cohort(&cfg, Some(class))?;
            let result = pipeline::discover(&cohort.matrix, &cfg)?;
            pipeline::write_within(&dir, &result, &cfg)?;
        }
        Command::ScanK { .. } => {
            let cohort = pipeline::load_cohort(&cfg, class)?;
            let e = pipeline::embed(&cohort.matrix, &cfg)?;
            let scan = scan_k(&e.z, cfg.k_min..=cfg.k_max, cfg.scan_n_init, cfg.seed)?;
            pipeline::write_training(&dir, &e.history)?;
            pipeline::write_latent(&dir, &e.scaled.sample_ids, &e.z)?;
            pipeline::write_kscan(&dir, &scan.entries)?;
        }
        Command::Stability { .. } => {
            let cohort = pipeline::load_cohort(&cfg, class)?;
            let e = pipeline::embed(&cohort.matrix, &cfg)?;
            let d = discovery_scan(&e.z, cfg.k_min..=cfg.k_max, cfg.stability, cfg.rule)?;
            pipeline::write_training(&dir, &e.history)?;
            let all: Vec<_> = d.per_k.iter().collect();
            pipeline::write_stability(&dir, &all)?;
            pipeline::write_kscan(&dir, &pipeline::kscan_from_discovery(&d))?;
            let ids = &e.scaled.sample_ids;
            let dj = pipeline::DiscoveryJson {
                rule: d.rule,
                params: d.params,
                k_range: [cfg.k_min, cfg.k_max],
                hits: &d.hits,
                chosen: d.chosen.as_ref().map(|c| pipeline::ChosenJson {
                    choice: c,
                    member_ids: c.members.iter().map(|&i| ids[i].clone()).collect(),
                }),
                final_refit: None,
            };
            write_json(&dir.join("discovery.json"), &dj)?;
            let k = d.chosen.as_ref().map_or(cfg.k_min, |c| c.k);
            let at_k = d.at_k(k).expect("scanned");
            let hl = d.chosen.as_ref().map(|c| c.cluster);
            let figs = dir.join("figures");
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
        }
        Command::De { .. } => {
            let cluster = cfg
                .cluster
                .ok_or_else(|| RunError::Config("de needs --cluster".into()))?;
            let path = cfg
                .assignments
                .clone()
                .ok_or_else(|| RunError::Config("de needs --assignments".into()))?;
            let cohort = pipeline::load_cohort(&cfg, class)?;
            let scaled =
                raresub_core::preprocess::prepare(&cohort.matrix, cfg.top_n, cfg.variance)?;
            manifest.add_input(&path)?;
            let labels =
                pipeline::labels_for(&scaled.sample_ids, &io::read_assignments(&path)?, &path)?;
            let de = pipeline::run_de(&scaled, &labels, cluster, &cfg)?;
            pipeline::write_de(&dir, &scaled, &labels, cluster, &de, &cfg)?;
        }
        Command::Report { from } => report(from, &dir)?,
    }
    manifest.finish(&dir)?;
    Ok(dir)
}

fn report(from: &Path, dir: &Path) -> Result<()> {
    let src = from.join("figures");
    if !src.is_dir() {
        return Err(RunError::MissingUpstream(src));
    }
    let figs = dir.join("figures");
    let mut copied = 0;
    for name in figures::ALL {
        let csv = src.join(format!("{name}.csv"));
        if csv.exists() {
            let target = figs.join(format!("{name}.csv"));
            std::fs::copy(&csv, &target).map_err(|e| RunError::output(&target, e))?;
            copied += 1;
        }
    }
    if copied == 0 {
        return Err(RunError::MissingUpstream(src));
    }
    let done = figures::rerender(&figs)?;
    info!("rendered {}", done.join(", "));
    Ok(())
}
