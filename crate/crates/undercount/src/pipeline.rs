//! End-to-end orchestration used by the batch front end: load inputs,
//! derive the reporting-mechanism structure, sample, diagnose and export.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::areal::{self, ArealDataset};
use crate::cluster::{cut_and_order, standardize, ward_cluster, Membership, QualityClustering};
use crate::diagnostics::{self, FitSummary, ModelScore};
use crate::mat::Matrix;
use crate::model::{orthogonal_poly, MechanismKind, ModelConfig, PolyBasis};
use crate::sampler::{run_fit_with_threads, Mechanism, ModelContext, SamplerConfig};
use crate::store::{self, RunManifest};
use crate::synthetic::{simulate, GroundTruth, SimDesign};
use crate::{Error, Result};

/// Resolved configuration: model and sampler settings combined.
///
/// In TOML form both sections are optional; an absent `[model]` section
/// defaults to the clustering mechanism with three quality groups. The
/// front end's `--model` flag always overrides the mechanism.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct AppConfig {
    pub model: ModelConfig,
    pub sampler: SamplerConfig,
}

impl Default for AppConfig {
    fn default() -> Self {
        AppConfig {
            model: ModelConfig::clustering(3),
            sampler: SamplerConfig::default(),
        }
    }
}

/// Load an [`AppConfig`], falling back to defaults when no path is given.
pub fn load_app_config(path: Option<&Path>) -> Result<AppConfig> {
    let Some(path) = path else {
        return Ok(AppConfig::default());
    };
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    toml::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        row: 0,
        message: format!("invalid config: {}", e.message()),
    })
}

/// Inputs of one `fit` invocation.
#[derive(Debug, Clone)]
pub struct FitRequest {
    pub mechanism: MechanismKind,
    pub areas_csv: PathBuf,
    pub adjacency_csv: PathBuf,
    /// Explicit `area_id,cluster_label` assignments (clustering mechanism).
    pub clusters_csv: Option<PathBuf>,
    /// Number of quality clusters to derive from the indicator columns when
    /// no explicit assignment is given.
    pub k: Option<usize>,
    pub config_path: Option<PathBuf>,
    pub out_dir: PathBuf,
    /// Replace the desk-scale iteration budget with the published protocol
    /// (3,000,000 iterations, 1,000,000 burn-in, lag 3,000).
    pub paper_protocol: bool,
    /// Chains run concurrently, up to this many at a time.
    pub threads: usize,
}

/// Everything a fit produced, with the paths already written.
#[derive(Debug)]
pub struct FitOutcome {
    pub out_dir: PathBuf,
    pub summary: FitSummary,
    pub score: ModelScore,
    pub manifest: RunManifest,
}

enum MechanismData {
    Clustering(Membership),
    Pogit(PolyBasis),
}

/// Run the full fit pipeline and write all artifacts into `out_dir`:
/// per-chain draw and log-likelihood files, `summary.csv`,
/// `areas_summary.csv`, `score.json`, `manifest.json`, the resolved
/// `config.toml`, and `clusters.csv` under the clustering mechanism.
pub fn run_fit_pipeline(req: &FitRequest) -> Result<FitOutcome> {
    let start = Instant::now();
    let mut config = load_app_config(req.config_path.as_deref())?;
    config.model.mechanism = req.mechanism;
    if req.paper_protocol {
        let preset = SamplerConfig::paper_protocol();
        config.sampler.n_iter = preset.n_iter;
        config.sampler.burn_in = preset.burn_in;
        config.sampler.thin = preset.thin;
    }
    config.sampler.validate()?;

    let dataset = areal::load_dataset(&req.areas_csv, &req.adjacency_csv)?;
    let mech_data = match req.mechanism {
        MechanismKind::Clustering => {
            let membership = resolve_membership(req, &mut config, &dataset)?;
            MechanismData::Clustering(membership)
        }
        MechanismKind::Pogit => {
            let Some(w) = dataset.proxy_w() else {
                return Err(Error::validation(format!(
                    "the pogit model needs a proxy column `w` in {}",
                    req.areas_csv.display()
                )));
            };
            MechanismData::Pogit(orthogonal_poly(w, config.model.degree)?)
        }
    };
    let mechanism = match &mech_data {
        MechanismData::Clustering(m) => Mechanism::Clustering(m),
        MechanismData::Pogit(b) => Mechanism::Pogit(b),
    };

    let e = areal::compute_expected_counts(&dataset)?;
    let ctx = ModelContext::new(&config.model, &dataset, &e, mechanism)?;
    let draws = run_fit_with_threads(&config.sampler, &ctx, req.threads.max(1))?;
    let summary = diagnostics::summarize(&draws, &ctx)?;
    let score = diagnostics::lpml(&draws.pooled_loglik())?;

    let config_text = toml::to_string_pretty(&config)
        .map_err(|e| Error::numerical(format!("serializing config: {e}")))?;
    let config_hash = store::sha256_hex(config_text.as_bytes());
    let mut data_files: Vec<&Path> = vec![&req.areas_csv, &req.adjacency_csv];
    if let Some(c) = &req.clusters_csv {
        data_files.push(c);
    }
    let data_hash = store::hash_files(&data_files)?;

    let manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash,
        data_hash,
        seeds: draws.chains.iter().map(|c| c.seed).collect(),
        sampler: config.sampler.clone(),
        wall_time_seconds: start.elapsed().as_secs_f64(),
        psrf_warnings: summary.psrf_warnings.clone(),
        lpml: score.lpml,
    };

    fs::create_dir_all(&req.out_dir).map_err(|e| Error::io(&req.out_dir, e))?;
    fs::write(req.out_dir.join("config.toml"), &config_text)
        .map_err(|e| Error::io(req.out_dir.join("config.toml"), e))?;
    store::write_draws(&req.out_dir, &draws)?;
    store::write_summary_csv(&req.out_dir.join("summary.csv"), &summary)?;
    store::write_areas_summary_csv(&req.out_dir.join("areas_summary.csv"), &summary)?;
    store::write_score_json(
        &req.out_dir.join("score.json"),
        &score,
        &manifest.config_hash,
    )?;
    store::write_manifest_json(&req.out_dir.join("manifest.json"), &manifest)?;
    if let MechanismData::Clustering(m) = &mech_data {
        write_clusters_csv(&req.out_dir.join("clusters.csv"), dataset.area_ids(), m)?;
    }

    Ok(FitOutcome {
        out_dir: req.out_dir.clone(),
        summary,
        score,
        manifest,
    })
}

/// Cluster assignments for a fit: an explicit file wins; otherwise the
/// quality indicators are clustered with Ward linkage.
fn resolve_membership(
    req: &FitRequest,
    config: &mut AppConfig,
    dataset: &ArealDataset,
) -> Result<Membership> {
    if let Some(path) = &req.clusters_csv {
        let membership = read_clusters_csv(path, dataset.area_ids())?;
        config.model.k = Some(membership.k());
        return Ok(membership);
    }
    let Some(k) = req.k.or(config.model.k) else {
        return Err(Error::validation(
            "the clustering model needs either --clusters or --k",
        ));
    };
    let Some(indicators) = dataset.quality_indicators() else {
        return Err(Error::validation(format!(
            "the clustering model needs --clusters, or quality indicator columns \
             (q1, q2, ...) in {} to derive them with --k",
            req.areas_csv.display()
        )));
    };
    let standardized = standardize(indicators)?;
    let dendrogram = ward_cluster(&standardized)?;
    let clustering = cut_and_order(&dendrogram, &standardized, k)?;
    config.model.k = Some(k);
    Ok(clustering.membership().clone())
}

/// Read `area_id,cluster_label` assignments and order them like `area_ids`.
pub fn read_clusters_csv(path: &Path, area_ids: &[String]) -> Result<Membership> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let parse_err = |row: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        row,
        message,
    };
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == "area_id,cluster_label" => {}
        other => {
            return Err(parse_err(
                0,
                format!(
                    "expected header `area_id,cluster_label`, got {:?}",
                    other.unwrap_or("")
                ),
            ));
        }
    }
    let mut by_id: std::collections::HashMap<&str, usize> = std::collections::HashMap::new();
    for (r, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let Some((id, label)) = line.split_once(',') else {
            return Err(parse_err(r + 1, "expected two columns".into()));
        };
        let label: usize = label
            .trim()
            .parse()
            .map_err(|_| parse_err(r + 1, format!("bad cluster label {label:?}")))?;
        if label == 0 {
            return Err(parse_err(r + 1, "cluster labels are 1-based".into()));
        }
        if by_id.insert(id.trim(), label).is_some() {
            return Err(parse_err(r + 1, format!("duplicate area id {id:?}")));
        }
    }
    let mut labels = Vec::with_capacity(area_ids.len());
    for id in area_ids {
        let Some(&label) = by_id.get(id.as_str()) else {
            return Err(Error::validation(format!(
                "{} has no cluster label for area {id:?}",
                path.display()
            )));
        };
        labels.push(label);
    }
    if by_id.len() != area_ids.len() {
        return Err(Error::validation(format!(
            "{} labels {} areas but the dataset has {}",
            path.display(),
            by_id.len(),
            area_ids.len()
        )));
    }
    let k = labels.iter().copied().max().unwrap_or(0);
    Membership::new(k, labels)
}

fn write_clusters_csv(path: &Path, area_ids: &[String], membership: &Membership) -> Result<()> {
    let mut text = String::from("area_id,cluster_label\n");
    for (id, &label) in area_ids.iter().zip(membership.labels()) {
        text.push_str(&format!("{id},{label}\n"));
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Result of comparing two completed runs by LPML.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub lpml_a: f64,
    pub lpml_b: f64,
    /// 0 or 1 for the run with the higher LPML; None on an exact tie.
    pub preferred: Option<usize>,
}

/// Compare two run directories by the LPML stored in their score documents.
pub fn run_compare(dir_a: &Path, dir_b: &Path) -> Result<Comparison> {
    let a = store::read_score_json(&dir_a.join("score.json"))?;
    let b = store::read_score_json(&dir_b.join("score.json"))?;
    if !(a.lpml.is_finite() && b.lpml.is_finite()) {
        return Err(Error::numerical("cannot compare non-finite LPML values"));
    }
    let preferred = if a.lpml > b.lpml {
        Some(0)
    } else if b.lpml > a.lpml {
        Some(1)
    } else {
        None
    };
    Ok(Comparison {
        lpml_a: a.lpml,
        lpml_b: b.lpml,
        preferred,
    })
}

/// Ground truth echo written next to simulated datasets.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct TruthDocument {
    pub design: SimDesign,
    pub labels: Vec<usize>,
    pub u: Vec<f64>,
    pub s: Vec<f64>,
    pub delta: Vec<f64>,
    pub theta: Vec<f64>,
    pub eps: Vec<f64>,
    pub e: Vec<f64>,
}

impl From<&GroundTruth> for TruthDocument {
    fn from(t: &GroundTruth) -> Self {
        TruthDocument {
            design: t.design.clone(),
            labels: t.labels.clone(),
            u: t.u.clone(),
            s: t.s.clone(),
            delta: t.delta.clone(),
            theta: t.theta.clone(),
            eps: t.eps.clone(),
            e: t.e.values().to_vec(),
        }
    }
}

/// Simulate a dataset and write `areas.csv`, `adjacency.csv` and
/// `truth.json` into `out_dir`. Returns the dataset paths.
pub fn run_simulate(design: &SimDesign, out_dir: &Path) -> Result<(PathBuf, PathBuf)> {
    let (data, truth) = simulate(design)?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let areas = out_dir.join("areas.csv");
    let adjacency = out_dir.join("adjacency.csv");
    areal::write_dataset(&data, &areas, &adjacency)?;
    let doc = TruthDocument::from(&truth);
    let text = serde_json::to_string_pretty(&doc)
        .map_err(|e| Error::numerical(format!("serializing ground truth: {e}")))?;
    fs::write(out_dir.join("truth.json"), format!("{text}\n"))
        .map_err(|e| Error::io(out_dir.join("truth.json"), e))?;
    Ok((areas, adjacency))
}

/// Indicator table for standalone clustering: area ids plus the numeric
/// columns to cluster on. Accepts either a bare `area_id,<columns...>` table
/// or a full areas file, in which case only the `q*` indicator columns are
/// used.
pub fn read_indicator_csv(path: &Path) -> Result<(Vec<String>, Matrix)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let parse_err = |row: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        row,
        message,
    };
    let mut lines = text.lines();
    let Some(header) = lines.next() else {
        return Err(parse_err(0, "empty file".into()));
    };
    let columns: Vec<&str> = header.split(',').map(str::trim).collect();
    if columns.first() != Some(&"area_id") {
        return Err(parse_err(0, "first column must be area_id".into()));
    }
    let has_q = columns[1..].iter().any(|c| areal::is_indicator_name(c));
    let selected: Vec<usize> = columns
        .iter()
        .enumerate()
        .skip(1)
        .filter(|(_, c)| {
            if has_q {
                areal::is_indicator_name(c)
            } else {
                !matches!(**c, "y" | "n_pop" | "w")
            }
        })
        .map(|(i, _)| i)
        .collect();
    if selected.is_empty() {
        return Err(parse_err(0, "no indicator columns found".into()));
    }

    let mut ids = Vec::new();
    let mut rows = Vec::new();
    for (r, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != columns.len() {
            return Err(parse_err(
                r + 1,
                format!("expected {} fields, got {}", columns.len(), fields.len()),
            ));
        }
        ids.push(fields[0].to_string());
        let mut row = Vec::with_capacity(selected.len());
        for &j in &selected {
            let v: f64 = fields[j]
                .parse()
                .map_err(|_| parse_err(r + 1, format!("bad numeric value {:?}", fields[j])))?;
            row.push(v);
        }
        rows.push(row);
    }
    Ok((ids, Matrix::from_rows(&rows)?))
}

/// Result of the standalone clustering pipeline.
#[derive(Debug)]
pub struct ClusterOutcome {
    pub clustering: QualityClustering,
    pub labels_csv: PathBuf,
    pub merges_csv: PathBuf,
}

/// Cluster indicator rows with Ward linkage, order groups by quality, and
/// write `area_id,cluster_label` plus a merge-height report.
pub fn run_cluster(
    indicators_csv: &Path,
    k: usize,
    out_csv: &Path,
    standardize_input: bool,
) -> Result<ClusterOutcome> {
    let (ids, raw) = read_indicator_csv(indicators_csv)?;
    let points = if standardize_input {
        standardize(&raw)?
    } else {
        raw
    };
    let dendrogram = ward_cluster(&points)?;
    let clustering = cut_and_order(&dendrogram, &points, k)?;

    if let Some(dir) = out_csv.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    write_clusters_csv(out_csv, &ids, clustering.membership())?;

    let merges_csv = merge_report_path(out_csv);
    let mut text = String::from("step,left,right,height,size\n");
    for (step, m) in dendrogram.merges().iter().enumerate() {
        text.push_str(&format!(
            "{},{},{},{},{}\n",
            step + 1,
            m.left,
            m.right,
            m.height,
            m.size
        ));
    }
    fs::write(&merges_csv, text).map_err(|e| Error::io(&merges_csv, e))?;

    Ok(ClusterOutcome {
        clustering,
        labels_csv: out_csv.to_path_buf(),
        merges_csv,
    })
}

fn merge_report_path(out_csv: &Path) -> PathBuf {
    let stem = out_csv
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "clusters".into());
    out_csv.with_file_name(format!("{stem}_merges.csv"))
}
