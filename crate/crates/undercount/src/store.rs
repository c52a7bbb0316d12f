//! Run artifacts on disk: draw files, summary tables, score documents and
//! the run manifest.
//!
//! Numbers are written with Rust's shortest round-trip float formatting, so
//! re-running an identical configuration produces byte-identical files.

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::diagnostics::{FitSummary, ModelScore};
use crate::sampler::{ChainDraws, PosteriorDraws, SamplerConfig};
use crate::{Error, Result};

/// Provenance record for one fit. Together with the input files it pins
/// down everything needed to reproduce the run.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    /// SHA-256 of the resolved configuration document.
    pub config_hash: String,
    /// SHA-256 over the input data files, in read order.
    pub data_hash: String,
    /// Per-chain RNG seeds.
    pub seeds: Vec<u64>,
    pub sampler: SamplerConfig,
    pub wall_time_seconds: f64,
    pub psrf_warnings: Vec<String>,
    pub lpml: f64,
}

/// Contents of `score.json`.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ScoreDocument {
    pub lpml: f64,
    pub cpo: Vec<f64>,
    pub config_hash: String,
}

/// Hex SHA-256 of a byte string.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

/// Hex SHA-256 over several files, concatenated in argument order.
pub fn hash_files(paths: &[&Path]) -> Result<String> {
    let mut hasher = Sha256::new();
    for path in paths {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        hasher.update(&bytes);
    }
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    Ok(out)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// One chain's retained draws, one row per draw, one column per parameter.
pub fn write_chain_csv(path: &Path, param_names: &[String], chain: &ChainDraws) -> Result<()> {
    let mut text = param_names.join(",");
    text.push('\n');
    for r in 0..chain.draws.rows() {
        let row: Vec<String> = chain.draws.row(r).iter().map(|v| format!("{v}")).collect();
        text.push_str(&row.join(","));
        text.push('\n');
    }
    write_text(path, &text)
}

/// One chain's per-draw per-area log-likelihood contributions.
pub fn write_loglik_csv(path: &Path, area_ids: &[String], chain: &ChainDraws) -> Result<()> {
    let mut text = area_ids.join(",");
    text.push('\n');
    for r in 0..chain.loglik.rows() {
        let row: Vec<String> = chain.loglik.row(r).iter().map(|v| format!("{v}")).collect();
        text.push_str(&row.join(","));
        text.push('\n');
    }
    write_text(path, &text)
}

/// All chains plus their log-likelihood files under `dir`.
pub fn write_draws(dir: &Path, draws: &PosteriorDraws) -> Result<()> {
    for (c, chain) in draws.chains.iter().enumerate() {
        write_chain_csv(&dir.join(format!("chain_{c}.csv")), &draws.param_names, chain)?;
        write_loglik_csv(&dir.join(format!("loglik_{c}.csv")), &draws.area_ids, chain)?;
    }
    Ok(())
}

/// `summary.csv`: `param,mean,sd,hpd_lo,hpd_hi,psrf` (PSRF is `NA` when it
/// cannot be computed).
pub fn write_summary_csv(path: &Path, summary: &FitSummary) -> Result<()> {
    let mut text = String::from("param,mean,sd,hpd_lo,hpd_hi,psrf\n");
    for row in &summary.params {
        let psrf = row.psrf.map_or("NA".to_string(), |v| format!("{v}"));
        text.push_str(&format!(
            "{},{},{},{},{},{}\n",
            row.name, row.mean, row.sd, row.hpd_lo, row.hpd_hi, psrf
        ));
    }
    write_text(path, &text)
}

/// `areas_summary.csv`: `area_id,theta_mean,eps_mean,rate_per_100k,cluster_label`
/// (label is `NA` under the pogit model).
pub fn write_areas_summary_csv(path: &Path, summary: &FitSummary) -> Result<()> {
    let mut text = String::from("area_id,theta_mean,eps_mean,rate_per_100k,cluster_label\n");
    for row in &summary.areas {
        let label = row
            .cluster_label
            .map_or("NA".to_string(), |v| v.to_string());
        text.push_str(&format!(
            "{},{},{},{},{}\n",
            row.area_id, row.theta_mean, row.eps_mean, row.rate_per_100k, label
        ));
    }
    write_text(path, &text)
}

pub fn write_score_json(path: &Path, score: &ModelScore, config_hash: &str) -> Result<()> {
    let doc = ScoreDocument {
        lpml: score.lpml,
        cpo: score.cpo.clone(),
        config_hash: config_hash.to_string(),
    };
    let text = serde_json::to_string_pretty(&doc)
        .map_err(|e| Error::numerical(format!("serializing score document: {e}")))?;
    write_text(path, &format!("{text}\n"))
}

pub fn read_score_json(path: &Path) -> Result<ScoreDocument> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        row: e.line(),
        message: format!("invalid score document: {e}"),
    })
}

pub fn write_manifest_json(path: &Path, manifest: &RunManifest) -> Result<()> {
    let text = serde_json::to_string_pretty(manifest)
        .map_err(|e| Error::numerical(format!("serializing manifest: {e}")))?;
    write_text(path, &format!("{text}\n"))
}

pub fn read_manifest_json(path: &Path) -> Result<RunManifest> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        row: e.line(),
        message: format!("invalid manifest: {e}"),
    })
}
