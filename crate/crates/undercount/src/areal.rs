//! Areal count data: ingestion, validation and preprocessing.
//!
//! A dataset couples per-area observed counts, populations at risk and risk
//! covariates with an undirected adjacency graph. Covariates are mean-centered
//! at load time (the regression models assume centered covariates); the
//! original values and their means are kept for serialization and reporting.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use crate::mat::Matrix;
use crate::{Error, Result};

/// Undirected adjacency graph over the areas, stored as a deduplicated edge
/// list plus per-node neighbor lists.
#[derive(Debug, Clone, PartialEq)]
pub struct Adjacency {
    n: usize,
    edges: Vec<(usize, usize)>,
    neighbors: Vec<Vec<usize>>,
}

impl Adjacency {
    /// Build from an edge list. Rejects self-loops, duplicate edges and
    /// out-of-range endpoints. Edges are normalized to `(min, max)`.
    pub fn from_edges(n: usize, raw_edges: &[(usize, usize)]) -> Result<Self> {
        let mut seen = HashSet::new();
        let mut edges = Vec::with_capacity(raw_edges.len());
        let mut neighbors = vec![Vec::new(); n];
        for &(a, b) in raw_edges {
            if a >= n || b >= n {
                return Err(Error::validation(format!(
                    "edge ({a}, {b}) references a node outside 0..{n}"
                )));
            }
            if a == b {
                return Err(Error::validation(format!("self-loop on node {a}")));
            }
            let e = (a.min(b), a.max(b));
            if !seen.insert(e) {
                return Err(Error::validation(format!(
                    "duplicate edge ({}, {})",
                    e.0, e.1
                )));
            }
            edges.push(e);
            neighbors[a].push(b);
            neighbors[b].push(a);
        }
        for list in &mut neighbors {
            list.sort_unstable();
        }
        Ok(Adjacency {
            n,
            edges,
            neighbors,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.n
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    /// Nodes with no neighbors.
    pub fn islands(&self) -> Vec<usize> {
        (0..self.n).filter(|&i| self.degree(i) == 0).collect()
    }

    /// Connected component id per node, ids numbered from 0 in order of the
    /// lowest member node.
    pub fn components(&self) -> Vec<usize> {
        let mut comp = vec![usize::MAX; self.n];
        let mut next = 0;
        let mut stack = Vec::new();
        for start in 0..self.n {
            if comp[start] != usize::MAX {
                continue;
            }
            comp[start] = next;
            stack.push(start);
            while let Some(i) = stack.pop() {
                for &j in self.neighbors(i) {
                    if comp[j] == usize::MAX {
                        comp[j] = next;
                        stack.push(j);
                    }
                }
            }
            next += 1;
        }
        comp
    }

    pub fn n_components(&self) -> usize {
        self.components().iter().copied().max().map_or(0, |m| m + 1)
    }
}

/// Validated areal dataset.
#[derive(Debug, Clone)]
pub struct ArealDataset {
    area_ids: Vec<String>,
    y: Vec<u64>,
    n_pop: Vec<u64>,
    covariate_names: Vec<String>,
    covariates_raw: Matrix,
    covariates: Matrix,
    covariate_means: Vec<f64>,
    proxy_w: Option<Vec<f64>>,
    indicator_names: Vec<String>,
    quality_indicators: Option<Matrix>,
    adjacency: Adjacency,
}

impl ArealDataset {
    /// Assemble and validate a dataset. Covariates are mean-centered here;
    /// `covariates_raw` keeps the original values.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        area_ids: Vec<String>,
        y: Vec<u64>,
        n_pop: Vec<u64>,
        covariate_names: Vec<String>,
        covariates_raw: Matrix,
        proxy_w: Option<Vec<f64>>,
        indicator_names: Vec<String>,
        quality_indicators: Option<Matrix>,
        adjacency: Adjacency,
    ) -> Result<Self> {
        let a = area_ids.len();
        if a == 0 {
            return Err(Error::validation("dataset has no areas"));
        }
        let mut seen = HashSet::new();
        for id in &area_ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::validation(format!("duplicate area id {id:?}")));
            }
        }
        if y.len() != a || n_pop.len() != a {
            return Err(Error::validation("y / n_pop length does not match area count"));
        }
        if let Some(i) = n_pop.iter().position(|&p| p == 0) {
            return Err(Error::validation(format!(
                "area {:?} has population 0; populations must be >= 1",
                area_ids[i]
            )));
        }
        if covariates_raw.rows() != a || covariate_names.len() != covariates_raw.cols() {
            return Err(Error::validation(
                "covariate matrix shape does not match areas / names",
            ));
        }
        if covariates_raw.data().iter().any(|v| !v.is_finite()) {
            return Err(Error::validation("covariates contain non-finite values"));
        }
        if let Some(w) = &proxy_w {
            if w.len() != a {
                return Err(Error::validation("proxy w length does not match area count"));
            }
            if w.iter().any(|v| !v.is_finite()) {
                return Err(Error::validation("proxy w contains non-finite values"));
            }
        }
        if let Some(q) = &quality_indicators {
            if q.rows() != a || indicator_names.len() != q.cols() {
                return Err(Error::validation(
                    "indicator matrix shape does not match areas / names",
                ));
            }
            if q.data().iter().any(|v| !v.is_finite()) {
                return Err(Error::validation("indicators contain non-finite values"));
            }
        }
        if adjacency.n_nodes() != a {
            return Err(Error::validation(format!(
                "adjacency has {} nodes but the dataset has {} areas",
                adjacency.n_nodes(),
                a
            )));
        }

        let p = covariates_raw.cols();
        let mut covariate_means = vec![0.0; p];
        for j in 0..p {
            covariate_means[j] =
                (0..a).map(|i| covariates_raw.get(i, j)).sum::<f64>() / a as f64;
        }
        let mut covariates = covariates_raw.clone();
        for i in 0..a {
            for j in 0..p {
                covariates.set(i, j, covariates_raw.get(i, j) - covariate_means[j]);
            }
        }

        Ok(ArealDataset {
            area_ids,
            y,
            n_pop,
            covariate_names,
            covariates_raw,
            covariates,
            covariate_means,
            proxy_w,
            indicator_names,
            quality_indicators,
            adjacency,
        })
    }

    pub fn n_areas(&self) -> usize {
        self.area_ids.len()
    }

    pub fn area_ids(&self) -> &[String] {
        &self.area_ids
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.area_ids.iter().position(|a| a == id)
    }

    pub fn y(&self) -> &[u64] {
        &self.y
    }

    pub fn n_pop(&self) -> &[u64] {
        &self.n_pop
    }

    /// Mean-centered covariates used by the regression models.
    pub fn covariates(&self) -> &Matrix {
        &self.covariates
    }

    /// Covariates exactly as ingested.
    pub fn covariates_raw(&self) -> &Matrix {
        &self.covariates_raw
    }

    pub fn covariate_means(&self) -> &[f64] {
        &self.covariate_means
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    pub fn proxy_w(&self) -> Option<&[f64]> {
        self.proxy_w.as_deref()
    }

    pub fn quality_indicators(&self) -> Option<&Matrix> {
        self.quality_indicators.as_ref()
    }

    pub fn indicator_names(&self) -> &[String] {
        &self.indicator_names
    }

    pub fn adjacency(&self) -> &Adjacency {
        &self.adjacency
    }
}

/// Naive expected counts: `e_i = n_pop_i * sum(y) / sum(n_pop)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpectedCounts {
    e: Vec<f64>,
}

impl ExpectedCounts {
    /// Wrap precomputed expected counts; every entry must be finite and
    /// strictly positive.
    pub fn from_values(e: Vec<f64>) -> Result<Self> {
        if e.is_empty() || e.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(Error::validation(
                "expected counts must be non-empty, finite and strictly positive",
            ));
        }
        Ok(ExpectedCounts { e })
    }

    pub fn values(&self) -> &[f64] {
        &self.e
    }

    pub fn len(&self) -> usize {
        self.e.len()
    }

    pub fn is_empty(&self) -> bool {
        self.e.is_empty()
    }
}

/// Compute the naive expected-count offset. Requires `sum(y) > 0`; the
/// resulting `e` sums to `sum(y)` by construction.
pub fn compute_expected_counts(dataset: &ArealDataset) -> Result<ExpectedCounts> {
    let total_y: u64 = dataset.y().iter().sum();
    if total_y == 0 {
        return Err(Error::validation(
            "all observed counts are zero; the expected-count offset is undefined",
        ));
    }
    let total_pop: u64 = dataset.n_pop().iter().sum();
    let ratio = total_y as f64 / total_pop as f64;
    let e = dataset.n_pop().iter().map(|&n| n as f64 * ratio).collect();
    ExpectedCounts::from_values(e)
}

/// Incidence rate per 100,000 inhabitants: `rate_i = 1e5 * e_i * theta_i / n_pop_i`.
pub fn incidence_rate(theta: &[f64], e: &ExpectedCounts, n_pop: &[u64]) -> Result<Vec<f64>> {
    if theta.len() != e.len() || n_pop.len() != e.len() {
        return Err(Error::validation(format!(
            "length mismatch: theta {}, e {}, n_pop {}",
            theta.len(),
            e.len(),
            n_pop.len()
        )));
    }
    Ok(theta
        .iter()
        .zip(e.values())
        .zip(n_pop)
        .map(|((&t, &ei), &n)| 1e5 * ei * t / n as f64)
        .collect())
}

/// Options for [`load_dataset_with`].
#[derive(Debug, Clone, Default)]
pub struct LoadOptions {
    /// Keep areas with zero neighbors instead of rejecting the file. Such
    /// areas form their own graph component, which pins their spatial effect
    /// at zero under the ICAR prior.
    pub allow_islands: bool,
}

/// Load and validate a dataset from the two CSV files.
///
/// The areas file must have header `area_id,y,n_pop,...` where the remaining
/// columns are risk covariates, except a column named `w` (reporting proxy)
/// and columns named `q1`, `q2`, ... (data-quality indicators). The adjacency
/// file has header `area_a,area_b` with one undirected edge per row.
///
/// Areas with zero neighbors are rejected unless
/// [`LoadOptions::allow_islands`] is set.
pub fn load_dataset(areas_path: &Path, adjacency_path: &Path) -> Result<ArealDataset> {
    load_dataset_with(areas_path, adjacency_path, &LoadOptions::default())
}

pub(crate) fn is_indicator_name(name: &str) -> bool {
    let mut chars = name.chars();
    chars.next() == Some('q') && {
        let rest: String = chars.collect();
        !rest.is_empty() && rest.chars().all(|c| c.is_ascii_digit())
    }
}

pub fn load_dataset_with(
    areas_path: &Path,
    adjacency_path: &Path,
    opts: &LoadOptions,
) -> Result<ArealDataset> {
    let mut reader = csv::Reader::from_path(areas_path)
        .map_err(|e| csv_error(areas_path, 0, e))?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| csv_error(areas_path, 0, e))?
        .iter()
        .map(str::to_string)
        .collect();
    if headers.len() < 3 || headers[0] != "area_id" || headers[1] != "y" || headers[2] != "n_pop" {
        return Err(Error::Parse {
            path: areas_path.to_path_buf(),
            row: 0,
            message: "header must start with area_id,y,n_pop".into(),
        });
    }

    // Classify the remaining columns by name.
    let mut cov_cols = Vec::new();
    let mut w_col = None;
    let mut ind_cols = Vec::new();
    for (idx, name) in headers.iter().enumerate().skip(3) {
        if name == "w" {
            if w_col.replace(idx).is_some() {
                return Err(Error::Parse {
                    path: areas_path.to_path_buf(),
                    row: 0,
                    message: "duplicate column w".into(),
                });
            }
        } else if is_indicator_name(name) {
            ind_cols.push(idx);
        } else {
            cov_cols.push(idx);
        }
    }

    let mut area_ids = Vec::new();
    let mut y = Vec::new();
    let mut n_pop = Vec::new();
    let mut cov_rows: Vec<Vec<f64>> = Vec::new();
    let mut w_vals = Vec::new();
    let mut ind_rows: Vec<Vec<f64>> = Vec::new();

    for (row_idx, record) in reader.records().enumerate() {
        let row = row_idx + 1;
        let record = record.map_err(|e| csv_error(areas_path, row, e))?;
        if record.len() != headers.len() {
            return Err(Error::Parse {
                path: areas_path.to_path_buf(),
                row,
                message: format!(
                    "expected {} fields, found {}",
                    headers.len(),
                    record.len()
                ),
            });
        }
        let field = |idx: usize| record.get(idx).unwrap_or("").trim();
        let parse_f64 = |idx: usize| -> Result<f64> {
            let raw = field(idx);
            if raw.is_empty() {
                return Err(Error::Parse {
                    path: areas_path.to_path_buf(),
                    row,
                    message: format!("missing value in column {}", headers[idx]),
                });
            }
            raw.parse::<f64>().map_err(|_| Error::Parse {
                path: areas_path.to_path_buf(),
                row,
                message: format!("cannot parse {:?} in column {}", raw, headers[idx]),
            })
        };
        let parse_u64 = |idx: usize| -> Result<u64> {
            let raw = field(idx);
            raw.parse::<u64>().map_err(|_| Error::Parse {
                path: areas_path.to_path_buf(),
                row,
                message: format!(
                    "cannot parse {:?} in column {} (non-negative integer required)",
                    raw, headers[idx]
                ),
            })
        };

        let id = field(0);
        if id.is_empty() {
            return Err(Error::Parse {
                path: areas_path.to_path_buf(),
                row,
                message: "empty area_id".into(),
            });
        }
        area_ids.push(id.to_string());
        y.push(parse_u64(1)?);
        n_pop.push(parse_u64(2)?);
        cov_rows.push(cov_cols.iter().map(|&c| parse_f64(c)).collect::<Result<_>>()?);
        if let Some(wc) = w_col {
            w_vals.push(parse_f64(wc)?);
        }
        ind_rows.push(ind_cols.iter().map(|&c| parse_f64(c)).collect::<Result<_>>()?);
    }

    let id_index: HashMap<&str, usize> = area_ids
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();

    let mut adj_reader = csv::Reader::from_path(adjacency_path)
        .map_err(|e| csv_error(adjacency_path, 0, e))?;
    let mut edges = Vec::new();
    for (row_idx, record) in adj_reader.records().enumerate() {
        let row = row_idx + 1;
        let record = record.map_err(|e| csv_error(adjacency_path, row, e))?;
        let a = record.get(0).unwrap_or("").trim();
        let b = record.get(1).unwrap_or("").trim();
        let ai = *id_index.get(a).ok_or_else(|| Error::Parse {
            path: adjacency_path.to_path_buf(),
            row,
            message: format!("edge references unknown area {a:?}"),
        })?;
        let bi = *id_index.get(b).ok_or_else(|| Error::Parse {
            path: adjacency_path.to_path_buf(),
            row,
            message: format!("edge references unknown area {b:?}"),
        })?;
        edges.push((ai, bi));
    }

    let adjacency = Adjacency::from_edges(area_ids.len(), &edges)?;
    let islands = adjacency.islands();
    if !islands.is_empty() && !opts.allow_islands {
        let names: Vec<&str> = islands.iter().map(|&i| area_ids[i].as_str()).collect();
        return Err(Error::validation(format!(
            "areas with no neighbors: {}; exclude them or pass allow_islands \
             to keep them with their spatial effect pinned at zero",
            names.join(", ")
        )));
    }

    let covariate_names: Vec<String> = cov_cols.iter().map(|&c| headers[c].clone()).collect();
    let indicator_names: Vec<String> = ind_cols.iter().map(|&c| headers[c].clone()).collect();
    let covariates_raw = Matrix::from_rows(&cov_rows)?;
    let quality_indicators = if ind_cols.is_empty() {
        None
    } else {
        Some(Matrix::from_rows(&ind_rows)?)
    };

    ArealDataset::new(
        area_ids,
        y,
        n_pop,
        covariate_names,
        covariates_raw,
        if w_col.is_some() { Some(w_vals) } else { None },
        indicator_names,
        quality_indicators,
        adjacency,
    )
}

fn csv_error(path: &Path, row: usize, e: csv::Error) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        row,
        message: e.to_string(),
    }
}

/// Write a dataset back to the two CSV files in the ingestion format.
/// Numeric values are written with shortest round-trip formatting, so
/// load -> write -> load reproduces the dataset bit for bit.
pub fn write_dataset(
    dataset: &ArealDataset,
    areas_path: &Path,
    adjacency_path: &Path,
) -> Result<()> {
    let mut w = csv::Writer::from_path(areas_path).map_err(|e| csv_error(areas_path, 0, e))?;
    let mut header = vec!["area_id".to_string(), "y".into(), "n_pop".into()];
    header.extend(dataset.covariate_names().iter().cloned());
    if dataset.proxy_w().is_some() {
        header.push("w".into());
    }
    header.extend(dataset.indicator_names().iter().cloned());
    w.write_record(&header).map_err(|e| csv_error(areas_path, 0, e))?;
    for i in 0..dataset.n_areas() {
        let mut rec = vec![
            dataset.area_ids()[i].clone(),
            dataset.y()[i].to_string(),
            dataset.n_pop()[i].to_string(),
        ];
        for j in 0..dataset.covariates_raw().cols() {
            rec.push(format!("{}", dataset.covariates_raw().get(i, j)));
        }
        if let Some(w_vals) = dataset.proxy_w() {
            rec.push(format!("{}", w_vals[i]));
        }
        if let Some(q) = dataset.quality_indicators() {
            for j in 0..q.cols() {
                rec.push(format!("{}", q.get(i, j)));
            }
        }
        w.write_record(&rec).map_err(|e| csv_error(areas_path, i + 1, e))?;
    }
    w.flush().map_err(|e| Error::io(areas_path, e))?;

    let mut aw =
        csv::Writer::from_path(adjacency_path).map_err(|e| csv_error(adjacency_path, 0, e))?;
    aw.write_record(["area_a", "area_b"])
        .map_err(|e| csv_error(adjacency_path, 0, e))?;
    for &(a, b) in dataset.adjacency().edges() {
        aw.write_record([&dataset.area_ids()[a], &dataset.area_ids()[b]])
            .map_err(|e| csv_error(adjacency_path, 0, e))?;
    }
    aw.flush().map_err(|e| Error::io(adjacency_path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;
    use tempfile::tempdir;

    fn write(path: &Path, contents: &str) {
        fs::write(path, contents).unwrap();
    }

    fn three_area_files(dir: &Path) -> (std::path::PathBuf, std::path::PathBuf) {
        let areas = dir.join("areas.csv");
        let adj = dir.join("adj.csv");
        write(
            &areas,
            "area_id,y,n_pop,x1\na,3,100,0.5\nb,5,300,1.5\nc,0,50,-2.0\n",
        );
        write(&adj, "area_a,area_b\na,b\nb,c\n");
        (areas, adj)
    }

    #[test]
    fn three_area_load() {
        let dir = tempdir().unwrap();
        let (areas, adj) = three_area_files(dir.path());
        let ds = load_dataset(&areas, &adj).unwrap();
        assert_eq!(ds.n_areas(), 3);
        assert_eq!(ds.y(), &[3, 5, 0]);
        assert_eq!(ds.adjacency().degree(0), 1);
        assert_eq!(ds.adjacency().neighbors(1), &[0, 2]);
        // Covariates centered, means retained.
        assert!((ds.covariate_means()[0] - 0.0).abs() < 1e-12);
        assert!((ds.covariates().get(0, 0) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn self_loop_rejected() {
        let dir = tempdir().unwrap();
        let (areas, adj) = three_area_files(dir.path());
        write(&adj, "area_a,area_b\na,a\n");
        let err = load_dataset(&areas, &adj).unwrap_err();
        assert!(err.to_string().contains("self-loop"), "{err}");
    }

    #[test]
    fn duplicate_edge_rejected() {
        let dir = tempdir().unwrap();
        let (areas, adj) = three_area_files(dir.path());
        write(&adj, "area_a,area_b\na,b\nb,a\nb,c\n");
        let err = load_dataset(&areas, &adj).unwrap_err();
        assert!(err.to_string().contains("duplicate edge"), "{err}");
    }

    #[test]
    fn unknown_area_in_edge() {
        let dir = tempdir().unwrap();
        let (areas, adj) = three_area_files(dir.path());
        write(&adj, "area_a,area_b\na,zzz\n");
        let err = load_dataset(&areas, &adj).unwrap_err();
        assert!(err.to_string().contains("unknown area"), "{err}");
    }

    #[test]
    fn negative_count_rejected() {
        let dir = tempdir().unwrap();
        let (areas, adj) = three_area_files(dir.path());
        write(&areas, "area_id,y,n_pop,x1\na,-3,100,0.5\nb,5,300,1.5\nc,0,50,-2.0\n");
        let err = load_dataset(&areas, &adj).unwrap_err();
        assert!(err.to_string().contains("non-negative integer"), "{err}");
    }

    #[test]
    fn missing_covariate_cell_rejected() {
        let dir = tempdir().unwrap();
        let (areas, adj) = three_area_files(dir.path());
        write(&areas, "area_id,y,n_pop,x1\na,3,100,\nb,5,300,1.5\nc,0,50,-2.0\n");
        let err = load_dataset(&areas, &adj).unwrap_err();
        assert!(err.to_string().contains("missing value"), "{err}");
    }

    #[test]
    fn islands_rejected_by_default_allowed_on_request() {
        let dir = tempdir().unwrap();
        let (areas, adj) = three_area_files(dir.path());
        write(&adj, "area_a,area_b\na,b\n");
        let err = load_dataset(&areas, &adj).unwrap_err();
        assert!(err.to_string().contains("no neighbors"), "{err}");
        assert!(err.to_string().contains('c'), "{err}");

        let ds = load_dataset_with(
            &areas,
            &adj,
            &LoadOptions {
                allow_islands: true,
            },
        )
        .unwrap();
        assert_eq!(ds.adjacency().islands(), vec![2]);
        assert_eq!(ds.adjacency().n_components(), 2);
    }

    #[test]
    fn large_file_accepted() {
        // Mirrors the scale of a country-wide microregion dataset.
        let dir = tempdir().unwrap();
        let areas = dir.path().join("areas.csv");
        let adj = dir.path().join("adj.csv");
        let mut areas_csv = String::from("area_id,y,n_pop,x1\n");
        let mut adj_csv = String::from("area_a,area_b\n");
        let n = 557;
        for i in 0..n {
            areas_csv.push_str(&format!("m{i},{},{},{}\n", i % 400, 1000 + i, i as f64 * 0.01));
            if i + 1 < n {
                adj_csv.push_str(&format!("m{i},m{}\n", i + 1));
            }
        }
        write(&areas, &areas_csv);
        write(&adj, &adj_csv);
        let ds = load_dataset(&areas, &adj).unwrap();
        assert_eq!(ds.n_areas(), 557);
    }

    #[test]
    fn w_and_indicator_columns_classified() {
        let dir = tempdir().unwrap();
        let areas = dir.path().join("areas.csv");
        let adj = dir.path().join("adj.csv");
        write(
            &areas,
            "area_id,y,n_pop,unemployment,w,q1,q2\na,3,100,0.5,10.0,1.0,2.0\nb,5,300,1.5,20.0,3.0,4.0\n",
        );
        write(&adj, "area_a,area_b\na,b\n");
        let ds = load_dataset(&areas, &adj).unwrap();
        assert_eq!(ds.covariate_names(), &["unemployment".to_string()]);
        assert_eq!(ds.proxy_w().unwrap(), &[10.0, 20.0]);
        let q = ds.quality_indicators().unwrap();
        assert_eq!((q.rows(), q.cols()), (2, 2));
        assert_eq!(ds.indicator_names(), &["q1".to_string(), "q2".to_string()]);
    }

    #[test]
    fn expected_counts_direct() {
        let ds = small_dataset(&[3, 5], &[100, 300]);
        let e = compute_expected_counts(&ds).unwrap();
        assert!((e.values()[0] - 2.0).abs() < 1e-12);
        assert!((e.values()[1] - 6.0).abs() < 1e-12);
    }

    #[test]
    fn expected_counts_symmetry() {
        let ds = small_dataset(&[7, 2, 3], &[50, 50, 50]);
        let e = compute_expected_counts(&ds).unwrap();
        for &ei in e.values() {
            assert!((ei - 4.0).abs() < 1e-12);
        }
    }

    #[test]
    fn expected_counts_sum_identity() {
        // Total mirrors a national three-year TB case count.
        let pops = [1_000_000u64, 250_000, 3_333_333, 42_000];
        let ys = [100_000u64, 8_901, 90_000, 10_000];
        assert_eq!(ys.iter().sum::<u64>(), 208_901);
        let ds = small_dataset(&ys, &pops);
        let e = compute_expected_counts(&ds).unwrap();
        let sum_e: f64 = e.values().iter().sum();
        assert!((sum_e - 208_901.0).abs() / 208_901.0 < 1e-9);
    }

    #[test]
    fn expected_counts_all_zero_rejected() {
        let ds = small_dataset(&[0, 0], &[10, 20]);
        assert!(compute_expected_counts(&ds).is_err());
    }

    #[test]
    fn expected_counts_scale_equivariant() {
        let ys = [3u64, 5, 11];
        let pops = [100u64, 300, 50];
        let e1 = compute_expected_counts(&small_dataset(&ys, &pops)).unwrap();
        let doubled: Vec<u64> = ys.iter().map(|&v| 2 * v).collect();
        let e2 = compute_expected_counts(&small_dataset(&doubled, &pops)).unwrap();
        for (a, b) in e1.values().iter().zip(e2.values()) {
            assert!((2.0 * a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn incidence_rate_examples() {
        let e = ExpectedCounts::from_values(vec![100.0, 50.0]).unwrap();
        // theta = 1, e_i = n_i / 1000 -> rate 100.
        let r = incidence_rate(&[1.0, 1.0], &e, &[100_000, 50_000]).unwrap();
        assert!((r[0] - 100.0).abs() < 1e-9);
        assert!((r[1] - 100.0).abs() < 1e-9);
        // theta = 2, e = 50, n = 100000 -> 2 * 50 / 100000 * 1e5 = 100.
        let e2 = ExpectedCounts::from_values(vec![50.0]).unwrap();
        let r2 = incidence_rate(&[2.0], &e2, &[100_000]).unwrap();
        assert!((r2[0] - 100.0).abs() < 1e-9);
        // zero theta -> zero rates.
        let r3 = incidence_rate(&[0.0], &e2, &[100_000]).unwrap();
        assert_eq!(r3[0], 0.0);
        // length mismatch.
        assert!(incidence_rate(&[1.0, 2.0], &e2, &[100_000]).is_err());
    }

    #[test]
    fn roundtrip_bit_identical() {
        let dir = tempdir().unwrap();
        let areas = dir.path().join("areas.csv");
        let adj = dir.path().join("adj.csv");
        write(
            &areas,
            "area_id,y,n_pop,x1,x2,w,q1\na,3,100,0.112358,7.5,0.25,1.5\nb,5,300,-0.3,2.25,0.5,2.5\nc,1,50,9.25,-1.125,0.75,3.5\n",
        );
        write(&adj, "area_a,area_b\na,b\nb,c\n");
        let ds1 = load_dataset(&areas, &adj).unwrap();
        let areas2 = dir.path().join("areas2.csv");
        let adj2 = dir.path().join("adj2.csv");
        write_dataset(&ds1, &areas2, &adj2).unwrap();
        let ds2 = load_dataset(&areas2, &adj2).unwrap();
        assert_eq!(ds1.area_ids(), ds2.area_ids());
        assert_eq!(ds1.y(), ds2.y());
        assert_eq!(ds1.n_pop(), ds2.n_pop());
        assert_eq!(ds1.covariates_raw(), ds2.covariates_raw());
        assert_eq!(ds1.proxy_w(), ds2.proxy_w());
        assert_eq!(ds1.quality_indicators(), ds2.quality_indicators());
        assert_eq!(ds1.adjacency(), ds2.adjacency());
    }

    #[test]
    fn permutation_yields_isomorphic_dataset() {
        let dir = tempdir().unwrap();
        let areas1 = dir.path().join("a1.csv");
        let adj1 = dir.path().join("e1.csv");
        let areas2 = dir.path().join("a2.csv");
        let adj2 = dir.path().join("e2.csv");
        write(
            &areas1,
            "area_id,y,n_pop,x1\na,3,100,0.5\nb,5,300,1.5\nc,1,50,-2.0\n",
        );
        write(&adj1, "area_a,area_b\na,b\nb,c\n");
        write(
            &areas2,
            "area_id,y,n_pop,x1\nc,1,50,-2.0\na,3,100,0.5\nb,5,300,1.5\n",
        );
        write(&adj2, "area_a,area_b\nc,b\nb,a\n");
        let d1 = load_dataset(&areas1, &adj1).unwrap();
        let d2 = load_dataset(&areas2, &adj2).unwrap();
        for id in ["a", "b", "c"] {
            let i1 = d1.index_of(id).unwrap();
            let i2 = d2.index_of(id).unwrap();
            assert_eq!(d1.y()[i1], d2.y()[i2]);
            assert_eq!(d1.n_pop()[i1], d2.n_pop()[i2]);
            assert_eq!(d1.covariates_raw().row(i1), d2.covariates_raw().row(i2));
            let n1: Vec<&str> = d1
                .adjacency()
                .neighbors(i1)
                .iter()
                .map(|&j| d1.area_ids()[j].as_str())
                .collect();
            let mut n2: Vec<&str> = d2
                .adjacency()
                .neighbors(i2)
                .iter()
                .map(|&j| d2.area_ids()[j].as_str())
                .collect();
            n2.sort_unstable();
            let mut n1 = n1;
            n1.sort_unstable();
            assert_eq!(n1, n2);
        }
    }

    fn small_dataset(y: &[u64], n_pop: &[u64]) -> ArealDataset {
        let n = y.len();
        let ids: Vec<String> = (0..n).map(|i| format!("a{i}")).collect();
        let edges: Vec<(usize, usize)> = (0..n - 1).map(|i| (i, i + 1)).collect();
        ArealDataset::new(
            ids,
            y.to_vec(),
            n_pop.to_vec(),
            vec!["x1".into()],
            Matrix::from_rows(&vec![vec![0.0]; n]).unwrap(),
            None,
            vec![],
            None,
            Adjacency::from_edges(n, &edges).unwrap(),
        )
        .unwrap()
    }
}
