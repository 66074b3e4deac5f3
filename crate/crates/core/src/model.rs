//! Shared domain types: datasets, prior graphs, fitted models and the
//! result containers produced by the scoring and evaluation code, together
//! with their validation and file formats.

use std::collections::HashSet;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Version written into every file this crate emits.
pub const FORMAT_VERSION: u32 = 1;

/// Region-wise features for a set of subjects (`n` rows × `d` regions).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    values: Array2<f64>,
    region_labels: Vec<String>,
    subject_ids: Vec<String>,
}

impl Dataset {
    /// Validates raw values and labels.
    pub fn new(
        values: Array2<f64>,
        region_labels: Vec<String>,
        subject_ids: Vec<String>,
    ) -> Result<Self> {
        let (n, d) = values.dim();
        if n == 0 || d == 0 {
            return Err(Error::Dimension(format!(
                "dataset needs at least one subject and one region, got {n}x{d}"
            )));
        }
        if region_labels.len() != d {
            return Err(Error::Dimension(format!(
                "{} region labels for {} columns",
                region_labels.len(),
                d
            )));
        }
        if subject_ids.len() != n {
            return Err(Error::Dimension(format!(
                "{} subject ids for {} rows",
                subject_ids.len(),
                n
            )));
        }
        for ((row, col), v) in values.indexed_iter() {
            if !v.is_finite() {
                return Err(Error::NonFinite { row, col });
            }
        }
        check_labels("region", &region_labels)?;
        check_labels("subject", &subject_ids)?;
        Ok(Dataset {
            values,
            region_labels,
            subject_ids,
        })
    }

    /// Dataset with generated labels `r1..rd` and ids `s1..sn`.
    pub fn from_values(values: Array2<f64>) -> Result<Self> {
        let (n, d) = values.dim();
        Self::new(values, default_region_labels(d), default_subject_ids(n))
    }

    pub fn values(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    pub fn region_labels(&self) -> &[String] {
        &self.region_labels
    }

    pub fn subject_ids(&self) -> &[String] {
        &self.subject_ids
    }

    pub fn n_subjects(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_regions(&self) -> usize {
        self.values.ncols()
    }

    pub fn subject(&self, i: usize) -> ArrayView1<'_, f64> {
        self.values.row(i)
    }

    /// Copy with subject `i` removed. Fails if that would leave no subjects.
    pub fn without_subject(&self, i: usize) -> Result<Dataset> {
        let keep: Vec<usize> = (0..self.n_subjects()).filter(|&r| r != i).collect();
        self.select_subjects(&keep)
    }

    pub fn select_subjects(&self, rows: &[usize]) -> Result<Dataset> {
        let d = self.n_regions();
        let mut values = Array2::<f64>::zeros((rows.len(), d));
        let mut ids = Vec::with_capacity(rows.len());
        for (k, &r) in rows.iter().enumerate() {
            if r >= self.n_subjects() {
                return Err(Error::InvalidArgument(format!("subject index {r} out of range")));
            }
            values.row_mut(k).assign(&self.values.row(r));
            ids.push(self.subject_ids[r].clone());
        }
        Dataset::new(values, self.region_labels.clone(), ids)
    }

    /// Errors with the first differing position unless both label lists agree.
    pub fn check_same_regions(&self, labels: &[String]) -> Result<()> {
        check_label_match(labels, &self.region_labels)
    }

    /// Reads the CSV layout: header row of region labels after a leading
    /// subject-id column, one subject per row. Lines starting with `#` are comments.
    pub fn read_csv<R: Read>(reader: R) -> Result<Dataset> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(reader);
        let header = rdr.headers()?.clone();
        if header.len() < 2 {
            return Err(Error::Parse(
                "dataset header needs a subject column and at least one region".into(),
            ));
        }
        let labels: Vec<String> = header.iter().skip(1).map(str::to_owned).collect();
        let d = labels.len();
        let mut ids = Vec::new();
        let mut flat = Vec::new();
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() != d + 1 {
                return Err(Error::Dimension(format!(
                    "row {row} has {} fields, expected {}",
                    rec.len(),
                    d + 1
                )));
            }
            ids.push(rec[0].to_owned());
            for (col, field) in rec.iter().skip(1).enumerate() {
                let v: f64 = field.parse().map_err(|_| {
                    Error::Parse(format!("subject {row}, region {col}: '{field}' is not a number"))
                })?;
                flat.push(v);
            }
        }
        let values = Array2::from_shape_vec((ids.len(), d), flat)
            .map_err(|e| Error::Dimension(e.to_string()))?;
        Dataset::new(values, labels, ids)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = writer;
        writeln!(w, "# format_version={FORMAT_VERSION}").map_err(|e| Error::io("<csv>", e))?;
        let mut wtr = csv::Writer::from_writer(w);
        let mut header = vec!["subject_id".to_owned()];
        header.extend(self.region_labels.iter().cloned());
        wtr.write_record(&header)?;
        for (i, id) in self.subject_ids.iter().enumerate() {
            let mut rec = vec![id.clone()];
            rec.extend(self.values.row(i).iter().map(|v| format_float(*v)));
            wtr.write_record(&rec)?;
        }
        wtr.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Dataset> {
        let path = path.as_ref();
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Dataset::read_csv(std::io::BufReader::new(f))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(f))
    }
}

pub(crate) fn format_float(v: f64) -> String {
    // `{}` on f64 is the shortest representation that parses back exactly.
    format!("{v}")
}

pub fn default_region_labels(d: usize) -> Vec<String> {
    (1..=d).map(|i| format!("r{i}")).collect()
}

pub fn default_subject_ids(n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("s{i}")).collect()
}

fn check_labels(what: &'static str, labels: &[String]) -> Result<()> {
    let mut seen = HashSet::with_capacity(labels.len());
    for (index, l) in labels.iter().enumerate() {
        if l.is_empty() {
            return Err(Error::EmptyLabel { what, index });
        }
        if !seen.insert(l.as_str()) {
            return Err(Error::DuplicateLabel {
                what,
                label: l.clone(),
            });
        }
    }
    Ok(())
}

pub(crate) fn check_label_match(expected: &[String], found: &[String]) -> Result<()> {
    for (index, (e, f)) in expected.iter().zip(found).enumerate() {
        if e != f {
            return Err(Error::LabelMismatch {
                index,
                expected: e.clone(),
                found: f.clone(),
            });
        }
    }
    if expected.len() != found.len() {
        let index = expected.len().min(found.len());
        return Err(Error::LabelMismatch {
            index,
            expected: expected.get(index).cloned().unwrap_or_else(|| "<none>".into()),
            found: found.get(index).cloned().unwrap_or_else(|| "<none>".into()),
        });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphKind {
    Neighborhood,
    NodeOnly,
    Full,
    Random,
    Custom,
}

impl fmt::Display for GraphKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            GraphKind::Neighborhood => "neighborhood",
            GraphKind::NodeOnly => "node_only",
            GraphKind::Full => "full",
            GraphKind::Random => "random",
            GraphKind::Custom => "custom",
        };
        f.write_str(s)
    }
}

/// Symmetric 0/1 adjacency describing which precision entries may be nonzero.
/// The diagonal is always set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PriorGraph {
    adjacency: Array2<bool>,
    kind: GraphKind,
}

#[derive(Serialize, Deserialize)]
struct GraphFile {
    #[serde(default = "default_format_version")]
    format_version: u32,
    kind: GraphKind,
    d: usize,
    edges: Vec<[usize; 2]>,
}

fn default_format_version() -> u32 {
    FORMAT_VERSION
}

impl PriorGraph {
    /// Builds a graph from an adjacency matrix; it must be symmetric with a set diagonal.
    pub fn from_adjacency(adjacency: Array2<bool>, kind: GraphKind) -> Result<Self> {
        let (r, c) = adjacency.dim();
        if r != c || r == 0 {
            return Err(Error::InvalidGraph(format!("adjacency must be square and nonempty, got {r}x{c}")));
        }
        for i in 0..r {
            if !adjacency[[i, i]] {
                return Err(Error::InvalidGraph(format!("diagonal entry {i} is not set")));
            }
            for j in i + 1..r {
                if adjacency[[i, j]] != adjacency[[j, i]] {
                    return Err(Error::InvalidGraph(format!("asymmetric entry ({i}, {j})")));
                }
            }
        }
        Ok(PriorGraph { adjacency, kind })
    }

    /// Builds a graph on `d` nodes from an edge list (any orientation; self-loops ignored).
    pub fn from_edges(d: usize, edges: &[(usize, usize)], kind: GraphKind) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidGraph("graph needs at least one node".into()));
        }
        let mut adj = Array2::from_elem((d, d), false);
        for i in 0..d {
            adj[[i, i]] = true;
        }
        for &(i, j) in edges {
            if i >= d || j >= d {
                return Err(Error::InvalidGraph(format!("edge ({i}, {j}) out of range for d = {d}")));
            }
            adj[[i, j]] = true;
            adj[[j, i]] = true;
        }
        Ok(PriorGraph { adjacency: adj, kind })
    }

    pub fn dim(&self) -> usize {
        self.adjacency.nrows()
    }

    pub fn kind(&self) -> GraphKind {
        self.kind
    }

    pub fn adjacency(&self) -> ArrayView2<'_, bool> {
        self.adjacency.view()
    }

    #[inline]
    pub fn allows(&self, i: usize, j: usize) -> bool {
        self.adjacency[[i, j]]
    }

    /// Number of edges strictly above the diagonal.
    pub fn edge_count(&self) -> usize {
        self.edges().len()
    }

    /// Edges `(i, j)` with `i < j`, in row-major order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let d = self.dim();
        let mut out = Vec::new();
        for i in 0..d {
            for j in i + 1..d {
                if self.adjacency[[i, j]] {
                    out.push((i, j));
                }
            }
        }
        out
    }

    pub fn with_kind(mut self, kind: GraphKind) -> Self {
        self.kind = kind;
        self
    }

    pub fn to_json(&self) -> Result<String> {
        let file = GraphFile {
            format_version: FORMAT_VERSION,
            kind: self.kind,
            d: self.dim(),
            edges: self.edges().into_iter().map(|(i, j)| [i, j]).collect(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let file: GraphFile = serde_json::from_str(s)?;
        let mut edges = Vec::with_capacity(file.edges.len());
        for [i, j] in file.edges {
            if i >= j {
                return Err(Error::InvalidGraph(format!("edge [{i}, {j}] must satisfy i < j")));
            }
            edges.push((i, j));
        }
        PriorGraph::from_edges(file.d, &edges, file.kind)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        PriorGraph::from_json(&s)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }
}

/// Solver settings for the constrained graphical lasso.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Relative convergence threshold on the mean change of the covariance estimate.
    pub tol: f64,
    pub max_sweeps: usize,
    /// Whether the L1 penalty also applies to the diagonal of the precision matrix.
    pub penalize_diagonal: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tol: 1e-6,
            max_sweeps: 500,
            penalize_diagonal: true,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) || !self.tol.is_finite() {
            return Err(Error::InvalidArgument(format!("tol must be positive, got {}", self.tol)));
        }
        if self.max_sweeps == 0 {
            return Err(Error::InvalidArgument("max_sweeps must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitStats {
    pub iterations: usize,
    pub final_objective: f64,
    pub converged: bool,
}

impl Default for FitStats {
    fn default() -> Self {
        FitStats {
            iterations: 0,
            final_objective: 0.0,
            converged: true,
        }
    }
}

/// Mean vector plus a sparse, positive definite precision matrix whose
/// support respects `graph`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianModel {
    mean: Array1<f64>,
    precision: Array2<f64>,
    graph: PriorGraph,
    rho: f64,
    fit_stats: FitStats,
    region_labels: Vec<String>,
}

impl GaussianModel {
    pub fn new(
        mean: Array1<f64>,
        precision: Array2<f64>,
        graph: PriorGraph,
        rho: f64,
        fit_stats: FitStats,
    ) -> Result<Self> {
        let d = mean.len();
        Self::with_labels(mean, precision, graph, rho, fit_stats, default_region_labels(d))
    }

    pub fn with_labels(
        mean: Array1<f64>,
        precision: Array2<f64>,
        graph: PriorGraph,
        rho: f64,
        fit_stats: FitStats,
        region_labels: Vec<String>,
    ) -> Result<Self> {
        let d = mean.len();
        if d == 0 {
            return Err(Error::InvalidModel("empty mean vector".into()));
        }
        if precision.dim() != (d, d) || graph.dim() != d || region_labels.len() != d {
            return Err(Error::InvalidModel(format!(
                "inconsistent dimensions: mean {d}, precision {:?}, graph {}, labels {}",
                precision.dim(),
                graph.dim(),
                region_labels.len()
            )));
        }
        if !(rho >= 0.0) || !rho.is_finite() {
            return Err(Error::InvalidModel(format!("rho must be finite and nonnegative, got {rho}")));
        }
        if mean.iter().chain(precision.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidModel("non-finite entry".into()));
        }
        check_labels("region", &region_labels).map_err(|e| Error::InvalidModel(e.to_string()))?;
        let scale = precision.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        for i in 0..d {
            for j in 0..d {
                if i != j && !graph.allows(i, j) && precision[[i, j]] != 0.0 {
                    return Err(Error::InvalidModel(format!(
                        "precision ({i}, {j}) = {} but the graph has no edge there",
                        precision[[i, j]]
                    )));
                }
                if j > i && (precision[[i, j]] - precision[[j, i]]).abs() > 1e-12 * scale {
                    return Err(Error::InvalidModel(format!("precision is not symmetric at ({i}, {j})")));
                }
            }
        }
        if !linalg::is_positive_definite(precision.view()) {
            return Err(Error::InvalidModel("precision is not positive definite".into()));
        }
        Ok(GaussianModel {
            mean,
            precision,
            graph,
            rho,
            fit_stats,
            region_labels,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> ArrayView1<'_, f64> {
        self.mean.view()
    }

    pub fn precision(&self) -> ArrayView2<'_, f64> {
        self.precision.view()
    }

    pub fn graph(&self) -> &PriorGraph {
        &self.graph
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn fit_stats(&self) -> FitStats {
        self.fit_stats
    }

    pub fn region_labels(&self) -> &[String] {
        &self.region_labels
    }

    /// `Σ = Θ⁻¹`.
    pub fn covariance(&self) -> Array2<f64> {
        linalg::spd_inverse(self.precision.view())
            .expect("validated models are positive definite")
    }

    /// Count of nonzero precision entries, both triangles and the diagonal.
    pub fn nonzero_count(&self) -> usize {
        self.precision.iter().filter(|v| **v != 0.0).count()
    }

    pub fn to_json(&self) -> Result<String> {
        let d = self.dim();
        let mut triplets = Vec::new();
        for i in 0..d {
            for j in i..d {
                let v = self.precision[[i, j]];
                if v != 0.0 {
                    triplets.push(Triplet(i, j, v));
                }
            }
        }
        let file = ModelFile {
            format_version: FORMAT_VERSION,
            d,
            region_labels: self.region_labels.clone(),
            mean: self.mean.to_vec(),
            rho: self.rho,
            graph: GraphFile {
                format_version: FORMAT_VERSION,
                kind: self.graph.kind,
                d,
                edges: self.graph.edges().into_iter().map(|(i, j)| [i, j]).collect(),
            },
            precision: triplets,
            fit_stats: self.fit_stats,
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(s)?;
        if file.format_version != FORMAT_VERSION {
            return Err(Error::Parse(format!(
                "unsupported model format_version {}",
                file.format_version
            )));
        }
        let d = file.d;
        if file.mean.len() != d || file.graph.d != d {
            return Err(Error::InvalidModel(format!(
                "declared d = {d} disagrees with mean ({}) or graph ({})",
                file.mean.len(),
                file.graph.d
            )));
        }
        let graph_json = serde_json::to_string(&file.graph)?;
        let graph = PriorGraph::from_json(&graph_json)?;
        let mut precision = Array2::<f64>::zeros((d, d));
        for Triplet(i, j, v) in file.precision {
            if i > j || j >= d {
                return Err(Error::InvalidModel(format!("bad precision triplet ({i}, {j})")));
            }
            precision[[i, j]] = v;
            precision[[j, i]] = v;
        }
        GaussianModel::with_labels(
            Array1::from(file.mean),
            precision,
            graph,
            file.rho,
            file.fit_stats,
            file.region_labels,
        )
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        GaussianModel::from_json(&s)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }
}

#[derive(Serialize, Deserialize)]
struct Triplet(usize, usize, f64);

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    d: usize,
    region_labels: Vec<String>,
    mean: Vec<f64>,
    rho: f64,
    graph: GraphFile,
    /// Upper-triangle `(i, j, value)` with `i <= j`; absent entries are zero.
    precision: Vec<Triplet>,
    fit_stats: FitStats,
}

/// Output of the greedy forward region sort for one subject.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SortResult {
    /// Region indices from most normal to most abnormal.
    pub order: Vec<usize>,
    /// Accumulated squared distances `D_1..D_k` of the sorted prefixes.
    pub distances: Vec<f64>,
    /// Number of leading sorted regions considered normal.
    pub cutoff: usize,
    /// Abnormality differential per sorted position.
    pub abnormality: Vec<f64>,
}

impl SortResult {
    /// Regions at sorted positions after the cutoff.
    pub fn flagged(&self) -> &[usize] {
        &self.order[self.cutoff..]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Auc,
    Bic,
    ModelOrder,
}

/// A metric sampled over a penalty grid, one row per fold or replicate.
/// Missing values (failed fits) are stored as NaN.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalCurve {
    pub metric: Metric,
    pub rho_grid: Vec<f64>,
    pub replicates: Vec<Vec<f64>>,
}

impl EvalCurve {
    pub fn new(metric: Metric, rho_grid: Vec<f64>, replicates: Vec<Vec<f64>>) -> Result<Self> {
        if rho_grid.windows(2).any(|w| !(w[0] < w[1])) || rho_grid.iter().any(|r| !(*r >= 0.0)) {
            return Err(Error::InvalidArgument("rho grid must be increasing and nonnegative".into()));
        }
        if let Some(bad) = replicates.iter().position(|r| r.len() != rho_grid.len()) {
            return Err(Error::Dimension(format!(
                "replicate {bad} has {} values for {} grid points",
                replicates[bad].len(),
                rho_grid.len()
            )));
        }
        Ok(EvalCurve {
            metric,
            rho_grid,
            replicates,
        })
    }

    /// Per-grid-point mean over the finite replicate values.
    pub fn mean(&self) -> Vec<f64> {
        (0..self.rho_grid.len())
            .map(|c| {
                let vals: Vec<f64> = self.column(c);
                if vals.is_empty() {
                    f64::NAN
                } else {
                    vals.iter().sum::<f64>() / vals.len() as f64
                }
            })
            .collect()
    }

    /// Finite values at grid point `c`.
    pub fn column(&self, c: usize) -> Vec<f64> {
        self.replicates
            .iter()
            .map(|r| r[c])
            .filter(|v| v.is_finite())
            .collect()
    }

    /// Rows with a finite value at every grid point.
    pub fn complete_rows(&self) -> Vec<Vec<f64>> {
        self.replicates
            .iter()
            .filter(|r| r.iter().all(|v| v.is_finite()))
            .cloned()
            .collect()
    }

    /// CSV table: one row per replicate, one column per grid value.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = writer;
        writeln!(w, "# format_version={FORMAT_VERSION}").map_err(|e| Error::io("<csv>", e))?;
        let mut wtr = csv::Writer::from_writer(w);
        let mut header = vec!["replicate".to_owned()];
        header.extend(self.rho_grid.iter().map(|r| format!("rho={}", format_float(*r))));
        wtr.write_record(&header)?;
        for (i, row) in self.replicates.iter().enumerate() {
            let mut rec = vec![i.to_string()];
            rec.extend(row.iter().map(|v| format_float(*v)));
            wtr.write_record(&rec)?;
        }
        wtr.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}
