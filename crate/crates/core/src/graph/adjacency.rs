use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::autodiff::Tensor;
use crate::{Error, Result};

/// Where an adjacency matrix came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum GraphSource {
    LearnedMtgnn,
    LearnedGdn,
    LearnedGts,
    LearnedNri,
    GroundTruth,
    Random,
    None,
}

impl GraphSource {
    pub fn as_str(self) -> &'static str {
        match self {
            GraphSource::LearnedMtgnn => "learned-mtgnn",
            GraphSource::LearnedGdn => "learned-gdn",
            GraphSource::LearnedGts => "learned-gts",
            GraphSource::LearnedNri => "learned-nri",
            GraphSource::GroundTruth => "ground-truth",
            GraphSource::Random => "random",
            GraphSource::None => "none",
        }
    }
}

impl fmt::Display for GraphSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GraphSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "learned-mtgnn" => GraphSource::LearnedMtgnn,
            "learned-gdn" => GraphSource::LearnedGdn,
            "learned-gts" => GraphSource::LearnedGts,
            "learned-nri" => GraphSource::LearnedNri,
            "ground-truth" => GraphSource::GroundTruth,
            "random" => GraphSource::Random,
            "none" => GraphSource::None,
            other => return Err(Error::parse("graph source", format!("unknown source `{other}`"))),
        })
    }
}

/// `N x N` nonnegative edge weights.
///
/// Row `i` lists the nodes that node `i` draws on: `weight(i, j) > 0` means
/// information flows from `j` into `i`. In edge-list form that entry is
/// written `j i w` (source first).
#[derive(Clone, Debug, PartialEq)]
pub struct AdjacencyMatrix {
    n: usize,
    weights: Vec<f64>,
    directed: bool,
    source: GraphSource,
}

impl AdjacencyMatrix {
    pub fn new(n: usize, weights: Vec<f64>, directed: bool, source: GraphSource) -> Result<Self> {
        if weights.len() != n * n {
            return Err(Error::shape("adjacency", format!("{} weights for {n} nodes", weights.len())));
        }
        if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(Error::invalid(format!("adjacency weight {w} is negative or non-finite")));
        }
        if source != GraphSource::GroundTruth && (0..n).any(|i| weights[i * n + i] != 0.0) {
            return Err(Error::invalid(format!("{source} adjacency has self-loops")));
        }
        Ok(AdjacencyMatrix {
            n,
            weights,
            directed,
            source,
        })
    }

    pub fn empty(n: usize, source: GraphSource) -> Self {
        AdjacencyMatrix {
            n,
            weights: vec![0.0; n * n],
            directed: true,
            source,
        }
    }

    pub fn from_tensor(t: &Tensor, directed: bool, source: GraphSource) -> Result<Self> {
        let s = t.shape();
        if s.len() != 2 || s[0] != s[1] {
            return Err(Error::shape("adjacency", format!("tensor shape {s:?} is not square")));
        }
        Self::new(s[0], t.data().to_vec(), directed, source)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn directed(&self) -> bool {
        self.directed
    }

    pub fn source(&self) -> GraphSource {
        self.source
    }

    pub fn with_source(mut self, source: GraphSource) -> Self {
        self.source = source;
        self
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[i * self.n + j]
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::new([self.n, self.n], self.weights.clone()).expect("square")
    }

    pub fn row_nonzeros(&self, i: usize) -> usize {
        self.weights[i * self.n..(i + 1) * self.n].iter().filter(|&&w| w != 0.0).count()
    }

    pub fn edge_count(&self) -> usize {
        self.weights.iter().filter(|&&w| w != 0.0).count()
    }

    /// Nonzero entries as `(source, target, weight)` triples.
    pub fn edges(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for i in 0..self.n {
            for j in 0..self.n {
                let w = self.weight(i, j);
                if w != 0.0 {
                    out.push((j, i, w));
                }
            }
        }
        out.sort_by_key(|&(s, t, _)| (s, t));
        out
    }

    /// Same matrix with each node's order permuted: node `i` becomes `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let n = self.n;
        let mut w = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                w[perm[i] * n + perm[j]] = self.weight(i, j);
            }
        }
        AdjacencyMatrix { weights: w, ..self.clone() }
    }

    pub fn to_edge_list(&self) -> String {
        self.edges().iter().map(|(s, t, w)| format!("{s} {t} {w}\n")).collect()
    }

    /// Parses `src dst weight` lines (whitespace separated, 0-based ids).
    /// Blank lines and lines starting with `#` are skipped.
    pub fn from_edge_list(text: &str, n: usize, directed: bool, source: GraphSource) -> Result<Self> {
        let mut weights = vec![0.0; n * n];
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let ctx = || format!("edge list line {}", lineno + 1);
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 3 {
                return Err(Error::parse(ctx(), format!("expected `src dst weight`, got `{line}`")));
            }
            let src: usize = fields[0].parse().map_err(|e| Error::parse(ctx(), format!("{e}")))?;
            let dst: usize = fields[1].parse().map_err(|e| Error::parse(ctx(), format!("{e}")))?;
            let w: f64 = fields[2].parse().map_err(|e| Error::parse(ctx(), format!("{e}")))?;
            if src >= n || dst >= n {
                return Err(Error::parse(ctx(), format!("node id out of range for {n} nodes")));
            }
            weights[dst * n + src] = w;
        }
        Self::new(n, weights, directed, source)
    }

    pub fn write_edge_list(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_edge_list()).map_err(|e| Error::io(path, e))
    }

    /// Reads an edge list; the node count is `n` when given, else one more
    /// than the largest id present.
    pub fn read_edge_list(path: &Path, n: Option<usize>, directed: bool, source: GraphSource) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let n = match n {
            Some(n) => n,
            None => text
                .lines()
                .filter(|l| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
                .flat_map(|l| l.split_whitespace().take(2).filter_map(|x| x.parse::<usize>().ok()))
                .max()
                .map_or(0, |m| m + 1),
        };
        Self::from_edge_list(&text, n, directed, source)
    }
}

/// Continuous pairwise scores before sparsification or sampling.
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeScores {
    pub n: usize,
    pub scores: Vec<f64>,
    pub model: String,
    pub seed: u64,
}

impl EdgeScores {
    pub fn new(n: usize, scores: Vec<f64>, model: impl Into<String>, seed: u64) -> Result<Self> {
        if scores.len() != n * n {
            return Err(Error::shape("edge scores", format!("{} scores for {n} nodes", scores.len())));
        }
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::invalid("edge scores must be finite"));
        }
        Ok(EdgeScores {
            n,
            scores,
            model: model.into(),
            seed,
        })
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.scores[i * self.n + j]
    }

    /// Off-diagonal entries in row-major order.
    pub fn off_diagonal(&self) -> Vec<f64> {
        off_diagonal(&self.scores, self.n)
    }

    /// Dense CSV, one row per node, shortest round-trip float formatting.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for row in self.scores.chunks(self.n.max(1)) {
            let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str, model: impl Into<String>, seed: u64) -> Result<Self> {
        let mut scores = Vec::new();
        let mut rows = 0;
        let mut width = None;
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let vals = line
                .split(',')
                .map(|c| {
                    c.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::parse(format!("edge scores line {}", lineno + 1), format!("{e}")))
                })
                .collect::<Result<Vec<_>>>()?;
            if *width.get_or_insert(vals.len()) != vals.len() {
                return Err(Error::parse(format!("edge scores line {}", lineno + 1), "ragged row"));
            }
            scores.extend(vals);
            rows += 1;
        }
        if width.is_some_and(|w| w != rows) {
            return Err(Error::parse("edge scores", "matrix is not square"));
        }
        EdgeScores::new(rows, scores, model, seed)
    }
}

pub(crate) fn off_diagonal(m: &[f64], n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n * n.saturating_sub(1));
    for i in 0..n {
        for j in 0..n {
            if i != j {
                out.push(m[i * n + j]);
            }
        }
    }
    out
}

/// Per row, indices of the `k` largest values (ties: lower index first),
/// skipping the diagonal when `skip_self` is set.
pub fn top_k_per_row(values: &[f64], n: usize, k: usize, skip_self: bool) -> Vec<Vec<usize>> {
    (0..n)
        .map(|i| {
            let row = &values[i * n..(i + 1) * n];
            let mut idx: Vec<usize> = (0..n).filter(|&j| !(skip_self && j == i)).collect();
            idx.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
            idx.truncate(k);
            idx
        })
        .collect()
}
