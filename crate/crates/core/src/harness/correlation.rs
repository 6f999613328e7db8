use serde::{Deserialize, Serialize};

use crate::graph::{AdjacencyMatrix, EdgeScores};
use crate::{Error, Result};

/// Pearson correlation; `None` when either side has zero variance or fewer
/// than two points.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return None;
    }
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        cov += dx * dy;
        va += dx * dx;
        vb += dy * dy;
    }
    if va == 0.0 || vb == 0.0 {
        return None;
    }
    Some((cov / (va.sqrt() * vb.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairCorrelation {
    pub a: usize,
    pub b: usize,
    pub r: Option<f64>,
}

/// Cross-run and ground-truth agreement of edge scores.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrelationReport {
    /// Every unordered pair of runs.
    pub pairs: Vec<PairCorrelation>,
    pub mean_cross_run: Option<f64>,
    /// Per-run correlation with the binary ground-truth graph.
    pub ground_truth: Vec<Option<f64>>,
    pub mean_ground_truth: Option<f64>,
}

fn mean_defined(v: impl IntoIterator<Item = Option<f64>>) -> Option<f64> {
    let d: Vec<f64> = v.into_iter().flatten().collect();
    (!d.is_empty()).then(|| d.iter().sum::<f64>() / d.len() as f64)
}

/// Pearson correlations over off-diagonal entries. Undefined pairs are
/// kept as `None` and left out of the means.
pub fn correlate_edge_scores(scores: &[EdgeScores], gt: Option<&AdjacencyMatrix>) -> Result<CorrelationReport> {
    let Some(first) = scores.first() else {
        return Err(Error::invalid("no edge scores to correlate"));
    };
    let n = first.n;
    if let Some(bad) = scores.iter().find(|s| s.n != n) {
        return Err(Error::shape("correlate", format!("score matrices of {n} and {} nodes", bad.n)));
    }
    if gt.is_some_and(|g| g.n() != n) {
        return Err(Error::shape("correlate", format!("ground truth has {} nodes, scores {n}", gt.unwrap().n())));
    }
    let flat: Vec<Vec<f64>> = scores.iter().map(EdgeScores::off_diagonal).collect();
    let mut pairs = Vec::new();
    for a in 0..flat.len() {
        for b in a + 1..flat.len() {
            pairs.push(PairCorrelation { a, b, r: pearson(&flat[a], &flat[b]) });
        }
    }
    let ground_truth: Vec<Option<f64>> = match gt {
        Some(g) => {
            let binary: Vec<f64> = g.weights().iter().map(|&w| if w > 0.0 { 1.0 } else { 0.0 }).collect();
            let target = crate::graph::off_diagonal(&binary, n);
            flat.iter().map(|f| pearson(f, &target)).collect()
        }
        None => Vec::new(),
    };
    Ok(CorrelationReport {
        mean_cross_run: mean_defined(pairs.iter().map(|p| p.r)),
        mean_ground_truth: mean_defined(ground_truth.iter().copied()),
        pairs,
        ground_truth,
    })
}

fn cell(r: Option<f64>) -> String {
    r.map_or_else(|| "undefined".into(), |v| v.to_string())
}

fn parse_cell(s: &str) -> Result<Option<f64>> {
    match s.trim() {
        "undefined" => Ok(None),
        v => v.parse().map(Some).map_err(|e| Error::parse("correlation report", format!("{e}"))),
    }
}

impl CorrelationReport {
    /// `kind,a,b,correlation` rows: `run` pairs, `gt` per run, then the means.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("kind,a,b,correlation\n");
        for p in &self.pairs {
            out.push_str(&format!("run,{},{},{}\n", p.a, p.b, cell(p.r)));
        }
        for (i, r) in self.ground_truth.iter().enumerate() {
            out.push_str(&format!("gt,{i},,{}\n", cell(*r)));
        }
        out.push_str(&format!("mean_cross_run,,,{}\n", cell(self.mean_cross_run)));
        out.push_str(&format!("mean_gt,,,{}\n", cell(self.mean_ground_truth)));
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let bad = |d: String| Error::parse("correlation report", d);
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        if lines.next().map(str::trim) != Some("kind,a,b,correlation") {
            return Err(bad("missing header".into()));
        }
        let mut report = CorrelationReport { pairs: vec![], mean_cross_run: None, ground_truth: vec![], mean_ground_truth: None };
        let (mut saw_cross, mut saw_gt) = (false, false);
        for line in lines {
            let f: Vec<&str> = line.split(',').collect();
            let [kind, a, b, r] = f[..] else {
                return Err(bad(format!("expected 4 fields, got `{line}`")));
            };
            let idx = |s: &str| s.trim().parse::<usize>().map_err(|e| bad(format!("{e}")));
            let r = parse_cell(r)?;
            match kind {
                "run" => report.pairs.push(PairCorrelation { a: idx(a)?, b: idx(b)?, r }),
                "gt" => {
                    if idx(a)? != report.ground_truth.len() {
                        return Err(bad("ground-truth rows out of order".into()));
                    }
                    report.ground_truth.push(r);
                }
                "mean_cross_run" => (report.mean_cross_run, saw_cross) = (r, true),
                "mean_gt" => (report.mean_ground_truth, saw_gt) = (r, true),
                other => return Err(bad(format!("unknown row kind `{other}`"))),
            }
        }
        if !(saw_cross && saw_gt) {
            return Err(bad("missing mean rows".into()));
        }
        Ok(report)
    }
}
