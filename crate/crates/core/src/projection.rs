//! Classical (Torgerson) MDS of a viewpoint distance matrix into the plane, projection quality
//! ratios, and the layout document served to the UI.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenario::Scenario;

/// Relative off-diagonal tolerance of the Jacobi iteration.
pub const JACOBI_TOLERANCE: f64 = 1e-12;
pub const JACOBI_MAX_SWEEPS: usize = 100;
/// Negative eigenvalues larger than this fraction of the largest one mark non-Euclidean input.
pub const NEGATIVE_EIGEN_THRESHOLD: f64 = 1e-9;
/// Absolute tolerance of the symmetry check on input matrices.
pub const SYMMETRY_TOLERANCE: f64 = 1e-9;
pub const HISTOGRAM_BINS: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    labels: Vec<String>,
    values: Vec<Vec<f64>>,
}

impl DistanceMatrix {
    pub fn new(labels: Vec<String>, values: Vec<Vec<f64>>) -> Result<Self> {
        let n = labels.len();
        let bad = |message: String| Error::validation("distance matrix", message);
        if n == 0 {
            return Err(bad("needs at least one point".into()));
        }
        if values.len() != n || values.iter().any(|row| row.len() != n) {
            return Err(bad(format!("expected {n}x{n} values for {n} labels")));
        }
        for i in 0..n {
            if values[i][i] != 0.0 {
                return Err(bad(format!("diagonal entry {i} is {}", values[i][i])));
            }
            for j in 0..n {
                let v = values[i][j];
                if !v.is_finite() || v < 0.0 {
                    return Err(bad(format!("entry ({i},{j}) = {v} is not a non-negative number")));
                }
                if (v - values[j][i]).abs() > SYMMETRY_TOLERANCE {
                    return Err(bad(format!("entries ({i},{j}) and ({j},{i}) differ")));
                }
            }
        }
        Ok(DistanceMatrix { labels, values })
    }

    /// Raw pairwise distances of `viewpoints`, labelled with `labels`.
    pub fn from_viewpoints(labels: Vec<String>, viewpoints: &[crate::viewpoint::Viewpoint], schema: &crate::schema::PreferenceSchema) -> Result<Self> {
        let weights = crate::diff::distance_matrix(viewpoints, schema)?;
        let values = weights
            .iter()
            .map(|row| row.iter().map(|w| w.as_f64()).collect())
            .collect();
        DistanceMatrix::new(labels, values)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i][j]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.values
    }
}

/// Eigenpairs of a symmetric matrix, eigenvalues descending (ties by original index).
/// `vectors[k]` is the unit eigenvector for `values[k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Eigen {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
    pub sweeps: usize,
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix.
pub fn jacobi_eigen(matrix: &[Vec<f64>]) -> Eigen {
    let n = matrix.len();
    let mut a: Vec<Vec<f64>> = matrix.to_vec();
    let mut v = vec![vec![0.0; n]; n];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    let frobenius = a.iter().flatten().map(|x| x * x).sum::<f64>().sqrt();
    let off = |a: &[Vec<f64>]| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                s += 2.0 * a[i][j] * a[i][j];
            }
        }
        s.sqrt()
    };

    let mut sweeps = 0;
    while sweeps < JACOBI_MAX_SWEEPS && off(&a) > JACOBI_TOLERANCE * frobenius {
        sweeps += 1;
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p][q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let vkp = row[p];
                    let vkq = row[q];
                    row[p] = c * vkp - s * vkq;
                    row[q] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j][j].total_cmp(&a[i][i]).then(i.cmp(&j)));
    Eigen {
        values: order.iter().map(|&k| a[k][k]).collect(),
        vectors: order.iter().map(|&k| v.iter().map(|row| row[k]).collect()).collect(),
        sweeps,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn distance(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layout2D {
    pub labels: Vec<String>,
    pub points: Vec<Point>,
    /// Full spectrum of the double-centered matrix, descending.
    pub eigenvalues: Vec<f64>,
    /// Eigenvalues below `-1e-9 * largest`, a sign of non-Euclidean distances.
    pub negative_eigenvalues: Vec<f64>,
}

impl Layout2D {
    pub fn is_euclidean(&self) -> bool {
        self.negative_eigenvalues.is_empty()
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        self.points[i].distance(self.points[j])
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }
}

/// Flips `axis` so the first coordinate that is clearly away from zero is positive.
fn orient(axis: &mut [f64]) {
    let scale = axis.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if scale == 0.0 {
        return;
    }
    if let Some(first) = axis.iter().find(|x| x.abs() > 1e-9 * scale) {
        if *first < 0.0 {
            axis.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

fn center(axis: &mut [f64]) {
    let mean = axis.iter().sum::<f64>() / axis.len() as f64;
    axis.iter_mut().for_each(|x| *x -= mean);
}

pub fn mds_project(m: &DistanceMatrix) -> Layout2D {
    let n = m.len();
    let labels = m.labels.clone();
    if n == 1 {
        return Layout2D {
            labels,
            points: vec![Point { x: 0.0, y: 0.0 }],
            eigenvalues: vec![0.0],
            negative_eigenvalues: Vec::new(),
        };
    }
    if n == 2 {
        let d = m.get(0, 1);
        let half = d / 2.0;
        return Layout2D {
            labels,
            points: vec![Point { x: half, y: 0.0 }, Point { x: half - d, y: 0.0 }],
            eigenvalues: vec![d * d / 2.0, 0.0],
            negative_eigenvalues: Vec::new(),
        };
    }

    // B = -1/2 J D² J, computed as -1/2 (d²_ij - row_i - col_j + grand).
    let sq: Vec<Vec<f64>> = m.values.iter().map(|row| row.iter().map(|d| d * d).collect()).collect();
    let row_mean: Vec<f64> = sq.iter().map(|row| row.iter().sum::<f64>() / n as f64).collect();
    let grand = row_mean.iter().sum::<f64>() / n as f64;
    let mut b = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            b[i][j] = -0.5 * (sq[i][j] - row_mean[i] - row_mean[j] + grand);
        }
    }
    for i in 0..n {
        for j in i + 1..n {
            let s = 0.5 * (b[i][j] + b[j][i]);
            b[i][j] = s;
            b[j][i] = s;
        }
    }

    let eigen = jacobi_eigen(&b);
    let largest = eigen.values[0].max(0.0);
    let negative_eigenvalues = eigen
        .values
        .iter()
        .copied()
        .filter(|&l| l < 0.0 && -l > NEGATIVE_EIGEN_THRESHOLD * largest)
        .collect();

    let mut axes = [vec![0.0; n], vec![0.0; n]];
    for (k, axis) in axes.iter_mut().enumerate() {
        let lambda = eigen.values[k];
        // Eigenvalues at round-off level of the largest carry no geometry.
        if lambda > JACOBI_TOLERANCE * largest {
            let s = lambda.sqrt();
            for (i, x) in axis.iter_mut().enumerate() {
                *x = eigen.vectors[k][i] * s;
            }
            center(axis);
            orient(axis);
        }
    }
    Layout2D {
        labels,
        points: (0..n).map(|i| Point { x: axes[0][i], y: axes[1][i] }).collect(),
        eigenvalues: eigen.values,
        negative_eigenvalues,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairQuality {
    pub i: usize,
    pub j: usize,
    pub computed: f64,
    pub layout: f64,
    /// `layout / computed`; `None` when the computed distance is zero.
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct QualityMetrics {
    pub pairs: Vec<PairQuality>,
    /// `None` when no pair has a defined ratio.
    pub mean_ratio: Option<f64>,
    pub variance_ratio: Option<f64>,
    pub histogram: Vec<Bin>,
    pub excluded_pairs: usize,
}

/// Per-pair ratios and their summary. Summaries are computed over the sorted ratios, so they do
/// not depend on the order of the input points.
pub fn quality(m: &DistanceMatrix, layout: &Layout2D) -> Result<QualityMetrics> {
    let n = m.len();
    if layout.points.len() != n {
        return Err(Error::validation(
            "layout",
            format!("{} points for a {n}x{n} matrix", layout.points.len()),
        ));
    }
    let mut pairs = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            let computed = m.get(i, j);
            let layout_d = layout.distance(i, j);
            pairs.push(PairQuality {
                i,
                j,
                computed,
                layout: layout_d,
                ratio: (computed != 0.0).then(|| layout_d / computed),
            });
        }
    }
    let excluded_pairs = pairs.iter().filter(|p| p.ratio.is_none()).count();
    let mut ratios: Vec<f64> = pairs.iter().filter_map(|p| p.ratio).collect();
    ratios.sort_by(f64::total_cmp);

    let (mean_ratio, variance_ratio, histogram) = if ratios.is_empty() {
        (None, None, Vec::new())
    } else {
        let k = ratios.len() as f64;
        let mean = ratios.iter().sum::<f64>() / k;
        let variance = ratios.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / k;
        (Some(mean), Some(variance), histogram(&ratios))
    };
    Ok(QualityMetrics {
        pairs,
        mean_ratio,
        variance_ratio,
        histogram,
        excluded_pairs,
    })
}

/// Equal-width bins over [min, max] of sorted, non-empty `values`; the last bin is closed.
fn histogram(values: &[f64]) -> Vec<Bin> {
    let lo = values[0];
    let hi = values[values.len() - 1];
    if lo == hi {
        return vec![Bin { lo, hi, count: values.len() }];
    }
    let width = (hi - lo) / HISTOGRAM_BINS as f64;
    let mut bins: Vec<Bin> = (0..HISTOGRAM_BINS)
        .map(|b| Bin {
            lo: lo + width * b as f64,
            hi: if b + 1 == HISTOGRAM_BINS { hi } else { lo + width * (b + 1) as f64 },
            count: 0,
        })
        .collect();
    for &v in values {
        let b = (((v - lo) / width) as usize).min(HISTOGRAM_BINS - 1);
        bins[b].count += 1;
    }
    bins
}

/// Scenario visiting the points of a drawn path, in drawing order. `refs` maps each layout
/// label to its viewpoint file.
pub fn scenario_from_path(layout: &Layout2D, path: &[&str], refs: &dyn Fn(&str) -> Option<std::path::PathBuf>, name: &str) -> Result<Scenario> {
    if path.is_empty() {
        return Err(Error::validation("path", "a drawn path needs at least one point"));
    }
    let mut files = Vec::with_capacity(path.len());
    for id in path {
        if layout.index_of(id).is_none() {
            return Err(Error::NotFound(format!("point `{id}` in the layout")));
        }
        files.push(refs(id).ok_or_else(|| Error::NotFound(format!("viewpoint file for `{id}`")))?);
    }
    Scenario::from_refs(name, files)
}

string_enum!(LabelMode { Computed => "computed", Layout => "layout", Ratio => "ratio" });

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportPoint {
    pub id: String,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportEdge {
    pub a: String,
    pub b: String,
    pub computed: f64,
    pub layout: f64,
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ExportMetrics {
    pub mean_ratio: Option<f64>,
    pub variance_ratio: Option<f64>,
    pub histogram: Vec<Bin>,
    pub excluded_pairs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LayoutDocument {
    pub points: Vec<ExportPoint>,
    pub edges: Vec<ExportEdge>,
    pub metrics: ExportMetrics,
    pub default_label: LabelMode,
}

/// Rounds to nine fractional digits; negative zero becomes zero.
pub fn round9(x: f64) -> f64 {
    let r = (x * 1e9).round() / 1e9;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

/// Layout document for the UI. Every edge carries all three label values; `mode` only picks
/// which one is shown first. Numbers are rounded to nine fractional digits.
pub fn export_layout(layout: &Layout2D, metrics: &QualityMetrics, mode: LabelMode) -> LayoutDocument {
    let round = |x: Option<f64>| x.map(round9);
    LayoutDocument {
        points: layout
            .labels
            .iter()
            .zip(&layout.points)
            .map(|(id, p)| ExportPoint {
                id: id.clone(),
                x: round9(p.x),
                y: round9(p.y),
            })
            .collect(),
        edges: metrics
            .pairs
            .iter()
            .map(|p| ExportEdge {
                a: layout.labels[p.i].clone(),
                b: layout.labels[p.j].clone(),
                computed: round9(p.computed),
                layout: round9(p.layout),
                ratio: round(p.ratio),
            })
            .collect(),
        metrics: ExportMetrics {
            mean_ratio: round(metrics.mean_ratio),
            variance_ratio: round(metrics.variance_ratio),
            histogram: metrics
                .histogram
                .iter()
                .map(|b| Bin {
                    lo: round9(b.lo),
                    hi: round9(b.hi),
                    count: b.count,
                })
                .collect(),
            excluded_pairs: metrics.excluded_pairs,
        },
        default_label: mode,
    }
}

pub fn write_layout(doc: &LayoutDocument, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(doc).expect("layout document serializes");
    text.push('\n');
    crate::xml::write_atomic(path, text.as_bytes())
}
