//! Evaluation metrics for sketches and blended levels.

mod wilcoxon;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sketch::{SketchCell, SketchGrid};

pub use crate::edbsp::domain_proportion;
pub use wilcoxon::{wilcoxon_rank_sum, wilcoxon_rank_sum_with, RankSumMethod, RankSumTest};

/// Smoothing added to every component before a KL divergence.
pub const KL_EPSILON: f64 = 1e-6;

/// How wildcard cells are read by density and topology.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WildcardRule {
    /// Wildcards are not solid.
    #[default]
    NotSolid,
    AsSolid,
}

impl WildcardRule {
    fn is_solid(self, c: SketchCell) -> bool {
        c == SketchCell::Solid || (self == WildcardRule::AsSolid && c == SketchCell::Wildcard)
    }
}

/// Fraction of solid cells.
pub fn density(s: &SketchGrid, rule: WildcardRule) -> f64 {
    s.cells().iter().filter(|&&c| rule.is_solid(c)).count() as f64 / s.len() as f64
}

/// Height of the highest solid cell in each column, counted from the
/// bottom (`height - row`), or 0 for a column with no solid cell.
pub fn column_heights(s: &SketchGrid, rule: WildcardRule) -> Vec<f64> {
    (0..s.width())
        .map(|c| {
            s.column(c)
                .position(|&cell| rule.is_solid(cell))
                .map_or(0.0, |r| (s.height() - r) as f64)
        })
        .collect()
}

/// Mean squared residual of a least-squares line through `(i, y[i])`.
pub fn linear_fit_mse(y: &[f64]) -> f64 {
    let n = y.len() as f64;
    let mx = (n - 1.0) / 2.0;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, v) in y.iter().enumerate() {
        let dx = i as f64 - mx;
        sxy += dx * (v - my);
        sxx += dx * dx;
    }
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    y.iter()
        .enumerate()
        .map(|(i, v)| {
            let r = v - (my + slope * (i as f64 - mx));
            r * r
        })
        .sum::<f64>()
        / n
}

/// How far the skyline of a sketch is from a straight line: MSE of a
/// linear regression over column heights.
pub fn non_linearity(s: &SketchGrid, rule: WildcardRule) -> Result<f64> {
    if s.width() < 2 {
        return Err(Error::DegenerateWidth(s.width()));
    }
    Ok(linear_fit_mse(&column_heights(s, rule)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub density: f64,
    pub non_linearity: f64,
}

impl FeatureVector {
    pub fn of(s: &SketchGrid, rule: WildcardRule) -> Result<Self> {
        Ok(FeatureVector {
            density: density(s, rule),
            non_linearity: non_linearity(s, rule)?,
        })
    }

    pub fn to_array(self) -> [f64; 2] {
        [self.density, self.non_linearity]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlagiarismMode {
    /// Row i is compared only with row i (and likewise columns).
    #[default]
    Aligned,
    /// Rows and columns may match at any index; counts the size of the
    /// multiset intersection.
    AnyPosition,
}

fn check_dims(a: &SketchGrid, b: &SketchGrid) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(Error::DimMismatch(a.height(), a.width(), b.height(), b.width()));
    }
    Ok(())
}

fn multiset_overlap(mut a: Vec<Vec<SketchCell>>, mut b: Vec<Vec<SketchCell>>) -> usize {
    a.sort();
    b.sort();
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    n
}

fn columns(s: &SketchGrid) -> Vec<Vec<SketchCell>> {
    (0..s.width()).map(|c| s.column(c).copied().collect()).collect()
}

/// Number of rows plus columns the two segments share.
pub fn plagiarism_with(a: &SketchGrid, b: &SketchGrid, mode: PlagiarismMode) -> Result<usize> {
    check_dims(a, b)?;
    Ok(match mode {
        PlagiarismMode::Aligned => {
            let rows = (0..a.height()).filter(|&r| a.row(r) == b.row(r)).count();
            let cols = (0..a.width()).filter(|&c| a.column(c).eq(b.column(c))).count();
            rows + cols
        }
        PlagiarismMode::AnyPosition => {
            let rows = |s: &SketchGrid| s.rows().map(|r| r.to_vec()).collect::<Vec<_>>();
            multiset_overlap(rows(a), rows(b)) + multiset_overlap(columns(a), columns(b))
        }
    })
}

pub fn plagiarism(a: &SketchGrid, b: &SketchGrid) -> Result<usize> {
    plagiarism_with(a, b, PlagiarismMode::Aligned)
}

/// Mean and population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return MeanStd {
                mean: f64::NAN,
                std: f64::NAN,
                n,
            };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        MeanStd {
            mean,
            std: var.sqrt(),
            n,
        }
    }
}

/// Plagiarism of every unordered pair `i < j`, in lexicographic pair order.
pub fn pairwise_plagiarism(sample: &[SketchGrid], mode: PlagiarismMode) -> Result<Vec<f64>> {
    if sample.len() < 2 {
        return Err(Error::SampleTooSmall {
            needed: 2,
            found: sample.len(),
        });
    }
    let mut out = Vec::with_capacity(sample.len() * (sample.len() - 1) / 2);
    for i in 0..sample.len() {
        for j in i + 1..sample.len() {
            out.push(plagiarism_with(&sample[i], &sample[j], mode)? as f64);
        }
    }
    Ok(out)
}

pub fn self_plagiarism(sample: &[SketchGrid], mode: PlagiarismMode) -> Result<MeanStd> {
    Ok(MeanStd::of(&pairwise_plagiarism(sample, mode)?))
}

/// Plagiarism of every (generated, reference) pair, generated-major.
pub fn cross_plagiarism(generated: &[SketchGrid], reference: &[SketchGrid], mode: PlagiarismMode) -> Result<Vec<f64>> {
    if generated.is_empty() || reference.is_empty() {
        return Err(Error::EmptySample);
    }
    let mut out = Vec::with_capacity(generated.len() * reference.len());
    for g in generated {
        for r in reference {
            out.push(plagiarism_with(g, r, mode)? as f64);
        }
    }
    Ok(out)
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

fn mean_dist<V: AsRef<[f64]>>(a: &[V], b: &[V]) -> f64 {
    let mut s = 0.0;
    for x in a {
        for y in b {
            s += euclid(x.as_ref(), y.as_ref());
        }
    }
    s / (a.len() * b.len()) as f64
}

/// Energy distance `2E|X-Y| - E|X-X'| - E|Y-Y'|`, with the within-sample
/// means taken over all ordered pairs including `i = j`.
pub fn e_distance<V: AsRef<[f64]>>(a: &[V], b: &[V]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySample);
    }
    Ok(2.0 * mean_dist(a, b) - mean_dist(a, a) - mean_dist(b, b))
}

fn smooth(p: &[f64], eps: f64) -> Vec<f64> {
    let z: f64 = p.iter().map(|v| v + eps).sum();
    p.iter().map(|v| (v + eps) / z).collect()
}

/// `KL(p || q)` in nats after adding `eps` to every component of both and
/// renormalizing. Components with no mass in `p` contribute nothing, so
/// `eps = 0` gives the unsmoothed divergence.
pub fn kl_divergence(p: &[f64], q: &[f64], eps: f64) -> f64 {
    assert_eq!(p.len(), q.len(), "distributions of different length");
    let (p, q) = (smooth(p, eps), smooth(q, eps));
    p.iter()
        .zip(&q)
        .filter(|(a, _)| **a > 0.0)
        .map(|(a, b)| a * (a / b).ln())
        .sum::<f64>()
        .max(0.0)
}

pub fn uniform(k: usize) -> Vec<f64> {
    vec![1.0 / k as f64; k]
}
