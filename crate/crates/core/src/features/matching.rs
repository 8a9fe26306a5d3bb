use super::{Feature, SparseFeatures};
use crate::pairing::CorrespondenceField;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Match {
    pub index_a: usize,
    pub index_b: usize,
    pub distance: f64,
    pub possible: bool,
    pub correct: bool,
    /// Distance of the b-feature from the ground-truth location.
    pub error_px: Option<f64>,
    /// B-feature closest to the ground-truth location when within tolerance.
    pub positive: Option<usize>,
}

impl Match {
    fn new(index_a: usize, index_b: usize, distance: f64) -> Self {
        Self { index_a, index_b, distance, possible: false, correct: false, error_px: None, positive: None }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MatchSet {
    pub matches: Vec<Match>,
    pub proposed: usize,
    /// A-features with a ground-truth correspondence, matched or not.
    pub possible: usize,
    pub correct: usize,
    pub labeled: bool,
}

impl MatchSet {
    pub fn unlabeled(matches: Vec<Match>) -> Self {
        let proposed = matches.len();
        Self { matches, proposed, possible: 0, correct: 0, labeled: false }
    }

    pub fn len(&self) -> usize {
        self.matches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matches.is_empty()
    }

    pub fn pairs(&self) -> Vec<(usize, usize)> {
        self.matches.iter().map(|m| (m.index_a, m.index_b)).collect()
    }
}

fn l2(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (*x as f64 - *y as f64).powi(2)).sum::<f64>().sqrt()
}

/// Row-major `|fa| × |fb|` Euclidean descriptor distances.
pub fn distance_matrix(fa: &SparseFeatures, fb: &SparseFeatures) -> Vec<f64> {
    fa.features
        .par_iter()
        .flat_map_iter(|a| fb.features.iter().map(move |b| l2(&a.descriptor, &b.descriptor)))
        .collect()
}

/// Mutual nearest neighbours over the entries admitted by `allowed`.
/// Ties resolve to the lowest index on either side.
pub fn mutual_nn_from_matrix(
    d: &[f64],
    na: usize,
    nb: usize,
    allowed: impl Fn(usize, usize) -> bool + Sync,
) -> Vec<Match> {
    assert_eq!(d.len(), na * nb);
    let argmin = |it: &mut dyn Iterator<Item = (usize, f64)>| {
        let mut best: Option<(usize, f64)> = None;
        for (i, v) in it {
            if best.is_none_or(|(_, b)| v < b) {
                best = Some((i, v));
            }
        }
        best.map(|(i, _)| i)
    };
    let row: Vec<Option<usize>> = (0..na)
        .into_par_iter()
        .map(|i| argmin(&mut (0..nb).filter(|&j| allowed(i, j)).map(|j| (j, d[i * nb + j]))))
        .collect();
    let col: Vec<Option<usize>> = (0..nb)
        .into_par_iter()
        .map(|j| argmin(&mut (0..na).filter(|&i| allowed(i, j)).map(|i| (i, d[i * nb + j]))))
        .collect();
    row.iter()
        .enumerate()
        .filter_map(|(i, r)| {
            let j = (*r)?;
            (col[j] == Some(i)).then(|| Match::new(i, j, d[i * nb + j]))
        })
        .collect()
}

/// Mutual nearest-neighbour matching on descriptor distance.
pub fn match_mutual_nn(fa: &SparseFeatures, fb: &SparseFeatures) -> MatchSet {
    if fa.is_empty() || fb.is_empty() {
        return MatchSet::default();
    }
    let d = distance_matrix(fa, fb);
    MatchSet::unlabeled(mutual_nn_from_matrix(&d, fa.len(), fb.len(), |_, _| true))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiscaleMatch {
    pub matches: MatchSet,
    /// Estimated `scale_a / scale_b`.
    pub scale_ratio: Option<f64>,
}

/// Mutual-NN matching refined by the intrinsic scale difference.
///
/// The first pass ignores scale. The median log scale ratio of its matches
/// gives the scale estimate, and the second pass only admits pairs whose
/// ratio lies within a factor `level_factor` of that estimate.
pub fn multiscale_match(fa: &SparseFeatures, fb: &SparseFeatures, level_factor: f64) -> MultiscaleMatch {
    if fa.is_empty() || fb.is_empty() {
        return MultiscaleMatch { matches: MatchSet::default(), scale_ratio: None };
    }
    let (na, nb) = (fa.len(), fb.len());
    let d = distance_matrix(fa, fb);
    let first = mutual_nn_from_matrix(&d, na, nb, |_, _| true);
    if first.is_empty() {
        return MultiscaleMatch { matches: MatchSet::default(), scale_ratio: None };
    }
    let lr = |i: usize, j: usize| (fa.features[i].scale / fb.features[j].scale).ln();
    let logs: Vec<f64> = first.iter().map(|m| lr(m.index_a, m.index_b)).collect();
    let center = crate::stats::median(&logs);
    // Scales may have passed through f32 storage.
    let window = level_factor.ln().abs() * (1.0 + 1e-6) + 1e-9;
    let second = mutual_nn_from_matrix(&d, na, nb, |i, j| (lr(i, j) - center).abs() <= window);
    MultiscaleMatch { matches: MatchSet::unlabeled(second), scale_ratio: Some(center.exp()) }
}

fn gt_location(corr: &CorrespondenceField, f: &Feature) -> Option<[f64; 2]> {
    let v = corr.map.sample_strict(f.x, f.y);
    (v[0].is_finite() && v[1].is_finite()).then(|| [v[0] as f64, v[1] as f64])
}

/// Labels matches against the ground-truth field. A match is possible when
/// the a-feature has a correspondence and correct when the matched
/// b-feature lies within `tol` pixels (inclusive) of it.
pub fn label_matches(
    m: &MatchSet,
    fa: &SparseFeatures,
    fb: &SparseFeatures,
    corr: &CorrespondenceField,
    tol: f64,
) -> MatchSet {
    let gt: Vec<Option<[f64; 2]>> = fa.features.iter().map(|f| gt_location(corr, f)).collect();
    let dist = |f: &Feature, g: [f64; 2]| (f.x - g[0]).hypot(f.y - g[1]);
    let mut out = m.clone();
    for mm in &mut out.matches {
        mm.possible = false;
        mm.correct = false;
        mm.error_px = None;
        mm.positive = None;
        let Some(g) = gt[mm.index_a] else { continue };
        mm.possible = true;
        let e = dist(&fb.features[mm.index_b], g);
        mm.error_px = Some(e);
        mm.correct = e <= tol;
        mm.positive = fb
            .features
            .iter()
            .enumerate()
            .map(|(j, f)| (j, dist(f, g)))
            .filter(|(_, e)| *e <= tol)
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(j, _)| j);
    }
    out.proposed = out.matches.len();
    out.possible = gt.iter().filter(|g| g.is_some()).count();
    out.correct = out.matches.iter().filter(|m| m.correct).count();
    out.labeled = true;
    out
}
