//! Matching metrics, per-pair evaluation and easy/hard report aggregation.

use crate::error::{Error, Result};
use crate::features::{label_matches, match_mutual_nn, multiscale_match, Feature, MatchSet, SparseFeatures};
use crate::pairing::{classify_difficulty, Backplane, Difficulty, ImagePair};
use crate::pose::{
    classify_outcome, estimate_pose, ground_truth_pose, subsample_correspondences, PoseOutcome, PoseParams,
    WorldMatch,
};
use crate::stats::nearest_rank;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::io::Write;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairMetrics {
    pub m_score: f64,
    pub mma: f64,
    /// NaN when no proposed match has a retrievable positive.
    pub map: f64,
    /// NaN when no match is correct.
    pub le_px: f64,
    pub proposed: usize,
    pub possible: usize,
    pub correct: usize,
}

/// Exact average precision of a ranking with a single positive: the
/// reciprocal of the positive's rank after a stable descending sort.
pub fn ap_exact(similarities: &[f64], positive: usize) -> f64 {
    let sp = similarities[positive];
    let ahead = similarities
        .iter()
        .enumerate()
        .filter(|&(j, &s)| j != positive && (s > sp || (s == sp && j < positive)))
        .count();
    1.0 / (ahead + 1) as f64
}

pub fn mean_ap(queries: &[(Vec<f64>, usize)]) -> Result<f64> {
    if queries.is_empty() {
        return Err(Error::Empty);
    }
    Ok(queries.iter().map(|(s, p)| ap_exact(s, *p)).sum::<f64>() / queries.len() as f64)
}

fn l2(a: &Feature, b: &Feature) -> f64 {
    a.descriptor.iter().zip(&b.descriptor).map(|(x, y)| (*x as f64 - *y as f64).powi(2)).sum::<f64>().sqrt()
}

/// Ratios over a labeled match set. Fails when no a-feature has a
/// ground-truth correspondence.
pub fn compute_pair_metrics(m: &MatchSet, fa: &SparseFeatures, fb: &SparseFeatures) -> Result<PairMetrics> {
    if !m.labeled {
        return Err(Error::Invalid("match set is not labeled".into()));
    }
    if m.possible == 0 {
        return Err(Error::NoCorrespondences);
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let errors: Vec<f64> = m.matches.iter().filter(|x| x.correct).filter_map(|x| x.error_px).collect();
    let le_px = if errors.is_empty() { f64::NAN } else { errors.iter().sum::<f64>() / errors.len() as f64 };
    let queries: Vec<(Vec<f64>, usize)> = m
        .matches
        .iter()
        .filter_map(|x| {
            let p = x.positive?;
            let q = &fa.features[x.index_a];
            Some((fb.features.iter().map(|b| -l2(q, b)).collect(), p))
        })
        .collect();
    let map = mean_ap(&queries).unwrap_or(f64::NAN);
    Ok(PairMetrics {
        m_score: ratio(m.correct, m.possible),
        mma: ratio(m.correct, m.proposed),
        map,
        le_px,
        proposed: m.proposed,
        possible: m.possible,
        correct: m.correct,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalParams {
    /// Correctness radius in pixels (inclusive).
    pub tolerance: f64,
    pub multiscale: bool,
    /// Pyramid factor between adjacent levels.
    pub level_factor: f64,
    pub pose: PoseParams,
}

impl Default for EvalParams {
    fn default() -> Self {
        Self { tolerance: 5.0, multiscale: true, level_factor: 2f64.powf(0.25), pose: PoseParams::default() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairEvaluation {
    pub matches: MatchSet,
    pub metrics: Option<PairMetrics>,
    pub pose: PoseOutcome,
    pub difficulty: Difficulty,
    pub scale_ratio: Option<f64>,
}

/// Body coordinates at a subpixel location. Integer locations read the pixel
/// directly; otherwise all four neighbours must be valid.
pub fn backplane_point(coords: &Backplane, x: f64, y: f64) -> Option<[f64; 3]> {
    let snap = |v: f64| if (v - v.round()).abs() < 1e-6 { v.round() } else { v };
    let (x, y) = (snap(x), snap(y));
    if !(x >= 0.0 && y >= 0.0) {
        return None;
    }
    let (x0, y0) = (x.floor() as usize, y.floor() as usize);
    let (fx, fy) = (x - x0 as f64, y - y0 as f64);
    let x1 = if fx > 0.0 { x0 + 1 } else { x0 };
    let y1 = if fy > 0.0 { y0 + 1 } else { y0 };
    if x1 >= coords.width() || y1 >= coords.height() {
        return None;
    }
    let p = [*coords.get(x0, y0), *coords.get(x1, y0), *coords.get(x0, y1), *coords.get(x1, y1)];
    if p.iter().flatten().any(|v| !v.is_finite()) {
        return None;
    }
    let mut out = [0.0; 3];
    for (c, o) in out.iter_mut().enumerate() {
        let top = p[0][c] as f64 * (1.0 - fx) + p[1][c] as f64 * fx;
        let bot = p[2][c] as f64 * (1.0 - fx) + p[3][c] as f64 * fx;
        *o = top * (1.0 - fy) + bot * fy;
    }
    Some(out)
}

/// Matches, labels, scores and estimates the pose of B for one pair.
pub fn evaluate_pair(
    pair: &ImagePair,
    fa: &SparseFeatures,
    fb: &SparseFeatures,
    params: &EvalParams,
    seed: u64,
) -> Result<PairEvaluation> {
    let difficulty = classify_difficulty(pair)?;
    let (raw, scale_ratio) = if params.multiscale {
        let ms = multiscale_match(fa, fb, params.level_factor);
        (ms.matches, ms.scale_ratio)
    } else {
        (match_mutual_nn(fa, fb), None)
    };
    let matches = label_matches(&raw, fa, fb, &pair.corr_ab, params.tolerance);
    let metrics = compute_pair_metrics(&matches, fa, fb).ok();

    let coords = pair.a.coords.as_ref().ok_or(Error::MissingMetadata("backplane of image A"))?;
    let gt = ground_truth_pose(pair, &params.pose, seed)?;
    let world: Vec<WorldMatch> = matches
        .matches
        .iter()
        .filter_map(|m| {
            let a = &fa.features[m.index_a];
            let b = &fb.features[m.index_b];
            backplane_point(coords, a.x, a.y).map(|p| WorldMatch::new(p, [b.x, b.y]))
        })
        .collect();
    let pp = &params.pose;
    let world = subsample_correspondences(&world, pp.subsample_threshold, pp.subsample_target);
    let pose = match estimate_pose(&world, &pair.b.intrinsics, &pp.ransac, &pp.refine, seed) {
        Ok((p, inliers)) => classify_outcome(Some(&p), &gt, inliers, pp),
        Err(_) => classify_outcome(None, &gt, 0, pp),
    };
    Ok(PairEvaluation { matches, metrics, pose, difficulty, scale_ratio })
}

/// Features carrying identical unique descriptors at ground-truth
/// corresponding locations: up to `n` a-features on pixels with a
/// correspondence and a body coordinate, and b-features exactly at the
/// corresponding positions, in shuffled order.
pub fn oracle_features(pair: &ImagePair, n: usize, dim: usize, seed: u64) -> (SparseFeatures, SparseFeatures) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cands: Vec<(usize, usize, [f32; 2])> = pair
        .corr_ab
        .valid()
        .into_iter()
        .filter(|&(x, y, _)| {
            pair.a.coords.as_ref().is_none_or(|c| c.get(x, y).iter().all(|v| v.is_finite()))
        })
        .collect();
    cands.shuffle(&mut rng);
    cands.truncate(n);
    let mut fa = Vec::with_capacity(cands.len());
    let mut fb = Vec::with_capacity(cands.len());
    for (x, y, b) in cands {
        let mut d: Vec<f32> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        crate::features::l2_normalize(&mut d);
        fa.push(Feature { x: x as f64, y: y as f64, scale: 1.0, score: 1.0, descriptor: d.clone() });
        fb.push(Feature { x: b[0] as f64, y: b[1] as f64, scale: 1.0, score: 1.0, descriptor: d });
    }
    fb.shuffle(&mut rng);
    (SparseFeatures::new(fa), SparseFeatures::new(fb))
}

/// Per-pair result feeding the dataset report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairResult {
    pub pair_id: String,
    pub difficulty: Difficulty,
    pub metrics: Option<PairMetrics>,
    pub pose_failed: bool,
    /// Degrees; infinite for failures.
    pub orientation_error: f64,
    pub inliers: usize,
}

impl PairResult {
    pub fn from_evaluation(pair_id: impl Into<String>, e: &PairEvaluation) -> Self {
        Self {
            pair_id: pair_id.into(),
            difficulty: e.difficulty,
            metrics: e.metrics,
            pose_failed: e.pose.failed,
            orientation_error: e.pose.orientation_error,
            inliers: e.pose.inlier_count,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetReport {
    pub subset: Difficulty,
    /// Mean over pairs with defined metrics.
    pub m_score: f64,
    pub fail_pct: f64,
    /// Degrees; `None` when the percentile falls on a failure.
    pub p50: Option<f64>,
    pub p85: Option<f64>,
    pub n: usize,
    /// Pairs whose metrics were undefined (no possible matches).
    pub excluded: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetReport {
    pub method: String,
    pub config_hash: String,
    pub m_score_statistic: String,
    pub rows: Vec<SubsetReport>,
    /// Pairs that could not be evaluated at all.
    pub skipped: usize,
}

fn subset_report(subset: Difficulty, results: &[&PairResult]) -> SubsetReport {
    let n = results.len();
    let scores: Vec<f64> = results.iter().filter_map(|r| r.metrics.map(|m| m.m_score)).collect();
    let m_score = if scores.is_empty() { f64::NAN } else { scores.iter().sum::<f64>() / scores.len() as f64 };
    let failed = results.iter().filter(|r| r.pose_failed).count();
    let mut errs: Vec<f64> =
        results.iter().map(|r| if r.pose_failed { f64::INFINITY } else { r.orientation_error }).collect();
    errs.sort_by(f64::total_cmp);
    let pct = |p: f64| Some(nearest_rank(&errs, p)).filter(|v| v.is_finite());
    SubsetReport {
        subset,
        m_score,
        fail_pct: 100.0 * failed as f64 / n as f64,
        p50: pct(50.0),
        p85: pct(85.0),
        n,
        excluded: n - scores.len(),
    }
}

/// Splits results by difficulty. Failed poses enter the percentiles as +∞.
/// Subsets without pairs are omitted.
pub fn aggregate_report(method: &str, config_hash: &str, results: &[PairResult], skipped: usize) -> DatasetReport {
    let rows = [Difficulty::Easy, Difficulty::Hard]
        .into_iter()
        .filter_map(|d| {
            let sub: Vec<&PairResult> = results.iter().filter(|r| r.difficulty == d).collect();
            (!sub.is_empty()).then(|| subset_report(d, &sub))
        })
        .collect();
    DatasetReport {
        method: method.to_string(),
        config_hash: config_hash.to_string(),
        m_score_statistic: "mean".into(),
        rows,
        skipped,
    }
}

impl DatasetReport {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let map_err = |e: csv::Error| Error::Format(e.to_string());
        wr.write_record(["method", "subset", "m_score", "fail_pct", "p50", "p85", "n", "config_hash"])
            .map_err(map_err)?;
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.6}"));
        for r in &self.rows {
            wr.write_record([
                self.method.clone(),
                r.subset.to_string(),
                format!("{:.6}", r.m_score),
                format!("{:.2}", r.fail_pct),
                opt(r.p50),
                opt(r.p85),
                r.n.to_string(),
                self.config_hash.clone(),
            ])
            .map_err(map_err)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::Match;
    use proptest::prelude::*;

    fn labeled(proposed: usize, possible: usize, correct: usize) -> MatchSet {
        let matches = (0..proposed)
            .map(|i| Match {
                index_a: i,
                index_b: i,
                distance: 0.0,
                possible: i < possible,
                correct: i < correct,
                error_px: (i < possible).then_some(1.0),
                positive: None,
            })
            .collect();
        MatchSet { matches, proposed, possible, correct, labeled: true }
    }

    fn empty_feats(n: usize) -> SparseFeatures {
        SparseFeatures::new(
            (0..n).map(|i| Feature { x: i as f64, y: 0.0, scale: 1.0, score: 1.0, descriptor: vec![1.0] }).collect(),
        )
    }

    #[test]
    fn ratios() {
        let m = compute_pair_metrics(&labeled(6, 10, 3), &empty_feats(10), &empty_feats(10)).unwrap();
        assert!((m.m_score - 0.3).abs() < 1e-12 && (m.mma - 0.5).abs() < 1e-12);
        assert_eq!(m.le_px, 1.0);
        let m = compute_pair_metrics(&labeled(4, 4, 4), &empty_feats(4), &empty_feats(4)).unwrap();
        assert_eq!((m.m_score, m.mma), (1.0, 1.0));
        let m = compute_pair_metrics(&labeled(4, 4, 0), &empty_feats(4), &empty_feats(4)).unwrap();
        assert_eq!((m.m_score, m.mma), (0.0, 0.0));
        assert!(m.le_px.is_nan());
        assert!(compute_pair_metrics(&labeled(3, 0, 0), &empty_feats(3), &empty_feats(3)).is_err());
    }

    #[test]
    fn extra_incorrect_match_lowers_mma_only() {
        let f = empty_feats(10);
        let a = compute_pair_metrics(&labeled(5, 8, 3), &f, &f).unwrap();
        let b = compute_pair_metrics(&labeled(6, 8, 3), &f, &f).unwrap();
        assert!(b.mma < a.mma);
        assert_eq!(a.correct, b.correct);
        assert_eq!(a.m_score, b.m_score);
    }

    #[test]
    fn ap_values() {
        assert_eq!(ap_exact(&[0.9, 0.1, 0.2], 0), 1.0);
        assert_eq!(ap_exact(&[0.3, 0.7], 0), 0.5);
        assert!(mean_ap(&[]).is_err());
        assert_eq!(mean_ap(&[(vec![1.0, 0.0], 0), (vec![0.0, 1.0], 0)]).unwrap(), 0.75);
    }

    /// AP from a literal stable sort and cumulative precision.
    fn brute_ap(s: &[f64], pos: usize) -> f64 {
        let mut idx: Vec<usize> = (0..s.len()).collect();
        idx.sort_by(|&a, &b| s[b].total_cmp(&s[a]));
        let mut hits = 0.0;
        let mut total = 0.0;
        for (k, &i) in idx.iter().enumerate() {
            if i == pos {
                hits += 1.0;
                total += hits / (k + 1) as f64;
            }
        }
        total / hits
    }

    fn permutations(v: &[f64]) -> Vec<Vec<f64>> {
        if v.len() <= 1 {
            return vec![v.to_vec()];
        }
        let mut out = vec![];
        for i in 0..v.len() {
            let mut rest = v.to_vec();
            let x = rest.remove(i);
            for mut p in permutations(&rest) {
                p.insert(0, x);
                out.push(p);
            }
        }
        out
    }

    #[test]
    fn ap_ties_and_permutations() {
        for sims in [vec![0.5, 0.5, 0.5, 0.5], vec![0.2, 0.5, 0.5, 0.9], vec![0.1, 0.3, 0.7, 0.3]] {
            for p in permutations(&sims) {
                for pos in 0..p.len() {
                    assert_eq!(ap_exact(&p, pos), brute_ap(&p, pos));
                }
            }
        }
        // distractor order is irrelevant when no distractor ties the positive
        let base = [0.4, 0.1, 0.9, 0.2];
        let reference = ap_exact(&[0.5, base[0], base[1], base[2], base[3]], 0);
        for p in permutations(&base) {
            let mut v = vec![0.5];
            v.extend(p);
            assert_eq!(ap_exact(&v, 0), reference);
        }
    }

    fn result(d: Difficulty, fail: bool, err: f64) -> PairResult {
        PairResult {
            pair_id: String::new(),
            difficulty: d,
            metrics: Some(PairMetrics {
                m_score: 0.5,
                mma: 0.5,
                map: 0.5,
                le_px: 1.0,
                proposed: 2,
                possible: 2,
                correct: 1,
            }),
            pose_failed: fail,
            orientation_error: if fail { f64::INFINITY } else { err },
            inliers: 20,
        }
    }

    #[test]
    fn all_fail_blank_percentiles() {
        let rs: Vec<PairResult> = (0..5).map(|_| result(Difficulty::Hard, true, 0.0)).collect();
        let rep = aggregate_report("m", "h", &rs, 0);
        assert_eq!(rep.rows.len(), 1);
        assert_eq!(rep.rows[0].fail_pct, 100.0);
        assert_eq!((rep.rows[0].p50, rep.rows[0].p85), (None, None));
    }

    #[test]
    fn twenty_percent_failures() {
        // 10 pairs, 2 failures: sorted errors 1..8 then ∞, ∞.
        let mut rs: Vec<PairResult> = (1..=8).map(|e| result(Difficulty::Easy, false, e as f64)).collect();
        rs.push(result(Difficulty::Easy, true, 0.0));
        rs.push(result(Difficulty::Easy, true, 0.0));
        let r = &aggregate_report("m", "h", &rs, 0).rows[0];
        assert_eq!(r.p50, Some(5.0));
        // rank ⌈8.5⌉ = 9 lands in the failure block
        assert_eq!(r.p85, None);
        assert_eq!(r.fail_pct, 20.0);
        // 20 pairs with 3 failures: rank 17 is finite
        let mut rs: Vec<PairResult> = (1..=17).map(|e| result(Difficulty::Easy, false, e as f64)).collect();
        rs.extend((0..3).map(|_| result(Difficulty::Easy, true, 0.0)));
        let r = &aggregate_report("m", "h", &rs, 0).rows[0];
        assert_eq!(r.p85, Some(17.0));
    }

    #[test]
    fn csv_blank_for_failures() {
        let rs: Vec<PairResult> = (0..3).map(|_| result(Difficulty::Easy, true, 0.0)).collect();
        let mut buf = Vec::new();
        aggregate_report("disk", "abc", &rs, 0).write_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(s.lines().nth(1).unwrap(), "disk,easy,0.500000,100.00,,,3,abc");
    }

    proptest! {
        #[test]
        fn report_permutation_invariant(
            errs in prop::collection::vec((0.0f64..30.0, any::<bool>(), any::<bool>()), 1..40),
            seed in any::<u64>(),
        ) {
            let rs: Vec<PairResult> = errs
                .iter()
                .map(|&(e, f, h)| result(if h { Difficulty::Hard } else { Difficulty::Easy }, f, e))
                .collect();
            let mut shuffled = rs.clone();
            shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(aggregate_report("m", "h", &rs, 0), aggregate_report("m", "h", &shuffled, 0));
        }

        #[test]
        fn p50_matches_order_statistic(finite in prop::collection::vec(0.0f64..30.0, 2..40), frac in 0.0f64..0.49) {
            let n_fail = ((finite.len() as f64) * frac / (1.0 - frac)).floor() as usize;
            let mut rs: Vec<PairResult> = finite.iter().map(|&e| result(Difficulty::Easy, false, e)).collect();
            rs.extend((0..n_fail).map(|_| result(Difficulty::Easy, true, 0.0)));
            let n = rs.len();
            prop_assume!((n_fail as f64) < 0.5 * n as f64);
            let mut sorted = finite.clone();
            sorted.sort_by(f64::total_cmp);
            let rank = (0.5 * n as f64).ceil().max(1.0) as usize;
            let r = &aggregate_report("m", "h", &rs, 0).rows[0];
            prop_assert_eq!(r.p50, Some(sorted[rank - 1]));
        }

        #[test]
        fn map_monotone_invariant(sims in prop::collection::vec(-1.0f64..1.0, 2..20), pos in 0usize..20) {
            let pos = pos % sims.len();
            let t: Vec<f64> = sims.iter().map(|s| (3.0 * s).exp() + 2.0).collect();
            prop_assert_eq!(ap_exact(&sims, pos), ap_exact(&t, pos));
        }
    }
}
