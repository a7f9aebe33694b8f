//! Preferences, scalarizations, Pareto dominance, hypervolume, and the
//! diversity / rank-correlation metrics. Objectives are maximized.

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

pub const SIMPLEX_TOL: f64 = 1e-9;
pub const MAX_EXACT_HV_DIMS: usize = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParetoError {
    #[error("length mismatch: {0} vs {1}")]
    Length(usize, usize),
    #[error("invalid preference vector {0:?}")]
    InvalidPreference(Vec<f64>),
    #[error("invalid Dirichlet concentration {0:?}")]
    InvalidConcentration(Vec<f64>),
    #[error("point {point:?} lies below the reference point {reference:?}")]
    BelowReference {
        point: Vec<f64>,
        reference: Vec<f64>,
    },
    #[error("exact hypervolume supports at most {MAX_EXACT_HV_DIMS} objectives, got {0}")]
    TooManyObjectives(usize),
    #[error("metric undefined: {0}")]
    Undefined(&'static str),
}

fn same_len(a: usize, b: usize) -> Result<(), ParetoError> {
    if a == b {
        Ok(())
    } else {
        Err(ParetoError::Length(a, b))
    }
}

/// A point on the probability simplex weighting the objectives.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct PreferenceVector(Vec<f64>);

impl PreferenceVector {
    pub fn new(weights: Vec<f64>) -> Result<Self, ParetoError> {
        let sum: f64 = weights.iter().sum();
        if weights.is_empty()
            || weights.iter().any(|w| !w.is_finite() || *w < 0.0)
            || (sum - 1.0).abs() > SIMPLEX_TOL
        {
            return Err(ParetoError::InvalidPreference(weights));
        }
        Ok(Self(weights))
    }

    /// Projects nonnegative weights onto the simplex by dividing by their sum.
    pub fn normalized(weights: Vec<f64>) -> Result<Self, ParetoError> {
        let sum: f64 = weights.iter().sum();
        if sum.is_nan() || sum <= 0.0 || weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(ParetoError::InvalidPreference(weights));
        }
        Ok(Self(weights.into_iter().map(|w| w / sum).collect()))
    }

    pub fn one_hot(m: usize, i: usize) -> Self {
        let mut w = vec![0.0; m];
        w[i] = 1.0;
        Self(w)
    }

    pub fn uniform(m: usize) -> Self {
        Self(vec![1.0 / m as f64; m])
    }

    /// `count` evenly spaced two-objective preferences from (1,0) to (0,1),
    /// endpoints included.
    pub fn evenly_spaced_pair(count: usize) -> Vec<Self> {
        assert!(count >= 2);
        (0..count)
            .map(|i| {
                let w = 1.0 - i as f64 / (count - 1) as f64;
                Self(vec![w, 1.0 - w])
            })
            .collect()
    }

    pub fn weights(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl TryFrom<Vec<f64>> for PreferenceVector {
    type Error = ParetoError;
    fn try_from(v: Vec<f64>) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<PreferenceVector> for Vec<f64> {
    fn from(p: PreferenceVector) -> Self {
        p.0
    }
}

impl fmt::Display for PreferenceVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|w| format!("{w:.4}")).collect();
        write!(f, "({})", parts.join(";"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scalarization {
    WeightedSum,
    Tchebycheff,
}

impl Scalarization {
    pub fn apply(self, pref: &PreferenceVector, f: &[f64]) -> Result<f64, ParetoError> {
        match self {
            Scalarization::WeightedSum => scalarize_ws(pref, f),
            Scalarization::Tchebycheff => scalarize_tch(pref, f),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Scalarization::WeightedSum => "WS",
            Scalarization::Tchebycheff => "Tchebycheff",
        }
    }
}

/// Σ λᵢ fᵢ
pub fn scalarize_ws(pref: &PreferenceVector, f: &[f64]) -> Result<f64, ParetoError> {
    same_len(pref.len(), f.len())?;
    Ok(pref.weights().iter().zip(f).map(|(l, v)| l * v).sum())
}

/// maxᵢ λᵢ fᵢ, the max form without a utopia point.
pub fn scalarize_tch(pref: &PreferenceVector, f: &[f64]) -> Result<f64, ParetoError> {
    same_len(pref.len(), f.len())?;
    Ok(pref
        .weights()
        .iter()
        .zip(f)
        .map(|(l, v)| l * v)
        .fold(f64::NEG_INFINITY, f64::max))
}

/// Concentration parameters of a Dirichlet distribution over preferences.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct DirichletParams(Vec<f64>);

impl DirichletParams {
    pub fn new(alpha: Vec<f64>) -> Result<Self, ParetoError> {
        if alpha.is_empty() || alpha.iter().any(|a| !(a.is_finite() && *a > 0.0)) {
            return Err(ParetoError::InvalidConcentration(alpha));
        }
        Ok(Self(alpha))
    }

    pub fn symmetric(m: usize, a: f64) -> Self {
        Self(vec![a; m])
    }

    pub fn alpha(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn mean(&self) -> Vec<f64> {
        let s: f64 = self.0.iter().sum();
        self.0.iter().map(|a| a / s).collect()
    }
}

impl TryFrom<Vec<f64>> for DirichletParams {
    type Error = ParetoError;
    fn try_from(v: Vec<f64>) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<DirichletParams> for Vec<f64> {
    fn from(p: DirichletParams) -> Self {
        p.0
    }
}

/// Draws λ ~ Dir(α) by normalizing independent Gamma(αᵢ, 1) variates.
pub fn sample_dirichlet<R: Rng + ?Sized>(alpha: &DirichletParams, rng: &mut R) -> PreferenceVector {
    loop {
        let draws: Vec<f64> = alpha
            .alpha()
            .iter()
            .map(|&a| Gamma::new(a, 1.0).expect("validated shape").sample(rng))
            .collect();
        let sum: f64 = draws.iter().sum();
        if sum > 0.0 && sum.is_finite() {
            let mut w: Vec<f64> = draws.iter().map(|d| d / sum).collect();
            // Absorb rounding so the simplex check holds to the last bit.
            let drift: f64 = 1.0 - w.iter().sum::<f64>();
            let imax = w
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .map(|(i, _)| i)
                .unwrap();
            w[imax] += drift;
            return PreferenceVector(w);
        }
    }
}

/// a ≥ b componentwise with at least one strict inequality.
pub fn dominates(a: &[f64], b: &[f64]) -> Result<bool, ParetoError> {
    same_len(a.len(), b.len())?;
    Ok(dominates_unchecked(a, b))
}

fn dominates_unchecked(a: &[f64], b: &[f64]) -> bool {
    let mut strict = false;
    for (x, y) in a.iter().zip(b) {
        if x < y {
            return false;
        }
        if x > y {
            strict = true;
        }
    }
    strict
}

/// Indices of the nondominated points; identical vectors are kept once (first
/// occurrence).
pub fn pareto_indices<P: AsRef<[f64]>>(points: &[P]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    // Sorting by descending coordinate sum means a dominator always precedes
    // the points it dominates.
    let sums: Vec<f64> = points.iter().map(|p| p.as_ref().iter().sum()).collect();
    order.sort_by(|&i, &j| sums[j].total_cmp(&sums[i]).then(i.cmp(&j)));
    let mut kept: Vec<usize> = Vec::new();
    for i in order {
        let p = points[i].as_ref();
        let covered = kept.iter().any(|&k| {
            let q = points[k].as_ref();
            q == p || dominates_unchecked(q, p)
        });
        if !covered {
            // Rounding can tie the sums of a dominated pair.
            kept.retain(|&k| !dominates_unchecked(p, points[k].as_ref()));
            kept.push(i);
        }
    }
    kept.sort_unstable();
    kept
}

/// Nondominated subset of a point set together with its reference point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParetoFront {
    pub members: Vec<(usize, Vec<f64>)>,
    pub reference: Vec<f64>,
}

impl ParetoFront {
    /// Extracts the front of `points` (ids are positions in `points`).
    /// Members that do not weakly dominate `reference` are dropped.
    pub fn from_points<P: AsRef<[f64]>>(points: &[P], reference: &[f64]) -> Self {
        let members = pareto_indices(points)
            .into_iter()
            .filter(|&i| {
                points[i]
                    .as_ref()
                    .iter()
                    .zip(reference)
                    .all(|(v, r)| v >= r)
            })
            .map(|i| (i, points[i].as_ref().to_vec()))
            .collect();
        Self {
            members,
            reference: reference.to_vec(),
        }
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn points(&self) -> Vec<Vec<f64>> {
        self.members.iter().map(|(_, p)| p.clone()).collect()
    }

    pub fn hypervolume(&self) -> Result<f64, ParetoError> {
        hypervolume(&self.points(), &self.reference)
    }
}

/// Exact Lebesgue measure of ∪ᵢ [r, yᵢ] for up to four objectives.
///
/// Dominated points and duplicates are removed first. The recursion sorts on
/// the last axis (ties broken by the preceding axes), slices the union into
/// slabs between consecutive last-axis values, and measures each slab's
/// cross-section with the same routine in one dimension fewer.
pub fn hypervolume<P: AsRef<[f64]>>(points: &[P], reference: &[f64]) -> Result<f64, ParetoError> {
    let m = reference.len();
    if m == 0 {
        return Err(ParetoError::Undefined("zero objectives"));
    }
    if m > MAX_EXACT_HV_DIMS {
        return Err(ParetoError::TooManyObjectives(m));
    }
    for p in points {
        let p = p.as_ref();
        same_len(m, p.len())?;
        if p.iter().zip(reference).any(|(v, r)| v < r || !v.is_finite()) {
            return Err(ParetoError::BelowReference {
                point: p.to_vec(),
                reference: reference.to_vec(),
            });
        }
    }
    let front: Vec<Vec<f64>> = pareto_indices(points)
        .into_iter()
        .map(|i| points[i].as_ref().to_vec())
        .collect();
    Ok(hv_recursive(front, reference))
}

fn hv_recursive(mut pts: Vec<Vec<f64>>, r: &[f64]) -> f64 {
    let m = r.len();
    if pts.is_empty() {
        return 0.0;
    }
    if m == 1 {
        return pts.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max) - r[0];
    }
    if m == 2 {
        pts.sort_by(|a, b| b[0].total_cmp(&a[0]).then(b[1].total_cmp(&a[1])));
        let mut area = 0.0;
        let mut best_y = r[1];
        for p in &pts {
            if p[1] > best_y {
                area += (p[0] - r[0]) * (p[1] - best_y);
                best_y = p[1];
            }
        }
        return area;
    }
    let last = m - 1;
    pts.sort_by(|a, b| {
        b[last].total_cmp(&a[last]).then_with(|| {
            for k in (0..last).rev() {
                let c = b[k].total_cmp(&a[k]);
                if c != std::cmp::Ordering::Equal {
                    return c;
                }
            }
            std::cmp::Ordering::Equal
        })
    });
    let mut volume = 0.0;
    let mut slab: Vec<Vec<f64>> = Vec::with_capacity(pts.len());
    for i in 0..pts.len() {
        slab.push(pts[i][..last].to_vec());
        let lower = if i + 1 < pts.len() {
            pts[i + 1][last]
        } else {
            r[last]
        };
        let height = pts[i][last] - lower;
        if height > 0.0 {
            let section: Vec<Vec<f64>> = pareto_indices(&slab)
                .into_iter()
                .map(|k| slab[k].clone())
                .collect();
            volume += height * hv_recursive(section, &r[..last]);
        }
    }
    volume
}

/// Multiset Jaccard similarity Σ min / Σ max; two empty multisets are
/// identical.
pub fn multiset_jaccard(a: &[u16], b: &[u16]) -> f64 {
    let (mut inter, mut union) = (0u64, 0u64);
    for i in 0..a.len().max(b.len()) {
        let x = a.get(i).copied().unwrap_or(0) as u64;
        let y = b.get(i).copied().unwrap_or(0) as u64;
        inter += x.min(y);
        union += x.max(y);
    }
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

/// Mean pairwise `1 − Jaccard` over component multisets.
pub fn diversity<C: AsRef<[u16]>>(objects: &[C]) -> Result<f64, ParetoError> {
    let n = objects.len();
    if n < 2 {
        return Err(ParetoError::Undefined("diversity needs at least two objects"));
    }
    let mut total = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            total += 1.0 - multiset_jaccard(objects[i].as_ref(), objects[j].as_ref());
        }
    }
    Ok(total / (n * (n - 1) / 2) as f64)
}

/// Fractional ranks (1-based); tied values share their average rank.
pub fn fractional_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&i, &j| xs[i].total_cmp(&xs[j]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64, ParetoError> {
    same_len(xs.len(), ys.len())?;
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(ParetoError::Undefined("zero variance"));
    }
    Ok(sxy / (sxx.sqrt() * syy.sqrt()))
}

/// Spearman's ρ: Pearson correlation of fractional ranks.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64, ParetoError> {
    same_len(xs.len(), ys.len())?;
    if xs.len() < 3 {
        return Err(ParetoError::Undefined("spearman needs at least three pairs"));
    }
    pearson(&fractional_ranks(xs), &fractional_ranks(ys))
}
