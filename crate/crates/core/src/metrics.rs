//! Angular overfitting diagnostics.
//!
//! Everything here looks only at directions: centrality and separability of
//! class clusters under the cosine distance, their test/train ratios, k-NN
//! agreement, plus the correlation helpers used to compare them against the
//! loss ratio. The point-cloud diversity statistic lives here too.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{compensated_sum, dot, norm, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    #[default]
    Train,
    Test,
}

/// Feature vectors with class labels (and optional nuisance groups / sample ids).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledFeatureSet<T> {
    vectors: Vec<Vec<T>>,
    labels: Vec<usize>,
    groups: Option<Vec<usize>>,
    ids: Option<Vec<usize>>,
    split: Split,
    class_names: Vec<String>,
}

impl<T: Scalar> LabeledFeatureSet<T> {
    pub fn new(vectors: Vec<Vec<T>>, labels: Vec<usize>, class_names: Vec<String>) -> Result<Self> {
        if vectors.len() != labels.len() {
            return Err(Error::DimensionMismatch { expected: vectors.len(), found: labels.len() });
        }
        if let Some(first) = vectors.first() {
            let n = first.len();
            for v in &vectors {
                if v.len() != n {
                    return Err(Error::DimensionMismatch { expected: n, found: v.len() });
                }
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(Error::InvalidFeatureVector("non-finite coordinate".into()));
                }
            }
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_names.len()) {
            return Err(Error::BadSpec(format!("label {bad} out of range for {} classes", class_names.len())));
        }
        Ok(Self { vectors, labels, groups: None, ids: None, split: Split::Train, class_names })
    }

    /// Classes named `0..n_classes`.
    pub fn unnamed(vectors: Vec<Vec<T>>, labels: Vec<usize>, n_classes: usize) -> Result<Self> {
        Self::new(vectors, labels, (0..n_classes).map(|i| i.to_string()).collect())
    }

    pub fn with_groups(mut self, groups: Vec<usize>) -> Result<Self> {
        if groups.len() != self.len() {
            return Err(Error::DimensionMismatch { expected: self.len(), found: groups.len() });
        }
        self.groups = Some(groups);
        Ok(self)
    }

    pub fn with_ids(mut self, ids: Vec<usize>) -> Result<Self> {
        if ids.len() != self.len() {
            return Err(Error::DimensionMismatch { expected: self.len(), found: ids.len() });
        }
        self.ids = Some(ids);
        Ok(self)
    }

    pub fn with_split(mut self, split: Split) -> Self {
        self.split = split;
        self
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.vectors.first().map_or(0, Vec::len)
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn vectors(&self) -> &[Vec<T>] {
        &self.vectors
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn groups(&self) -> Option<&[usize]> {
        self.groups.as_deref()
    }

    pub fn ids(&self) -> Option<&[usize]> {
        self.ids.as_deref()
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    /// Sub-set of the given rows, in the given order.
    pub fn select(&self, rows: &[usize]) -> Self {
        Self {
            vectors: rows.iter().map(|&r| self.vectors[r].clone()).collect(),
            labels: rows.iter().map(|&r| self.labels[r]).collect(),
            groups: self.groups.as_ref().map(|g| rows.iter().map(|&r| g[r]).collect()),
            ids: self.ids.as_ref().map(|g| rows.iter().map(|&r| g[r]).collect()),
            split: self.split,
            class_names: self.class_names.clone(),
        }
    }

    /// Drops vectors whose norm is zero; returns the set and how many were dropped.
    pub fn without_zero_vectors(&self) -> (Self, usize) {
        let keep: Vec<usize> = (0..self.len()).filter(|&r| norm(&self.vectors[r]) > T::zero()).collect();
        let dropped = self.len() - keep.len();
        (self.select(&keep), dropped)
    }

    fn members(&self) -> Vec<Vec<usize>> {
        let mut m = vec![Vec::new(); self.n_classes()];
        for (r, &l) in self.labels.iter().enumerate() {
            m[l].push(r);
        }
        m
    }

    fn check_nonzero(&self) -> Result<()> {
        if self.vectors.iter().any(|v| norm(v) <= T::zero()) {
            return Err(Error::ZeroVector);
        }
        Ok(())
    }
}

/// `d_c(u, v) = 1 - u.v / (‖u‖‖v‖)`, in `[0, 2]`.
pub fn cosine_distance<T: Scalar>(u: &[T], v: &[T]) -> Result<T> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch { expected: u.len(), found: v.len() });
    }
    let nu = norm(u);
    let nv = norm(v);
    if nu <= T::zero() || nv <= T::zero() {
        return Err(Error::ZeroVector);
    }
    let c = (dot(u, v) / (nu * nv)).max(-T::one()).min(T::one());
    Ok(T::one() - c)
}

/// Cosine distance restricted to componentwise non-negative inputs (ReLU
/// features), where it lies in `[0, 1]`.
pub fn cosine_distance_nonneg<T: Scalar>(u: &[T], v: &[T]) -> Result<T> {
    if let Some(k) = u.iter().chain(v).position(|&x| x < T::zero()) {
        return Err(Error::NegativeCoordinate(k % u.len().max(1)));
    }
    cosine_distance(u, v)
}

fn unit<T: Scalar>(v: &[T]) -> Vec<T> {
    let n = norm(v);
    v.iter().map(|&x| x / n).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Centrality<T> {
    /// Mean of the L2-normalized class members (not renormalized).
    pub central_vectors: Vec<Vec<T>>,
    /// `C^(i) = min_{k != i} d_c(c^(i), c^(k))`
    pub values: Vec<T>,
    /// The class attaining the minimum.
    pub nearest: Vec<usize>,
}

pub fn centrality<T: Scalar>(set: &LabeledFeatureSet<T>) -> Result<Centrality<T>> {
    let n_classes = set.n_classes();
    if n_classes < 2 {
        return Err(Error::SingleClass);
    }
    set.check_nonzero()?;
    let members = set.members();
    let dim = set.dim();
    let mut central_vectors = Vec::with_capacity(n_classes);
    for (class, rows) in members.iter().enumerate() {
        if rows.is_empty() {
            return Err(Error::ClassTooSmall { class, found: 0, required: 1 });
        }
        let count = T::from_usize(rows.len()).unwrap();
        let units: Vec<Vec<T>> = rows.iter().map(|&r| unit(&set.vectors[r])).collect();
        let c: Vec<T> = (0..dim).map(|k| compensated_sum(units.iter().map(|u| u[k])) / count).collect();
        if norm(&c) < T::lit(1e-12) {
            return Err(Error::DegenerateCentroid(class));
        }
        central_vectors.push(c);
    }
    let mut values = Vec::with_capacity(n_classes);
    let mut nearest = Vec::with_capacity(n_classes);
    for i in 0..n_classes {
        let mut best = (usize::MAX, T::infinity());
        for k in (0..n_classes).filter(|&k| k != i) {
            let d = cosine_distance(&central_vectors[i], &central_vectors[k])?;
            if d < best.1 {
                best = (k, d);
            }
        }
        nearest.push(best.0);
        values.push(best.1);
    }
    Ok(Centrality { central_vectors, values, nearest })
}

/// Normalization of the intra-class mean distance `I_1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IntraDivisor {
    /// `1 / N²` over the `k != l` pairs, as the metric is defined.
    #[default]
    Literal,
    /// `1 / (N (N - 1))`, the exact mean over distinct pairs.
    ExactMean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Separability<T> {
    /// `S^(i) = I_1^(i) / I_2^(i)`
    pub values: Vec<T>,
    pub intra: Vec<T>,
    pub inter: Vec<T>,
    /// Nearest class by central-vector distance, recomputed on this set.
    pub nearest: Vec<usize>,
}

pub fn separability<T: Scalar>(set: &LabeledFeatureSet<T>, divisor: IntraDivisor) -> Result<Separability<T>> {
    let cent = centrality(set)?;
    let members = set.members();
    for (class, rows) in members.iter().enumerate() {
        if rows.len() < 2 {
            return Err(Error::ClassTooSmall { class, found: rows.len(), required: 2 });
        }
    }
    let units: Vec<Vec<T>> = set.vectors.iter().map(|v| unit(v)).collect();
    let dist = |a: usize, b: usize| T::one() - dot(&units[a], &units[b]).max(-T::one()).min(T::one());
    let mut values = Vec::new();
    let mut intra = Vec::new();
    let mut inter = Vec::new();
    for (i, rows) in members.iter().enumerate() {
        let n = rows.len();
        let mut acc = Vec::with_capacity(n * (n - 1));
        for &k in rows {
            for &l in rows {
                if k != l {
                    acc.push(dist(k, l));
                }
            }
        }
        let nt = T::from_usize(n).unwrap();
        let denom = match divisor {
            IntraDivisor::Literal => nt * nt,
            IntraDivisor::ExactMean => nt * (nt - T::one()),
        };
        let i1 = compensated_sum(acc) / denom;
        let other = &members[cent.nearest[i]];
        let cross = rows.iter().flat_map(|&k| other.iter().map(move |&l| (k, l))).map(|(k, l)| dist(k, l));
        let i2 = compensated_sum(cross) / (nt * T::from_usize(other.len()).unwrap());
        if i2 <= T::zero() {
            return Err(Error::ZeroDenominator(i));
        }
        intra.push(i1);
        inter.push(i2);
        values.push(i1 / i2);
    }
    Ok(Separability { values, intra, inter, nearest: cent.nearest })
}

/// Centrality and separability of one split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitMetrics<T> {
    pub centrality: Vec<T>,
    pub separability: Vec<T>,
    pub nearest: Vec<usize>,
    pub central_vectors: Vec<Vec<T>>,
}

pub fn split_metrics<T: Scalar>(set: &LabeledFeatureSet<T>, divisor: IntraDivisor) -> Result<SplitMetrics<T>> {
    let c = centrality(set)?;
    let s = separability(set, divisor)?;
    Ok(SplitMetrics { centrality: c.values, separability: s.values, nearest: c.nearest, central_vectors: c.central_vectors })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ratios<T> {
    pub c_r: T,
    pub s_r: T,
}

/// Per-class test/train ratios, averaged over classes.
pub fn ratios<T: Scalar>(train: &SplitMetrics<T>, test: &SplitMetrics<T>) -> Result<Ratios<T>> {
    let n = train.centrality.len();
    if test.centrality.len() != n || train.separability.len() != n || test.separability.len() != n {
        return Err(Error::ClassMismatch(format!("{} train classes vs {} test classes", n, test.centrality.len())));
    }
    let mut c = Vec::with_capacity(n);
    let mut s = Vec::with_capacity(n);
    for i in 0..n {
        if train.centrality[i] <= T::zero() || train.separability[i] <= T::zero() {
            return Err(Error::ZeroDenominator(i));
        }
        c.push(test.centrality[i] / train.centrality[i]);
        s.push(test.separability[i] / train.separability[i]);
    }
    let nt = T::from_usize(n).unwrap();
    Ok(Ratios { c_r: compensated_sum(c) / nt, s_r: compensated_sum(s) / nt })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport<T> {
    pub class_names: Vec<String>,
    pub divisor: IntraDivisor,
    pub train: SplitMetrics<T>,
    pub test: SplitMetrics<T>,
    pub c_r: T,
    pub s_r: T,
    /// Test loss over train loss, when known.
    pub l_r: Option<T>,
}

pub fn metrics_report<T: Scalar>(
    train: &LabeledFeatureSet<T>,
    test: &LabeledFeatureSet<T>,
    divisor: IntraDivisor,
    loss_ratio: Option<T>,
) -> Result<MetricsReport<T>> {
    if train.class_names != test.class_names {
        return Err(Error::ClassMismatch(format!("{:?} vs {:?}", train.class_names, test.class_names)));
    }
    let tr = split_metrics(train, divisor)?;
    let te = split_metrics(test, divisor)?;
    let r = ratios(&tr, &te)?;
    Ok(MetricsReport { class_names: train.class_names.clone(), divisor, train: tr, test: te, c_r: r.c_r, s_r: r.s_r, l_r: loss_ratio })
}

fn check_pair_len(x: usize, y: usize, min: usize) -> Result<()> {
    if x != y || x < min {
        return Err(Error::LengthMismatch { left: x, right: y, min });
    }
    Ok(())
}

/// Sample Pearson correlation coefficient.
pub fn pearson<T: Scalar>(x: &[T], y: &[T]) -> Result<T> {
    check_pair_len(x.len(), y.len(), 3)?;
    let n = T::from_usize(x.len()).unwrap();
    let mx = compensated_sum(x.iter().copied()) / n;
    let my = compensated_sum(y.iter().copied()) / n;
    let sxy = compensated_sum(x.iter().zip(y).map(|(&a, &b)| (a - mx) * (b - my)));
    let sxx = compensated_sum(x.iter().map(|&a| (a - mx) * (a - mx)));
    let syy = compensated_sum(y.iter().map(|&b| (b - my) * (b - my)));
    if sxx <= T::zero() || syy <= T::zero() {
        return Err(Error::DegenerateVariance);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).max(-T::one()).min(T::one()))
}

/// Standardization with the population standard deviation.
pub fn zscore<T: Scalar>(x: &[T]) -> Result<Vec<T>> {
    if x.is_empty() {
        return Err(Error::DegenerateVariance);
    }
    let n = T::from_usize(x.len()).unwrap();
    let mean = compensated_sum(x.iter().copied()) / n;
    let var = compensated_sum(x.iter().map(|&v| (v - mean) * (v - mean))) / n;
    let sd = var.sqrt();
    if !(sd > T::lit(T::ZERO_EPS) * mean.abs().max(T::one())) {
        return Err(Error::DegenerateVariance);
    }
    Ok(x.iter().map(|&v| (v - mean) / sd).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KnnAccuracy {
    pub k: usize,
    pub accuracy: f64,
}

/// Leave-one-out k-NN agreement under the cosine distance: a vector counts as
/// correct when more than half of its `k` nearest neighbours share its label.
/// Distance ties are broken by ascending vector index.
pub fn knn_angular_eval<T: Scalar>(set: &LabeledFeatureSet<T>, ks: &[usize]) -> Result<Vec<KnnAccuracy>> {
    let m = set.len();
    for &k in ks {
        if k % 2 == 0 {
            return Err(Error::EvenK(k));
        }
        if k >= m {
            return Err(Error::KTooLarge { k, m });
        }
    }
    set.check_nonzero()?;
    let kmax = ks.iter().copied().max().unwrap_or(0);
    let units: Vec<Vec<T>> = set.vectors.iter().map(|v| unit(v)).collect();
    let mut correct = vec![0usize; ks.len()];
    let mut order: Vec<(T, usize)> = Vec::with_capacity(m);
    for q in 0..m {
        order.clear();
        order.extend((0..m).filter(|&r| r != q).map(|r| (T::one() - dot(&units[q], &units[r]), r)));
        let cmp = |a: &(T, usize), b: &(T, usize)| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1));
        if kmax < order.len() {
            order.select_nth_unstable_by(kmax, cmp);
            order.truncate(kmax);
        }
        order.sort_by(cmp);
        let mut same = 0;
        let mut next = 0;
        let mut sorted_ks: Vec<(usize, usize)> = ks.iter().copied().enumerate().map(|(i, k)| (k, i)).collect();
        sorted_ks.sort();
        for (k, slot) in sorted_ks {
            while next < k {
                if set.labels[order[next].1] == set.labels[q] {
                    same += 1;
                }
                next += 1;
            }
            if 2 * same > k {
                correct[slot] += 1;
            }
        }
    }
    Ok(ks.iter().zip(correct).map(|(&k, c)| KnnAccuracy { k, accuracy: c as f64 / m as f64 }).collect())
}

/// Full pairwise cosine-distance matrix with rows sorted by class (stable).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceMatrix<T> {
    /// Original row index of each matrix row.
    pub order: Vec<usize>,
    pub labels: Vec<usize>,
    pub class_names: Vec<String>,
    pub values: Vec<Vec<T>>,
}

pub fn distance_matrix<T: Scalar>(set: &LabeledFeatureSet<T>) -> Result<DistanceMatrix<T>> {
    set.check_nonzero()?;
    let mut order: Vec<usize> = (0..set.len()).collect();
    order.sort_by_key(|&r| set.labels[r]);
    let values = order
        .iter()
        .map(|&a| order.iter().map(|&b| cosine_distance(&set.vectors[a], &set.vectors[b])).collect::<Result<Vec<T>>>())
        .collect::<Result<Vec<_>>>()?;
    Ok(DistanceMatrix {
        labels: order.iter().map(|&r| set.labels[r]).collect(),
        order,
        class_names: set.class_names.clone(),
        values,
    })
}

/// One segmented 3-D point cloud.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointCloudInstance<T> {
    pub id: String,
    pub points: Vec<[T; 3]>,
    pub part_labels: Vec<usize>,
}

impl<T: Scalar> PointCloudInstance<T> {
    pub fn new(id: impl Into<String>, points: Vec<[T; 3]>, part_labels: Vec<usize>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::BadSpec("point cloud instance has no points".into()));
        }
        if points.len() != part_labels.len() {
            return Err(Error::DimensionMismatch { expected: points.len(), found: part_labels.len() });
        }
        Ok(Self { id: id.into(), points, part_labels })
    }

    fn part(&self, class: usize) -> Vec<[T; 3]> {
        self.points.iter().zip(&self.part_labels).filter(|(_, &l)| l == class).map(|(p, _)| *p).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DivResult {
    pub class: usize,
    pub div: f64,
    /// Fraction of instances that contain the class.
    pub presence: f64,
    pub instances_with_class: usize,
    pub instances_total: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Subsample {
    pub fraction: f64,
    pub seed: u64,
}

fn euclid<T: Scalar>(a: &[T; 3], b: &[T; 3]) -> T {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Mean distance over all cross pairs (`same = false`) or over `k != l`
/// pairs of a single cloud (`same = true`).
fn mean_distance<T: Scalar>(p: &[[T; 3]], q: &[[T; 3]], same: bool) -> T {
    let mut acc = Vec::with_capacity(p.len() * q.len());
    for (k, a) in p.iter().enumerate() {
        for (l, b) in q.iter().enumerate() {
            if !(same && k == l) {
                acc.push(euclid(a, b));
            }
        }
    }
    let count = if same { p.len() * (p.len() - 1) } else { p.len() * q.len() };
    compensated_sum(acc) / T::from_usize(count).unwrap()
}

/// Cross-instance to within-instance mean point distance of one part class:
///
/// `DIV = (1/N_I) Σ_i Σ_{j≠i} d̄(P_i, P_j) / Σ_i d̄(P_i, P_i)`
///
/// over the `N_I` instances containing the class.
pub fn div_statistic<T: Scalar>(
    instances: &[PointCloudInstance<T>],
    class: usize,
    subsample: Option<Subsample>,
) -> Result<DivResult> {
    let chosen: Vec<&PointCloudInstance<T>> = match subsample {
        None => instances.iter().collect(),
        Some(s) => {
            if !(s.fraction > 0.0 && s.fraction <= 1.0) {
                return Err(Error::BadSpec(format!("subsample fraction {} outside (0, 1]", s.fraction)));
            }
            let take = ((instances.len() as f64 * s.fraction).round() as usize).clamp(1, instances.len().max(1));
            let mut idx: Vec<usize> = (0..instances.len()).collect();
            idx.shuffle(&mut ChaCha8Rng::seed_from_u64(s.seed));
            idx.truncate(take);
            idx.sort_unstable();
            idx.into_iter().map(|i| &instances[i]).collect()
        }
    };
    let parts: Vec<Vec<[T; 3]>> = chosen.iter().map(|inst| inst.part(class)).filter(|p| !p.is_empty()).collect();
    if parts.len() < 2 || parts.iter().any(|p| p.len() < 2) {
        return Err(Error::InsufficientInstances { class, found: parts.iter().filter(|p| p.len() >= 2).count() });
    }
    let n_i = parts.len();
    let mut cross = Vec::with_capacity(n_i * (n_i - 1));
    for i in 0..n_i {
        for j in 0..n_i {
            if i != j {
                cross.push(mean_distance(&parts[i], &parts[j], false).as_f64());
            }
        }
    }
    let intra: Vec<f64> = parts.iter().map(|p| mean_distance(p, p, true).as_f64()).collect();
    let intra_sum = compensated_sum(intra);
    if intra_sum <= 0.0 {
        return Err(Error::ZeroDenominator(class));
    }
    let div = compensated_sum(cross) / intra_sum / n_i as f64;
    Ok(DivResult {
        class,
        div,
        presence: n_i as f64 / chosen.len() as f64,
        instances_with_class: n_i,
        instances_total: chosen.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn set(vectors: Vec<Vec<f64>>, labels: Vec<usize>, n: usize) -> LabeledFeatureSet<f64> {
        LabeledFeatureSet::unnamed(vectors, labels, n).unwrap()
    }

    #[test]
    fn cosine_distance_basics() {
        assert!(cosine_distance(&[1.0f64, 2.0], &[1.0, 2.0]).unwrap().abs() < 1e-15);
        assert!((cosine_distance(&[1.0f64, 0.0], &[0.0, 3.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((cosine_distance(&[1.0f64, 0.0], &[-1.0, 0.0]).unwrap() - 2.0).abs() < 1e-15);
        assert!(matches!(cosine_distance(&[0.0, 0.0], &[1.0, 0.0]), Err(Error::ZeroVector)));
        assert!(matches!(cosine_distance_nonneg(&[1.0, -1.0], &[1.0, 0.0]), Err(Error::NegativeCoordinate(1))));
    }

    #[test]
    fn orthogonal_point_masses_have_unit_centrality() {
        let s = set(vec![vec![2.0, 0.0], vec![1.0, 0.0], vec![0.0, 5.0], vec![0.0, 1.0]], vec![0, 0, 1, 1], 2);
        let c = centrality(&s).unwrap();
        assert!(c.values.iter().all(|&v| (v - 1.0).abs() < 1e-15));
        assert_eq!(c.central_vectors[0], vec![1.0, 0.0]);
    }

    #[test]
    fn nearly_collinear_pair_drives_centrality() {
        let s = set(
            vec![vec![1.0, 0.0, 0.0], vec![1.0, 0.01, 0.0], vec![0.0, 0.0, 1.0]],
            vec![0, 1, 2],
            3,
        );
        let c = centrality(&s).unwrap();
        // brute force over centroid pairs
        let d01 = cosine_distance(&[1.0, 0.0, 0.0], &[1.0, 0.01, 0.0]).unwrap();
        assert!((c.values[0] - d01).abs() < 1e-15 && (c.values[1] - d01).abs() < 1e-15);
        assert_eq!(c.nearest, vec![1, 0, 0]);
        assert!(c.values[0] < 1e-4);
    }

    #[test]
    fn centrality_errors() {
        let one = set(vec![vec![1.0, 0.0]], vec![0], 1);
        assert!(matches!(centrality(&one), Err(Error::SingleClass)));
        let opposed = set(vec![vec![1.0, 0.0], vec![-1.0, 0.0], vec![0.0, 1.0]], vec![0, 0, 1], 2);
        assert!(matches!(centrality(&opposed), Err(Error::DegenerateCentroid(0))));
        let empty = set(vec![vec![1.0, 0.0]], vec![0], 2);
        assert!(matches!(centrality(&empty), Err(Error::ClassTooSmall { class: 1, .. })));
    }

    #[test]
    fn tight_clusters_are_separable() {
        let s = set(
            vec![vec![1.0, 0.0], vec![1.0, 1e-6], vec![0.0, 1.0], vec![1e-6, 1.0]],
            vec![0, 0, 1, 1],
            2,
        );
        let sep = separability(&s, IntraDivisor::Literal).unwrap();
        assert!(sep.values.iter().all(|&v| v < 1e-9));
    }

    #[test]
    fn duplicated_class_under_both_divisors() {
        // classes 0 and 1 hold the same two vectors, M = 4
        let a = vec![1.0, 0.0];
        let b = vec![0.0, 1.0];
        let s = set(vec![a.clone(), b.clone(), a, b], vec![0, 0, 1, 1], 2);
        // I_1 literal: (d(a,b) + d(b,a)) / 4 = 0.5; I_2: (0 + 1 + 1 + 0) / 4 = 0.5
        let lit = separability(&s, IntraDivisor::Literal).unwrap();
        assert!((lit.intra[0] - 0.5).abs() < 1e-15 && (lit.inter[0] - 0.5).abs() < 1e-15);
        assert!((lit.values[0] - 1.0).abs() < 1e-15);
        let exact = separability(&s, IntraDivisor::ExactMean).unwrap();
        assert!((exact.values[0] - 2.0).abs() < 1e-15);
        // literal = exact · (N - 1) / N
        assert!((lit.values[0] - exact.values[0] * 0.5).abs() < 1e-15);
    }

    #[test]
    fn separability_needs_two_members() {
        let s = set(vec![vec![1.0, 0.0], vec![1.0, 0.1], vec![0.0, 1.0]], vec![0, 0, 1], 2);
        assert!(matches!(separability(&s, IntraDivisor::Literal), Err(Error::ClassTooSmall { class: 1, .. })));
    }

    #[test]
    fn identical_splits_have_unit_ratios() {
        let s = set(vec![vec![1.0, 0.2], vec![0.9, 0.1], vec![0.1, 1.0], vec![0.3, 0.8]], vec![0, 0, 1, 1], 2);
        let r = metrics_report(&s, &s, IntraDivisor::Literal, None).unwrap();
        assert!((r.c_r - 1.0).abs() < 1e-15 && (r.s_r - 1.0).abs() < 1e-15);
    }

    /// Two classes symmetric about the diagonal; each class is a pair of
    /// directions at `centre ± spread`.
    fn two_class(centre_gap: f64, spread: f64) -> LabeledFeatureSet<f64> {
        let dir = |t: f64| vec![t.cos(), t.sin()];
        let mid = std::f64::consts::FRAC_PI_4;
        let c0 = mid - centre_gap / 2.0;
        let c1 = mid + centre_gap / 2.0;
        set(
            vec![dir(c0 - spread), dir(c0 + spread), dir(c1 - spread), dir(c1 + spread)],
            vec![0, 0, 1, 1],
            2,
        )
    }

    #[test]
    fn halving_the_angular_spread_roughly_halves_separability() {
        let train = two_class(1.0, 0.1);
        let test = two_class(1.0, 0.05);
        let r = metrics_report(&train, &test, IntraDivisor::Literal, None).unwrap();
        // d_c grows like θ²/2 within a class, so I_1 shrinks ~4x; I_2 barely moves.
        // The separability ratio is then the ratio of 1 - cos(2·spread) terms.
        let i1 = |s: f64| (1.0 - (2.0 * s).cos()) / 2.0;
        let i2 = |gap: f64, s: f64| {
            let d = |t: f64| 1.0 - t.cos();
            (d(gap) * 2.0 + d(gap - 2.0 * s) + d(gap + 2.0 * s)) / 4.0
        };
        let oracle = (i1(0.05) / i2(1.0, 0.05)) / (i1(0.1) / i2(1.0, 0.1));
        assert!((r.s_r - oracle).abs() < 1e-12);
        assert!(r.s_r < 0.5);
        assert!((r.c_r - 1.0).abs() < 1e-12);
    }

    #[test]
    fn closer_test_centroids_lower_the_centrality_ratio() {
        let train = two_class(1.0, 0.05);
        let test = two_class(0.5, 0.05);
        let r = metrics_report(&train, &test, IntraDivisor::Literal, None).unwrap();
        let oracle = (1.0 - 0.5f64.cos()) / (1.0 - 1.0f64.cos());
        assert!((r.c_r - oracle).abs() < 1e-12);
        assert!(r.c_r < 1.0);
    }

    #[test]
    fn ratio_errors() {
        let s2 = set(vec![vec![1.0, 0.2], vec![0.9, 0.1], vec![0.1, 1.0], vec![0.3, 0.8]], vec![0, 0, 1, 1], 2);
        let mut other = s2.clone();
        other.class_names = vec!["x".into(), "y".into()];
        assert!(matches!(metrics_report(&s2, &other, IntraDivisor::Literal, None), Err(Error::ClassMismatch(_))));
        let m = split_metrics(&s2, IntraDivisor::Literal).unwrap();
        let mut zero = m.clone();
        zero.centrality[1] = 0.0;
        assert!(matches!(ratios(&zero, &m), Err(Error::ZeroDenominator(1))));
    }

    #[test]
    fn pearson_basics() {
        let x = [1.0, 2.0, 4.0, 3.5f64];
        assert!((pearson(&x, &x).unwrap() - 1.0).abs() < 1e-15);
        assert!(matches!(pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]), Err(Error::DegenerateVariance)));
        assert!(matches!(pearson(&[1.0, 2.0], &[1.0, 2.0]), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn zscore_by_hand() {
        let z = zscore(&[1.0, 2.0, 3.0]).unwrap();
        let s = (2.0f64 / 3.0).sqrt();
        for (a, b) in z.iter().zip([-1.0 / s, 0.0, 1.0 / s]) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((z[2] - 1.2247).abs() < 1e-4);
        assert!(matches!(zscore(&[4.0, 4.0, 4.0]), Err(Error::DegenerateVariance)));
    }

    #[test]
    fn knn_on_separated_clusters() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut vectors = Vec::new();
        let mut labels = Vec::new();
        for class in 0..3 {
            for _ in 0..10 {
                let mut v = vec![0.01 * rng.sample::<f64, _>(StandardNormal).abs(); 3];
                v[class] = 1.0;
                vectors.push(v);
                labels.push(class);
            }
        }
        let s = set(vectors, labels, 3);
        let acc = knn_angular_eval(&s, &[3, 5, 7, 9]).unwrap();
        assert!(acc.iter().all(|a| a.accuracy == 1.0));
        assert!(matches!(knn_angular_eval(&s, &[4]), Err(Error::EvenK(4))));
        assert!(matches!(knn_angular_eval(&s, &[31]), Err(Error::KTooLarge { .. })));
    }

    #[test]
    fn knn_on_shuffled_labels_is_chance() {
        let mut accs = Vec::new();
        for seed in 0..10 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let vectors: Vec<Vec<f64>> = (0..200).map(|_| (0..5).map(|_| rng.sample(StandardNormal)).collect()).collect();
            let mut labels: Vec<usize> = (0..200).map(|i| i % 2).collect();
            labels.shuffle(&mut rng);
            accs.push(knn_angular_eval(&set(vectors, labels, 2), &[3]).unwrap()[0].accuracy);
        }
        let mean = accs.iter().sum::<f64>() / accs.len() as f64;
        assert!((mean - 0.5).abs() < 0.1, "{mean}");
    }

    #[test]
    fn knn_matches_full_sort_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let vectors: Vec<Vec<f64>> = (0..40).map(|_| (0..4).map(|_| rng.sample(StandardNormal)).collect()).collect();
        let labels: Vec<usize> = (0..40).map(|_| rng.gen_range(0..3)).collect();
        let s = set(vectors.clone(), labels.clone(), 3);
        let ks = [3, 7, 1, 39];
        let got = knn_angular_eval(&s, &ks).unwrap();
        for (slot, &k) in ks.iter().enumerate() {
            let mut correct = 0;
            for q in 0..40 {
                let mut d: Vec<(f64, usize)> =
                    (0..40).filter(|&r| r != q).map(|r| (cosine_distance(&vectors[q], &vectors[r]).unwrap(), r)).collect();
                d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                let same = d[..k].iter().filter(|(_, r)| labels[*r] == labels[q]).count();
                if 2 * same > k {
                    correct += 1;
                }
            }
            assert_eq!(got[slot].accuracy, correct as f64 / 40.0);
        }
    }

    #[test]
    fn distance_matrix_is_sorted_by_class() {
        let s = set(vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.1]], vec![1, 0, 1], 2);
        let m = distance_matrix(&s).unwrap();
        assert_eq!(m.order, vec![1, 0, 2]);
        assert_eq!(m.labels, vec![0, 1, 1]);
        assert!(m.values[1][1].abs() < 1e-15);
    }

    fn cloud(id: &str, pts: &[[f64; 3]], labels: &[usize]) -> PointCloudInstance<f64> {
        PointCloudInstance::new(id, pts.to_vec(), labels.to_vec()).unwrap()
    }

    #[test]
    fn presence_counts_instances_lacking_the_class() {
        let with = |i: usize| cloud(&i.to_string(), &[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [5.0, 5.0, 5.0]], &[0, 0, 1]);
        let without = |i: usize| cloud(&i.to_string(), &[[5.0, 5.0, 5.0]], &[1]);
        let instances: Vec<_> = (0..8).map(|i| if i < 6 { with(i) } else { without(i) }).collect();
        let r = div_statistic(&instances, 0, None).unwrap();
        assert_eq!(r.presence, 0.75);
        assert_eq!(r.instances_with_class, 6);
    }

    #[test]
    fn div_needs_two_instances() {
        let one = vec![cloud("a", &[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]], &[0, 0])];
        assert!(matches!(div_statistic(&one, 0, None), Err(Error::InsufficientInstances { .. })));
    }

    #[test]
    fn div_grows_with_translation() {
        let base = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];
        let shifted = |d: f64| base.map(|p| [p[0] + d, p[1], p[2]]);
        let mut last = 0.0;
        for d in [0.0, 1.0, 5.0, 20.0] {
            let inst = vec![cloud("a", &base, &[0, 0, 0]), cloud("b", &shifted(d), &[0, 0, 0])];
            let r = div_statistic(&inst, 0, None).unwrap();
            assert!(r.div > last);
            last = r.div;
        }
    }

    #[test]
    fn div_subsample_is_seeded() {
        let base = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];
        let inst: Vec<_> =
            (0..12).map(|i| cloud(&i.to_string(), &base.map(|p| [p[0] + i as f64, p[1], p[2]]), &[0, 0, 0])).collect();
        let s = Some(Subsample { fraction: 0.25, seed: 3 });
        let a = div_statistic(&inst, 0, s).unwrap();
        let b = div_statistic(&inst, 0, s).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.instances_total, 3);
    }

    fn arb_set() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<usize>)> {
        // 3 classes x 4 vectors in R^4 near distinct axes
        prop::collection::vec(prop::collection::vec(0.0..0.3f64, 4), 12).prop_map(|mut vs| {
            let labels: Vec<usize> = (0..12).map(|i| i / 4).collect();
            for (v, &l) in vs.iter_mut().zip(&labels) {
                v[l] += 1.0;
            }
            (vs, labels)
        })
    }

    proptest! {
        #[test]
        fn cosine_distance_symmetry_and_scale_invariance(
            u in prop::collection::vec(-5.0..5.0f64, 6),
            v in prop::collection::vec(-5.0..5.0f64, 6),
            a in 0.01..100.0f64,
            b in 0.01..100.0f64,
        ) {
            prop_assume!(norm(&u) > 1e-3 && norm(&v) > 1e-3);
            let d = cosine_distance(&u, &v).unwrap();
            prop_assert!((d - cosine_distance(&v, &u).unwrap()).abs() < 1e-12);
            let us: Vec<f64> = u.iter().map(|x| x * a).collect();
            let vs: Vec<f64> = v.iter().map(|x| x * b).collect();
            prop_assert!((d - cosine_distance(&us, &vs).unwrap()).abs() < 1e-12);
            prop_assert!(cosine_distance(&u, &u).unwrap().abs() < 1e-12);
            prop_assert!((0.0..=2.0).contains(&d));
        }

        #[test]
        fn angular_metrics_ignore_rotation_and_rescaling(
            (vs, labels) in arb_set(),
            angle in -3.0..3.0f64,
            scales in prop::collection::vec(0.1..10.0f64, 12),
        ) {
            let base = set(vs.clone(), labels.clone(), 3);
            // rotation in the (0, 2) coordinate plane, then per-vector rescaling
            let (s, c) = angle.sin_cos();
            let moved: Vec<Vec<f64>> = vs.iter().zip(&scales).map(|(v, k)| {
                let mut w = v.clone();
                w[0] = k * (c * v[0] - s * v[2]);
                w[2] = k * (s * v[0] + c * v[2]);
                w[1] *= k;
                w[3] *= k;
                w
            }).collect();
            let other = set(moved, labels, 3);
            let a = split_metrics(&base, IntraDivisor::Literal).unwrap();
            let b = split_metrics(&other, IntraDivisor::Literal).unwrap();
            for i in 0..3 {
                prop_assert!((a.centrality[i] - b.centrality[i]).abs() < 1e-9);
                prop_assert!((a.separability[i] - b.separability[i]).abs() < 1e-9);
            }
            let ka = knn_angular_eval(&base, &[3, 5]).unwrap();
            let scaled: Vec<Vec<f64>> = vs.iter().zip(&scales).map(|(v, k)| v.iter().map(|x| x * k).collect()).collect();
            let kb = knn_angular_eval(&set(scaled, (0..12).map(|i| i / 4).collect(), 3), &[3, 5]).unwrap();
            prop_assert_eq!(ka, kb);
        }

        #[test]
        fn pearson_under_affine_maps(
            x in prop::collection::vec(-10.0..10.0f64, 5..20),
            slope in 0.1..10.0f64,
            shift in -10.0..10.0f64,
        ) {
            let y: Vec<f64> = x.iter().enumerate().map(|(i, v)| v * v + i as f64).collect();
            let r = match pearson(&x, &y) { Ok(r) => r, Err(_) => return Ok(()) };
            let xp: Vec<f64> = x.iter().map(|v| slope * v + shift).collect();
            let xn: Vec<f64> = x.iter().map(|v| -slope * v + shift).collect();
            prop_assert!((pearson(&xp, &y).unwrap() - r).abs() < 1e-9);
            prop_assert!((pearson(&xn, &y).unwrap() + r).abs() < 1e-9);
        }

        #[test]
        fn zscore_is_standardized_and_idempotent(x in prop::collection::vec(-100.0..100.0f64, 3..30)) {
            let z = match zscore(&x) { Ok(z) => z, Err(_) => return Ok(()) };
            let n = z.len() as f64;
            let mean = z.iter().sum::<f64>() / n;
            let sd = (z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
            prop_assert!(mean.abs() < 1e-12);
            prop_assert!((sd - 1.0).abs() < 1e-12);
            let zz = zscore(&z).unwrap();
            for (a, b) in z.iter().zip(&zz) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
