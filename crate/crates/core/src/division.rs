//! Division of the feature space into class loci.
//!
//! Class `i` owns the set `{a : ā . w_ij > 0 for all j != i}` where
//! `w_ij = w̄_i - w̄_j` are the differential vectors of the head. Each locus is an
//! intersection of half-spaces through the origin, hence a convex cone.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{angle_between, ClassifierHead};
use crate::scalar::{dot, mean_std, norm, Scalar};

/// All `N(N-1)/2` differential vectors of a head, stored for `i < j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DifferentialVectorSet<T> {
    n_classes: usize,
    /// `(i, j, w̄_i - w̄_j)` with `i < j`, in lexicographic order.
    pairs: Vec<(usize, usize, Vec<T>)>,
}

impl<T: Scalar> DifferentialVectorSet<T> {
    pub fn count(&self) -> usize {
        self.pairs.len()
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn pairs(&self) -> &[(usize, usize, Vec<T>)] {
        &self.pairs
    }

    fn index(&self, i: usize, j: usize) -> usize {
        // row-major position of (i, j), i < j, in the strict upper triangle
        let n = self.n_classes;
        i * n - i * (i + 1) / 2 + (j - i - 1)
    }

    /// `w_ij`, with `w_ji = -w_ij`.
    pub fn get(&self, i: usize, j: usize) -> Vec<T> {
        assert!(i != j && i < self.n_classes && j < self.n_classes);
        if i < j {
            self.pairs[self.index(i, j)].2.clone()
        } else {
            self.pairs[self.index(j, i)].2.iter().map(|&x| -x).collect()
        }
    }

    /// `ā . w_ij` without materializing `w_ij`.
    pub fn project(&self, a: &[T], i: usize, j: usize) -> T {
        if i < j {
            dot(a, &self.pairs[self.index(i, j)].2)
        } else {
            -dot(a, &self.pairs[self.index(j, i)].2)
        }
    }
}

pub fn differential_vectors<T: Scalar>(head: &ClassifierHead<T>) -> Result<DifferentialVectorSet<T>> {
    let n = head.n_classes();
    let rows: Vec<Vec<T>> = (0..n).map(|i| head.expanded_row(i)).collect();
    let mut pairs = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            let d: Vec<T> = rows[i].iter().zip(&rows[j]).map(|(&a, &b)| a - b).collect();
            if d.iter().all(|&x| x == T::zero()) {
                return Err(Error::DegenerateHead(i, j));
            }
            pairs.push((i, j, d));
        }
    }
    Ok(DifferentialVectorSet { n_classes: n, pairs })
}

/// What to do when a point sits on a decision boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum TiePolicy {
    #[default]
    Report,
    LowestIndex,
}

/// Domain check applied to inputs before classification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum InputDomain {
    #[default]
    Unconstrained,
    /// ReLU outputs: every coordinate must be `>= 0`.
    NonNegative,
}

/// Locus membership with precomputed differential vectors.
#[derive(Debug, Clone)]
pub struct Divider<'h, T> {
    head: &'h ClassifierHead<T>,
    diffs: DifferentialVectorSet<T>,
    pub ties: TiePolicy,
    pub domain: InputDomain,
}

impl<'h, T: Scalar> Divider<'h, T> {
    pub fn new(head: &'h ClassifierHead<T>) -> Result<Self> {
        Ok(Self { head, diffs: differential_vectors(head)?, ties: TiePolicy::Report, domain: InputDomain::Unconstrained })
    }

    pub fn with_ties(mut self, ties: TiePolicy) -> Self {
        self.ties = ties;
        self
    }

    pub fn with_domain(mut self, domain: InputDomain) -> Self {
        self.domain = domain;
        self
    }

    pub fn differentials(&self) -> &DifferentialVectorSet<T> {
        &self.diffs
    }

    /// Expands a raw feature vector to match the differential vectors. Inputs
    /// already carrying the constant coordinate are accepted as they are.
    fn expand(&self, a: &[T]) -> Result<Vec<T>> {
        let n = self.head.dim();
        let expanded = match (self.head.has_bias(), a.len()) {
            (false, len) if len == n => a.to_vec(),
            (true, len) if len == n => {
                let mut v = a.to_vec();
                v.push(T::one());
                v
            }
            (true, len) if len == n + 1 && a[n] == T::one() => a.to_vec(),
            (_, len) => return Err(Error::DimensionMismatch { expected: n, found: len }),
        };
        if self.domain == InputDomain::NonNegative {
            if let Some(k) = expanded.iter().position(|&x| x < T::zero()) {
                return Err(Error::NegativeCoordinate(k));
            }
        }
        Ok(expanded)
    }

    /// Index of the class whose locus contains `a`: the `i` with `ā . w_ij > 0`
    /// for every `j != i`.
    pub fn region_of(&self, a: &[T]) -> Result<usize> {
        let a = self.expand(a)?;
        let n = self.head.n_classes();
        let scale = a.iter().fold(T::zero(), |m, &x| m.max(x.abs()))
            * (0..n).map(|i| norm(&self.head.expanded_row(i))).fold(T::zero(), T::max);
        let tol = T::lit(T::TIE_EPS) * scale.max(T::one());
        let mut tied = Vec::new();
        for i in 0..n {
            let margin = (0..n)
                .filter(|&j| j != i)
                .map(|j| self.diffs.project(&a, i, j))
                .fold(T::infinity(), T::min);
            if margin > tol {
                return Ok(i);
            }
            if margin >= -tol {
                tied.push(i);
            }
        }
        match self.ties {
            TiePolicy::LowestIndex if !tied.is_empty() => Ok(tied[0]),
            _ => Err(Error::BoundaryTie(tied)),
        }
    }
}

pub fn region_of<T: Scalar>(a: &[T], head: &ClassifierHead<T>) -> Result<usize> {
    Divider::new(head)?.region_of(a)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexityReport {
    pub pairs: usize,
    pub interior_points: usize,
    pub violations: usize,
    /// Same-region pairs drawn per class.
    pub pairs_per_class: Vec<usize>,
}

const CONVEX_LAMBDAS: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];

/// Draws `samples` pairs of Gaussian points that fall in the same locus and
/// checks that the 9 interior points `λa + (1-λ)b`, `λ ∈ {0.1, …, 0.9}`, stay in
/// it. With a bias the points carry the constant coordinate, which convex
/// combinations preserve.
pub fn convexity_check<T: Scalar>(
    head: &ClassifierHead<T>,
    samples: usize,
    seed: u64,
    domain: InputDomain,
) -> Result<ConvexityReport> {
    let divider = Divider::new(head)?.with_domain(domain);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = head.dim();
    let mut pending: Vec<Option<Vec<T>>> = vec![None; head.n_classes()];
    let mut report = ConvexityReport { pairs: 0, interior_points: 0, violations: 0, pairs_per_class: vec![0; head.n_classes()] };
    let max_draws = samples.saturating_mul(1000).max(1000);
    let mut draws = 0;
    while report.pairs < samples && draws < max_draws {
        draws += 1;
        let mut point: Vec<T> = (0..n)
            .map(|_| {
                let g: f64 = rng.sample(StandardNormal);
                T::lit(if domain == InputDomain::NonNegative { g.abs() } else { g })
            })
            .collect();
        if head.has_bias() {
            point.push(T::one());
        }
        let class = match divider.region_of(&point) {
            Ok(c) => c,
            Err(Error::BoundaryTie(_)) => continue,
            Err(e) => return Err(e),
        };
        let Some(other) = pending[class].take() else {
            pending[class] = Some(point);
            continue;
        };
        report.pairs += 1;
        report.pairs_per_class[class] += 1;
        for &l in &CONVEX_LAMBDAS {
            let lambda = T::lit(l);
            let mix: Vec<T> = point.iter().zip(&other).map(|(&x, &y)| lambda * x + (T::one() - lambda) * y).collect();
            report.interior_points += 1;
            if divider.region_of(&mix).ok() != Some(class) {
                report.violations += 1;
            }
        }
    }
    Ok(report)
}

/// Angles between the differential vectors that bound each class locus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassLocusReport {
    pub classes: Vec<ClassLocusAngles>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassLocusAngles {
    pub class: usize,
    /// `((j, k), angle between w_ij and w_ik in degrees)` for `j < k`.
    pub angles: Vec<((usize, usize), f64)>,
    pub mean: f64,
    /// Sample standard deviation; zero when the class has a single angle.
    pub std: f64,
}

pub fn locus_angles<T: Scalar>(head: &ClassifierHead<T>) -> Result<ClassLocusReport> {
    let n = head.n_classes();
    if n < 3 {
        return Err(Error::TooFewClasses { required: 3, found: n });
    }
    let diffs = differential_vectors(head)?;
    let mut classes = Vec::with_capacity(n);
    for i in 0..n {
        let others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        let mut angles = Vec::new();
        for (p, &j) in others.iter().enumerate() {
            for &k in &others[p + 1..] {
                let deg = angle_between(&diffs.get(i, j), &diffs.get(i, k))?.as_f64().to_degrees();
                angles.push(((j, k), deg));
            }
        }
        let values: Vec<f64> = angles.iter().map(|a| a.1).collect();
        let (mean, std) = mean_std(&values, true);
        classes.push(ClassLocusAngles { class: i, angles, mean, std });
    }
    Ok(ClassLocusReport { classes })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShatterReport {
    pub dim: usize,
    /// The `n + 1` points (on the unit sphere) that were tested.
    pub points: Vec<Vec<f64>>,
    pub dichotomies_tested: usize,
    pub shattered_n_plus_1: bool,
    pub attempts: usize,
    /// The `n + 2` witness configuration.
    pub witness: Vec<Vec<f64>>,
    /// First inseparable labelling of the witness, if any.
    pub witness_labels: Option<Vec<bool>>,
    pub witness_dichotomy_failure_n_plus_2: bool,
}

const MAX_PLACEMENT_ATTEMPTS: usize = 10;
const PERCEPTRON_EPOCHS: usize = 10_000;

/// Desk check of the VC dimension `n + 1` of affine separators in `R^n`.
pub fn shattering_check(dim: usize, seed: u64) -> Result<ShatterReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    shattering_check_with(dim, move |n| random_sphere_points(&mut rng, n + 1, n))
}

/// As [`shattering_check`] with a caller-supplied source of `n + 1` candidate
/// points; degenerate placements are rejected and redrawn.
pub fn shattering_check_with<F>(dim: usize, mut draw: F) -> Result<ShatterReport>
where
    F: FnMut(usize) -> Vec<Vec<f64>>,
{
    if !(1..=4).contains(&dim) {
        return Err(Error::BadSpec(format!("shattering check supports 1 <= n <= 4, got {dim}")));
    }
    let mut attempts = 0;
    let points = loop {
        attempts += 1;
        let candidate = draw(dim);
        if candidate.len() == dim + 1 && in_general_position(&candidate) {
            break candidate;
        }
        if attempts >= MAX_PLACEMENT_ATTEMPTS {
            return Err(Error::BadSpec(format!("no general-position placement after {attempts} attempts")));
        }
    };
    let m = points.len();
    let mut shattered = true;
    for mask in 0..(1u32 << m) {
        let labels: Vec<bool> = (0..m).map(|k| mask >> k & 1 == 1).collect();
        if !linearly_separable(&points, &labels) {
            shattered = false;
            break;
        }
    }

    let witness = radon_witness(dim, &points);
    let mut witness_labels = None;
    for mask in 0..(1u32 << witness.len()) {
        let labels: Vec<bool> = (0..witness.len()).map(|k| mask >> k & 1 == 1).collect();
        if !linearly_separable(&witness, &labels) {
            witness_labels = Some(labels);
            break;
        }
    }
    Ok(ShatterReport {
        dim,
        points,
        dichotomies_tested: 1 << m,
        shattered_n_plus_1: shattered,
        attempts,
        witness_dichotomy_failure_n_plus_2: witness_labels.is_some(),
        witness,
        witness_labels,
    })
}

fn random_sphere_points(rng: &mut ChaCha8Rng, count: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..count)
        .map(|_| {
            let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
            let r = norm(&v);
            v.into_iter().map(|x| x / r).collect()
        })
        .collect()
}

/// XOR on the square corners for `n = 2`; otherwise the `n + 1` points plus
/// their centroid pushed back onto the sphere, which by Radon's theorem admits
/// an inseparable labelling.
fn radon_witness(dim: usize, points: &[Vec<f64>]) -> Vec<Vec<f64>> {
    if dim == 2 {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        return vec![vec![h, h], vec![-h, -h], vec![h, -h], vec![-h, h]];
    }
    let mut c = vec![0.0; dim];
    for p in points {
        for (ck, pk) in c.iter_mut().zip(p) {
            *ck += pk;
        }
    }
    let r = norm(&c);
    let centre = if r > 1e-9 { c.iter().map(|x| x / r).collect() } else { c };
    let mut w = points.to_vec();
    w.push(centre);
    w
}

/// `n + 1` points in `R^n` are in general position when they are affinely
/// independent.
fn in_general_position(points: &[Vec<f64>]) -> bool {
    let m = points.len();
    let mut rows: Vec<Vec<f64>> = points.iter().map(|p| p.iter().copied().chain([1.0]).collect()).collect();
    if rows.iter().any(|r| r.len() != m) {
        return false;
    }
    determinant(&mut rows).abs() > 1e-6
}

fn determinant(a: &mut [Vec<f64>]) -> f64 {
    let n = a.len();
    let mut det = 1.0;
    for col in 0..n {
        let piv = (col..n).max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs())).unwrap();
        if a[piv][col] == 0.0 {
            return 0.0;
        }
        if piv != col {
            a.swap(piv, col);
            det = -det;
        }
        det *= a[col][col];
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            for c in col..n {
                a[r][c] -= f * a[col][c];
            }
        }
    }
    det
}

/// Strict affine separability of `points` under `labels`: a perceptron run
/// first, then an exact check that the origin is not in the convex hull of the
/// signed, expanded points.
pub fn linearly_separable(points: &[Vec<f64>], labels: &[bool]) -> bool {
    let signed: Vec<Vec<f64>> = points
        .iter()
        .zip(labels)
        .map(|(p, &y)| {
            let s = if y { 1.0 } else { -1.0 };
            p.iter().chain([1.0].iter()).map(|x| s * x).collect()
        })
        .collect();
    perceptron_separates(&signed) || !origin_in_hull(&signed)
}

fn perceptron_separates(signed: &[Vec<f64>]) -> bool {
    let d = signed[0].len();
    let mut w = vec![0.0; d];
    for _ in 0..PERCEPTRON_EPOCHS {
        let mut clean = true;
        for p in signed {
            if dot(&w, p) <= 0.0 {
                clean = false;
                for (wk, pk) in w.iter_mut().zip(p) {
                    *wk += pk;
                }
            }
        }
        if clean {
            return true;
        }
    }
    false
}

/// Carathéodory search: the origin is in the hull iff it is a convex
/// combination of some affinely independent subset. Exhaustive over subsets,
/// so only meant for a handful of points.
fn origin_in_hull(points: &[Vec<f64>]) -> bool {
    let m = points.len();
    for mask in 1u32..(1 << m) {
        let subset: Vec<&Vec<f64>> = (0..m).filter(|k| mask >> k & 1 == 1).map(|k| &points[k]).collect();
        if let Some(lambda) = barycentric_of_origin(&subset) {
            if lambda.iter().all(|&l| l >= -1e-12) {
                return true;
            }
        }
    }
    false
}

/// Solves `Σ λ_k p_k = 0, Σ λ_k = 1` in the least-squares sense; returns the
/// coefficients only if the system is consistent and the subset independent.
fn barycentric_of_origin(subset: &[&Vec<f64>]) -> Option<Vec<f64>> {
    let s = subset.len();
    let cols: Vec<Vec<f64>> = subset.iter().map(|p| p.iter().copied().chain([1.0]).collect()).collect();
    let rows = cols[0].len();
    let mut rhs = vec![0.0; rows];
    rhs[rows - 1] = 1.0;
    // normal equations
    let mut m: Vec<Vec<f64>> = (0..s)
        .map(|a| {
            let mut r: Vec<f64> = (0..s).map(|b| dot(&cols[a], &cols[b])).collect();
            r.push(dot(&cols[a], &rhs));
            r
        })
        .collect();
    for col in 0..s {
        let piv = (col..s).max_by(|&x, &y| m[x][col].abs().total_cmp(&m[y][col].abs()))?;
        if m[piv][col].abs() < 1e-10 {
            return None;
        }
        m.swap(piv, col);
        for r in 0..s {
            if r != col {
                let f = m[r][col] / m[col][col];
                for c in col..=s {
                    m[r][c] -= f * m[col][c];
                }
            }
        }
    }
    let lambda: Vec<f64> = (0..s).map(|k| m[k][s] / m[k][k]).collect();
    let residual: f64 = (0..rows)
        .map(|r| {
            let v: f64 = (0..s).map(|k| lambda[k] * cols[k][r]).sum::<f64>() - rhs[r];
            v * v
        })
        .sum();
    (residual.sqrt() < 1e-9).then_some(lambda)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn head(rows: &[&[f64]]) -> ClassifierHead<f64> {
        ClassifierHead::unnamed(rows.iter().map(|r| r.to_vec()).collect(), None).unwrap()
    }

    #[test]
    fn published_differential_vector_counts() {
        for (n, expected) in [(2, 1), (3, 3), (4, 6), (5, 10)] {
            let rows: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64, 1.0 + (i * i) as f64]).collect();
            let h = ClassifierHead::unnamed(rows, None).unwrap();
            assert_eq!(differential_vectors(&h).unwrap().count(), expected);
        }
    }

    #[test]
    fn differential_vectors_are_antisymmetric() {
        let h = head(&[&[1.0, 2.0], &[0.5, -1.0], &[3.0, 0.0], &[-1.0, -1.0]]);
        let d = differential_vectors(&h).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                if i != j {
                    let sum: Vec<f64> = d.get(i, j).iter().zip(d.get(j, i)).map(|(a, b)| a + b).collect();
                    assert!(sum.iter().all(|&x| x == 0.0));
                }
            }
        }
    }

    #[test]
    fn membership_by_larger_dot_product() {
        let h = head(&[&[1.0, 0.0], &[0.0, 1.0]]);
        assert_eq!(region_of(&[2.0, 1.0], &h).unwrap(), 0);
        assert!(matches!(region_of(&[1.0, 1.0], &h), Err(Error::BoundaryTie(t)) if t == vec![0, 1]));
        let total = Divider::new(&h).unwrap().with_ties(TiePolicy::LowestIndex);
        assert_eq!(total.region_of(&[1.0, 1.0]).unwrap(), 0);
    }

    #[test]
    fn bias_is_folded_through_expansion() {
        let h = ClassifierHead::unnamed(vec![vec![1.0, 0.0], vec![0.0, 1.0]], Some(vec![0.0, 5.0])).unwrap();
        assert_eq!(region_of(&[2.0, 1.0], &h).unwrap(), 1);
        assert_eq!(region_of(&[2.0, 1.0, 1.0], &h).unwrap(), 1);
        assert!(matches!(region_of(&[2.0, 1.0, 2.0], &h), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn non_negative_domain_rejects_negative_inputs() {
        let h = head(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let d = Divider::new(&h).unwrap().with_domain(InputDomain::NonNegative);
        assert!(matches!(d.region_of(&[-1.0, 1.0]), Err(Error::NegativeCoordinate(0))));
    }

    #[test]
    fn locus_angle_of_three_class_head() {
        let h = head(&[&[1.0, 0.0], &[0.0, 1.0], &[-1.0, -1.0]]);
        let r = locus_angles(&h).unwrap();
        // w12 = (1,-1), w13 = (2,1): arccos(1/√10)
        let oracle = (1.0 / 10f64.sqrt()).acos().to_degrees();
        assert_eq!(r.classes[0].angles.len(), 1);
        assert!((r.classes[0].angles[0].1 - oracle).abs() < 1e-12);
        assert!((oracle - 71.565).abs() < 1e-3);
        assert_eq!(r.classes[0].std, 0.0);
    }

    #[test]
    fn symmetric_head_has_equal_angles() {
        let rows: Vec<Vec<f64>> = (0..3)
            .map(|k| {
                let t = k as f64 * 2.0 * std::f64::consts::PI / 3.0;
                vec![t.cos(), t.sin()]
            })
            .collect();
        let r = locus_angles(&ClassifierHead::unnamed(rows, None).unwrap()).unwrap();
        let a0 = r.classes[0].angles[0].1;
        assert!(r.classes.iter().all(|c| (c.angles[0].1 - a0).abs() < 1e-9));
    }

    #[test]
    fn four_classes_give_three_angles_each() {
        let h = head(&[&[1.0, 0.2, 0.0], &[0.1, 1.0, 0.3], &[-0.5, 0.4, 1.0], &[0.3, -1.0, 0.2]]);
        let r = locus_angles(&h).unwrap();
        assert_eq!(r.classes.iter().map(|c| c.angles.len()).sum::<usize>(), 12);
        assert!(r.classes.iter().all(|c| c.angles.len() == 3));
        assert!(r.classes.iter().flat_map(|c| &c.angles).all(|a| (0.0..=180.0).contains(&a.1)));
    }

    #[test]
    fn two_classes_have_no_locus_angles() {
        let h = head(&[&[1.0, 0.0], &[0.0, 1.0]]);
        assert!(matches!(locus_angles(&h), Err(Error::TooFewClasses { .. })));
    }

    #[test]
    fn half_spaces_are_convex() {
        let h = head(&[&[1.0, 0.3], &[-0.2, 1.0]]);
        let r = convexity_check(&h, 2000, 5, InputDomain::Unconstrained).unwrap();
        assert_eq!(r.pairs, 2000);
        assert_eq!(r.violations, 0);
    }

    #[test]
    fn xor_is_not_separable() {
        let pts = vec![vec![1.0, 1.0], vec![-1.0, -1.0], vec![1.0, -1.0], vec![-1.0, 1.0]];
        assert!(!linearly_separable(&pts, &[true, true, false, false]));
        assert!(linearly_separable(&pts, &[true, false, false, false]));
    }

    #[test]
    fn shattering_in_the_plane() {
        let r = shattering_check(2, 1).unwrap();
        assert!(r.shattered_n_plus_1);
        assert_eq!(r.points.len(), 3);
        assert!(r.witness_dichotomy_failure_n_plus_2);
        assert_eq!(r.witness.len(), 4);
    }

    #[test]
    fn shattering_in_three_dimensions() {
        let r = shattering_check(3, 7).unwrap();
        assert!(r.shattered_n_plus_1);
        assert_eq!(r.dichotomies_tested, 16);
        assert!(r.witness_dichotomy_failure_n_plus_2);
    }

    #[test]
    fn degenerate_placements_are_redrawn() {
        let mut calls = 0;
        let r = shattering_check_with(2, |_| {
            calls += 1;
            if calls < 3 {
                // on a line through the origin
                vec![vec![1.0, 1.0], vec![-1.0, -1.0], vec![0.5, 0.5]]
            } else {
                vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![-1.0, 0.0]]
            }
        })
        .unwrap();
        assert_eq!(r.attempts, 3);
        assert!(r.shattered_n_plus_1);
    }

    #[test]
    fn hopeless_placements_give_up() {
        let r = shattering_check_with(2, |_| vec![vec![1.0, 1.0], vec![2.0, 2.0], vec![3.0, 3.0]]);
        assert!(matches!(r, Err(Error::BadSpec(_))));
    }
}
