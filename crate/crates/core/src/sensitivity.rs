//! Softmax sensitivity to the norm and the orientation of a feature vector.
//!
//! Inside the plane of variations of `(a_e, w_i)`, with `i` the prevailing
//! class, every logit is a sinusoid of the in-plane angle:
//!
//! ```text
//! z_j(R, θ) = R ‖w_j∥‖ cos(θ - φ_j)
//! ∂z_j/∂R   = ‖w_j∥‖ cos(θ - φ_j)
//! ∂z_j/∂θ   = -R ‖w_j∥‖ sin(θ - φ_j)
//! ```
//!
//! and the softmax partials follow from the quotient rule:
//!
//! ```text
//! ∂S_j/∂x = S_j / Σ_k e^{z_k} · Σ_k (∂z_j/∂x - ∂z_k/∂x) e^{z_k}
//! ```

use serde::{Deserialize, Serialize};

use crate::division::{Divider, TiePolicy};
use crate::error::{Error, Result};
use crate::geometry::{build_plane, project_weight, ClassifierHead, PlaneOfVariations, ProjectedWeight};
use crate::scalar::{compensated_sum, dot, Scalar};

/// Numerically stable softmax (max-subtracted).
pub fn softmax<T: Scalar>(z: &[T]) -> Vec<T> {
    let max = z.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = z.iter().map(|&v| (v - max).exp()).collect();
    let total: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// `∂S_j/∂x` for every `j`, given the logits and `∂z_k/∂x`.
///
/// The exponentials are shifted by `max z`; the factor cancels between the
/// `S_j / Σ e^{z_k}` prefactor and the weighted sum.
pub fn softmax_partials<T: Scalar>(z: &[T], dz: &[T]) -> Vec<T> {
    let max = z.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = z.iter().map(|&v| (v - max).exp()).collect();
    let total: T = exps.iter().copied().sum();
    (0..z.len())
        .map(|j| {
            let s_j = exps[j] / total;
            let weighted: T = exps.iter().zip(dz).map(|(&e, &d)| (dz[j] - d) * e).sum();
            s_j / total * weighted
        })
        .collect()
}

/// How to treat a head that carries a bias.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum BiasHandling {
    #[default]
    Reject,
    /// Drop `b` (with a warning) and analyse the bias-free head.
    FoldOut,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityResult<T> {
    pub prevailing: usize,
    /// Softmax outputs.
    pub probabilities: Vec<T>,
    pub logits: Vec<T>,
    /// `∂S_j/∂R`
    pub d_radius: Vec<T>,
    /// `∂S_j/∂θ_i`; `None` when `a_e` is collinear with `w_i`.
    pub d_theta: Option<Vec<T>>,
    pub radius: T,
    pub theta: Option<T>,
    pub projections: Option<Vec<ProjectedWeight<T>>>,
}

impl<T: Scalar> SensitivityResult<T> {
    pub fn is_degenerate(&self) -> bool {
        self.d_theta.is_none()
    }

    pub fn d_theta(&self) -> Result<&[T]> {
        self.d_theta.as_deref().ok_or(Error::CollinearPlaneUndefined)
    }
}

fn checked_head<T: Scalar>(head: &ClassifierHead<T>, bias: BiasHandling) -> Result<ClassifierHead<T>> {
    match (head.has_bias(), bias) {
        (false, _) => Ok(head.clone()),
        (true, BiasHandling::Reject) => Err(Error::BiasNotSupported),
        (true, BiasHandling::FoldOut) => {
            log::warn!("dropping classifier bias for sensitivity analysis");
            Ok(head.without_bias())
        }
    }
}

/// Norm and angle partials of every softmax output at `a_e`.
///
/// The prevailing class is the logit argmax (lowest index on exact ties). When
/// `a_e` is collinear with its weight, `d_theta` is `None` and only the
/// norm partials are returned.
pub fn sensitivity<T: Scalar>(a: &[T], head: &ClassifierHead<T>, bias: BiasHandling) -> Result<SensitivityResult<T>> {
    let head = checked_head(head, bias)?;
    sensitivity_unchecked(a, &head)
}

fn sensitivity_unchecked<T: Scalar>(a: &[T], head: &ClassifierHead<T>) -> Result<SensitivityResult<T>> {
    let logits = head.logits(a)?;
    let prevailing = Divider::new(head)?.with_ties(TiePolicy::LowestIndex).region_of(a)?;
    let probabilities = softmax(&logits);
    match build_plane(a, head.row(prevailing)) {
        Ok(plane) => {
            let projections: Vec<_> = (0..head.n_classes()).map(|j| project_weight(head.row(j), &plane, j)).collect();
            let dz_r: Vec<T> = projections.iter().map(|p| p.dlogit_dradius(plane.theta)).collect();
            let dz_t: Vec<T> = projections.iter().map(|p| p.dlogit_dtheta(plane.radius, plane.theta)).collect();
            Ok(SensitivityResult {
                prevailing,
                d_radius: softmax_partials(&logits, &dz_r),
                d_theta: Some(softmax_partials(&logits, &dz_t)),
                probabilities,
                logits,
                radius: plane.radius,
                theta: Some(plane.theta),
                projections: Some(projections),
            })
        }
        Err(Error::CollinearPlaneUndefined) => {
            // z_j is still linear in R along the ray: ∂z_j/∂R = â . w_j
            let radius = crate::scalar::norm(a);
            let dz_r: Vec<T> = head.weights().iter().map(|w| dot(a, w) / radius).collect();
            Ok(SensitivityResult {
                prevailing,
                d_radius: softmax_partials(&logits, &dz_r),
                d_theta: None,
                probabilities,
                logits,
                radius,
                theta: None,
                projections: None,
            })
        }
        Err(e) => Err(e),
    }
}

/// Logit and softmax grids over `(θ, R)` in the plane of variations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseSurface<T> {
    pub prevailing: usize,
    /// Absolute in-plane angles, measured from `w_i`.
    pub theta_grid: Vec<T>,
    pub radius_grid: Vec<T>,
    pub plane: PlaneOfVariations<T>,
    pub projections: Vec<ProjectedWeight<T>>,
    /// `[class][theta][radius]`
    pub z_values: Vec<Vec<Vec<T>>>,
    /// Softmax of `z_values` along the class axis.
    pub s_values: Vec<Vec<Vec<T>>>,
}

impl<T: Scalar> ResponseSurface<T> {
    pub fn n_classes(&self) -> usize {
        self.z_values.len()
    }

    /// Argmax class at every `θ` node for the `r`-th radius.
    pub fn prevailing_along_theta(&self, r: usize) -> Vec<usize> {
        (0..self.theta_grid.len()).map(|t| self.argmax_at(t, r)).collect()
    }

    /// Argmax class at every `R` node for the `t`-th angle.
    pub fn prevailing_along_radius(&self, t: usize) -> Vec<usize> {
        (0..self.radius_grid.len()).map(|r| self.argmax_at(t, r)).collect()
    }

    fn argmax_at(&self, t: usize, r: usize) -> usize {
        (0..self.n_classes()).fold(0, |best, j| if self.z_values[j][t][r] > self.z_values[best][t][r] { j } else { best })
    }
}

/// Inclusive, evenly spaced grid. A single node sits at `lo`.
pub fn linspace<T: Scalar>(lo: T, hi: T, count: usize) -> Vec<T> {
    match count {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let step = (hi - lo) / T::from_usize(count - 1).unwrap();
            (0..count).map(|k| lo + step * T::from_usize(k).unwrap()).collect()
        }
    }
}

pub fn response_surface<T: Scalar>(
    a: &[T],
    head: &ClassifierHead<T>,
    theta_grid: Vec<T>,
    radius_grid: Vec<T>,
    bias: BiasHandling,
) -> Result<ResponseSurface<T>> {
    if theta_grid.is_empty() || radius_grid.is_empty() {
        return Err(Error::BadSpec("response surface grids must be non-empty".into()));
    }
    if radius_grid.iter().any(|&r| r <= T::zero() || !r.is_finite()) {
        return Err(Error::BadSpec("radius grid must be positive".into()));
    }
    let head = checked_head(head, bias)?;
    let prevailing = Divider::new(&head)?.with_ties(TiePolicy::LowestIndex).region_of(a)?;
    let plane = build_plane(a, head.row(prevailing))?;
    let projections: Vec<_> = (0..head.n_classes()).map(|j| project_weight(head.row(j), &plane, j)).collect();
    let z_values: Vec<Vec<Vec<T>>> = projections
        .iter()
        .map(|p| theta_grid.iter().map(|&t| radius_grid.iter().map(|&r| p.logit(r, t)).collect()).collect())
        .collect();
    let n = head.n_classes();
    let mut s_values = vec![vec![vec![T::zero(); radius_grid.len()]; theta_grid.len()]; n];
    for t in 0..theta_grid.len() {
        for r in 0..radius_grid.len() {
            let z: Vec<T> = (0..n).map(|j| z_values[j][t][r]).collect();
            for (j, s) in softmax(&z).into_iter().enumerate() {
                s_values[j][t][r] = s;
            }
        }
    }
    Ok(ResponseSurface { prevailing, theta_grid, radius_grid, plane, projections, z_values, s_values })
}

/// Aggregate magnitudes of the softmax partials over a batch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradientSummary {
    pub mean_abs_d_radius: f64,
    pub std_abs_d_radius: f64,
    pub mean_abs_d_theta: f64,
    pub std_abs_d_theta: f64,
    /// Batch elements that contributed.
    pub used: usize,
    /// Batch elements skipped because `a_e` was collinear with `w_i`.
    pub skipped_collinear: usize,
}

/// Mean and (population) standard deviation of `|∂S_j/∂R|` and `|∂S_j/∂θ_i|`
/// over every class `j` and every batch element.
pub fn gradient_magnitude_summary<'a, T, I>(batch: I, bias: BiasHandling) -> Result<GradientSummary>
where
    T: Scalar,
    I: IntoIterator<Item = (&'a [T], &'a ClassifierHead<T>)>,
{
    let mut d_r = Vec::new();
    let mut d_t = Vec::new();
    let mut used = 0;
    let mut skipped = 0;
    let mut last_head: Option<(&ClassifierHead<T>, ClassifierHead<T>)> = None;
    for (a, head) in batch {
        let fresh = match &last_head {
            Some((h, _)) => !std::ptr::eq(*h, head),
            None => true,
        };
        if fresh {
            last_head = Some((head, checked_head(head, bias)?));
        }
        let checked = &last_head.as_ref().unwrap().1;
        let res = sensitivity_unchecked(a, checked)?;
        match res.d_theta {
            Some(dt) => {
                used += 1;
                d_r.extend(res.d_radius.iter().map(|v| v.abs().as_f64()));
                d_t.extend(dt.iter().map(|v| v.abs().as_f64()));
            }
            None => skipped += 1,
        }
    }
    if used == 0 {
        return Err(Error::EmptyBatch);
    }
    let stats = |v: &[f64]| {
        let n = v.len() as f64;
        let mean = compensated_sum(v.iter().copied()) / n;
        let var = compensated_sum(v.iter().map(|x| (x - mean) * (x - mean))) / n;
        (mean, var.sqrt())
    };
    let (mr, sr) = stats(&d_r);
    let (mt, st) = stats(&d_t);
    Ok(GradientSummary {
        mean_abs_d_radius: mr,
        std_abs_d_radius: sr,
        mean_abs_d_theta: mt,
        std_abs_d_theta: st,
        used,
        skipped_collinear: skipped,
    })
}
