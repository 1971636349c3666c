//! Vector and plane primitives.
//!
//! The rotor algebra of the feature space only ever involves the bivector
//! spanned by a feature vector `a_e` and one weight row `w_i`, so it is carried
//! here as an ordered orthonormal frame `(e1, e2)` of that plane. Rotating by a
//! rotor `V = exp(-P θ/2)` is then an ordinary 2-D rotation inside the frame,
//! and projecting a weight onto the plane is two dot products.

use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{dot, norm, Scalar};

/// A point of the feature space, optionally carrying the trailing constant
/// coordinate that absorbs the bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector<T> {
    coords: Vec<T>,
    expanded: bool,
}

impl<T: Scalar> FeatureVector<T> {
    pub fn new(coords: Vec<T>) -> Result<Self> {
        Self::validate(&coords)?;
        Ok(Self { coords, expanded: false })
    }

    /// Appends the constant `1` coordinate so that `a_e . w_i` includes `b_i`.
    pub fn expanded(raw: &[T]) -> Result<Self> {
        let mut coords = raw.to_vec();
        coords.push(T::one());
        Self::validate(&coords)?;
        Ok(Self { coords, expanded: true })
    }

    fn validate(coords: &[T]) -> Result<()> {
        if coords.len() < 2 {
            return Err(Error::InvalidFeatureVector(format!(
                "need at least 2 coordinates, got {}",
                coords.len()
            )));
        }
        if let Some(i) = coords.iter().position(|c| !c.is_finite()) {
            return Err(Error::InvalidFeatureVector(format!("coordinate {i} is not finite")));
        }
        Ok(())
    }

    pub fn is_expanded(&self) -> bool {
        self.expanded
    }

    /// Coordinates without the trailing constant, if any.
    pub fn raw(&self) -> &[T] {
        if self.expanded {
            &self.coords[..self.coords.len() - 1]
        } else {
            &self.coords
        }
    }

    pub fn norm(&self) -> T {
        norm(&self.coords)
    }

    pub fn into_inner(self) -> Vec<T> {
        self.coords
    }
}

impl<T> Deref for FeatureVector<T> {
    type Target = [T];

    fn deref(&self) -> &[T] {
        &self.coords
    }
}

/// Output layer of a classifier: one weight row per class, optional bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierHead<T> {
    weights: Vec<Vec<T>>,
    bias: Option<Vec<T>>,
    class_names: Vec<String>,
}

impl<T: Scalar> ClassifierHead<T> {
    pub fn new(weights: Vec<Vec<T>>, bias: Option<Vec<T>>, class_names: Vec<String>) -> Result<Self> {
        let n_classes = weights.len();
        if n_classes < 2 {
            return Err(Error::TooFewClasses { required: 2, found: n_classes });
        }
        let dim = weights[0].len();
        if dim == 0 {
            return Err(Error::InvalidHead("weight rows are empty".into()));
        }
        for row in &weights {
            if row.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: row.len() });
            }
            if row.iter().any(|w| !w.is_finite()) {
                return Err(Error::InvalidHead("non-finite weight".into()));
            }
        }
        if let Some(b) = &bias {
            if b.len() != n_classes {
                return Err(Error::DimensionMismatch { expected: n_classes, found: b.len() });
            }
            if b.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidHead("non-finite bias".into()));
            }
        }
        if class_names.len() != n_classes {
            return Err(Error::InvalidHead(format!(
                "{} class names for {} weight rows",
                class_names.len(),
                n_classes
            )));
        }
        for (i, name) in class_names.iter().enumerate() {
            if class_names[..i].contains(name) {
                return Err(Error::DuplicateClassName(name.clone()));
            }
        }
        let head = Self { weights, bias, class_names };
        for i in 0..n_classes {
            for j in i + 1..n_classes {
                if head.expanded_row(i) == head.expanded_row(j) {
                    return Err(Error::DegenerateHead(i, j));
                }
            }
        }
        Ok(head)
    }

    /// Head with classes named `0..N`.
    pub fn unnamed(weights: Vec<Vec<T>>, bias: Option<Vec<T>>) -> Result<Self> {
        let names = (0..weights.len()).map(|i| i.to_string()).collect();
        Self::new(weights, bias, names)
    }

    pub fn n_classes(&self) -> usize {
        self.weights.len()
    }

    /// Feature dimension `n` (without the bias coordinate).
    pub fn dim(&self) -> usize {
        self.weights[0].len()
    }

    pub fn weights(&self) -> &[Vec<T>] {
        &self.weights
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.weights[i]
    }

    pub fn bias(&self) -> Option<&[T]> {
        self.bias.as_deref()
    }

    pub fn has_bias(&self) -> bool {
        self.bias.is_some()
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    /// `w̄_i = [w_i, b_i]` when a bias is present, `w_i` otherwise.
    pub fn expanded_row(&self, i: usize) -> Vec<T> {
        let mut row = self.weights[i].clone();
        if let Some(b) = &self.bias {
            row.push(b[i]);
        }
        row
    }

    /// Same weights with the bias dropped.
    pub fn without_bias(&self) -> Self {
        Self { weights: self.weights.clone(), bias: None, class_names: self.class_names.clone() }
    }

    /// `z_i = a . w_i + b_i` for a raw (non-expanded) feature vector.
    pub fn logits(&self, a: &[T]) -> Result<Vec<T>> {
        if a.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: a.len() });
        }
        Ok(self
            .weights
            .iter()
            .enumerate()
            .map(|(i, w)| dot(a, w) + self.bias.as_ref().map_or(T::zero(), |b| b[i]))
            .collect())
    }
}

/// Orthonormal frame of the plane spanned by `a_e` and `w_i`.
///
/// `e1` points along `w_i`; `e2` is oriented so that `a_e` has a non-negative
/// `e2` component, which keeps `theta` in `[0, π]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaneOfVariations<T> {
    pub e1: Vec<T>,
    pub e2: Vec<T>,
    pub theta: T,
    pub radius: T,
}

/// A weight row seen from inside a plane of variations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectedWeight<T> {
    /// `‖w_j∥‖`
    pub norm_parallel: T,
    /// `φ_j` in `(-π, π]`
    pub phase: T,
    pub class_index: usize,
}

impl<T: Scalar> ProjectedWeight<T> {
    /// `z_j(R, θ) = R ‖w_j∥‖ cos(θ - φ_j)`
    pub fn logit(&self, radius: T, theta: T) -> T {
        radius * self.norm_parallel * (theta - self.phase).cos()
    }

    pub fn dlogit_dradius(&self, theta: T) -> T {
        self.norm_parallel * (theta - self.phase).cos()
    }

    pub fn dlogit_dtheta(&self, radius: T, theta: T) -> T {
        -radius * self.norm_parallel * (theta - self.phase).sin()
    }
}

/// Gram-Schmidt construction of the plane of variations.
pub fn build_plane<T: Scalar>(a: &[T], w: &[T]) -> Result<PlaneOfVariations<T>> {
    if a.len() != w.len() {
        return Err(Error::DimensionMismatch { expected: w.len(), found: a.len() });
    }
    let radius = norm(a);
    let w_norm = norm(w);
    let zero = T::lit(T::ZERO_EPS);
    if radius <= zero || w_norm <= zero {
        return Err(Error::ZeroVector);
    }
    let cos = dot(a, w) / (radius * w_norm);
    if cos.abs() >= T::one() - T::lit(T::COLLINEAR_EPS) {
        return Err(Error::CollinearPlaneUndefined);
    }
    let e1: Vec<T> = w.iter().map(|&x| x / w_norm).collect();
    let along = dot(a, &e1);
    let mut e2: Vec<T> = a.iter().zip(&e1).map(|(&x, &u)| x - along * u).collect();
    // second pass keeps e1 . e2 at rounding level when a is nearly parallel to w
    let drift = dot(&e2, &e1);
    for (v, &u) in e2.iter_mut().zip(&e1) {
        *v = *v - drift * u;
    }
    let across = norm(&e2);
    for v in e2.iter_mut() {
        *v = *v / across;
    }
    let theta = dot(a, &e2).atan2(dot(a, &e1));
    Ok(PlaneOfVariations { e1, e2, theta, radius })
}

/// Projection of `w_j` onto the plane: `‖w_j∥‖` and its phase relative to `e1`.
pub fn project_weight<T: Scalar>(w: &[T], plane: &PlaneOfVariations<T>, class_index: usize) -> ProjectedWeight<T> {
    let c1 = dot(w, &plane.e1);
    let c2 = dot(w, &plane.e2);
    let norm_parallel = c1.hypot(c2);
    let phase = if norm_parallel == T::zero() {
        T::zero()
    } else {
        let p = c2.atan2(c1);
        if p <= -T::lit(std::f64::consts::PI) {
            T::lit(std::f64::consts::PI)
        } else {
            p
        }
    };
    ProjectedWeight { norm_parallel, phase, class_index }
}

/// Applies the rotor of angle `theta_r` in the plane: the angle from `e1`
/// grows by `theta_r`, the norm and any out-of-plane part are untouched.
pub fn rotate_in_plane<T: Scalar>(a: &[T], plane: &PlaneOfVariations<T>, theta_r: T) -> Result<FeatureVector<T>> {
    if a.len() != plane.e1.len() {
        return Err(Error::DimensionMismatch { expected: plane.e1.len(), found: a.len() });
    }
    let c1 = dot(a, &plane.e1);
    let c2 = dot(a, &plane.e2);
    let residual: Vec<T> = a
        .iter()
        .zip(plane.e1.iter().zip(&plane.e2))
        .map(|(&x, (&u, &v))| x - c1 * u - c2 * v)
        .collect();
    let a_norm = norm(a);
    let off = norm(&residual);
    if off > T::lit(T::PLANE_EPS) * a_norm {
        return Err(Error::PlaneMismatch((off / a_norm).as_f64()));
    }
    let (s, c) = theta_r.sin_cos();
    let r1 = c1 * c - c2 * s;
    let r2 = c1 * s + c2 * c;
    let coords = residual
        .iter()
        .zip(plane.e1.iter().zip(&plane.e2))
        .map(|(&res, (&u, &v))| res + r1 * u + r2 * v)
        .collect();
    FeatureVector::new(coords)
}

/// Angle between two non-zero vectors, in radians.
pub fn angle_between<T: Scalar>(u: &[T], v: &[T]) -> Result<T> {
    let nu = norm(u);
    let nv = norm(v);
    if nu <= T::lit(T::ZERO_EPS) || nv <= T::lit(T::ZERO_EPS) {
        return Err(Error::ZeroVector);
    }
    let c = (dot(u, v) / (nu * nv)).max(-T::one()).min(T::one());
    Ok(c.acos())
}
