//! Primitives on the unit hypersphere S^{d-1}.
//!
//! [`RawVector`] holds unconstrained embedding coordinates; [`UnitVector`]
//! is guaranteed to have unit Euclidean norm. Every dot product that feeds
//! an `acos` is clamped to `[-1, 1]` first.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Norms at or below this are treated as zero by [`normalize`].
pub const DEFAULT_EPS_NORM: f64 = 1e-12;

/// Angles below this make SLERP fall back to normalized linear
/// interpolation; angles within this of pi are rejected as antipodal.
pub const DEFAULT_EPS_ANGLE: f64 = 1e-7;

const UNIT_TOLERANCE: f64 = 1e-6;

/// Unnormalized embedding coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct RawVector(Vec<f64>);

impl RawVector {
    pub fn new(components: Vec<f64>) -> Result<Self> {
        check_components(&components)?;
        Ok(Self(components))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }

    pub(crate) fn from_vec_unchecked(components: Vec<f64>) -> Self {
        Self(components)
    }
}

impl From<&UnitVector> for RawVector {
    fn from(u: &UnitVector) -> Self {
        Self(u.0.clone())
    }
}

/// A point on the unit hypersphere.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitVector(Vec<f64>);

impl UnitVector {
    /// Wraps components that already have unit norm (within 1e-6).
    pub fn new(components: Vec<f64>) -> Result<Self> {
        check_components(&components)?;
        let n = norm(&components);
        if (n - 1.0).abs() > UNIT_TOLERANCE {
            return Err(Error::InvalidParameter(format!(
                "unit vector has norm {n}"
            )));
        }
        Ok(Self(components))
    }

    /// Normalizes arbitrary components.
    pub fn from_raw(components: &[f64]) -> Result<Self> {
        check_components(components)?;
        normalize_slice(components, DEFAULT_EPS_NORM)
    }

    /// The i-th standard basis vector in `dim` dimensions.
    pub fn basis(dim: usize, i: usize) -> Self {
        let mut v = vec![0.0; dim];
        v[i] = 1.0;
        Self(v)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

fn check_components(components: &[f64]) -> Result<()> {
    if components.len() < 2 {
        return Err(Error::InvalidParameter(format!(
            "vectors need at least 2 dimensions, got {}",
            components.len()
        )));
    }
    if components.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidParameter("non-finite component".into()));
    }
    Ok(())
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

pub(crate) fn check_dims(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

pub(crate) fn normalize_slice(v: &[f64], eps_norm: f64) -> Result<UnitVector> {
    let n = norm(v);
    if n.is_nan() || n <= eps_norm {
        return Err(Error::ZeroNorm { norm: n });
    }
    Ok(UnitVector(v.iter().map(|x| x / n).collect()))
}

/// Projects a raw vector onto the unit sphere.
pub fn normalize(v: &RawVector) -> Result<UnitVector> {
    normalize_slice(&v.0, DEFAULT_EPS_NORM)
}

/// Like [`normalize`] with an explicit zero-norm threshold.
pub fn normalize_with(v: &RawVector, eps_norm: f64) -> Result<UnitVector> {
    normalize_slice(&v.0, eps_norm)
}

/// Cosine similarity of two unit vectors, clamped to `[-1, 1]`.
pub fn cosine_sim(a: &UnitVector, b: &UnitVector) -> Result<f64> {
    check_dims(a.dim(), b.dim())?;
    Ok(dot(&a.0, &b.0).clamp(-1.0, 1.0))
}

/// Great-circle angle between two unit vectors, in `[0, pi]`.
pub fn geodesic_angle(a: &UnitVector, b: &UnitVector) -> Result<f64> {
    Ok(cosine_sim(a, b)?.acos())
}

/// Spherical linear interpolation from `v` toward `z` by fraction `eta`.
pub fn slerp(v: &UnitVector, z: &UnitVector, eta: f64) -> Result<UnitVector> {
    slerp_with(v, z, eta, DEFAULT_EPS_ANGLE)
}

pub fn slerp_with(v: &UnitVector, z: &UnitVector, eta: f64, eps_angle: f64) -> Result<UnitVector> {
    check_dims(v.dim(), z.dim())?;
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::InvalidParameter(format!(
            "slerp fraction {eta} outside [0, 1]"
        )));
    }
    let omega = geodesic_angle(v, z)?;
    if omega > PI - eps_angle {
        return Err(Error::AntipodalInputs { angle: omega });
    }
    if eta == 0.0 {
        return Ok(v.clone());
    }
    if eta == 1.0 {
        return Ok(z.clone());
    }
    if omega < eps_angle {
        let mixed: Vec<f64> = v
            .0
            .iter()
            .zip(&z.0)
            .map(|(a, b)| (1.0 - eta) * a + eta * b)
            .collect();
        return normalize_slice(&mixed, DEFAULT_EPS_NORM);
    }
    let sin_omega = omega.sin();
    let wv = ((1.0 - eta) * omega).sin() / sin_omega;
    let wz = (eta * omega).sin() / sin_omega;
    let mixed: Vec<f64> = v.0.iter().zip(&z.0).map(|(a, b)| wv * a + wz * b).collect();
    // Re-project to absorb rounding in the weights.
    normalize_slice(&mixed, DEFAULT_EPS_NORM)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(v: &[f64]) -> UnitVector {
        UnitVector::from_raw(v).unwrap()
    }

    #[test]
    fn normalize_examples() {
        let u = normalize(&RawVector::new(vec![2.0, 0.0, 0.0]).unwrap()).unwrap();
        assert_eq!(u.as_slice(), &[1.0, 0.0, 0.0]);

        let u = normalize(&RawVector::new(vec![1.0, 1.0]).unwrap()).unwrap();
        assert!((u.as_slice()[0] - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-8);
        assert!((u.as_slice()[1] - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-8);

        let err = normalize(&RawVector::zeros(3)).unwrap_err();
        assert!(matches!(err, Error::ZeroNorm { .. }));
    }

    #[test]
    fn rejects_bad_components() {
        assert!(RawVector::new(vec![1.0]).is_err());
        assert!(RawVector::new(vec![1.0, f64::NAN]).is_err());
        assert!(UnitVector::new(vec![1.0, 1.0]).is_err());
    }

    #[test]
    fn cosine_examples() {
        let e1 = UnitVector::basis(3, 0);
        let e2 = UnitVector::basis(3, 1);
        assert_eq!(cosine_sim(&e1, &e1).unwrap(), 1.0);
        assert_eq!(cosine_sim(&e1, &e2).unwrap(), 0.0);
        let diag = unit(&[1.0, 1.0, 0.0]);
        assert!((cosine_sim(&e1, &diag).unwrap() - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-8);
        let e4 = UnitVector::basis(4, 0);
        assert!(matches!(
            cosine_sim(&e1, &e4),
            Err(Error::DimensionMismatch { expected: 3, found: 4 })
        ));
    }

    #[test]
    fn geodesic_examples() {
        let e1 = UnitVector::basis(3, 0);
        let e2 = UnitVector::basis(3, 1);
        let neg = unit(&[-1.0, 0.0, 0.0]);
        assert_eq!(geodesic_angle(&e1, &e1).unwrap(), 0.0);
        assert!((geodesic_angle(&e1, &e2).unwrap() - std::f64::consts::FRAC_PI_2).abs() < 1e-8);
        assert_eq!(geodesic_angle(&e1, &neg).unwrap(), PI);
    }

    #[test]
    fn slerp_examples() {
        let e1 = UnitVector::basis(4, 0);
        let e2 = UnitVector::basis(4, 1);
        assert_eq!(slerp(&e1, &e2, 0.0).unwrap(), e1);
        assert_eq!(slerp(&e1, &e2, 1.0).unwrap(), e2);
        let mid = slerp(&e1, &e2, 0.5).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        for (got, want) in mid.as_slice().iter().zip([h, h, 0.0, 0.0]) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn slerp_antipodal_is_an_error() {
        let e1 = UnitVector::basis(3, 0);
        let neg = unit(&[-1.0, 0.0, 0.0]);
        assert!(matches!(
            slerp(&e1, &neg, 0.3),
            Err(Error::AntipodalInputs { .. })
        ));
    }

    #[test]
    fn slerp_near_parallel_falls_back_to_lerp() {
        let v = unit(&[1.0, 1e-9, 0.0]);
        let z = unit(&[1.0, -1e-9, 0.0]);
        let m = slerp(&v, &z, 0.5).unwrap();
        assert!((norm(m.as_slice()) - 1.0).abs() < 1e-12);
        assert!(m.as_slice()[1].abs() < 1e-15);
    }

    #[test]
    fn slerp_rejects_fraction_out_of_range() {
        let e1 = UnitVector::basis(2, 0);
        let e2 = UnitVector::basis(2, 1);
        assert!(slerp(&e1, &e2, 1.5).is_err());
    }
}
