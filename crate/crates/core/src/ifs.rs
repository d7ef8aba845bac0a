//! Exact 2×2 affine-map mathematics.
//!
//! Everything here is a pure function of its inputs. Singular values use a
//! closed form, so no iterative SVD sits on the sampling or validation path.

use std::f64::consts::PI;

use crate::{Error, Result};

/// Row-major 2×2 matrix: `m[row][col]`.
pub type Mat2 = [[f64; 2]; 2];

pub const IDENTITY: Mat2 = [[1.0, 0.0], [0.0, 1.0]];

/// Default slack for `σ_max ≤ 1` checks.
pub const CONTRACTIVITY_TOL: f64 = 1e-9;

/// Determinants below this are treated as zero when assigning probabilities.
pub const DET_FLOOR: f64 = 1e-12;

/// `w(x) = A x + b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineMap {
    pub a: Mat2,
    pub b: [f64; 2],
}

impl AffineMap {
    pub fn new(a: Mat2, b: [f64; 2]) -> Result<Self> {
        let map = AffineMap { a, b };
        if !map.is_finite() {
            return Err(Error::InvalidInput(format!("non-finite affine map {map:?}")));
        }
        Ok(map)
    }

    pub fn linear(a: Mat2) -> Self {
        AffineMap { a, b: [0.0; 2] }
    }

    pub fn is_finite(&self) -> bool {
        self.a.iter().flatten().chain(self.b.iter()).all(|v| v.is_finite())
    }

    #[inline]
    pub fn apply(&self, x: [f64; 2]) -> [f64; 2] {
        [
            self.a[0][0] * x[0] + self.a[0][1] * x[1] + self.b[0],
            self.a[1][0] * x[0] + self.a[1][1] * x[1] + self.b[1],
        ]
    }

    pub fn det(&self) -> f64 {
        det(&self.a)
    }

    /// Largest singular value of the linear part; the Lipschitz constant of
    /// the map in the Euclidean norm.
    pub fn sigma_max(&self) -> f64 {
        singular_values_unchecked(&self.a).0
    }

    /// The six parameters in storage order: `A` row-major, then `b`.
    pub fn params(&self) -> [f64; 6] {
        [self.a[0][0], self.a[0][1], self.a[1][0], self.a[1][1], self.b[0], self.b[1]]
    }

    pub fn from_params(p: [f64; 6]) -> Self {
        AffineMap {
            a: [[p[0], p[1]], [p[2], p[3]]],
            b: [p[4], p[5]],
        }
    }

    /// Every parameter rounded to the nearest `f32`.
    pub fn rounded_to_f32(&self) -> Self {
        Self::from_params(self.params().map(|v| v as f32 as f64))
    }

    pub fn scaled(&self, gamma: f64) -> Self {
        AffineMap {
            a: self.a.map(|row| row.map(|v| v * gamma)),
            b: self.b.map(|v| v * gamma),
        }
    }
}

/// Rotation/scale/reflection factors of one linear map:
/// `A = R(theta) · diag(sigma1, sigma2) · R(phi) · diag(d1, d2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvdParams {
    pub theta: f64,
    pub phi: f64,
    pub sigma1: f64,
    pub sigma2: f64,
    pub d1: f64,
    pub d2: f64,
}

impl SvdParams {
    pub fn new(theta: f64, phi: f64, sigma1: f64, sigma2: f64, d1: f64, d2: f64) -> Result<Self> {
        let p = SvdParams {
            theta,
            phi,
            sigma1,
            sigma2,
            d1,
            d2,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let angle_ok = |t: f64| t.is_finite() && (-PI..=PI).contains(&t);
        if !angle_ok(self.theta) || !angle_ok(self.phi) {
            return Err(Error::InvalidInput(format!(
                "angles must lie in [-pi, pi], got theta={} phi={}",
                self.theta, self.phi
            )));
        }
        if !(0.0 <= self.sigma2 && self.sigma2 <= self.sigma1 && self.sigma1 <= 1.0) {
            return Err(Error::InvalidInput(format!(
                "need 0 <= sigma2 <= sigma1 <= 1, got ({}, {})",
                self.sigma1, self.sigma2
            )));
        }
        let sign_ok = |d: f64| d == 1.0 || d == -1.0;
        if !sign_ok(self.d1) || !sign_ok(self.d2) {
            return Err(Error::InvalidInput(format!(
                "reflection signs must be +-1, got ({}, {})",
                self.d1, self.d2
            )));
        }
        Ok(())
    }
}

pub fn det(a: &Mat2) -> f64 {
    a[0][0] * a[1][1] - a[0][1] * a[1][0]
}

pub fn mat_mul(x: &Mat2, y: &Mat2) -> Mat2 {
    [
        [
            x[0][0] * y[0][0] + x[0][1] * y[1][0],
            x[0][0] * y[0][1] + x[0][1] * y[1][1],
        ],
        [
            x[1][0] * y[0][0] + x[1][1] * y[1][0],
            x[1][0] * y[0][1] + x[1][1] * y[1][1],
        ],
    ]
}

pub fn rotation(angle: f64) -> Mat2 {
    let (s, c) = (libm::sin(angle), libm::cos(angle));
    [[c, -s], [s, c]]
}

/// Singular values `(σ₁, σ₂)` with `σ₁ ≥ σ₂ ≥ 0`.
///
/// Splits `A` into its conformal part (`E`, `H`) and anti-conformal part
/// (`F`, `G`): `σ₁ = Q + R` and `σ₂ = |Q − R|` with `Q = |(E, H)|`,
/// `R = |(F, G)|`. `Q² − R² = det A`, so `σ₁σ₂ = |det A|` holds to rounding,
/// and `Q + R` stays accurate when the two singular values nearly coincide,
/// where the `trace(AᵀA)`/`det(AᵀA)` route loses half its digits.
pub fn singular_values(a: &Mat2) -> Result<(f64, f64)> {
    if !a.iter().flatten().all(|v| v.is_finite()) {
        return Err(Error::InvalidInput(format!("non-finite matrix {a:?}")));
    }
    Ok(singular_values_unchecked(a))
}

#[inline]
pub(crate) fn singular_values_unchecked(a: &Mat2) -> (f64, f64) {
    let e = 0.5 * (a[0][0] + a[1][1]);
    let f = 0.5 * (a[0][0] - a[1][1]);
    let g = 0.5 * (a[1][0] + a[0][1]);
    let h = 0.5 * (a[1][0] - a[0][1]);
    let q = libm::hypot(e, h);
    let r = libm::hypot(f, g);
    (q + r, (q - r).abs())
}

/// `R(θ) · diag(σ₁, σ₂) · R(φ) · diag(d₁, d₂)`.
pub fn compose_from_svd(p: &SvdParams) -> Result<Mat2> {
    p.validate()?;
    Ok(compose_unchecked(p))
}

pub(crate) fn compose_unchecked(p: &SvdParams) -> Mat2 {
    let sigma = [[p.sigma1, 0.0], [0.0, p.sigma2]];
    let reflect = [[p.d1, 0.0], [0.0, p.d2]];
    let left = mat_mul(&rotation(p.theta), &sigma);
    mat_mul(&mat_mul(&left, &rotation(p.phi)), &reflect)
}

/// `p_i = |det A_i| / Σ_j |det A_j|`, or uniform when every determinant is
/// below [`DET_FLOOR`].
pub fn determinant_probabilities(maps: &[AffineMap]) -> Vec<f64> {
    let dets: Vec<f64> = maps.iter().map(|m| m.det().abs()).collect();
    if dets.iter().all(|&d| d < DET_FLOOR) {
        return vec![1.0 / maps.len() as f64; maps.len()];
    }
    let total: f64 = dets.iter().sum();
    dets.into_iter().map(|d| d / total).collect()
}

/// An IFS code: `N ≥ 2` affine maps and their selection probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct IfsCode {
    maps: Vec<AffineMap>,
    probs: Vec<f64>,
}

impl IfsCode {
    pub fn new(maps: Vec<AffineMap>, probs: Vec<f64>) -> Result<Self> {
        if maps.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "an IFS code needs at least 2 maps, got {}",
                maps.len()
            )));
        }
        if probs.len() != maps.len() {
            return Err(Error::InvalidInput(format!(
                "{} maps but {} probabilities",
                maps.len(),
                probs.len()
            )));
        }
        if let Some(m) = maps.iter().find(|m| !m.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite affine map {m:?}")));
        }
        if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::InvalidInput(format!("negative or non-finite probability in {probs:?}")));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!("probabilities sum to {total}, not 1")));
        }
        Ok(IfsCode { maps, probs })
    }

    /// Probabilities proportional to `|det A_i|`.
    pub fn with_determinant_probs(maps: Vec<AffineMap>) -> Result<Self> {
        let probs = if maps.len() >= 2 {
            determinant_probabilities(&maps)
        } else {
            vec![1.0; maps.len()]
        };
        Self::new(maps, probs)
    }

    pub fn maps(&self) -> &[AffineMap] {
        &self.maps
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.maps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.maps.is_empty()
    }

    pub fn sigma_factor(&self) -> f64 {
        sigma_factor(self)
    }

    pub fn is_contractive(&self, tol: f64) -> bool {
        is_contractive(self, tol)
    }

    /// Parameters rounded to `f32` (the persisted precision), probabilities
    /// recomputed from the rounded determinants.
    ///
    /// Rounding can push a singular value that sits at 1 a few ulps past
    /// it; such maps are shrunk by a relative `1e-7` step until they are
    /// contractive again at `f32` precision.
    pub fn rounded_to_f32(&self) -> Self {
        let maps = self
            .maps
            .iter()
            .map(|m| {
                let mut rounded = m.rounded_to_f32();
                let mut shrink = 1.0;
                while rounded.sigma_max() > 1.0 && m.sigma_max() <= 1.0 + CONTRACTIVITY_TOL {
                    shrink *= 1.0 - 1e-7;
                    rounded = m.scaled(shrink).rounded_to_f32();
                }
                rounded
            })
            .collect::<Vec<_>>();
        let probs = determinant_probabilities(&maps);
        IfsCode { maps, probs }
    }
}

/// `Σ_i (σ_{i,1} + 2 σ_{i,2})`.
pub fn sigma_factor(code: &IfsCode) -> f64 {
    code.maps
        .iter()
        .map(|m| {
            let (s1, s2) = singular_values_unchecked(&m.a);
            s1 + 2.0 * s2
        })
        .sum()
}

/// True iff every map has `σ_max ≤ 1 + tol`.
pub fn is_contractive(code: &IfsCode, tol: f64) -> bool {
    maps_contractive(&code.maps, tol)
}

pub fn maps_contractive(maps: &[AffineMap], tol: f64) -> bool {
    maps.iter().all(|m| m.sigma_max() <= 1.0 + tol)
}

/// Weighted geometric mean `Π s_i^{p_i}` of the per-map Lipschitz constants
/// `s_i = σ_max(A_i)`. The average contractivity condition holds iff the
/// result is `< 1`. A map with `σ_max = 0` makes the product 0.
pub fn average_contractivity(code: &IfsCode) -> f64 {
    average_contractivity_of(&code.maps, &code.probs)
}

pub fn average_contractivity_of(maps: &[AffineMap], probs: &[f64]) -> f64 {
    let mut log_sum = 0.0;
    for (m, &p) in maps.iter().zip(probs) {
        let s = m.sigma_max();
        if s == 0.0 {
            return 0.0;
        }
        log_sum += p * libm::log(s);
    }
    libm::exp(log_sum)
}
