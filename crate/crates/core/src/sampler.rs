//! σ-factor-constrained sampling of contractive IFS codes.
//!
//! Singular values are drawn one at a time, each uniformly inside the bounds
//! that keep the remaining values able to reach the target σ-factor `α`.
//! The final pair is solved exactly, so `Σ (σ₁ + 2σ₂) = α` to rounding. Each
//! map is then assembled as `R(θ) · diag(σ₁, σ₂) · R(φ) · diag(d₁, d₂)`,
//! which is contractive by construction.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::ifs::{self, compose_unchecked, AffineMap, IfsCode, SvdParams};
use crate::rng::Stream;
use crate::{Error, Result};

/// Inversions of a sampling interval up to this size are rounding slop and
/// collapse to the midpoint.
const INTERVAL_SLOP: f64 = 1e-12;

pub const DEFAULT_SYSTEM_SIZES: [usize; 3] = [2, 3, 4];
pub const DEFAULT_B_BOUND: f64 = 1.0;
pub const DEFAULT_AUGMENT_GAMMA: (f64, f64) = (0.8, 1.1);

/// The σ-factor range that produces rich geometry for a system of `n` maps:
/// `[(5 + n) / 2, (6 + n) / 2]`.
pub fn good_sigma_range(n: usize) -> (f64, f64) {
    (0.5 * (5.0 + n as f64), 0.5 * (6.0 + n as f64))
}

/// `N` rows of `(σ₁, σ₂)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SvArray {
    pub rows: Vec<(f64, f64)>,
}

impl SvArray {
    pub fn weighted_sum(&self) -> f64 {
        self.rows.iter().map(|(s1, s2)| s1 + 2.0 * s2).sum()
    }

    pub fn satisfies_bounds(&self) -> bool {
        self.rows
            .iter()
            .all(|&(s1, s2)| 0.0 <= s2 && s2 <= s1 && s1 <= 1.0)
    }
}

fn draw_between(rng: &mut Stream, lo: f64, hi: f64) -> Result<f64> {
    if lo <= hi {
        return Ok(rng.uniform(lo, hi));
    }
    if lo - hi <= INTERVAL_SLOP {
        // Consume the draw anyway so the stream position does not depend on
        // rounding.
        rng.unit();
        return Ok(0.5 * (lo + hi));
    }
    Err(Error::Numeric(format!("empty sampling interval [{lo}, {hi}]")))
}

/// Sample `n` singular-value pairs with `0 ≤ σ₂ ≤ σ₁ ≤ 1` and
/// `Σ (σ₁ + 2σ₂) = alpha`.
///
/// Draw order: `σ_{k,1}`, `σ_{k,2}` for `k = 1..n-1`, then `σ_{n,2}`.
pub fn sample_svs(n: usize, alpha: f64, rng: &mut Stream) -> Result<SvArray> {
    if n < 2 {
        return Err(Error::Domain(format!("system size must be at least 2, got {n}")));
    }
    let max_alpha = 3.0 * n as f64;
    if !(0.0..=max_alpha).contains(&alpha) {
        return Err(Error::Domain(format!("alpha = {alpha} outside [0, {max_alpha}]")));
    }

    let mut rows = Vec::with_capacity(n);
    let mut lower = alpha - max_alpha + 3.0;
    let mut upper = alpha;
    for _ in 0..n - 1 {
        let s1 = draw_between(rng, (lower / 3.0).max(0.0), upper.min(1.0))?;
        lower -= s1;
        upper -= s1;
        let s2 = draw_between(rng, (lower / 2.0).max(0.0), s1.min(upper / 2.0))?;
        // The +3 releases the budget reserved for the next map's maximum.
        lower = lower - 2.0 * s2 + 3.0;
        upper -= 2.0 * s2;
        rows.push((s1, s2));
    }

    let s2 = draw_between(rng, ((upper - 1.0) / 2.0).max(0.0), upper / 3.0)?;
    let s1 = upper - 2.0 * s2;
    // Rounding can leave either value a few ulps outside its box.
    let s1 = s1.clamp(0.0, 1.0);
    let s2 = s2.clamp(0.0, s1);
    rows.push((s1, s2));
    Ok(SvArray { rows })
}

/// A sampled system together with the factors it was composed from.
#[derive(Debug, Clone)]
pub struct SampledSystem {
    pub code: IfsCode,
    pub alpha: f64,
    pub factors: Vec<SvdParams>,
}

/// Sample a contractive system of `n` maps whose σ-factor lies in
/// [`good_sigma_range`], with translations in `[-b_bound, b_bound]²`.
pub fn sample_system(n: usize, b_bound: f64, rng: &mut Stream) -> Result<IfsCode> {
    sample_system_with_factors(n, b_bound, rng).map(|s| s.code)
}

/// Draw order: `α`, the singular values, then per map `θ, φ, d₁, d₂, b₁, b₂`.
pub fn sample_system_with_factors(n: usize, b_bound: f64, rng: &mut Stream) -> Result<SampledSystem> {
    if n < 2 {
        return Err(Error::Domain(format!("system size must be at least 2, got {n}")));
    }
    if !(b_bound > 0.0 && b_bound.is_finite()) {
        return Err(Error::Domain(format!("translation bound must be positive, got {b_bound}")));
    }
    let (lo, hi) = good_sigma_range(n);
    let alpha = rng.uniform(lo, hi);
    let svs = sample_svs(n, alpha, rng)?;

    let mut maps = Vec::with_capacity(n);
    let mut factors = Vec::with_capacity(n);
    for &(sigma1, sigma2) in &svs.rows {
        let theta = rng.uniform(-PI, PI);
        let phi = rng.uniform(-PI, PI);
        let d1 = rng.sign();
        let d2 = rng.sign();
        let b = [rng.uniform(-b_bound, b_bound), rng.uniform(-b_bound, b_bound)];
        let p = SvdParams {
            theta,
            phi,
            sigma1,
            sigma2,
            d1,
            d2,
        };
        maps.push(AffineMap {
            a: compose_unchecked(&p),
            b,
        });
        factors.push(p);
    }
    Ok(SampledSystem {
        code: IfsCode::with_determinant_probs(maps)?,
        alpha,
        factors,
    })
}

/// The set of system sizes `N` is drawn from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SystemSizes(Vec<usize>);

impl SystemSizes {
    pub fn new(sizes: Vec<usize>) -> Result<Self> {
        if sizes.is_empty() {
            return Err(Error::Domain("system size set is empty".into()));
        }
        if let Some(&bad) = sizes.iter().find(|&&n| !(2..=255).contains(&n)) {
            return Err(Error::Domain(format!("system size {bad} outside 2..=255")));
        }
        Ok(SystemSizes(sizes))
    }

    pub fn sizes(&self) -> &[usize] {
        &self.0
    }

    pub fn mean(&self) -> f64 {
        self.0.iter().sum::<usize>() as f64 / self.0.len() as f64
    }
}

impl Default for SystemSizes {
    fn default() -> Self {
        SystemSizes(DEFAULT_SYSTEM_SIZES.to_vec())
    }
}

pub fn sample_system_size(sizes: &SystemSizes, rng: &mut Stream) -> usize {
    sizes.0[rng.index(sizes.0.len())]
}

/// Scale map `index` (both `A` and `b`) by `gamma`, clamped to
/// `1 / σ_max(A)` so the map stays a contraction. Probabilities are
/// recomputed; every other map is untouched.
pub fn scale_map(code: &IfsCode, index: usize, gamma: f64) -> Result<(IfsCode, f64)> {
    let maps = code.maps();
    let target = maps
        .get(index)
        .ok_or_else(|| Error::Domain(format!("map index {index} out of range for N = {}", maps.len())))?;
    let s = target.sigma_max();
    let applied = if s > 0.0 { gamma.min(1.0 / s) } else { gamma };
    let mut out = maps.to_vec();
    out[index] = target.scaled(applied);
    Ok((IfsCode::with_determinant_probs(out)?, applied))
}

/// Scale one uniformly chosen map by `γ ~ U(gamma_range)`.
///
/// Draw order: map index, then `γ`.
pub fn augment_scale(code: &IfsCode, gamma_range: (f64, f64), rng: &mut Stream) -> Result<IfsCode> {
    let index = rng.index(code.len());
    let gamma = rng.uniform(gamma_range.0, gamma_range.1);
    scale_map(code, index, gamma).map(|(c, _)| c)
}

/// `n` maps with every entry i.i.d. `U(-1, 1)`, in storage order. No
/// contractivity is enforced.
pub fn naive_sample_system(n: usize, rng: &mut Stream) -> Result<Vec<AffineMap>> {
    if n < 2 {
        return Err(Error::Domain(format!("system size must be at least 2, got {n}")));
    }
    Ok((0..n)
        .map(|_| AffineMap::from_params(std::array::from_fn(|_| rng.uniform(-1.0, 1.0))))
        .collect())
}

/// Parameters for building a dataset's codes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplingConfig {
    pub system_sizes: SystemSizes,
    pub b_bound: f64,
    /// Scale augmentations appended after each sampled code.
    pub augmentations: usize,
    pub augment_gamma: (f64, f64),
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig {
            system_sizes: SystemSizes::default(),
            b_bound: DEFAULT_B_BOUND,
            augmentations: 0,
            augment_gamma: DEFAULT_AUGMENT_GAMMA,
        }
    }
}

/// One class group: `codes_per_class` sampled systems, each followed by its
/// augmentations. Each base code uses its own sub-stream keyed by
/// `class * codes_per_class + j`, so groups can be sampled in any order.
pub fn sample_group(
    seed: u64,
    class: usize,
    codes_per_class: usize,
    cfg: &SamplingConfig,
) -> Result<Vec<IfsCode>> {
    use crate::rng::domain;
    let mut group = Vec::with_capacity(codes_per_class * (1 + cfg.augmentations));
    for j in 0..codes_per_class {
        let key = (class * codes_per_class + j) as u64;
        let mut rng = Stream::derive(seed, domain::SAMPLE, key);
        let n = sample_system_size(&cfg.system_sizes, &mut rng);
        let base = sample_system(n, cfg.b_bound, &mut rng)?;
        let mut aug_rng = Stream::derive(seed, domain::AUGMENT, key);
        let augmented = (0..cfg.augmentations)
            .map(|_| augment_scale(&base, cfg.augment_gamma, &mut aug_rng))
            .collect::<Result<Vec<_>>>()?;
        group.push(base);
        group.extend(augmented);
    }
    Ok(group)
}

/// True iff every map of `code` is a contraction at the default tolerance.
pub fn is_valid_sample(code: &IfsCode) -> bool {
    code.is_contractive(ifs::CONTRACTIVITY_TOL)
}
