//! The invariant measure σ on `T = (S^{n−1} × S^{n−1}) ∩ V(xᵀy)`.
//!
//! T is the Stiefel manifold of orthonormal 2-frames in ℝⁿ and carries a
//! unique normalized SO(n)-invariant measure. This module provides
//!
//! - a seedable sampler for σ (Gaussian-projection construction, with the
//!   Givens-angle parameterization available as a cross-check),
//! - the exact rational values of all degree-2 and tabulated degree-4
//!   moments of the coordinate products `z_ij = x_i y_j`,
//! - Monte Carlo integration with deterministic parallel reduction,
//! - closed-form L² and L⁴ norms of bilinear forms on T and the reverse
//!   Hölder inequality `‖g‖₄ ≤ C·‖g‖₂` with `C ∈ {√3, ⁴√6, √6}` by symmetry
//!   class,
//! - the closed-form upper bound on the fraction of cross-positive maps
//!   that are completely cross-positive.
//!
//! Moment notation: `z_i = x_i y_i`, `z_ij = x_i y_j`, `v_ij = z_ij + z_ji`,
//! `w_ij = z_ij − z_ji`.

use crate::polyalg::{BiformQuad, BilinearForm, MatK};
use crate::scalar::{double_factorial, Coeff};
use nalgebra::DMatrix;
use num_rational::BigRational;
use num_traits::Zero;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, StandardNormal};
use rayon::prelude::*;

type Rat = BigRational;

fn rat(n: i64) -> Rat {
    Rat::from_int(n)
}

// ---------------------------------------------------------------------------
// Helper ratios of sine/cosine integrals, in double-factorial form.
// ---------------------------------------------------------------------------

/// `A_{i,2j} = ∫₀^π sin^{i+2j} / ∫₀^π sin^i = ((i+2j−1)!! i!!) / ((i−1)!! (i+2j)!!)`.
///
/// Extended to i = −1 (only j = 0 is meaningful there); the n = 3 and
/// n = 4 moment derivations use `B_{−1,0} = 1`, where the corresponding
/// angle drops out of the parameterization.
pub fn ratio_a(i: i64, two_j: i64) -> Rat {
    assert!(i >= -1 && two_j >= 0 && two_j % 2 == 0);
    if i == -1 {
        assert_eq!(two_j, 0, "A_{{-1,2j}} only defined as an empty ratio");
        return rat(1);
    }
    double_factorial(i + two_j - 1) * double_factorial(i)
        / (double_factorial(i - 1) * double_factorial(i + two_j))
}

/// `B_{i,2j} = ∫₀^π cos² sin^{i+2j} / ∫₀^π sin^i = A_{i,2j}/(i+2j+2)`.
pub fn ratio_b(i: i64, two_j: i64) -> Rat {
    ratio_a(i, two_j) / rat(i + two_j + 2)
}

/// `C_{i,2j} = ∫₀^π cos⁴ sin^{i+2j} / ∫₀^π sin^i = 3 A_{i,2j}/((i+2j+2)(i+2j+4))`.
pub fn ratio_c(i: i64, two_j: i64) -> Rat {
    rat(3) * ratio_a(i, two_j) / rat((i + two_j + 2) * (i + two_j + 4))
}

// ---------------------------------------------------------------------------
// The exact moment table.
// ---------------------------------------------------------------------------

/// `I₁ = ∫ z_i² dσ = 1/(n(n+2))`.
pub fn i1(n: i64) -> Rat {
    assert!(n >= 3);
    rat(1) / rat(n * (n + 2))
}

/// `I₂ = ∫ z_i z_j dσ = −I₁/(n−1)`, i ≠ j.
pub fn i2(n: i64) -> Rat {
    -i1(n) / rat(n - 1)
}

/// `I₃ = ∫ z_ij² dσ = (n+1)/((n−1)n(n+2))`, i ≠ j.
pub fn i3(n: i64) -> Rat {
    rat(n + 1) * i1(n) / rat(n - 1)
}

/// `I₄ = ∫ v_ij² dσ = 2(I₃ + I₂) = 2/((n−1)(n+2))`, i ≠ j.
pub fn i4(n: i64) -> Rat {
    rat(2) * (i3(n) + i2(n))
}

/// `I₅ = ∫ w_ij² dσ = 2(I₃ − I₂) = 2/((n−1)n)`, i ≠ j.
pub fn i5(n: i64) -> Rat {
    rat(2) * (i3(n) - i2(n))
}

/// `J₁ = ∫ z_i⁴ dσ = 9/(n(n+2)(n+4)(n+6))`.
pub fn j1(n: i64) -> Rat {
    assert!(n >= 3);
    rat(9) / rat(n * (n + 2) * (n + 4) * (n + 6))
}

/// `J₂ = ∫ z_i³ z_j dσ = −J₁/(n−1)`, i ≠ j.
pub fn j2(n: i64) -> Rat {
    -j1(n) / rat(n - 1)
}

/// `J₃ = ∫ z_i² z_j² dσ = (n²+4n+15)/((n−1)n(n+1)(n+2)(n+4)(n+6))`, i ≠ j.
pub fn j3(n: i64) -> Rat {
    assert!(n >= 3);
    rat(n * n + 4 * n + 15) / (rat((n - 1) * n * (n + 1)) * rat((n + 2) * (n + 4) * (n + 6)))
}

/// `J₄ = ∫ z_i² z_j z_k dσ = −(n−3)/((n−1)n(n+1)(n+2)(n+4)(n+6))`, i, j, k distinct.
pub fn j4(n: i64) -> Rat {
    assert!(n >= 3);
    -rat(n - 3) / (rat((n - 1) * n * (n + 1)) * rat((n + 2) * (n + 4) * (n + 6)))
}

/// `J₅ = ∫ z_i z_j z_k z_l dσ = 3/((n−1)n(n+1)(n+2)(n+4)(n+6))`, distinct indices, n ≥ 4.
pub fn j5(n: i64) -> Rat {
    assert!(n >= 4, "J₅ needs four distinct indices");
    rat(3) / (rat((n - 1) * n * (n + 1)) * rat((n + 2) * (n + 4) * (n + 6)))
}

/// `J₆ = ∫ w_ij⁴ dσ = 24/((n−1)n(n+1)(n+2))`, i ≠ j.
pub fn j6(n: i64) -> Rat {
    assert!(n >= 3);
    rat(24) / rat((n - 1) * n * (n + 1) * (n + 2))
}

/// `J₇ = ∫ w_ij² w_kl² dσ = J₆/6 = 4/((n−1)n(n+1)(n+2))`, i, j, k, l distinct, n ≥ 4.
pub fn j7(n: i64) -> Rat {
    assert!(n >= 4, "J₇ needs four distinct indices");
    j6(n) / rat(6)
}

/// A monomial `Π z_{i_t j_t}` of degree 2 or 4 in the products `z_ij = x_i y_j`.
///
/// Internally canonicalized to the pair of exponent vectors of the
/// underlying (x, y)-monomial, so that e.g. `z_12 z_21` and `z_1 z_2` are
/// the same key.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MomentKey {
    n: usize,
    xexp: Vec<u8>,
    yexp: Vec<u8>,
    degree: usize,
}

impl MomentKey {
    /// Builds a key from index pairs (0-based). Panics unless there are 2
    /// or 4 pairs with indices below n.
    pub fn new(n: usize, pairs: &[(usize, usize)]) -> Self {
        assert!(
            pairs.len() == 2 || pairs.len() == 4,
            "moment keys have degree 2 or 4"
        );
        let mut xexp = vec![0u8; n];
        let mut yexp = vec![0u8; n];
        for &(i, j) in pairs {
            assert!(i < n && j < n);
            xexp[i] += 1;
            yexp[j] += 1;
        }
        MomentKey {
            n,
            xexp,
            yexp,
            degree: pairs.len(),
        }
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    /// True when some variable index appears an odd number of times in
    /// total; the integral is then zero by the reflection symmetry of σ.
    pub fn odd_index(&self) -> bool {
        self.xexp
            .iter()
            .zip(&self.yexp)
            .any(|(a, b)| (a + b) % 2 == 1)
    }

    fn diagonal_pattern(&self) -> Option<Vec<u8>> {
        if self.xexp == self.yexp {
            let mut mult: Vec<u8> = self.xexp.iter().copied().filter(|&e| e > 0).collect();
            mult.sort_unstable_by(|a, b| b.cmp(a));
            Some(mult)
        } else {
            None
        }
    }

    /// The monomial as a polynomial, for Monte Carlo cross-checks.
    pub fn to_poly(&self) -> PolyXY {
        PolyXY {
            n: self.n,
            terms: vec![(self.xexp.clone(), self.yexp.clone(), 1.0)],
        }
    }
}

/// Exact value of a degree-2 moment `∫ z_{ij} z_{kl} dσ`.
pub fn moment2(n: usize, key: &MomentKey) -> Rat {
    assert!(n >= 3 && key.n == n);
    assert_eq!(key.degree(), 2);
    if key.odd_index() {
        return Rat::zero();
    }
    match key.diagonal_pattern() {
        Some(p) if p == [2] => i1(n as i64),
        Some(p) if p == [1, 1] => i2(n as i64),
        // Remaining even pattern: x-support 2e_a, y-support 2e_b with a ≠ b.
        _ => i3(n as i64),
    }
}

/// Exact value of a tabulated degree-4 moment; `None` for even patterns
/// outside the table (callers fall back to Monte Carlo).
pub fn moment4(n: usize, key: &MomentKey) -> Option<Rat> {
    assert!(n >= 3 && key.n == n);
    assert_eq!(key.degree(), 4);
    if key.odd_index() {
        return Some(Rat::zero());
    }
    let pattern = key.diagonal_pattern()?;
    let m = n as i64;
    match pattern.as_slice() {
        [4] => Some(j1(m)),
        [3, 1] => Some(j2(m)),
        [2, 2] => Some(j3(m)),
        [2, 1, 1] => Some(j4(m)),
        [1, 1, 1, 1] => Some(j5(m)),
        _ => unreachable!("degree-4 diagonal multiplicities"),
    }
}

// ---------------------------------------------------------------------------
// Sampling.
// ---------------------------------------------------------------------------

/// A point of T: orthonormal (x, y).
#[derive(Clone, Debug)]
pub struct StiefelSample {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl StiefelSample {
    pub fn constraint_residuals(&self) -> (f64, f64, f64) {
        let nx = norm(&self.x);
        let ny = norm(&self.y);
        let d = dot(&self.x, &self.y);
        ((nx - 1.0).abs(), (ny - 1.0).abs(), d.abs())
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// How to draw from σ.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SampleMethod {
    /// x uniform on the sphere via normalized Gaussians; y an independent
    /// Gaussian projected onto x⊥ and normalized. This law is
    /// SO(n)-invariant, hence equals σ by uniqueness.
    GaussianProjection,
    /// The Givens-angle parameterization with sin-power angle densities;
    /// kept as a cross-check sampler.
    GivensAngles,
}

/// Seedable sampler for σ.
pub struct StiefelSampler {
    pub n: usize,
    pub method: SampleMethod,
    rng: ChaCha8Rng,
}

impl StiefelSampler {
    pub fn new(n: usize, seed: u64) -> Self {
        assert!(n >= 3, "T needs n ≥ 3 to be an SO(n) orbit");
        StiefelSampler {
            n,
            method: SampleMethod::GaussianProjection,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn with_method(mut self, method: SampleMethod) -> Self {
        self.method = method;
        self
    }

    /// Dedicated sub-stream, for deterministic parallel partitioning.
    pub fn with_stream(mut self, stream: u64) -> Self {
        self.rng.set_stream(stream);
        self
    }

    pub fn draw(&mut self) -> StiefelSample {
        match self.method {
            SampleMethod::GaussianProjection => self.draw_gaussian(),
            SampleMethod::GivensAngles => self.draw_givens(),
        }
    }

    fn gaussian_vec(&mut self) -> Vec<f64> {
        (0..self.n)
            .map(|_| StandardNormal.sample(&mut self.rng))
            .collect()
    }

    fn draw_gaussian(&mut self) -> StiefelSample {
        loop {
            let mut x = self.gaussian_vec();
            let nx = norm(&x);
            if nx < 1e-8 {
                continue;
            }
            x.iter_mut().for_each(|v| *v /= nx);
            let g = self.gaussian_vec();
            let proj = dot(&x, &g);
            let mut y: Vec<f64> = g.iter().zip(&x).map(|(gi, xi)| gi - proj * xi).collect();
            let ny = norm(&y);
            if ny < 1e-8 {
                continue;
            }
            y.iter_mut().for_each(|v| *v /= ny);
            // One exact re-projection pass keeps |xᵀy| at rounding level.
            let d = dot(&x, &y);
            y.iter_mut().zip(&x).for_each(|(yi, xi)| *yi -= d * xi);
            let ny = norm(&y);
            y.iter_mut().for_each(|v| *v /= ny);
            return StiefelSample { x, y };
        }
    }

    /// Angle with density ∝ sin^k on [0, π]: cos φ = 1 − 2B with
    /// B ~ Beta((k+1)/2, (k+1)/2).
    fn sin_power_angle(&mut self, k: usize) -> f64 {
        let a = (k as f64 + 1.0) / 2.0;
        let beta = Beta::new(a, a).expect("valid Beta parameters");
        let b: f64 = beta.sample(&mut self.rng);
        (1.0 - 2.0 * b).clamp(-1.0, 1.0).acos()
    }

    fn sphere_angles(&mut self, dim: usize) -> Vec<f64> {
        // dim = m gives angles for S^{m−1}: m−2 sin-power angles + one uniform.
        let mut phis = Vec::with_capacity(dim - 1);
        for i in 1..=dim.saturating_sub(2) {
            phis.push(self.sin_power_angle(dim - 1 - i));
        }
        phis.push(self.rng.gen_range(0.0..std::f64::consts::TAU));
        phis
    }

    fn draw_givens(&mut self) -> StiefelSample {
        let n = self.n;
        let phis = self.sphere_angles(n);
        let h = givens_product(n, &phis);
        let psis = self.sphere_angles(n - 1);
        let u = spherical_point(n - 1, &psis);
        let x: Vec<f64> = (0..n).map(|r| h[(r, 0)]).collect();
        let mut y = vec![0.0; n];
        for (r, yr) in y.iter_mut().enumerate() {
            for c in 1..n {
                *yr += h[(r, c)] * u[c - 1];
            }
        }
        // Same rounding-level cleanup as the Gaussian path.
        let d = dot(&x, &y);
        let mut y: Vec<f64> = y.iter().zip(&x).map(|(yi, xi)| yi - d * xi).collect();
        let ny = norm(&y);
        y.iter_mut().for_each(|v| *v /= ny);
        StiefelSample { x, y }
    }
}

/// Product `R^{n−1}(φ_{n−1}) ⋯ R^1(φ_1)` of Givens rotations in the planes
/// (j, j+1); its first column is the spherical-coordinate point of the φ's.
fn givens_product(n: usize, phis: &[f64]) -> DMatrix<f64> {
    let mut h = DMatrix::<f64>::identity(n, n);
    for (j, &phi) in phis.iter().enumerate() {
        let mut r = DMatrix::<f64>::identity(n, n);
        let (s, c) = phi.sin_cos();
        r[(j, j)] = c;
        r[(j, j + 1)] = -s;
        r[(j + 1, j)] = s;
        r[(j + 1, j + 1)] = c;
        h = r * h;
    }
    h
}

fn spherical_point(dim: usize, phis: &[f64]) -> Vec<f64> {
    let mut v = vec![0.0; dim];
    let mut sin_prod = 1.0;
    for i in 0..dim - 1 {
        v[i] = sin_prod * phis[i].cos();
        sin_prod *= phis[i].sin();
    }
    v[dim - 1] = sin_prod;
    v
}

/// One-shot draw from σ.
pub fn sample(n: usize, seed: u64) -> StiefelSample {
    StiefelSampler::new(n, seed).draw()
}

// ---------------------------------------------------------------------------
// Monte Carlo integration.
// ---------------------------------------------------------------------------

/// Sparse polynomial in (x, y) with float coefficients; the integrand type.
#[derive(Clone, Debug, PartialEq)]
pub struct PolyXY {
    pub n: usize,
    /// Terms (x-exponents, y-exponents, coefficient).
    pub terms: Vec<(Vec<u8>, Vec<u8>, f64)>,
}

impl PolyXY {
    pub fn zero(n: usize) -> Self {
        PolyXY { n, terms: vec![] }
    }

    pub fn from_biform(p: &BiformQuad<f64>) -> Self {
        let n = p.n;
        let mut terms = Vec::with_capacity(p.coeffs.len());
        for (&(i, j, k, l), &c) in &p.coeffs {
            let mut xe = vec![0u8; n];
            let mut ye = vec![0u8; n];
            xe[i] += 1;
            xe[j] += 1;
            ye[k] += 1;
            ye[l] += 1;
            terms.push((xe, ye, c));
        }
        PolyXY { n, terms }
    }

    /// The bilinear form xᵀBy as a polynomial.
    pub fn from_bilinear(g: &BilinearForm<f64>) -> Self {
        let n = g.n;
        let mut terms = Vec::new();
        for a in 0..n {
            for b in 0..n {
                let c = *g.b.get(a, b);
                if c != 0.0 {
                    let mut xe = vec![0u8; n];
                    let mut ye = vec![0u8; n];
                    xe[a] = 1;
                    ye[b] = 1;
                    terms.push((xe, ye, c));
                }
            }
        }
        PolyXY { n, terms }
    }

    pub fn mul(&self, other: &PolyXY) -> PolyXY {
        assert_eq!(self.n, other.n);
        let mut acc: std::collections::BTreeMap<(Vec<u8>, Vec<u8>), f64> = Default::default();
        for (xa, ya, ca) in &self.terms {
            for (xb, yb, cb) in &other.terms {
                let xe: Vec<u8> = xa.iter().zip(xb).map(|(p, q)| p + q).collect();
                let ye: Vec<u8> = ya.iter().zip(yb).map(|(p, q)| p + q).collect();
                *acc.entry((xe, ye)).or_insert(0.0) += ca * cb;
            }
        }
        PolyXY {
            n: self.n,
            terms: acc
                .into_iter()
                .filter(|(_, c)| *c != 0.0)
                .map(|((xe, ye), c)| (xe, ye, c))
                .collect(),
        }
    }

    pub fn powi(&self, k: usize) -> PolyXY {
        let mut acc = PolyXY {
            n: self.n,
            terms: vec![(vec![0; self.n], vec![0; self.n], 1.0)],
        };
        for _ in 0..k {
            acc = acc.mul(self);
        }
        acc
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (xe, ye, c) in &self.terms {
            let mut t = *c;
            for (i, &e) in xe.iter().enumerate() {
                for _ in 0..e {
                    t *= x[i];
                }
            }
            for (i, &e) in ye.iter().enumerate() {
                for _ in 0..e {
                    t *= y[i];
                }
            }
            acc += t;
        }
        acc
    }
}

const MC_CHUNK: u64 = 1 << 16;

/// Sample mean and standard error of each polynomial over `trials` draws
/// from σ, all polynomials sharing the same sample stream.
///
/// Trials are partitioned into fixed-size chunks on independent RNG
/// sub-streams and reduced in chunk order, so the result is reproducible
/// regardless of thread scheduling.
pub fn mc_integrate_batch(polys: &[PolyXY], n: usize, trials: u64, seed: u64) -> Vec<(f64, f64)> {
    assert!(trials >= 1_000, "too few trials for a standard error");
    let chunks: Vec<(u64, u64)> = (0..trials.div_ceil(MC_CHUNK))
        .map(|c| (c, MC_CHUNK.min(trials - c * MC_CHUNK)))
        .collect();
    let partials: Vec<Vec<(f64, f64)>> = chunks
        .par_iter()
        .map(|&(chunk_idx, len)| {
            let mut sampler = StiefelSampler::new(n, seed).with_stream(chunk_idx + 1);
            let mut acc = vec![(0.0f64, 0.0f64); polys.len()];
            for _ in 0..len {
                let s = sampler.draw();
                for (k, p) in polys.iter().enumerate() {
                    let v = p.eval(&s.x, &s.y);
                    acc[k].0 += v;
                    acc[k].1 += v * v;
                }
            }
            acc
        })
        .collect();
    let mut sums = vec![(0.0f64, 0.0f64); polys.len()];
    for part in &partials {
        for (k, &(s, s2)) in part.iter().enumerate() {
            sums[k].0 += s;
            sums[k].1 += s2;
        }
    }
    let t = trials as f64;
    sums.into_iter()
        .map(|(s, s2)| {
            let mean = s / t;
            let var = (s2 / t - mean * mean).max(0.0);
            (mean, (var / t).sqrt())
        })
        .collect()
}

/// Monte Carlo estimate (mean, standard error) of `∫ p dσ`.
pub fn mc_integrate(p: &PolyXY, n: usize, trials: u64, seed: u64) -> (f64, f64) {
    mc_integrate_batch(std::slice::from_ref(p), n, trials, seed)[0]
}

// ---------------------------------------------------------------------------
// Norms of bilinear forms and the reverse Hölder inequality.
// ---------------------------------------------------------------------------

/// `‖g‖₂² = ∫ (xᵀBy)² dσ`, exactly from degree-2 moments:
/// `I₁ Σ b_ii² + I₂ (Σ_{i≠j} b_ii b_jj + Σ_{i≠j} b_ij b_ji) + I₃ Σ_{i≠j} b_ij²`.
pub fn l2_norm_sq_rational(b: &MatK<Rat>, n: usize) -> Rat {
    assert!(n >= 3 && b.rows == n && b.cols == n);
    let mut diag_sq = Rat::zero();
    let mut cross_diag = Rat::zero();
    let mut cross_transpose = Rat::zero();
    let mut off_sq = Rat::zero();
    for i in 0..n {
        diag_sq = diag_sq + b.get(i, i).clone() * b.get(i, i).clone();
        for j in 0..n {
            if i == j {
                continue;
            }
            cross_diag = cross_diag + b.get(i, i).clone() * b.get(j, j).clone();
            cross_transpose = cross_transpose + b.get(i, j).clone() * b.get(j, i).clone();
            off_sq = off_sq + b.get(i, j).clone() * b.get(i, j).clone();
        }
    }
    let m = n as i64;
    i1(m) * diag_sq + i2(m) * (cross_diag + cross_transpose) + i3(m) * off_sq
}

/// `‖g‖₂`, combining the exact degree-2 moments in floating point.
pub fn l2_norm(g: &BilinearForm<f64>, n: usize) -> f64 {
    assert!(n >= 3);
    let m = n as i64;
    let (v_i1, v_i2, v_i3) = (i1(m).to_f64(), i2(m).to_f64(), i3(m).to_f64());
    let b = &g.b;
    let mut diag_sq = 0.0;
    let mut cross_diag = 0.0;
    let mut cross_transpose = 0.0;
    let mut off_sq = 0.0;
    for i in 0..n {
        diag_sq += b.get(i, i) * b.get(i, i);
        for j in 0..n {
            if i == j {
                continue;
            }
            cross_diag += b.get(i, i) * b.get(j, j);
            cross_transpose += b.get(i, j) * b.get(j, i);
            off_sq += b.get(i, j) * b.get(i, j);
        }
    }
    (v_i1 * diag_sq + v_i2 * (cross_diag + cross_transpose) + v_i3 * off_sq)
        .max(0.0)
        .sqrt()
}

/// Symmetry class of a bilinear form, up to a relative tolerance.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SymmetryClass {
    Symmetric,
    Skew,
    General,
}

pub fn classify(g: &BilinearForm<f64>, rel_tol: f64) -> SymmetryClass {
    let (s, a) = g.split();
    let scale = g.b.max_abs().max(1e-300);
    if a.max_abs() <= rel_tol * scale {
        SymmetryClass::Symmetric
    } else if s.max_abs() <= rel_tol * scale {
        SymmetryClass::Skew
    } else {
        SymmetryClass::General
    }
}

fn dmatrix(b: &MatK<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(b.rows, b.cols, |i, j| *b.get(i, j))
}

/// Eigenvalues of the symmetric part (the `d_i` of the diagonalized form
/// `Σ d_i z_i`).
pub fn symmetric_spectrum(b: &MatK<f64>) -> Vec<f64> {
    let m = dmatrix(b);
    let sym = (&m + m.transpose()) * 0.5;
    sym.symmetric_eigen().eigenvalues.iter().copied().collect()
}

/// Canonical pair values a_i of a skew matrix: the positive block values of
/// its canonical form `Σ a_i (E_{2i−1,2i} − E_{2i,2i−1})`, obtained from the
/// spectrum of BᵀB (each a_i² appears twice).
pub fn skew_canonical_values(b: &MatK<f64>) -> Vec<f64> {
    let m = dmatrix(b);
    let skew = (&m - m.transpose()) * 0.5;
    let gram = skew.transpose() * &skew;
    let mut ev: Vec<f64> = gram
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .map(|v| v.max(0.0))
        .collect();
    ev.sort_by(|a, b| b.partial_cmp(a).unwrap());
    ev.chunks(2)
        .filter(|c| c.len() == 2)
        .map(|c| (0.5 * (c[0] + c[1])).sqrt())
        .collect()
}

/// `‖g‖₄⁴` of a purely symmetric form with spectrum d, in closed form:
/// `Σ d_i⁴ J₁ + 4 Σ_{i≠j} d_i³ d_j J₂ + 6 Σ_{i<j} d_i² d_j² J₃
///  + 12 Σ d_i² d_j d_k J₄ + 24 Σ_{i<j<k<l} d_i d_j d_k d_l J₅`.
pub fn l4_pow4_symmetric(d: &[f64], n: usize) -> f64 {
    let m = n as i64;
    let s1: f64 = d.iter().sum();
    let s2: f64 = d.iter().map(|v| v * v).sum();
    let s3: f64 = d.iter().map(|v| v * v * v).sum();
    let s4: f64 = d.iter().map(|v| v * v * v * v).sum();
    let sum_d3d = s3 * s1 - s4;
    let sum_d2d2 = 0.5 * (s2 * s2 - s4);
    // Σ_{i; j<k, all distinct} d_i² d_j d_k = ½ Σ_i d_i² ((S1−d_i)² − (S2−d_i²)).
    let mut sum_d2dd = 0.0;
    for &di in d {
        let r1 = s1 - di;
        let r2 = s2 - di * di;
        sum_d2dd += di * di * (r1 * r1 - r2);
    }
    sum_d2dd *= 0.5;
    // e₄ by Newton's identities.
    let e1 = s1;
    let e2 = 0.5 * (e1 * s1 - s2);
    let e3 = (e2 * s1 - e1 * s2 + s3) / 3.0;
    let e4 = (e3 * s1 - e2 * s2 + e1 * s3 - s4) / 4.0;
    let mut acc = s4 * j1(m).to_f64()
        + 4.0 * sum_d3d * j2(m).to_f64()
        + 6.0 * sum_d2d2 * j3(m).to_f64()
        + 12.0 * sum_d2dd * j4(m).to_f64();
    if n >= 4 {
        acc += 24.0 * e4 * j5(m).to_f64();
    }
    acc
}

/// `‖g‖₄⁴` of a purely skew form with canonical values a:
/// `Σ a_i⁴ J₆ + 6 Σ_{i<j} a_i² a_j² J₇`.
pub fn l4_pow4_skew(a: &[f64], n: usize) -> f64 {
    let m = n as i64;
    let s2: f64 = a.iter().map(|v| v * v).sum();
    let s4: f64 = a.iter().map(|v| v * v * v * v).sum();
    let mut acc = s4 * j6(m).to_f64();
    if n >= 4 {
        acc += 6.0 * 0.5 * (s2 * s2 - s4) * j7(m).to_f64();
    }
    acc
}

/// How ‖g‖₄ was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum L4Route {
    ClosedForm,
    MonteCarlo,
}

/// `‖g‖₄`: closed form for purely symmetric or purely skew forms, Monte
/// Carlo for mixed ones.
pub fn l4_norm(g: &BilinearForm<f64>, n: usize, mc_trials: u64, seed: u64) -> (f64, L4Route) {
    match classify(g, 1e-12) {
        SymmetryClass::Symmetric => {
            let d = symmetric_spectrum(&g.b);
            (
                l4_pow4_symmetric(&d, n).max(0.0).powf(0.25),
                L4Route::ClosedForm,
            )
        }
        SymmetryClass::Skew => {
            let a = skew_canonical_values(&g.b);
            (l4_pow4_skew(&a, n).max(0.0).powf(0.25), L4Route::ClosedForm)
        }
        SymmetryClass::General => {
            let p4 = PolyXY::from_bilinear(g).powi(4);
            let (est, _) = mc_integrate(&p4, n, mc_trials, seed);
            (est.max(0.0).powf(0.25), L4Route::MonteCarlo)
        }
    }
}

/// Result of a reverse Hölder check.
#[derive(Clone, Debug)]
pub struct HolderCheck {
    pub class: SymmetryClass,
    pub ratio: f64,
    pub bound: f64,
    pub pass: bool,
    pub l4_route: L4Route,
}

/// Checks `‖g‖₄ ≤ C ‖g‖₂` with C = √3 (symmetric), ⁴√6 (skew), √6 (general).
///
/// Errors on forms that vanish on T (multiples of xᵀy, e.g. B = I).
pub fn holder_check(
    g: &BilinearForm<f64>,
    n: usize,
    mc_trials: u64,
    seed: u64,
) -> Result<HolderCheck, String> {
    let l2 = l2_norm(g, n);
    let scale = g.b.max_abs();
    if l2 <= 1e-14 * scale.max(1.0) {
        return Err("form vanishes on T (a multiple of xᵀy)".into());
    }
    let class = classify(g, 1e-12);
    let (l4, route) = l4_norm(g, n, mc_trials, seed);
    let bound = match class {
        SymmetryClass::Symmetric => 3f64.sqrt(),
        SymmetryClass::Skew => 6f64.powf(0.25),
        SymmetryClass::General => 6f64.sqrt(),
    };
    let ratio = l4 / l2;
    Ok(HolderCheck {
        class,
        ratio,
        bound,
        pass: ratio <= bound + 1e-9,
        l4_route: route,
    })
}

/// Sharp symmetric witness ratio `(9n(n+2)/((n+4)(n+6)))^{1/4}` attained by z₁.
pub fn sharp_ratio_symmetric(n: usize) -> f64 {
    let n = n as f64;
    (9.0 * n * (n + 2.0) / ((n + 4.0) * (n + 6.0))).powf(0.25)
}

/// Sharp skew witness ratio `(6(n−1)n/((n+1)(n+2)))^{1/4}` attained by w₁₂.
pub fn sharp_ratio_skew(n: usize) -> f64 {
    let n = n as f64;
    (6.0 * (n - 1.0) * n / ((n + 1.0) * (n + 2.0))).powf(0.25)
}

// ---------------------------------------------------------------------------
// The volume-ratio bound.
// ---------------------------------------------------------------------------

/// The closed-form bound data for the fraction of cross-positive maps that
/// are completely cross-positive.
#[derive(Clone, Copy, Debug)]
pub struct ProbabilityBound {
    /// Dimension of the average-zero hyperplane: `(n(n+1)/2)² − n² − 1`.
    pub d_m: u128,
    /// Dimension `n² − 1` of the bilinear quotient space.
    pub d_u: u64,
    /// The bound `(2⁵·2^{1/2}·5²·10^{2/9} / (3^{3/2}·√n))^{D_M}`.
    pub bound: f64,
    /// Its natural log; finite where `bound` overflows.
    pub ln_bound: f64,
}

/// Evaluates the probability bound. The bound is vacuous (≫ 1) for small n
/// and tends to zero once `√n` exceeds the constant ≈ 363.2; `ln_bound`
/// stays finite for every n.
pub fn probability_bound(n: u64) -> ProbabilityBound {
    assert!(n >= 3);
    let d_m = {
        let h = (n as u128) * (n as u128 + 1) / 2;
        h * h - (n as u128) * (n as u128) - 1
    };
    let d_u = n * n - 1;
    let base =
        32.0 * 2f64.sqrt() * 25.0 * 10f64.powf(2.0 / 9.0) / (3f64.powf(1.5) * (n as f64).sqrt());
    let ln_bound = d_m as f64 * base.ln();
    ProbabilityBound {
        d_m,
        d_u,
        bound: ln_bound.exp(),
        ln_bound,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigInt;

    fn key2(n: usize, pairs: &[(usize, usize)]) -> MomentKey {
        MomentKey::new(n, pairs)
    }

    fn mat_to_rat(b: &MatK<f64>) -> MatK<Rat> {
        let mut out = MatK::zeros(b.rows, b.cols);
        for i in 0..b.rows {
            for j in 0..b.cols {
                let v = *b.get(i, j);
                let scaled = (v * (1u64 << 30) as f64).round() as i64;
                out.set(i, j, Rat::new(BigInt::from(scaled), BigInt::from(1u64 << 30)));
            }
        }
        out
    }

    #[test]
    fn moment_table_against_angle_ratio_oracle() {
        // Independent route: the sine/cosine integral ratios used in the
        // derivation of the table. Exact in rationals for a range of n.
        for n in 3i64..=12 {
            assert_eq!(i1(n), ratio_b(n - 2, 2) * ratio_b(n - 3, 0));
            assert_eq!(
                i2(n),
                -ratio_b(n - 2, 2) * ratio_b(n - 3, 0) * ratio_b(n - 3, 0)
            );
            assert_eq!(j1(n), ratio_c(n - 2, 4) * ratio_c(n - 3, 0));
            assert_eq!(
                j2(n),
                -ratio_c(n - 2, 4) * ratio_b(n - 3, 0) * ratio_c(n - 3, 0)
            );
            assert_eq!(
                j3(n),
                ratio_c(n - 2, 4) * ratio_c(n - 3, 0) * ratio_c(n - 3, 0)
                    + ratio_b(n - 2, 4)
                        * ratio_b(n - 3, 2)
                        * ratio_b(n - 3, 2)
                        * ratio_b(n - 4, 0)
            );
            assert_eq!(
                j4(n),
                ratio_c(n - 2, 4) * ratio_b(n - 3, 2) * ratio_b(n - 4, 0) * ratio_c(n - 3, 0)
                    - ratio_b(n - 2, 4)
                        * ratio_b(n - 3, 2)
                        * ratio_b(n - 3, 2)
                        * ratio_b(n - 4, 0)
                        * ratio_b(n - 4, 0)
            );
            // J₆ = 2∫x₂⁴y₁⁴ − 8∫x₁x₂³y₁³y₂ + 6J₃ with the two direct
            // integrals in ratio form.
            let j6_1 = ratio_a(n - 2, 8) * ratio_c(n - 3, 0) * ratio_c(n - 3, 0);
            let j6_2 = -ratio_b(n - 2, 6) * ratio_c(n - 3, 0) * ratio_c(n - 3, 0);
            assert_eq!(j6(n), rat(2) * j6_1 - rat(8) * j6_2 + rat(6) * j3(n));
        }
    }

    #[test]
    fn moment_values_at_small_n() {
        assert_eq!(i1(3), Rat::from_ratio(1, 15));
        assert_eq!(i2(3), Rat::from_ratio(-1, 30));
        assert_eq!(i3(3), Rat::from_ratio(2, 15));
        assert_eq!(i5(3), Rat::from_ratio(1, 3));
        assert_eq!(j1(3), Rat::from_ratio(1, 105));
        assert_eq!(j6(3), Rat::from_ratio(1, 5));
        assert_eq!(j5(4), Rat::from_ratio(1, 9600));
        assert_eq!(j7(4), Rat::from_ratio(1, 90));
        // n = 5 quadruple moment, cross-checked by the quartic sum rule.
        assert_eq!(j5(5), Rat::from_ratio(1, 27720));
    }

    #[test]
    fn normalization_and_linear_relations_exact() {
        for n in 3i64..=20 {
            // n·I₁ + n(n−1)·I₃ = 1.
            assert_eq!(rat(n) * i1(n) + rat(n * (n - 1)) * i3(n), rat(1));
            assert_eq!(i2(n), -i1(n) / rat(n - 1));
            assert_eq!(i4(n), rat(2) * (i3(n) + i2(n)));
            assert_eq!(i5(n), rat(2) * (i3(n) - i2(n)));
            assert_eq!(j2(n), -j1(n) / rat(n - 1));
            if n >= 4 {
                assert_eq!(j7(n), j6(n) / rat(6));
            }
        }
    }

    #[test]
    fn quartic_sum_rule_n4() {
        // 0 = ∫ (z₁+z₂+z₃+z₄)⁴ dσ = 4J₁ + 48J₂ + 36J₃ + 144J₄ + 24J₅ at n = 4.
        let n = 4;
        let total = rat(4) * j1(n)
            + rat(48) * j2(n)
            + rat(36) * j3(n)
            + rat(144) * j4(n)
            + rat(24) * j5(n);
        assert!(total.is_zero());
    }

    #[test]
    fn moment2_classification() {
        let n = 3;
        assert_eq!(moment2(n, &key2(n, &[(0, 0), (0, 0)])), i1(3));
        assert_eq!(moment2(n, &key2(n, &[(0, 1), (0, 1)])), i3(3));
        // z₁₂ z₂₁ is the monomial z₁z₂.
        assert_eq!(moment2(n, &key2(n, &[(0, 1), (1, 0)])), i2(3));
        assert_eq!(moment2(n, &key2(n, &[(0, 0), (1, 1)])), i2(3));
        // Odd-index rule: z₁₂ z₁₃.
        assert!(moment2(n, &key2(n, &[(0, 1), (0, 2)])).is_zero());
    }

    #[test]
    fn moment4_classification() {
        let n = 4;
        let m4 = |pairs: &[(usize, usize)]| moment4(n, &MomentKey::new(n, pairs));
        assert_eq!(m4(&[(0, 0); 4]), Some(j1(4)));
        assert_eq!(m4(&[(0, 0), (0, 0), (0, 0), (1, 1)]), Some(j2(4)));
        assert_eq!(m4(&[(0, 0), (0, 0), (1, 1), (1, 1)]), Some(j3(4)));
        assert_eq!(m4(&[(0, 0), (0, 0), (1, 1), (2, 2)]), Some(j4(4)));
        assert_eq!(m4(&[(0, 0), (1, 1), (2, 2), (3, 3)]), Some(j5(4)));
        // z₁₂²z₂₁² is the diagonal monomial z₁²z₂².
        assert_eq!(m4(&[(0, 1), (0, 1), (1, 0), (1, 0)]), Some(j3(4)));
        // Even patterns off the table: z₁₂⁴ and z₁₂³z₂₁ (each index occurs
        // four times, so the odd-index rule does not apply; the latter is a
        // genuinely nonzero untabulated integral).
        assert_eq!(m4(&[(0, 1); 4]), None);
        assert_eq!(m4(&[(0, 1), (0, 1), (0, 1), (1, 0)]), None);
        // Odd-index zero: z₁₂³z₁₃ has index 2 thrice and index 3 once.
        assert_eq!(m4(&[(0, 1), (0, 1), (0, 1), (0, 2)]), Some(Rat::zero()));
    }

    #[test]
    fn samples_satisfy_constraints() {
        for seed in 0..5 {
            let s = sample(3, seed);
            let (ex, ey, exy) = s.constraint_residuals();
            assert!(ex <= 1e-14 && ey <= 1e-14 && exy <= 1e-14);
        }
        let mut giv = StiefelSampler::new(5, 9).with_method(SampleMethod::GivensAngles);
        for _ in 0..5 {
            let s = giv.draw();
            let (ex, ey, exy) = s.constraint_residuals();
            assert!(ex <= 1e-12 && ey <= 1e-12 && exy <= 1e-12);
        }
    }

    #[test]
    fn mc_matches_exact_moments() {
        let n = 3;
        let z1sq = MomentKey::new(n, &[(0, 0), (0, 0)]).to_poly();
        let z1z2 = MomentKey::new(n, &[(0, 0), (1, 1)]).to_poly();
        let res = mc_integrate_batch(&[z1sq, z1z2], n, 200_000, 42);
        let (m1, se1) = res[0];
        let (m2, se2) = res[1];
        assert!(
            (m1 - i1(3).to_f64()).abs() <= 4.0 * se1,
            "I₁: {m1} vs {}",
            i1(3).to_f64()
        );
        assert!(
            (m2 - i2(3).to_f64()).abs() <= 4.0 * se2,
            "I₂: {m2} vs {}",
            i2(3).to_f64()
        );
    }

    #[test]
    fn givens_sampler_agrees_with_gaussian_on_moments() {
        let n = 4;
        let poly = MomentKey::new(n, &[(0, 1), (0, 1)]).to_poly();
        let exact = i3(4).to_f64();
        let mut giv = StiefelSampler::new(n, 7).with_method(SampleMethod::GivensAngles);
        let trials = 60_000;
        let mut s = 0.0;
        let mut s2 = 0.0;
        for _ in 0..trials {
            let smp = giv.draw();
            let v = poly.eval(&smp.x, &smp.y);
            s += v;
            s2 += v * v;
        }
        let mean = s / trials as f64;
        let se = ((s2 / trials as f64 - mean * mean) / trials as f64).sqrt();
        assert!((mean - exact).abs() <= 4.0 * se, "{mean} vs {exact}");
    }

    #[test]
    fn sphere_product_integrates_to_one() {
        let p = PolyXY::from_biform(&BiformQuad::sphere_product(3));
        let (est, se) = mc_integrate(&p, 3, 10_000, 1);
        assert!((est - 1.0).abs() <= 1e-12);
        assert!(se <= 1e-12);
    }

    #[test]
    fn l2_l4_closed_forms_on_witnesses() {
        let n = 3;
        // g = z₁ (B = E₁₁): ‖g‖₂² = I₁ = 1/15, ‖g‖₄⁴ = J₁ = 1/105.
        let mut g = BilinearForm::<f64>::zero(n);
        g.b.set(0, 0, 1.0);
        assert!((l2_norm(&g, n).powi(2) - 1.0 / 15.0).abs() < 1e-15);
        let (l4, route) = l4_norm(&g, n, 1_000, 0);
        assert_eq!(route, L4Route::ClosedForm);
        assert!((l4.powi(4) - 1.0 / 105.0).abs() < 1e-15);
        // g = w₁₂: ‖g‖₂² = I₅ = 1/3, ‖g‖₄⁴ = J₆ = 1/5.
        let mut w = BilinearForm::<f64>::zero(n);
        w.b.set(0, 1, 1.0);
        w.b.set(1, 0, -1.0);
        assert!((l2_norm(&w, n).powi(2) - 1.0 / 3.0).abs() < 1e-15);
        let (l4w, route_w) = l4_norm(&w, n, 1_000, 0);
        assert_eq!(route_w, L4Route::ClosedForm);
        assert!((l4w.powi(4) - 1.0 / 5.0).abs() < 1e-14);
    }

    #[test]
    fn symmetric_and_skew_parts_are_l2_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let n = 4;
            let mut b = MatK::<f64>::zeros(n, n);
            for i in 0..n {
                for j in 0..n {
                    b.set(i, j, rng.gen_range(-1.0..1.0));
                }
            }
            let g = BilinearForm::from_matrix(b);
            let (s, a) = g.split();
            let gs = BilinearForm::from_matrix(s);
            let ga = BilinearForm::from_matrix(a);
            let lhs = l2_norm(&g, n).powi(2);
            let rhs = l2_norm(&gs, n).powi(2) + l2_norm(&ga, n).powi(2);
            assert!((lhs - rhs).abs() < 1e-13, "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn holder_witness_ratios_match_closed_form() {
        for n in 3..=8 {
            let mut g = BilinearForm::<f64>::zero(n);
            g.b.set(0, 0, 1.0);
            let chk = holder_check(&g, n, 1_000, 0).unwrap();
            assert_eq!(chk.class, SymmetryClass::Symmetric);
            assert!((chk.ratio - sharp_ratio_symmetric(n)).abs() <= 1e-12);
            assert!(chk.pass);
            let mut w = BilinearForm::<f64>::zero(n);
            w.b.set(0, 1, 1.0);
            w.b.set(1, 0, -1.0);
            let chk = holder_check(&w, n, 1_000, 0).unwrap();
            assert_eq!(chk.class, SymmetryClass::Skew);
            assert!((chk.ratio - sharp_ratio_skew(n)).abs() <= 1e-12);
            assert!(chk.pass);
        }
    }

    #[test]
    fn identity_form_vanishes_on_t() {
        let g = BilinearForm::from_matrix(MatK::<f64>::identity(4));
        assert!(holder_check(&g, 4, 1_000, 0).is_err());
    }

    #[test]
    fn l4_symmetric_closed_form_vs_mc() {
        let n = 4;
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let mut b = MatK::<f64>::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v = rng.gen_range(-1.0..1.0);
                b.set(i, j, v);
                b.set(j, i, v);
            }
        }
        let g = BilinearForm::from_matrix(b);
        let d = symmetric_spectrum(&g.b);
        let exact = l4_pow4_symmetric(&d, n);
        let p4 = PolyXY::from_bilinear(&g).powi(4);
        let (est, se) = mc_integrate(&p4, n, 200_000, 123);
        assert!((est - exact).abs() <= 4.0 * se, "{est} vs {exact} (se {se})");
    }

    #[test]
    fn l4_skew_closed_form_vs_mc() {
        let n = 5;
        let mut rng = ChaCha8Rng::seed_from_u64(78);
        let mut b = MatK::<f64>::zeros(n, n);
        for i in 0..n {
            for j in i + 1..n {
                let v = rng.gen_range(-1.0..1.0);
                b.set(i, j, v);
                b.set(j, i, -v);
            }
        }
        let g = BilinearForm::from_matrix(b);
        let a = skew_canonical_values(&g.b);
        let exact = l4_pow4_skew(&a, n);
        let p4 = PolyXY::from_bilinear(&g).powi(4);
        let (est, se) = mc_integrate(&p4, n, 200_000, 321);
        assert!((est - exact).abs() <= 4.0 * se, "{est} vs {exact} (se {se})");
    }

    #[test]
    fn l2_rational_agrees_with_float() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 3;
        let mut b = MatK::<f64>::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                b.set(i, j, rng.gen_range(-2.0..2.0));
            }
        }
        let exact = l2_norm_sq_rational(&mat_to_rat(&b), n).to_f64();
        let rounded = BilinearForm::from_matrix(mat_to_rat(&b).to_f64());
        let float = l2_norm(&rounded, n).powi(2);
        assert!((exact - float).abs() < 1e-12);
    }

    #[test]
    fn probability_bound_dimensions_and_tail() {
        let b3 = probability_bound(3);
        assert_eq!(b3.d_m, 26);
        assert_eq!(b3.d_u, 8);
        let b4 = probability_bound(4);
        assert_eq!(b4.d_m, 83);
        // The bound tends to zero: beyond n ≈ 363² the base drops below 1
        // and ln(bound) decreases monotonically to −∞.
        let start = 131_920u64;
        let mut prev = probability_bound(start).ln_bound;
        assert!(prev < 0.0);
        for n in start + 1..start + 20 {
            let cur = probability_bound(n).ln_bound;
            assert!(cur < prev);
            prev = cur;
        }
        assert!(probability_bound(1_000_000).ln_bound < -1e10);
    }
}
