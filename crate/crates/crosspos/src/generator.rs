//! Randomized construction of proper cross-positive maps.
//!
//! Biquadratic biforms correspond to quadratic forms on the variety of
//! rank-one traceless matrices: the projectivized zero locus V(J_n) of the
//! 2×2 minors of `(z_ij)` together with `g₀ = Σ z_ii`, where `z_ij = x_i y_j`.
//! Because V(J_n) is smooth, irreducible, and not of minimal degree for
//! n ≥ 3, quadratic forms that are nonnegative on it but not sums of
//! squares exist, and a Monte Carlo procedure finds them from random data:
//!
//! 1. pick e+1 orthogonal pairs (x⁽ⁱ⁾, y⁽ⁱ⁾), e = (n−1)², and set
//!    z⁽ⁱ⁾ = x⁽ⁱ⁾ ⊗ y⁽ⁱ⁾;
//! 2. pick d = 2n−3 linear forms h₁…h_d vanishing at all e+1 points and one
//!    more form h₀ vanishing at the first e only;
//! 3. pick a quadratic form f vanishing to second order at z⁽¹⁾…z⁽ᵉ⁾
//!    (enforced through the tangent kernels of the variety) that stays
//!    outside the span of the products of the h's and the quadrics cut out
//!    by the variety's generators;
//! 4. find δ > 0 with `F_δ = δf + Σ h_i²` nonnegative on the variety by
//!    bisection against the Positivstellensatz SDP. Every such F_δ is
//!    nonnegative but not a sum of squares, i.e. a proper cross-positive
//!    map.
//!
//! Step 2's exact intersection-count verification is omitted (it would need
//! Gröbner bases); with continuous random data the needed genericity holds
//! with probability 1, which makes this a Monte Carlo generator.

use crate::certify::{
    bisect_delta_at_zeros, certify_sos_mod_i, BisectOptions, NotSosWitness, PsatzCertificate,
    SosVerdict,
};
use crate::polyalg::{BiformQuad, BilinearForm, MatK};
use crate::scalar::binomial;
use crate::sdp::SdpBackend;
use nalgebra::{DMatrix, DVector};
use num_rational::BigRational;
use num_traits::Zero;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Structural data of the rank-one traceless variety.
#[derive(Clone, Debug)]
pub struct SegreData {
    pub n: usize,
    /// dim V_C(J_n) = 2n − 3.
    pub d: usize,
    /// codim in the trace hyperplane: (n − 1)².
    pub e: usize,
    /// The 2×2 minors `z_ij z_kl − z_il z_kj`, 1 ≤ i < k ≤ n, 1 ≤ j < l ≤ n,
    /// stored as (i, j, k, l) with 0-based indices.
    pub minors: Vec<(usize, usize, usize, usize)>,
}

impl SegreData {
    pub fn new(n: usize) -> Self {
        assert!(n >= 3);
        let mut minors = Vec::new();
        for i in 0..n {
            for k in i + 1..n {
                for j in 0..n {
                    for l in j + 1..n {
                        minors.push((i, j, k, l));
                    }
                }
            }
        }
        debug_assert_eq!(minors.len(), (n * (n - 1) / 2) * (n * (n - 1) / 2));
        SegreData {
            n,
            d: 2 * n - 3,
            e: (n - 1) * (n - 1),
            minors,
        }
    }

    /// Degree of the variety: binom(2n−2, n−1).
    pub fn degree(&self) -> u128 {
        binomial(2 * self.n as u64 - 2, self.n as u64 - 1)
    }

    /// The variety is not of minimal degree: deg > 1 + codim for n ≥ 3.
    pub fn exceeds_minimal_degree(&self) -> bool {
        self.degree() > 1 + self.e as u128
    }

    fn zidx(&self, i: usize, j: usize) -> usize {
        i * self.n + j
    }

    /// Gradients of g₀ and every minor at a point z, stacked as rows.
    pub fn gradient_matrix(&self, z: &[f64]) -> DMatrix<f64> {
        let n = self.n;
        let rows = 1 + self.minors.len();
        let mut m = DMatrix::zeros(rows, n * n);
        for i in 0..n {
            m[(0, self.zidx(i, i))] = 1.0;
        }
        for (r, &(i, j, k, l)) in self.minors.iter().enumerate() {
            // ∇(z_ij z_kl − z_il z_kj)
            m[(r + 1, self.zidx(i, j))] += z[self.zidx(k, l)];
            m[(r + 1, self.zidx(k, l))] += z[self.zidx(i, j)];
            m[(r + 1, self.zidx(i, l))] -= z[self.zidx(k, j)];
            m[(r + 1, self.zidx(k, j))] -= z[self.zidx(i, l)];
        }
        m
    }
}

/// Degree of the variety as a standalone function of n.
pub fn variety_degree(n: usize) -> u128 {
    binomial(2 * n as u64 - 2, n as u64 - 1)
}

pub fn variety_dim(n: usize) -> usize {
    2 * n - 3
}

pub fn variety_codim(n: usize) -> usize {
    (n - 1) * (n - 1)
}

/// Errors from the randomized pipeline. Degeneracies have probability zero
/// for continuous data; hitting one means re-seeding.
#[derive(Clone, Debug)]
pub enum GenError {
    RankDeficient(String),
    KernelDimension { point: usize, got: usize, want: usize },
    SpanTestExhausted,
    NoDeltaFound(Box<GeneratorOutput>),
    Certification(String),
}

impl std::fmt::Display for GenError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            GenError::RankDeficient(s) => write!(f, "rank-deficient point matrix: {s}"),
            GenError::KernelDimension { point, got, want } => write!(
                f,
                "tangent kernel at point {point} has dimension {got}, expected {want}"
            ),
            GenError::SpanTestExhausted => write!(f, "span test failed for all retries"),
            GenError::NoDeltaFound(_) => write!(f, "no certifiable δ above the floor"),
            GenError::Certification(s) => write!(f, "certification failed: {s}"),
        }
    }
}

/// Everything the pipeline produced.
#[derive(Clone, Debug)]
pub struct GeneratorOutput {
    pub n: usize,
    pub seeds: Vec<(Vec<f64>, Vec<f64>)>,
    pub z_points: Vec<Vec<f64>>,
    /// h₀ first, then h₁…h_d.
    pub h_forms: Vec<Vec<f64>>,
    pub tangent_bases: Vec<Vec<Vec<f64>>>,
    /// The symmetric n²×n² matrix V with f(z) = zᵀVz.
    pub v: DMatrix<f64>,
    pub delta: f64,
    /// δf + Σ h_i² translated to (x, y) variables.
    pub f_biform: BiformQuad<f64>,
    pub h_sq_biform: BiformQuad<f64>,
    pub capital_f: BiformQuad<f64>,
    pub psatz: Option<PsatzCertificate>,
    pub not_sos: Option<NotSosWitness>,
}

/// Orthogonal pairs with Gaussian x and Gaussian y projected onto x⊥.
pub fn sample_orthogonal_pairs(n: usize, count: usize, seed: u64) -> Vec<(Vec<f64>, Vec<f64>)> {
    assert!(n >= 3);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let x: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let nx2: f64 = x.iter().map(|v| v * v).sum();
        if nx2 < 1e-12 {
            continue;
        }
        let g: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let proj = x.iter().zip(&g).map(|(a, b)| a * b).sum::<f64>() / nx2;
        let y: Vec<f64> = g.iter().zip(&x).map(|(gi, xi)| gi - proj * xi).collect();
        if y.iter().map(|v| v * v).sum::<f64>() < 1e-12 {
            continue;
        }
        out.push((x, y));
    }
    out
}

/// Exact-rational variant: small integer x, integer y projected onto x⊥
/// inside the rationals, so xᵀy = 0 exactly.
pub fn sample_orthogonal_pairs_rational(
    n: usize,
    count: usize,
    seed: u64,
) -> Vec<(Vec<BigRational>, Vec<BigRational>)> {
    use crate::scalar::Coeff;
    assert!(n >= 3);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let x: Vec<BigRational> = (0..n)
            .map(|_| BigRational::from_int(rng.gen_range(-9i64..=9)))
            .collect();
        let g: Vec<BigRational> = (0..n)
            .map(|_| BigRational::from_int(rng.gen_range(-9i64..=9)))
            .collect();
        let nx2 = x.iter().fold(BigRational::zero(), |a, v| a + v * v);
        if nx2.is_zero() {
            continue;
        }
        let dot = x
            .iter()
            .zip(&g)
            .fold(BigRational::zero(), |a, (p, q)| a + p * q);
        let coef = dot / nx2;
        let y: Vec<BigRational> = g
            .iter()
            .zip(&x)
            .map(|(gi, xi)| gi.clone() - coef.clone() * xi.clone())
            .collect();
        if y.iter().all(|v| v.is_zero()) {
            continue;
        }
        out.push((x, y));
    }
    out
}

/// Kronecker product x ⊗ y as a flat vector, z[(i·n)+j] = x_i y_j.
pub fn z_point(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut z = Vec::with_capacity(n * n);
    for xi in x {
        for yj in y {
            z.push(xi * yj);
        }
    }
    z
}

/// Orthonormal basis of the null space of `rows`, from the spectrum of the
/// Gram matrix AᵀA (the thin SVD does not expose the cokernel).
fn null_space(rows: &DMatrix<f64>, rel_tol: f64) -> Vec<DVector<f64>> {
    let gram = rows.transpose() * rows;
    let eig = gram.symmetric_eigen();
    let lmax = eig.eigenvalues.iter().fold(0.0f64, |a, &b| a.max(b));
    let thr = (rel_tol * rel_tol).max(1e-13) * lmax.max(1e-300);
    let mut out = Vec::new();
    for (k, &lam) in eig.eigenvalues.iter().enumerate() {
        if lam <= thr {
            out.push(eig.eigenvectors.column(k).into_owned());
        }
    }
    out
}

/// Gaussian combinations inside a kernel basis, orthonormalized.
fn random_kernel_vectors(
    basis: &[DVector<f64>],
    count: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<DVector<f64>> {
    let dim = basis[0].len();
    let mut m = DMatrix::zeros(dim, count);
    for c in 0..count {
        let mut v = DVector::zeros(dim);
        for b in basis {
            let w: f64 = StandardNormal.sample(rng);
            v += b * w;
        }
        m.set_column(c, &v);
    }
    let qr = m.qr();
    let q = qr.q();
    (0..count).map(|c| q.column(c).into_owned()).collect()
}

/// Steps 1.2–1.3: h₁…h_d annihilate all e+1 points, h₀ the first e only.
pub fn build_h_forms(
    z_points: &[Vec<f64>],
    n: usize,
    seed: u64,
) -> Result<(Vec<f64>, Vec<Vec<f64>>), GenError> {
    let seg = SegreData::new(n);
    let (d, e) = (seg.d, seg.e);
    assert_eq!(z_points.len(), e + 1, "need e+1 = {} points", e + 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x68f0);
    let all = DMatrix::from_fn(e + 1, n * n, |r, c| z_points[r][c]);
    let kernel_all = null_space(&all, 1e-10);
    if kernel_all.len() < d {
        return Err(GenError::RankDeficient(format!(
            "kernel of the full point matrix has dimension {} < d = {d}",
            kernel_all.len()
        )));
    }
    let hs: Vec<Vec<f64>> = random_kernel_vectors(&kernel_all, d, &mut rng)
        .into_iter()
        .map(|v| v.iter().copied().collect())
        .collect();
    let first_e = DMatrix::from_fn(e, n * n, |r, c| z_points[r][c]);
    let kernel_e = null_space(&first_e, 1e-10);
    if kernel_e.is_empty() {
        return Err(GenError::RankDeficient("first-e point matrix".into()));
    }
    let h0 = random_kernel_vectors(&kernel_e, 1, &mut rng)[0]
        .iter()
        .copied()
        .collect();
    Ok((h0, hs))
}

/// Step 2.1: orthonormal kernels of the stacked generator gradients; each
/// must be (d+1)-dimensional because the variety is smooth of dimension d.
pub fn tangent_kernels(
    z_points: &[Vec<f64>],
    segre: &SegreData,
) -> Result<Vec<Vec<Vec<f64>>>, GenError> {
    let want = segre.d + 1;
    let mut out = Vec::with_capacity(segre.e);
    for (idx, z) in z_points.iter().take(segre.e).enumerate() {
        let grads = segre.gradient_matrix(z);
        let kernel = null_space(&grads, 1e-9);
        if kernel.len() != want {
            return Err(GenError::KernelDimension {
                point: idx,
                got: kernel.len(),
                want,
            });
        }
        out.push(
            kernel
                .into_iter()
                .map(|v| v.iter().copied().collect())
                .collect(),
        );
    }
    Ok(out)
}

const SPAN_RESIDUAL_MIN: f64 = 1e-8;
const MAX_RETRIES: usize = 16;

/// Step 2.2: a symmetric tensor v ∈ ℝ^{n⁴}, here the symmetric n²×n² matrix
/// V with f(z) = zᵀVz, satisfying vᵀ(z⁽ⁱ⁾ ⊗ w) = 0 for every tangent vector
/// w at every seed point, and lying outside the span of
/// `{v_i⊗v_j + v_j⊗v_i} ∪ {E_ijkl − E_ilkj} ∪ {trace-pattern tensors}`.
pub fn build_f(
    z_points: &[Vec<f64>],
    tangent_bases: &[Vec<Vec<f64>>],
    h0: &[f64],
    hs: &[Vec<f64>],
    n: usize,
    seed: u64,
) -> Result<DMatrix<f64>, GenError> {
    let nn = n * n;
    let svec_len = nn * (nn + 1) / 2;
    let sq2 = std::f64::consts::SQRT_2;
    let sidx = |i: usize, j: usize| j * (j + 1) / 2 + i;
    let svec = |m: &DMatrix<f64>| -> DVector<f64> {
        let mut v = DVector::zeros(svec_len);
        for j in 0..nn {
            for i in 0..=j {
                v[sidx(i, j)] = if i == j { m[(i, j)] } else { sq2 * m[(i, j)] };
            }
        }
        v
    };
    let unsvec = |v: &DVector<f64>| -> DMatrix<f64> {
        let mut m = DMatrix::zeros(nn, nn);
        for j in 0..nn {
            for i in 0..=j {
                if i == j {
                    m[(i, j)] = v[sidx(i, j)];
                } else {
                    m[(i, j)] = v[sidx(i, j)] / sq2;
                    m[(j, i)] = v[sidx(i, j)] / sq2;
                }
            }
        }
        m
    };

    // Constraints ⟨V, sym(z wᵀ)⟩ = 0.
    let e = tangent_bases.len();
    let mut rows = Vec::new();
    for i in 0..e {
        let z = DVector::from_vec(z_points[i].clone());
        for w in &tangent_bases[i] {
            let wv = DVector::from_vec(w.clone());
            let m = (&z * wv.transpose() + &wv * z.transpose()) * 0.5;
            rows.push(svec(&m).transpose());
        }
    }
    let cmat = DMatrix::from_rows(&rows.iter().map(|r| r.clone_owned()).collect::<Vec<_>>());
    let kernel = null_space(&cmat, 1e-10);
    if kernel.is_empty() {
        return Err(GenError::RankDeficient("second-order constraints".into()));
    }

    // Span to avoid: products of the h's, minor quadrics, trace patterns.
    let mut span_cols: Vec<DVector<f64>> = Vec::new();
    let mut all_h: Vec<DVector<f64>> = Vec::with_capacity(hs.len() + 1);
    all_h.push(DVector::from_vec(h0.to_vec()));
    for h in hs {
        all_h.push(DVector::from_vec(h.clone()));
    }
    for i in 0..all_h.len() {
        for j in i..all_h.len() {
            let m = (&all_h[i] * all_h[j].transpose() + &all_h[j] * all_h[i].transpose()) * 0.5;
            span_cols.push(svec(&m));
        }
    }
    let unit = |i: usize, j: usize| -> DVector<f64> {
        let mut v = DVector::zeros(nn);
        v[i * n + j] = 1.0;
        v
    };
    for i in 0..n {
        for k in i + 1..n {
            for j in 0..n {
                for l in j + 1..n {
                    // E_ijkl − E_ilkj as symmetric matrices.
                    let a = &unit(i, j) * unit(k, l).transpose();
                    let b = &unit(i, l) * unit(k, j).transpose();
                    let m = (&a + a.transpose() - &b - b.transpose()) * 0.5;
                    span_cols.push(svec(&m));
                }
            }
        }
    }
    for j in 0..n {
        for k in 0..n {
            let mut m = DMatrix::zeros(nn, nn);
            for i in 0..n {
                let a = &unit(i, i) * unit(j, k).transpose();
                m += &a + a.transpose();
            }
            span_cols.push(svec(&(m * 0.5)));
        }
    }
    let span = DMatrix::from_columns(&span_cols);
    let span_svd = span.clone().svd(true, false);

    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xf00d);
    for _ in 0..MAX_RETRIES {
        let mut v = DVector::zeros(svec_len);
        for b in &kernel {
            let w: f64 = StandardNormal.sample(&mut rng);
            v += b * w;
        }
        let nrm = v.norm();
        if nrm < 1e-12 {
            continue;
        }
        v /= nrm;
        // Distance from span via the singular basis of the span matrix.
        let u = span_svd.u.as_ref().unwrap();
        let smax = span_svd.singular_values.iter().fold(0.0f64, |a, &b| a.max(b));
        let rank = span_svd
            .singular_values
            .iter()
            .filter(|&&s| s > 1e-12 * smax)
            .count();
        let mut proj = DVector::zeros(svec_len);
        for c in 0..rank {
            let col = u.column(c);
            let w = col.dot(&v);
            proj += col * w;
        }
        let resid = (&v - proj).norm();
        if resid >= SPAN_RESIDUAL_MIN {
            return Ok(unsvec(&v));
        }
    }
    Err(GenError::SpanTestExhausted)
}

/// Turns a quadratic form on z-space into a biform via z_ij → x_i y_j.
pub fn quadratic_to_biform(v: &DMatrix<f64>, n: usize) -> BiformQuad<f64> {
    let mut p = BiformQuad::zero(n);
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                for d in 0..n {
                    let w = v[(a * n + b, c * n + d)];
                    if w != 0.0 {
                        p.add_term(a, c, b, d, w);
                    }
                }
            }
        }
    }
    p
}

/// A linear form on z-space as a bilinear form in (x, y).
pub fn linear_to_bilinear(h: &[f64], n: usize) -> BilinearForm<f64> {
    let mut g = BilinearForm::zero(n);
    for i in 0..n {
        for j in 0..n {
            g.b.set(i, j, h[i * n + j]);
        }
    }
    g
}

fn bilinear_square(g: &BilinearForm<f64>) -> BiformQuad<f64> {
    let n = g.n;
    let mut p = BiformQuad::zero(n);
    for a in 0..n {
        for b in 0..n {
            let gab = *g.b.get(a, b);
            if gab == 0.0 {
                continue;
            }
            for c in 0..n {
                for d in 0..n {
                    let w = gab * g.b.get(c, d);
                    if w != 0.0 {
                        p.add_term(a, c, b, d, w);
                    }
                }
            }
        }
    }
    p
}

/// Options for [`generate`].
#[derive(Clone, Copy, Debug)]
pub struct GenerateOptions {
    pub delta_min: f64,
    pub d_max: usize,
    pub tol: f64,
}

impl Default for GenerateOptions {
    fn default() -> Self {
        GenerateOptions {
            delta_min: 1e-6,
            d_max: 3,
            tol: 1e-7,
        }
    }
}

/// Runs the full pipeline. `user_seeds` replaces the random orthogonal
/// pairs of step 1 when given (they must each satisfy xᵀy ≈ 0).
pub fn generate(
    n: usize,
    seed: u64,
    user_seeds: Option<Vec<(Vec<f64>, Vec<f64>)>>,
    opts: &GenerateOptions,
    backend: &dyn SdpBackend,
) -> Result<GeneratorOutput, GenError> {
    assert!(n >= 3, "the construction needs n ≥ 3");
    let segre = SegreData::new(n);
    let e = segre.e;
    let seeds = match user_seeds {
        Some(s) => {
            assert_eq!(s.len(), e + 1, "need e+1 = {} seed pairs", e + 1);
            for (x, y) in &s {
                let dot: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
                let scale = x
                    .iter()
                    .chain(y.iter())
                    .fold(0.0f64, |acc, v| acc.max(v.abs()))
                    .max(1.0);
                assert!(
                    dot.abs() <= 1e-12 * scale * scale,
                    "seed pair not orthogonal: xᵀy = {dot}"
                );
            }
            s
        }
        None => sample_orthogonal_pairs(n, e + 1, seed),
    };
    let z_points: Vec<Vec<f64>> = seeds.iter().map(|(x, y)| z_point(x, y)).collect();
    let (h0, hs) = build_h_forms(&z_points, n, seed)?;
    let tangent_bases = tangent_kernels(&z_points, &segre)?;
    let v = build_f(&z_points, &tangent_bases, &h0, &hs, n, seed)?;

    let f_biform = quadratic_to_biform(&v, n);
    let mut h_sq = BiformQuad::zero(n);
    h_sq = h_sq.add(&bilinear_square(&linear_to_bilinear(&h0, n)));
    for h in &hs {
        h_sq = h_sq.add(&bilinear_square(&linear_to_bilinear(h, n)));
    }

    let bisect = BisectOptions {
        delta_min: opts.delta_min,
        d_max: opts.d_max,
        tol: opts.tol,
        anchor_seed: seed ^ 0xa11c,
        ..BisectOptions::default()
    };
    let mut out = GeneratorOutput {
        n,
        seeds,
        z_points,
        h_forms: std::iter::once(h0.clone()).chain(hs.iter().cloned()).collect(),
        tangent_bases,
        v,
        delta: 0.0,
        f_biform: f_biform.clone(),
        h_sq_biform: h_sq.clone(),
        capital_f: h_sq.clone(),
        psatz: None,
        not_sos: None,
    };
    // The seed pairs are common zeros of every F_δ on the variety (the h's
    // vanish there and f vanishes to second order), which lets the Psatz
    // solve run facially reduced. Normalize them first.
    let zero_hints: Vec<(Vec<f64>, Vec<f64>)> = out
        .seeds
        .iter()
        .take(e)
        .map(|(x, y)| {
            let nx = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            let ny = y.iter().map(|v| v * v).sum::<f64>().sqrt();
            (
                x.iter().map(|v| v / nx).collect(),
                y.iter().map(|v| v / ny).collect(),
            )
        })
        .collect();
    let Some((delta, cert)) =
        bisect_delta_at_zeros(&f_biform, &h_sq, &bisect, &zero_hints, backend)
    else {
        return Err(GenError::NoDeltaFound(Box::new(out)));
    };
    out.delta = delta;
    out.capital_f = h_sq.add(&f_biform.scale(&delta));
    out.psatz = Some(cert);
    match certify_sos_mod_i(&out.capital_f, opts.tol, backend) {
        SosVerdict::NotSos(w) => {
            out.not_sos = Some(w);
            Ok(out)
        }
        SosVerdict::Sos(_) => Err(GenError::Certification(
            "F_δ unexpectedly certified as a sum of squares".into(),
        )),
        SosVerdict::Inconclusive(m) => Err(GenError::Certification(m)),
    }
}

/// Rational drift-map oracle used in tests: p of `X ↦ CX + XCᵀ` reduces to
/// zero modulo the ideal (exактly).
pub fn lie_biform_reduces_exactly(c: &MatK<BigRational>) -> bool {
    use crate::polyalg::{lie_map, map_to_biform, reduce_mod_ideal};
    let p = map_to_biform(&lie_map(c));
    let (canon, _) = reduce_mod_ideal(&p);
    canon.is_zero()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::certify::{default_backend, verify_notsos_witness, verify_psatz_certificate, Tolerances};
    use crate::fixtures::seed_points_3x3_f64;

    #[test]
    fn structural_constants() {
        for n in 3..=10usize {
            let s = SegreData::new(n);
            assert_eq!(s.d, 2 * n - 3);
            assert_eq!(s.e, (n - 1) * (n - 1));
            assert_eq!(s.minors.len(), (n * (n - 1) / 2).pow(2));
            assert_eq!(s.degree(), binomial(2 * n as u64 - 2, n as u64 - 1));
            assert!(s.exceeds_minimal_degree(), "minimal-degree bound at n={n}");
        }
        let s3 = SegreData::new(3);
        assert_eq!((s3.degree(), s3.d, s3.e), (6, 3, 4));
    }

    #[test]
    fn jacobian_rank_at_unit_point() {
        // At z = e₁⊗e₂ the gradient matrix has rank (n−1)² + 1.
        for n in 3..=4usize {
            let s = SegreData::new(n);
            let mut z = vec![0.0; n * n];
            z[1] = 1.0; // e₁ ⊗ e₂ in row-major layout
            let grads = s.gradient_matrix(&z);
            let rank = grads
                .svd(false, false)
                .singular_values
                .iter()
                .filter(|&&v| v > 1e-9)
                .count();
            assert_eq!(rank, (n - 1) * (n - 1) + 1);
        }
    }

    #[test]
    fn sampled_pairs_are_orthogonal() {
        let pairs = sample_orthogonal_pairs(3, 5, 7);
        assert_eq!(pairs.len(), 5);
        for (x, y) in &pairs {
            let dot: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
            let scale: f64 = x.iter().chain(y.iter()).map(|v| v * v).sum::<f64>().sqrt();
            assert!(dot.abs() <= 1e-14 * scale.max(1.0));
        }
        let rpairs = sample_orthogonal_pairs_rational(4, 10, 9);
        for (x, y) in &rpairs {
            let dot = x
                .iter()
                .zip(y)
                .fold(BigRational::zero(), |a, (p, q)| a + p * q);
            assert!(dot.is_zero());
        }
    }

    #[test]
    fn h_forms_annihilate_seed_points() {
        let seeds = seed_points_3x3_f64();
        let z: Vec<Vec<f64>> = seeds.iter().map(|(x, y)| z_point(x, y)).collect();
        let (h0, hs) = build_h_forms(&z, 3, 3).unwrap();
        for (i, zp) in z.iter().enumerate() {
            for h in &hs {
                let val: f64 = h.iter().zip(zp).map(|(a, b)| a * b).sum();
                assert!(val.abs() <= 1e-12 * zp.iter().map(|v| v.abs()).sum::<f64>());
            }
            let val0: f64 = h0.iter().zip(zp).map(|(a, b)| a * b).sum();
            if i < 4 {
                assert!(val0.abs() <= 1e-12 * zp.iter().map(|v| v.abs()).sum::<f64>());
            } else {
                // h₀ must not annihilate the extra point.
                assert!(val0.abs() > 1e-6);
            }
        }
        // Pushed to (x, y), every h is a bilinear form vanishing at the
        // seed pairs (h₀ only at the first e of them).
        for (which, h) in std::iter::once(&h0).chain(hs.iter()).enumerate() {
            let g = linear_to_bilinear(h, 3);
            for (k, (x, y)) in seeds.iter().enumerate() {
                if which == 0 && k == 4 {
                    continue;
                }
                let v = g.eval(x, y);
                assert!(v.abs() <= 1e-10, "h(x⁽{k}⁾,y⁽{k}⁾) = {v}");
            }
        }
    }

    #[test]
    fn tangent_kernel_dimensions() {
        let seeds = seed_points_3x3_f64();
        let z: Vec<Vec<f64>> = seeds.iter().map(|(x, y)| z_point(x, y)).collect();
        let seg = SegreData::new(3);
        let bases = tangent_kernels(&z, &seg).unwrap();
        assert_eq!(bases.len(), 4);
        for b in &bases {
            assert_eq!(b.len(), 4); // d + 1 = 4 at n = 3
        }
        // n = 4: kernel dimension d + 1 = 6 at random points.
        let seeds4 = sample_orthogonal_pairs(4, 10, 11);
        let z4: Vec<Vec<f64>> = seeds4.iter().map(|(x, y)| z_point(x, y)).collect();
        let seg4 = SegreData::new(4);
        let bases4 = tangent_kernels(&z4[..9].to_vec(), &seg4).unwrap();
        for b in &bases4 {
            assert_eq!(b.len(), 6);
        }
    }

    #[test]
    fn f_vanishes_to_second_order() {
        let seeds = seed_points_3x3_f64();
        let z: Vec<Vec<f64>> = seeds.iter().map(|(x, y)| z_point(x, y)).collect();
        let seg = SegreData::new(3);
        let (h0, hs) = build_h_forms(&z, 3, 5).unwrap();
        let bases = tangent_kernels(&z, &seg).unwrap();
        let v = build_f(&z, &bases, &h0, &hs, 3, 5).unwrap();
        for (i, zp) in z.iter().take(4).enumerate() {
            let zv = DVector::from_vec(zp.clone());
            let scale = zv.norm_squared().max(1.0);
            let fval = (zv.transpose() * &v * &zv)[(0, 0)];
            assert!(fval.abs() <= 1e-12 * scale, "f(z⁽{i}⁾) = {fval}");
            // ∇f = 2Vz must be orthogonal to every tangent vector; check
            // also against a central finite difference of f.
            let grad = &v * &zv * 2.0;
            for w in &bases[i] {
                let wv = DVector::from_vec(w.clone());
                let dir = grad.dot(&wv);
                assert!(dir.abs() <= 1e-10 * scale.sqrt().max(1.0), "∇f·w = {dir}");
                let h = 1e-5;
                let zp_ = &zv + &wv * h;
                let zm_ = &zv - &wv * h;
                let fd = ((zp_.transpose() * &v * &zp_)[(0, 0)]
                    - (zm_.transpose() * &v * &zm_)[(0, 0)])
                    / (2.0 * h);
                assert!(fd.abs() <= 1e-10 * scale, "finite difference {fd}");
            }
        }
    }

    #[test]
    fn generate_from_published_seed_points() {
        let out = generate(
            3,
            42,
            Some(seed_points_3x3_f64()),
            &GenerateOptions::default(),
            &default_backend(),
        )
        .expect("pipeline should succeed on the published seeds");
        assert!(out.delta >= 1e-6);
        let tols = Tolerances::default();
        verify_psatz_certificate(&out.capital_f, out.psatz.as_ref().unwrap(), &tols).unwrap();
        verify_notsos_witness(&out.capital_f, out.not_sos.as_ref().unwrap(), &tols).unwrap();
    }

    #[test]
    fn generate_fresh_random_seed() {
        let out = generate(
            3,
            1234,
            None,
            &GenerateOptions::default(),
            &default_backend(),
        )
        .expect("random seed should succeed");
        assert!(out.delta >= 1e-6);
        // Σh² alone is a sum of squares; adding δf breaks it at the found δ
        // and at δ/10.
        match certify_sos_mod_i(&out.h_sq_biform, 1e-7, &default_backend()) {
            SosVerdict::Sos(_) => {}
            other => panic!("Σh² must be SOS, got {other:?}"),
        }
        for factor in [1.0, 0.1] {
            let fd = out
                .h_sq_biform
                .add(&out.f_biform.scale(&(out.delta * factor)));
            match certify_sos_mod_i(&fd, 1e-7, &default_backend()) {
                SosVerdict::NotSos(w) => {
                    assert!(w.margin >= 1e-7);
                }
                other => panic!("F_δ with factor {factor} should be NotSos, got {other:?}"),
            }
        }
    }
}
