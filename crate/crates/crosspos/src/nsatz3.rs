//! Certificates of cross-positivity for maps on 3×3 matrices.
//!
//! For n = 3 the parameterization Ψ turns cross-positivity of A into
//! positive semidefiniteness of the 2×2 quartic matrix polynomial `Q_A(x)`
//! over ℝ³. When `Q_A` has no nontrivial real zero, that is equivalent to
//!
//! - `Tr Q` strictly positive on ℝ³∖{0} and `det Q ≥ 0`, and
//! - `(x₁²+x₂²+x₃²)^N · Q` being a sum of squares of matrix polynomials for
//!   some power N,
//!
//! both of which this module decides by SDP searches with independent
//! re-verification. The singular case is handled constructively: when
//! `A(x₀x₀ᵀ)` compresses to zero on x₀⊥, an explicit drift matrix C makes
//! `X ↦ A(X) − CX − XCᵀ` positive, and the biform splits as a global sum
//! of squares of bilinear forms plus an ideal multiple.

use crate::certify::{clip_psd, mono_list};
use crate::polyalg::{
    biform_to_map, lie_map, map_to_biform, reduce_mod_ideal, BiformQuad, BilinearForm, Exps, MatK,
    MatrixQuarticPoly, QuarticForm, SymMapTensor,
};
use crate::sdp::{Objective, SdpBackend, SdpProblem, Term};
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use std::collections::BTreeMap;

/// Dense homogeneous form in (x₁, x₂, x₃).
#[derive(Clone, Debug, PartialEq)]
pub struct TernaryForm {
    pub degree: usize,
    /// Coefficients over `mono_list(3, degree)` order.
    pub coeffs: Vec<f64>,
}

impl TernaryForm {
    pub fn zero(degree: usize) -> Self {
        TernaryForm {
            degree,
            coeffs: vec![0.0; mono_list(3, degree).len()],
        }
    }

    pub fn from_quartic(q: &QuarticForm<f64>) -> Self {
        assert_eq!(q.n, 3);
        let monos = mono_list(3, 4);
        let index: BTreeMap<Exps, usize> = monos.iter().cloned().zip(0..).collect();
        let mut out = Self::zero(4);
        for (xe, &c) in &q.coeffs {
            out.coeffs[index[xe]] += c;
        }
        out
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let monos = mono_list(3, self.degree);
        let mut acc = 0.0;
        for (m, &c) in monos.iter().zip(&self.coeffs) {
            if c != 0.0 {
                let mut t = c;
                for (i, &e) in m.iter().enumerate() {
                    for _ in 0..e {
                        t *= x[i];
                    }
                }
                acc += t;
            }
        }
        acc
    }

    pub fn gradient(&self, x: &[f64]) -> [f64; 3] {
        let monos = mono_list(3, self.degree);
        let mut g = [0.0; 3];
        for (m, &c) in monos.iter().zip(&self.coeffs) {
            if c == 0.0 {
                continue;
            }
            for (var, gv) in g.iter_mut().enumerate() {
                if m[var] == 0 {
                    continue;
                }
                let mut t = c * m[var] as f64;
                for (i, &e) in m.iter().enumerate() {
                    let e = if i == var { e - 1 } else { e };
                    for _ in 0..e {
                        t *= x[i];
                    }
                }
                *gv += t;
            }
        }
        g
    }

    pub fn mul(&self, other: &TernaryForm) -> TernaryForm {
        let monos_a = mono_list(3, self.degree);
        let monos_b = mono_list(3, other.degree);
        let out_deg = self.degree + other.degree;
        let index: BTreeMap<Exps, usize> = mono_list(3, out_deg).iter().cloned().zip(0..).collect();
        let mut out = TernaryForm::zero(out_deg);
        for (ma, &ca) in monos_a.iter().zip(&self.coeffs) {
            if ca == 0.0 {
                continue;
            }
            for (mb, &cb) in monos_b.iter().zip(&other.coeffs) {
                if cb == 0.0 {
                    continue;
                }
                let sum: Exps = ma.iter().zip(mb).map(|(p, q)| p + q).collect();
                out.coeffs[index[&sum]] += ca * cb;
            }
        }
        out
    }

    pub fn sub(&self, other: &TernaryForm) -> TernaryForm {
        assert_eq!(self.degree, other.degree);
        TernaryForm {
            degree: self.degree,
            coeffs: self
                .coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }

    pub fn scale(&self, s: f64) -> TernaryForm {
        TernaryForm {
            degree: self.degree,
            coeffs: self.coeffs.iter().map(|c| c * s).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |a, c| a.max(c.abs()))
    }

    /// `(x₁² + x₂² + x₃²)^n`.
    pub fn sphere_power(n: usize) -> TernaryForm {
        let mut acc = TernaryForm {
            degree: 0,
            coeffs: vec![1.0],
        };
        let mut sphere = TernaryForm::zero(2);
        let monos = mono_list(3, 2);
        for (k, m) in monos.iter().enumerate() {
            if m.iter().any(|&e| e == 2) {
                sphere.coeffs[k] = 1.0;
            }
        }
        for _ in 0..n {
            acc = acc.mul(&sphere);
        }
        acc
    }
}

// ---------------------------------------------------------------------------
// Scalar/matrix sums of squares by SDP with projection polish.
// ---------------------------------------------------------------------------

/// A sum-of-squares certificate for an m×m matrix of ternary forms of
/// degree 2·half: a PSD Gram over the vector-valued monomial basis
/// `{mono_i e_s}` with `P(x) = B(x)ᵀ G B(x)` coefficientwise.
#[derive(Clone, Debug)]
pub struct MatrixSosCert {
    pub half_degree: usize,
    pub block: usize,
    pub gram: DMatrix<f64>,
}

fn min_eig(m: &DMatrix<f64>) -> f64 {
    m.clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .fold(f64::INFINITY, |a, &b| a.min(b))
}

/// Entries (s ≤ t) of the target matrix, each a ternary form of degree
/// 2·half. Returns a verified Gram or None.
pub fn matrix_sos(
    entries: &[TernaryForm],
    m_dim: usize,
    half: usize,
    backend: &dyn SdpBackend,
) -> Option<MatrixSosCert> {
    assert_eq!(entries.len(), m_dim * (m_dim + 1) / 2);
    let monos = mono_list(3, half);
    let nb = monos.len();
    let size = nb * m_dim;
    let target_monos = mono_list(3, 2 * half);
    let tindex: BTreeMap<Exps, usize> = target_monos.iter().cloned().zip(0..).collect();
    let gidx = |i: usize, s: usize| i * m_dim + s;
    let pair_pos = |s: usize, t: usize| -> usize {
        // index into `entries` for s ≤ t
        s * m_dim - s * (s + 1) / 2 + t
    };

    // Rows: for each (s ≤ t, monomial μ): Σ_{ordered (i,j): m_i+m_j=μ} G[(i,s),(j,t)] = P_st[μ].
    // Upper-triangle Term convention: coefficient counts X[u,v] once.
    let scale = entries.iter().map(|e| e.max_abs()).fold(1.0, f64::max);
    let mut prob = SdpProblem::new(Objective::MaximizeFree(0));
    let hb = prob.add_block("gram", size);
    let capb = prob.add_block("cap", 1);
    let t = prob.add_free();
    let mut row_data: Vec<(Vec<(usize, usize, f64)>, f64, f64)> = Vec::new();
    for s in 0..m_dim {
        for tt in s..m_dim {
            let target = &entries[pair_pos(s, tt)];
            for (mu_idx, mu) in target_monos.iter().enumerate() {
                let mut coeffs: BTreeMap<(usize, usize), f64> = BTreeMap::new();
                for (i, mi) in monos.iter().enumerate() {
                    for (j, mj) in monos.iter().enumerate() {
                        let sum: Exps = mi.iter().zip(mj).map(|(p, q)| p + q).collect();
                        if &sum == mu {
                            let (u, v) = (gidx(i, s), gidx(j, tt));
                            let (u, v) = if u <= v { (u, v) } else { (v, u) };
                            *coeffs.entry((u, v)).or_insert(0.0) += 1.0;
                        }
                    }
                }
                let mut terms = Vec::new();
                let mut tw = 0.0;
                let mut rowvec = Vec::new();
                for ((u, v), c) in coeffs {
                    terms.push(Term::Block {
                        block: hb,
                        i: u,
                        j: v,
                        coeff: c,
                    });
                    rowvec.push((u, v, c));
                    if u == v {
                        tw += c;
                    }
                }
                if tw != 0.0 {
                    terms.push(Term::Free { idx: t, coeff: tw });
                }
                let rhs = target.coeffs[tindex[mu]];
                let _ = mu_idx;
                prob.add_equality(terms, rhs);
                row_data.push((rowvec, rhs, tw));
            }
        }
    }
    prob.add_equality(
        vec![
            Term::Free { idx: t, coeff: 1.0 },
            Term::Block {
                block: capb,
                i: 0,
                j: 0,
                coeff: 1.0,
            },
        ],
        10.0 * scale,
    );

    let sol = backend.solve(&prob).ok()?;
    let tstar = sol.free[t];
    if tstar < -1e-3 * scale {
        return None;
    }
    let rough = &sol.blocks[hb] + DMatrix::identity(size, size) * tstar;

    // Polish: alternating projections between the PSD cone and the
    // coefficient slice (tangential boundaries handled by long clipping).
    let sq2 = std::f64::consts::SQRT_2;
    let sidx = |i: usize, j: usize| j * (j + 1) / 2 + i;
    let svl = size * (size + 1) / 2;
    let rows: Vec<(Vec<(usize, f64)>, f64)> = row_data
        .iter()
        .map(|(rv, rhs, _)| {
            (
                rv.iter()
                    .map(|&(u, v, c)| (sidx(u, v), if u == v { c } else { c / sq2 }))
                    .collect(),
                *rhs,
            )
        })
        .collect();
    let nr = rows.len();
    let mut gram = DMatrix::<f64>::zeros(nr, nr);
    let mut scatter = vec![0.0f64; svl];
    for i in 0..nr {
        for &(c, w) in &rows[i].0 {
            scatter[c] = w;
        }
        for j in i..nr {
            let mut acc = 0.0;
            for &(c, w) in &rows[j].0 {
                acc += w * scatter[c];
            }
            gram[(i, j)] = acc;
            gram[(j, i)] = acc;
        }
        for &(c, _) in &rows[i].0 {
            scatter[c] = 0.0;
        }
    }
    let chol = gram
        .clone()
        .cholesky()
        .or_else(|| (gram + DMatrix::identity(nr, nr) * 1e-12).cholesky())?;
    let svec_of = |g: &DMatrix<f64>| -> Vec<f64> {
        let mut v = vec![0.0; svl];
        for j in 0..size {
            for i in 0..=j {
                v[sidx(i, j)] = if i == j { g[(i, j)] } else { sq2 * g[(i, j)] };
            }
        }
        v
    };
    let unsvec = |v: &[f64]| -> DMatrix<f64> {
        let mut g = DMatrix::zeros(size, size);
        for j in 0..size {
            for i in 0..=j {
                let val = v[sidx(i, j)];
                if i == j {
                    g[(i, j)] = val;
                } else {
                    g[(i, j)] = val / sq2;
                    g[(j, i)] = val / sq2;
                }
            }
        }
        g
    };
    let mut cur = clip_psd(&rough);
    let mut last_worst = f64::INFINITY;
    for round in 0..2000 {
        let mut v = svec_of(&cur);
        let mut resid = DVector::<f64>::zeros(nr);
        for (r, (row, rhs)) in rows.iter().enumerate() {
            let mut acc = 0.0;
            for &(c, w) in row {
                acc += w * v[c];
            }
            resid[r] = rhs - acc;
        }
        let y = chol.solve(&resid);
        for (r, (row, _)) in rows.iter().enumerate() {
            let yr = y[r];
            if yr != 0.0 {
                for &(c, w) in row {
                    v[c] += w * yr;
                }
            }
        }
        let aff = unsvec(&v);
        let lam = min_eig(&aff);
        if lam >= -1e-8 {
            // Verify the reconstruction independently.
            let mut ok = true;
            'outer: for s in 0..m_dim {
                for tt in s..m_dim {
                    let target = &entries[pair_pos(s, tt)];
                    for (mu_idx, mu) in target_monos.iter().enumerate() {
                        let mut acc = 0.0;
                        for (i, mi) in monos.iter().enumerate() {
                            for (j, mj) in monos.iter().enumerate() {
                                let sum: Exps =
                                    mi.iter().zip(mj).map(|(p, q)| p + q).collect();
                                if &sum == mu {
                                    acc += aff[(gidx(i, s), gidx(j, tt))];
                                }
                            }
                        }
                        if (acc - target.coeffs[mu_idx]).abs() > 1e-7 {
                            ok = false;
                            break 'outer;
                        }
                    }
                }
            }
            if ok {
                return Some(MatrixSosCert {
                    half_degree: half,
                    block: m_dim,
                    gram: aff,
                });
            }
        }
        if round % 100 == 99 {
            let worst = (-lam).max(0.0);
            if worst > 0.97 * last_worst {
                break;
            }
            last_worst = worst;
        }
        cur = clip_psd(&aff);
    }
    None
}

/// Scalar sum-of-squares search for a ternary form of even degree.
pub fn scalar_sos(
    form: &TernaryForm,
    backend: &dyn SdpBackend,
) -> Option<MatrixSosCert> {
    assert!(form.degree % 2 == 0);
    matrix_sos(std::slice::from_ref(form), 1, form.degree / 2, backend)
}

// ---------------------------------------------------------------------------
// Trace/determinant certificates.
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub enum TraceVerdict {
    /// `Tr Q − ε(Σx²)²` is a verified sum of squares.
    Positive { epsilon: f64, cert: MatrixSosCert },
    /// A point on the sphere with `Tr Q ≤ 0`.
    Falsified { x: [f64; 3], value: f64 },
    Inconclusive,
}

#[derive(Clone, Debug)]
pub enum DetVerdict {
    /// `(Σx²)^N · det Q` is a verified sum of squares.
    Nonnegative { power: usize, cert: MatrixSosCert },
    /// A point with `det Q < 0`.
    Falsified { x: [f64; 3], value: f64 },
    Inconclusive,
}

#[derive(Clone, Debug)]
pub struct TraceDetReport {
    pub trace: TraceVerdict,
    pub det: DetVerdict,
}

/// Minimizes a ternary form on the unit sphere by projected gradient
/// descent with restarts; returns the best point found.
pub fn minimize_on_sphere(form: &TernaryForm, restarts: usize, seed: u64) -> ([f64; 3], f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = ([1.0, 0.0, 0.0], form.eval(&[1.0, 0.0, 0.0]));
    for _ in 0..restarts {
        let mut x: Vec<f64> = (0..3).map(|_| StandardNormal.sample(&mut rng)).collect();
        let nrm = (x.iter().map(|v| v * v).sum::<f64>()).sqrt();
        x.iter_mut().for_each(|v| *v /= nrm);
        let mut val = form.eval(&x);
        let mut step = 0.5;
        for _ in 0..200 {
            let g = form.gradient(&x);
            let dot: f64 = g.iter().zip(&x).map(|(a, b)| a * b).sum();
            let tang: Vec<f64> = g.iter().zip(&x).map(|(a, b)| a - dot * b).collect();
            let tnorm = tang.iter().map(|v| v * v).sum::<f64>();
            if tnorm.sqrt() < 1e-14 {
                break;
            }
            let mut accepted = false;
            for _ in 0..30 {
                let mut xn: Vec<f64> = x.iter().zip(&tang).map(|(a, d)| a - step * d).collect();
                let nrm = xn.iter().map(|v| v * v).sum::<f64>().sqrt();
                xn.iter_mut().for_each(|v| *v /= nrm);
                let vn = form.eval(&xn);
                if vn < val - 1e-6 * step * tnorm {
                    x = xn;
                    val = vn;
                    step = (step * 2.0).min(1.0);
                    accepted = true;
                    break;
                }
                step *= 0.5;
                if step < 1e-16 {
                    break;
                }
            }
            if !accepted {
                break;
            }
        }
        if val < best.1 {
            best = ([x[0], x[1], x[2]], val);
        }
    }
    best
}

/// Trace positivity and determinant nonnegativity for a 2×2 quartic matrix
/// polynomial over ℝ³.
pub fn check_trace_det(
    q: &MatrixQuarticPoly<f64>,
    n_max: usize,
    backend: &dyn SdpBackend,
) -> TraceDetReport {
    assert_eq!(q.n, 3, "the trace/determinant certificate is the n = 3 case");
    let trace = TernaryForm::from_quartic(&q.trace());
    let a = TernaryForm::from_quartic(q.entry(0, 0));
    let b = TernaryForm::from_quartic(q.entry(0, 1));
    let c = TernaryForm::from_quartic(q.entry(1, 1));
    let det = a.mul(&c).sub(&b.mul(&b));

    // Trace: geometric scan of ε with an SOS check of TrQ − ε(Σx²)².
    let sphere_sq = TernaryForm::sphere_power(2);
    let scale = trace.max_abs().max(1e-12);
    let (xmin, tmin) = minimize_on_sphere(&trace, 60, 17);
    let trace_verdict = if tmin <= 1e-12 * scale {
        TraceVerdict::Falsified {
            x: xmin,
            value: tmin,
        }
    } else {
        let mut eps = scale;
        let mut found = None;
        while eps >= 1e-8 * scale.min(1.0) {
            if let Some(cert) = scalar_sos(&trace.sub(&sphere_sq.scale(eps)), backend) {
                found = Some((eps, cert));
                break;
            }
            eps *= 0.5;
        }
        match found {
            Some((epsilon, cert)) => TraceVerdict::Positive { epsilon, cert },
            None => TraceVerdict::Inconclusive,
        }
    };

    // Determinant: falsify by descent, else search (Σx²)^N · det ∈ Σ².
    let dscale = det.max_abs().max(1e-12);
    let (dx, dmin) = minimize_on_sphere(&det, 60, 31);
    let det_verdict = if dmin < -1e-10 * dscale {
        DetVerdict::Falsified { x: dx, value: dmin }
    } else {
        let mut found = None;
        for n_pow in 0..=n_max {
            let shifted = TernaryForm::sphere_power(n_pow).mul(&det);
            if let Some(cert) = scalar_sos(&shifted, backend) {
                found = Some((n_pow, cert));
                break;
            }
        }
        match found {
            Some((power, cert)) => DetVerdict::Nonnegative { power, cert },
            None => DetVerdict::Inconclusive,
        }
    };

    TraceDetReport {
        trace: trace_verdict,
        det: det_verdict,
    }
}

/// Smallest N ≤ n_max with `(Σx²)^N · Q` a sum of squares of matrix
/// polynomials, with the verified Gram certificate.
pub fn denominator_power_search(
    q: &MatrixQuarticPoly<f64>,
    n_max: usize,
    backend: &dyn SdpBackend,
) -> Option<(usize, MatrixSosCert)> {
    assert_eq!(q.n, 3);
    let a = TernaryForm::from_quartic(q.entry(0, 0));
    let b = TernaryForm::from_quartic(q.entry(0, 1));
    let c = TernaryForm::from_quartic(q.entry(1, 1));
    for n_pow in 0..=n_max {
        let sp = TernaryForm::sphere_power(n_pow);
        let entries = vec![sp.mul(&a), sp.mul(&b), sp.mul(&c)];
        if let Some(cert) = matrix_sos(&entries, 2, (4 + 2 * n_pow) / 2, backend) {
            return Some((n_pow, cert));
        }
    }
    None
}

// ---------------------------------------------------------------------------
// The singular case: explicit drift matrices.
// ---------------------------------------------------------------------------

/// `B = A − (CX + XCᵀ)` with `B` positive, plus the witnessing global
/// bilinear sum-of-squares certificate of `p_B`.
#[derive(Clone, Debug)]
pub struct DriftDecomposition {
    pub c: MatK<f64>,
    pub b: SymMapTensor<f64>,
    /// PSD Gram over the bilinear monomials with `p_B = bᵀ·G·b` exactly
    /// (no ideal multiplier).
    pub positivity_gram: DMatrix<f64>,
}

fn householder_to_e1(x0: &[f64]) -> DMatrix<f64> {
    let n = x0.len();
    let nrm = x0.iter().map(|v| v * v).sum::<f64>().sqrt();
    let xhat: Vec<f64> = x0.iter().map(|v| v / nrm).collect();
    let mut v: Vec<f64> = xhat.clone();
    v[0] -= 1.0;
    let vn2: f64 = v.iter().map(|a| a * a).sum();
    if vn2 < 1e-28 {
        return DMatrix::identity(n, n);
    }
    let mut h = DMatrix::identity(n, n);
    for i in 0..n {
        for j in 0..n {
            h[(i, j)] -= 2.0 * v[i] * v[j] / vn2;
        }
    }
    h
}

fn matk_from(m: &DMatrix<f64>) -> MatK<f64> {
    let mut out = MatK::zeros(m.nrows(), m.ncols());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.set(i, j, m[(i, j)]);
        }
    }
    out
}

fn dmat_from(m: &MatK<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(m.rows, m.cols, |i, j| *m.get(i, j))
}

/// Conjugates a map by an orthogonal H: `Ã(X) = H·A(HXH)·H`.
fn conjugate_by_orthogonal(a: &SymMapTensor<f64>, h: &DMatrix<f64>) -> SymMapTensor<f64> {
    let n = a.n;
    let mut out = SymMapTensor::zero(n);
    let image = |basis: DMatrix<f64>| -> MatK<f64> {
        let inner = h * basis * h;
        let applied = dmat_from(&a.apply(&matk_from(&inner)));
        matk_from(&(h * applied * h))
    };
    for i in 0..n {
        let mut e = DMatrix::<f64>::zeros(n, n);
        e[(i, i)] = 1.0;
        out.diag[i] = image(e);
    }
    for (idx, (i, j)) in crate::polyalg::pairs(n).into_iter().enumerate() {
        let mut e = DMatrix::<f64>::zeros(n, n);
        e[(i, j)] = 1.0;
        e[(j, i)] = 1.0;
        out.offdiag[idx] = image(e);
    }
    out
}

/// Global bilinear sum-of-squares certificate (no ideal multiplier):
/// a PSD Gram with `p = bᵀGb` coefficientwise.
pub fn certify_global_bilinear_sos(
    p: &BiformQuad<f64>,
    backend: &dyn SdpBackend,
) -> Option<DMatrix<f64>> {
    let n = p.n;
    // A biform is a quadratic form in the bilinear monomials; its Gram
    // slice is {G₀ + kernel}, kernel indefinite, so matrix_sos-style
    // machinery applies with the bilinear basis in place of monomials.
    let nn = n * n;
    let basis = BiformQuad::<f64>::basis(n);
    let mut prob = SdpProblem::new(Objective::MaximizeFree(0));
    let hb = prob.add_block("gram", nn);
    let capb = prob.add_block("cap", 1);
    let t = prob.add_free();
    let scale = p.max_abs_coeff().max(1.0);
    let mut row_data = Vec::new();
    for &(i, j, k, l) in &basis {
        let mut terms = Vec::new();
        let mut tw = 0.0;
        let mut rowvec = Vec::new();
        for (r, c, w) in crate::certify::gram_positions(i, j, k, l, n) {
            terms.push(Term::Block {
                block: hb,
                i: r,
                j: c,
                coeff: w,
            });
            rowvec.push((r, c, w));
            if r == c {
                tw += w;
            }
        }
        if tw != 0.0 {
            terms.push(Term::Free { idx: t, coeff: tw });
        }
        let rhs = p.coeff(i, j, k, l);
        prob.add_equality(terms, rhs);
        row_data.push((rowvec, rhs));
    }
    prob.add_equality(
        vec![
            Term::Free { idx: t, coeff: 1.0 },
            Term::Block {
                block: capb,
                i: 0,
                j: 0,
                coeff: 1.0,
            },
        ],
        10.0 * scale,
    );
    let sol = backend.solve(&prob).ok()?;
    let tstar = sol.free[t];
    if tstar < -1e-3 * scale {
        return None;
    }
    let rough = &sol.blocks[hb] + DMatrix::identity(nn, nn) * tstar;

    // Clip-project polish on the slice {bᵀGb = p}.
    let sq2 = std::f64::consts::SQRT_2;
    let sidx = |i: usize, j: usize| j * (j + 1) / 2 + i;
    let svl = nn * (nn + 1) / 2;
    let rows: Vec<(Vec<(usize, f64)>, f64)> = row_data
        .iter()
        .map(|(rv, rhs)| {
            (
                rv.iter()
                    .map(|&(u, v, c)| (sidx(u, v), if u == v { c } else { c / sq2 }))
                    .collect(),
                *rhs,
            )
        })
        .collect();
    let nr = rows.len();
    let mut gm = DMatrix::<f64>::zeros(nr, nr);
    let mut scatter = vec![0.0f64; svl];
    for i in 0..nr {
        for &(c, w) in &rows[i].0 {
            scatter[c] = w;
        }
        for j in i..nr {
            let mut acc = 0.0;
            for &(c, w) in &rows[j].0 {
                acc += w * scatter[c];
            }
            gm[(i, j)] = acc;
            gm[(j, i)] = acc;
        }
        for &(c, _) in &rows[i].0 {
            scatter[c] = 0.0;
        }
    }
    let chol = gm
        .clone()
        .cholesky()
        .or_else(|| (gm + DMatrix::identity(nr, nr) * 1e-12).cholesky())?;
    let mut cur = clip_psd(&rough);
    let mut last_worst = f64::INFINITY;
    for round in 0..2000 {
        let mut v = vec![0.0f64; svl];
        for j in 0..nn {
            for i in 0..=j {
                v[sidx(i, j)] = if i == j { cur[(i, j)] } else { sq2 * cur[(i, j)] };
            }
        }
        let mut resid = DVector::<f64>::zeros(nr);
        for (r, (row, rhs)) in rows.iter().enumerate() {
            let mut acc = 0.0;
            for &(c, w) in row {
                acc += w * v[c];
            }
            resid[r] = rhs - acc;
        }
        let y = chol.solve(&resid);
        for (r, (row, _)) in rows.iter().enumerate() {
            let yr = y[r];
            if yr != 0.0 {
                for &(c, w) in row {
                    v[c] += w * yr;
                }
            }
        }
        let mut aff = DMatrix::zeros(nn, nn);
        for j in 0..nn {
            for i in 0..=j {
                let val = v[sidx(i, j)];
                if i == j {
                    aff[(i, j)] = val;
                } else {
                    aff[(i, j)] = val / sq2;
                    aff[(j, i)] = val / sq2;
                }
            }
        }
        let lam = min_eig(&aff);
        if lam >= -1e-8 {
            let recon = crate::certify::gram_to_biform(&aff, n);
            if p.sub(&recon).max_abs_coeff() <= 1e-7 {
                return Some(aff);
            }
        }
        if round % 100 == 99 {
            let worst = (-lam).max(0.0);
            if worst > 0.97 * last_worst {
                break;
            }
            last_worst = worst;
        }
        cur = clip_psd(&aff);
    }
    None
}

/// Builds the explicit drift matrix of the singular case.
///
/// Requires the compression hypothesis
/// `(I − x̂₀x̂₀ᵀ)·A(x₀x₀ᵀ)·(I − x̂₀x̂₀ᵀ) = 0`; the map is conjugated so that
/// x₀ ↦ e₁, the drift columns are read off, and the remainder
/// `B = A − (CX + XCᵀ)` is certified a global bilinear sum of squares.
pub fn construct_drift_c(
    a: &SymMapTensor<f64>,
    x0: &[f64],
    backend: &dyn SdpBackend,
) -> Result<DriftDecomposition, String> {
    let n = a.n;
    assert_eq!(x0.len(), n);
    let nrm2: f64 = x0.iter().map(|v| v * v).sum();
    if nrm2 <= 0.0 {
        return Err("x₀ must be nonzero".into());
    }
    // Hypothesis check.
    let mut x0x0 = MatK::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            x0x0.set(i, j, x0[i] * x0[j]);
        }
    }
    let ax = dmat_from(&a.apply(&x0x0));
    let mut proj = DMatrix::<f64>::identity(n, n);
    for i in 0..n {
        for j in 0..n {
            proj[(i, j)] -= x0[i] * x0[j] / nrm2;
        }
    }
    let compressed = &proj * &ax * &proj;
    let scale = ax.abs().max().max(1.0);
    let resid = compressed.abs().max();
    if resid > 1e-10 * scale {
        return Err(format!(
            "compression hypothesis fails: ‖(I−P)A(x₀x₀ᵀ)(I−P)‖∞ = {resid:e}"
        ));
    }

    let h = householder_to_e1(x0);
    let at = conjugate_by_orthogonal(a, &h);
    // Drift columns in the conjugated frame.
    let e1_img = dmat_from(&at.diag[0]);
    let mut c_tilde = DMatrix::<f64>::zeros(n, n);
    let half_a11 = 0.5 * e1_img[(0, 0)];
    for r in 0..n {
        c_tilde[(r, 0)] = e1_img[(r, 0)];
    }
    c_tilde[(0, 0)] -= half_a11;
    for i in 1..n {
        let img = dmat_from(at.basis_image(0, i));
        let col = img.column(0);
        for r in 0..n {
            c_tilde[(r, i)] = col[r];
        }
        c_tilde[(0, i)] -= 0.5 * img[(0, 0)];
        c_tilde[(i, i)] -= half_a11;
    }
    let b_tilde = at.sub(&lie_map(&matk_from(&c_tilde)));
    // Zero conditions in the conjugated frame.
    let r1 = dmat_from(&b_tilde.diag[0]).abs().max();
    if r1 > 1e-10 * scale.max(1.0) {
        return Err(format!("B(E₁₁) residual {r1:e}"));
    }
    for i in 1..n {
        let img = dmat_from(b_tilde.basis_image(0, i));
        let r = img.column(0).abs().max();
        if r > 1e-10 * scale.max(1.0) {
            return Err(format!("B(E₁{})e₁ residual {r:e}", i + 1));
        }
    }

    // Pull back through the conjugation: C = H·C̃·H.
    let c_mat = matk_from(&(&h * &c_tilde * &h));
    let b = a.sub(&lie_map(&c_mat));
    let p_b = map_to_biform(&b);
    let gram = certify_global_bilinear_sos(&p_b, backend)
        .ok_or_else(|| "remainder map is not a verified bilinear sum of squares".to_string())?;
    Ok(DriftDecomposition {
        c: c_mat,
        b,
        positivity_gram: gram,
    })
}

/// Zero configuration for [`singular_decompose`]: a distinguished vector on
/// one side and two independent orthogonal zeros on the other.
#[derive(Clone, Debug)]
pub enum ZeroConfig {
    /// p(v₀, w₁) = p(v₀, w₂) = 0 with w₁, w₂ ⊥ v₀ independent.
    XSide {
        v0: Vec<f64>,
        w1: Vec<f64>,
        w2: Vec<f64>,
    },
    /// p(v₁, w₀) = p(v₂, w₀) = 0 with v₁, v₂ ⊥ w₀ independent.
    YSide {
        w0: Vec<f64>,
        v1: Vec<f64>,
        v2: Vec<f64>,
    },
}

/// Splits a biform nonnegative on the variety, with the supplied zero
/// structure, as (global sum of squares of bilinear forms) + multiplier·(xᵀy).
pub fn singular_decompose(
    p: &BiformQuad<f64>,
    config: &ZeroConfig,
    backend: &dyn SdpBackend,
) -> Result<(DMatrix<f64>, BilinearForm<f64>), String> {
    assert_eq!(p.n, 3, "the singular decomposition is the n = 3 case");
    let (p_work, v0) = match config {
        ZeroConfig::XSide { v0, w1, w2 } => {
            check_zero_config(p, v0, w1, w2, false)?;
            (p.clone(), v0.clone())
        }
        ZeroConfig::YSide { w0, v1, v2 } => {
            // Work with the transposed biform p'(x, y) = p(y, x).
            let mut pt = BiformQuad::zero(p.n);
            for (&(i, j, k, l), &c) in &p.coeffs {
                pt.add_term(k, l, i, j, c);
            }
            check_zero_config(&pt, w0, v1, v2, true)?;
            (pt, w0.clone())
        }
    };
    let a = biform_to_map(&p_work);
    let drift = construct_drift_c(&a, &v0, backend)?;
    // p = p_B + p_lie(C); the latter is exactly in the ideal.
    let p_b = map_to_biform(&drift.b);
    let (canon, mult) = reduce_mod_ideal(&p_work.sub(&p_b));
    if canon.max_abs_coeff() > 1e-8 * p.max_abs_coeff().max(1.0) {
        return Err(format!(
            "drift remainder not in the ideal: residual {:e}",
            canon.max_abs_coeff()
        ));
    }
    match config {
        ZeroConfig::XSide { .. } => Ok((drift.positivity_gram, mult)),
        ZeroConfig::YSide { .. } => {
            // Transpose back: squares transpose to squares (permuted basis),
            // the multiplier transposes.
            let n = p.n;
            let mut perm = DMatrix::<f64>::zeros(n * n, n * n);
            for a_ in 0..n {
                for b_ in 0..n {
                    perm[(a_ * n + b_, b_ * n + a_)] = 1.0;
                }
            }
            let gram_t = &perm * &drift.positivity_gram * perm.transpose();
            Ok((gram_t, BilinearForm::from_matrix(mult.b.transpose())))
        }
    }
}

fn check_zero_config(
    p: &BiformQuad<f64>,
    v0: &[f64],
    w1: &[f64],
    w2: &[f64],
    transposed: bool,
) -> Result<(), String> {
    let side = if transposed { "y-side" } else { "x-side" };
    let nv: f64 = v0.iter().map(|v| v * v).sum();
    if nv <= 0.0 {
        return Err(format!("{side}: distinguished vector is zero"));
    }
    for (k, w) in [w1, w2].iter().enumerate() {
        let dot: f64 = v0.iter().zip(w.iter()).map(|(a, b)| a * b).sum();
        if dot.abs() > 1e-10 * nv.sqrt() {
            return Err(format!("{side}: w{} is not orthogonal to v₀", k + 1));
        }
        let val = p.eval(&v0.to_vec(), &w.to_vec());
        if val.abs() > 1e-8 * p.max_abs_coeff().max(1.0) {
            return Err(format!("{side}: p(v₀, w{}) = {val:e} is not a zero", k + 1));
        }
    }
    // Independence of w₁, w₂.
    let g11: f64 = w1.iter().map(|v| v * v).sum();
    let g22: f64 = w2.iter().map(|v| v * v).sum();
    let g12: f64 = w1.iter().zip(w2).map(|(a, b)| a * b).sum();
    if (g11 * g22 - g12 * g12).abs() <= 1e-12 * (g11 * g22).max(1e-12) {
        return Err(format!("{side}: w₁, w₂ are linearly dependent"));
    }
    Ok(())
}

/// Experimental: searches for `Q = ΣM₂(ℝ[x])² + M₂(J)` modulo the unit
/// sphere ideal `J = (1 − Σx²)`, with all squares of degree ≤ deg_cap.
/// No completeness claim is attached to a `None`.
pub fn unit_sphere_representation(
    q: &MatrixQuarticPoly<f64>,
    deg_cap: usize,
    backend: &dyn SdpBackend,
) -> Option<MatrixSosCert> {
    assert_eq!(q.n, 3);
    // Homogenization trick on the sphere: x ↦ x/‖x‖ turns the identity into
    // (Σx²)^k·Q = SOS for suitable k, so reuse the denominator search with
    // the cap translated to a power bound.
    let max_pow = deg_cap.saturating_sub(2);
    denominator_power_search(q, max_pow, backend).map(|(_, cert)| cert)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::certify::{certify_psatz, default_backend, PsatzVerdict};
    use rand::Rng;
    use crate::fixtures::proper_map_3x3;
    use crate::polyalg::{build_qa, substitute_psi};
    use crate::stiefel::sample;

    fn backend() -> crate::sdp::InteriorPointSolver {
        default_backend()
    }

    fn qa_of_map(a: &SymMapTensor<f64>) -> MatrixQuarticPoly<f64> {
        build_qa(&substitute_psi(&map_to_biform(a)))
    }

    #[test]
    fn trace_det_on_identity_block() {
        // Q = (Σx²)²·I₂: trace strictly positive with margin 2, det SOS at N = 0.
        let sp2 = TernaryForm::sphere_power(2);
        let zero = TernaryForm::zero(4);
        let q = MatrixQuarticPoly {
            n: 3,
            entries: vec![
                quartic_of(&sp2),
                quartic_of(&zero),
                quartic_of(&zero),
                quartic_of(&sp2),
            ],
        };
        let report = check_trace_det(&q, 2, &backend());
        match report.trace {
            TraceVerdict::Positive { epsilon, .. } => {
                assert!((epsilon - 2.0).abs() < 1e-12, "ε = {epsilon}")
            }
            other => panic!("expected Positive, got {other:?}"),
        }
        match report.det {
            DetVerdict::Nonnegative { power, .. } => assert_eq!(power, 0),
            other => panic!("expected Nonnegative, got {other:?}"),
        }
    }

    fn quartic_of(t: &TernaryForm) -> QuarticForm<f64> {
        let monos = mono_list(3, 4);
        let mut out = QuarticForm::zero(3);
        if t.degree == 4 {
            for (m, &c) in monos.iter().zip(&t.coeffs) {
                if c != 0.0 {
                    out.add_term(m.clone(), c);
                }
            }
        }
        out
    }

    #[test]
    fn det_falsified_on_indefinite_block() {
        let sp2 = TernaryForm::sphere_power(2);
        let zero = TernaryForm::zero(4);
        let q = MatrixQuarticPoly {
            n: 3,
            entries: vec![
                quartic_of(&sp2),
                quartic_of(&zero),
                quartic_of(&zero),
                quartic_of(&sp2.scale(-1.0)),
            ],
        };
        let report = check_trace_det(&q, 2, &backend());
        match report.det {
            DetVerdict::Falsified { value, .. } => assert!(value < -0.5),
            other => panic!("expected Falsified, got {other:?}"),
        }
    }

    #[test]
    fn denominator_power_for_trace_map() {
        // A(X) = Tr(X)·I is completely cross-positive; its Q_A admits a
        // denominator power N ≤ 2.
        let q = qa_of_map(&SymMapTensor::trace_map(3));
        let (n_pow, cert) = denominator_power_search(&q, 2, &backend()).expect("should certify");
        assert!(n_pow <= 2, "N = {n_pow}");
        assert!(min_eig(&cert.gram) >= -1e-8);
    }

    #[test]
    fn trace_det_consistency_on_proper_map() {
        // The published map is cross-positive, so Q_A is PSD: det must not
        // be falsified; and whenever the denominator search succeeds the
        // det certificate must exist as well ((iv) ⇒ (ii)).
        let q = qa_of_map(&proper_map_3x3());
        let report = check_trace_det(&q, 3, &backend());
        match report.det {
            DetVerdict::Falsified { value, .. } => {
                panic!("det of a PSD matrix polynomial falsified: {value}")
            }
            _ => {}
        }
        if let Some((_, _)) = denominator_power_search(&q, 2, &backend()) {
            match report.det {
                DetVerdict::Nonnegative { .. } => {}
                ref other => panic!("(iv) held but (ii) gave {other:?}"),
            }
        }
    }

    #[test]
    fn drift_on_lie_map_recovers_generator() {
        // A = CX + XCᵀ satisfies the hypothesis at x₀ = e₁ and the
        // remainder is the zero map.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut c0 = MatK::<f64>::zeros(3, 3);
        for i in 0..3 {
            for j in 0..3 {
                c0.set(i, j, rng.gen_range(-1.0..1.0));
            }
        }
        let a = lie_map(&c0);
        let drift = construct_drift_c(&a, &[1.0, 0.0, 0.0], &backend()).unwrap();
        let p_b = map_to_biform(&drift.b);
        assert!(p_b.max_abs_coeff() <= 1e-10);
    }

    #[test]
    fn drift_on_block_embedded_map() {
        // The block construction B(E₁₁) = 0, B(E₁ᵢ+Eᵢ₁) = 0 with a positive
        // inner 2×2 map: the drift C vanishes and p_B is a bilinear SOS.
        let mut a = SymMapTensor::<f64>::zero(3);
        // Inner map = identity on the lower 2×2 block.
        a.diag[1].set(1, 1, 1.0);
        a.diag[2].set(2, 2, 1.0);
        let off = crate::polyalg::pair_index(1, 2, 3);
        a.offdiag[off].set(1, 2, 1.0);
        a.offdiag[off].set(2, 1, 1.0);
        let drift = construct_drift_c(&a, &[1.0, 0.0, 0.0], &backend()).unwrap();
        assert!(dmat_from(&drift.c).abs().max() <= 1e-12);
        // Residual conditions from the construction.
        assert!(dmat_from(&drift.b.diag[0]).abs().max() <= 1e-10);
        for i in 1..3 {
            let img = dmat_from(drift.b.basis_image(0, i));
            assert!(img.column(0).abs().max() <= 1e-10);
            for j in 1..3 {
                assert!(img.column(j).abs().max() <= 1e-8);
            }
        }
        let p_b = map_to_biform(&drift.b);
        let recon = crate::certify::gram_to_biform(&drift.positivity_gram, 3);
        assert!(p_b.sub(&recon).max_abs_coeff() <= 1e-7);
    }

    #[test]
    fn drift_rejects_trace_map() {
        // A(X) = Tr(X)·I: the compression of A(x₀x₀ᵀ) never vanishes.
        let a = SymMapTensor::<f64>::trace_map(3);
        for x0 in [[1.0, 0.0, 0.0], [0.3, -0.5, 0.81]] {
            assert!(construct_drift_c(&a, &x0, &backend()).is_err());
        }
    }

    #[test]
    fn singular_decompose_fixture() {
        // lie_map + a bilinear square vanishing at (e₁, span{e₂, e₃}).
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let mut c0 = MatK::<f64>::zeros(3, 3);
        for i in 0..3 {
            for j in 0..3 {
                c0.set(i, j, rng.gen_range(-1.0..1.0));
            }
        }
        let mut p = map_to_biform(&lie_map(&c0));
        // Square of g = xᵀBy with first row of B supported on e₁ only, so
        // g(e₁, w) = 0 for every w ⊥ e₁.
        let mut bmat = MatK::<f64>::zeros(3, 3);
        bmat.set(0, 0, 0.7);
        for j in 0..3 {
            bmat.set(1, j, rng.gen_range(-1.0..1.0));
            bmat.set(2, j, rng.gen_range(-1.0..1.0));
        }
        for a_ in 0..3 {
            for b_ in 0..3 {
                for c_ in 0..3 {
                    for d_ in 0..3 {
                        let w = bmat.get(a_, b_) * bmat.get(c_, d_);
                        if w != 0.0 {
                            p.add_term(a_, c_, b_, d_, w);
                        }
                    }
                }
            }
        }
        let cfg = ZeroConfig::XSide {
            v0: vec![1.0, 0.0, 0.0],
            w1: vec![0.0, 1.0, 0.0],
            w2: vec![0.0, 0.0, 1.0],
        };
        let (gram, mult) = singular_decompose(&p, &cfg, &backend()).unwrap();
        // Reconstruct p = squares + mult·(xᵀy).
        let recon = crate::certify::gram_to_biform(&gram, 3).add(&mult.times_inner_product());
        assert!(p.sub(&recon).max_abs_coeff() <= 1e-6, "{}", p.sub(&recon).max_abs_coeff());
        assert!(min_eig(&gram) >= -1e-8);
    }

    #[test]
    fn singular_decompose_rejects_sphere_product() {
        // p = (Σx²)(Σy²) is 1 on T; no qualifying zeros exist.
        let p = BiformQuad::<f64>::sphere_product(3);
        let cfg = ZeroConfig::XSide {
            v0: vec![1.0, 0.0, 0.0],
            w1: vec![0.0, 1.0, 0.0],
            w2: vec![0.0, 0.0, 1.0],
        };
        assert!(singular_decompose(&p, &cfg, &backend()).is_err());
    }

    #[test]
    fn psatz_verdict_invariant_under_conjugation() {
        // Cross-positivity verdicts are preserved by the group action
        // A ↦ gA(g⁻¹Xg⁻ᵀ)gᵀ.
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let mut g = MatK::<f64>::zeros(3, 3);
        for i in 0..3 {
            for j in 0..3 {
                g.set(i, j, rng.gen_range(-1.0..1.0) + if i == j { 2.0 } else { 0.0 });
            }
        }
        let anchor = sample(3, 3);
        for (form, expect_nonneg) in [
            (BiformQuad::<f64>::sphere_product(3), true),
            (BiformQuad::<f64>::sphere_product(3).scale(&-1.0), false),
        ] {
            let a = biform_to_map(&form);
            let conj = crate::certify::conjugate_map(&a, &g).unwrap();
            let pc = map_to_biform(&conj);
            let v1 = certify_psatz(&form, 1, (&anchor.x, &anchor.y), 1e-7, &backend()).unwrap();
            let v2 = certify_psatz(&pc, 1, (&anchor.x, &anchor.y), 1e-7, &backend()).unwrap();
            let is_nonneg = |v: &PsatzVerdict| matches!(v, PsatzVerdict::Nonneg(_));
            assert_eq!(is_nonneg(&v1), expect_nonneg);
            assert_eq!(is_nonneg(&v2), expect_nonneg);
        }
    }
}
