//! Biquadratic biforms, ∗-linear maps on symmetric matrices, and the ideal
//! `I = (xᵀy)`.
//!
//! A ∗-linear map `A : S_n → S_n` corresponds to the biquadratic biform
//! `p_A(x, y) = yᵀ A(xxᵀ) y`, bihomogeneous of bidegree (2,2). The map is
//! cross-positive iff `p_A ≥ 0` on `V(I) = {(x,y) : xᵀy = 0}` and completely
//! cross-positive iff `p_A` is a sum of squares of bilinear forms modulo `I`.
//! This module provides the exact algebra behind those statements: the
//! map ↔ biform conversions, the drift maps `X ↦ CX + XCᵀ`, reduction modulo
//! `I`, the substitution `Ψ : (x, α) ↦ (x, y)` whose image is dense in
//! `V(I)`, and the associated matrix polynomial `Q_A` with
//! `αᵀ Q_A(x) α = q_A(x, α)`.
//!
//! Everything is generic over [`Coeff`], so the same code runs exactly over
//! rationals (the oracle mode) and over `f64` (the pipeline mode).

use crate::scalar::Coeff;
use std::collections::BTreeMap;
use std::fmt;

/// Dense row-major matrix over an arbitrary coefficient field.
///
/// Dimensions here are tiny (n ≤ 10); clarity over speed.
#[derive(Clone, Debug, PartialEq)]
pub struct MatK<K> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<K>,
}

impl<K: Coeff> MatK<K> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        MatK {
            rows,
            cols,
            data: vec![K::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, K::one());
        }
        m
    }

    pub fn from_rows(rows: Vec<Vec<K>>) -> Self {
        let r = rows.len();
        let c = if r > 0 { rows[0].len() } else { 0 };
        assert!(rows.iter().all(|row| row.len() == c), "ragged matrix");
        MatK {
            rows: r,
            cols: c,
            data: rows.into_iter().flatten().collect(),
        }
    }

    pub fn get(&self, i: usize, j: usize) -> &K {
        &self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: K) {
        self.data[i * self.cols + j] = v;
    }

    pub fn add_at(&mut self, i: usize, j: usize, v: K) {
        let cur = self.get(i, j).clone();
        self.set(i, j, cur + v);
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.set(j, i, self.get(i, j).clone());
            }
        }
        t
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows);
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k).clone();
                if a.is_zero() {
                    continue;
                }
                for j in 0..other.cols {
                    out.add_at(i, j, a.clone() * other.get(k, j).clone());
                }
            }
        }
        out
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a.clone() + b.clone())
            .collect();
        MatK {
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a.clone() - b.clone())
            .collect();
        MatK {
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }

    pub fn scale(&self, s: &K) -> Self {
        MatK {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|a| a.clone() * s.clone()).collect(),
        }
    }

    /// Largest |entry| of `M − Mᵀ`, as f64.
    pub fn asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.rows {
            for j in 0..self.cols {
                let d = (self.get(i, j).clone() - self.get(j, i).clone()).abs_f64();
                worst = worst.max(d);
            }
        }
        worst
    }

    pub fn to_f64(&self) -> MatK<f64> {
        MatK {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|a| a.to_f64()).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|a| a.abs_f64()).fold(0.0, f64::max)
    }
}

/// Index of the unordered pair (i, j), i < j, in lexicographic order.
pub fn pair_index(i: usize, j: usize, n: usize) -> usize {
    debug_assert!(i < j && j < n);
    i * n - i * (i + 1) / 2 + (j - i - 1)
}

/// All pairs (i, j) with i < j < n, in lexicographic order.
pub fn pairs(n: usize) -> Vec<(usize, usize)> {
    let mut v = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            v.push((i, j));
        }
    }
    v
}

/// A ∗-linear map on symmetric n×n matrices, stored through images of the
/// basis: `diag[i] = A(E_ii)` and `offdiag[(i,j)] = A(E_ij + E_ji)` for i < j.
#[derive(Clone, Debug, PartialEq)]
pub struct SymMapTensor<K> {
    pub n: usize,
    pub diag: Vec<MatK<K>>,
    pub offdiag: Vec<MatK<K>>,
}

impl<K: Coeff> SymMapTensor<K> {
    pub fn zero(n: usize) -> Self {
        SymMapTensor {
            n,
            diag: vec![MatK::zeros(n, n); n],
            offdiag: vec![MatK::zeros(n, n); n * (n - 1) / 2],
        }
    }

    /// The identity map: `A(X) = X`.
    pub fn identity_map(n: usize) -> Self {
        let mut a = Self::zero(n);
        for i in 0..n {
            a.diag[i].set(i, i, K::one());
        }
        for (idx, (i, j)) in pairs(n).into_iter().enumerate() {
            a.offdiag[idx].set(i, j, K::one());
            a.offdiag[idx].set(j, i, K::one());
        }
        a
    }

    /// The map `A(X) = Tr(X)·I_n`.
    pub fn trace_map(n: usize) -> Self {
        let mut a = Self::zero(n);
        for i in 0..n {
            a.diag[i] = MatK::identity(n);
        }
        a
    }

    pub fn basis_image(&self, i: usize, j: usize) -> &MatK<K> {
        if i == j {
            &self.diag[i]
        } else {
            let (a, b) = if i < j { (i, j) } else { (j, i) };
            &self.offdiag[pair_index(a, b, self.n)]
        }
    }

    /// Applies the map to a symmetric matrix.
    pub fn apply(&self, x: &MatK<K>) -> MatK<K> {
        assert_eq!((x.rows, x.cols), (self.n, self.n));
        let mut out = MatK::zeros(self.n, self.n);
        for i in 0..self.n {
            out = out.add(&self.diag[i].scale(x.get(i, i)));
        }
        for (idx, (i, j)) in pairs(self.n).into_iter().enumerate() {
            out = out.add(&self.offdiag[idx].scale(x.get(i, j)));
        }
        out
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.n, other.n);
        SymMapTensor {
            n: self.n,
            diag: self
                .diag
                .iter()
                .zip(&other.diag)
                .map(|(a, b)| a.add(b))
                .collect(),
            offdiag: self
                .offdiag
                .iter()
                .zip(&other.offdiag)
                .map(|(a, b)| a.add(b))
                .collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!(self.n, other.n);
        SymMapTensor {
            n: self.n,
            diag: self
                .diag
                .iter()
                .zip(&other.diag)
                .map(|(a, b)| a.sub(b))
                .collect(),
            offdiag: self
                .offdiag
                .iter()
                .zip(&other.offdiag)
                .map(|(a, b)| a.sub(b))
                .collect(),
        }
    }

    /// Worst asymmetry ‖M − Mᵀ‖∞ over all stored images.
    pub fn max_asymmetry(&self) -> f64 {
        self.diag
            .iter()
            .chain(self.offdiag.iter())
            .map(|m| m.asymmetry())
            .fold(0.0, f64::max)
    }

    pub fn to_f64(&self) -> SymMapTensor<f64> {
        SymMapTensor {
            n: self.n,
            diag: self.diag.iter().map(|m| m.to_f64()).collect(),
            offdiag: self.offdiag.iter().map(|m| m.to_f64()).collect(),
        }
    }
}

/// Canonical monomial index for a bidegree-(2,2) term `x_i x_j y_k y_l`,
/// stored with i ≤ j and k ≤ l (0-based).
pub type Quad = (usize, usize, usize, usize);

fn canon_quad(i: usize, j: usize, k: usize, l: usize) -> Quad {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    let (k, l) = if k <= l { (k, l) } else { (l, k) };
    (i, j, k, l)
}

/// Sparse biquadratic biform `p = Σ c_{ijkl} x_i x_j y_k y_l` of bidegree (2,2).
#[derive(Clone, Debug, PartialEq)]
pub struct BiformQuad<K> {
    pub n: usize,
    pub coeffs: BTreeMap<Quad, K>,
}

impl<K: Coeff> BiformQuad<K> {
    pub fn zero(n: usize) -> Self {
        BiformQuad {
            n,
            coeffs: BTreeMap::new(),
        }
    }

    pub fn add_term(&mut self, i: usize, j: usize, k: usize, l: usize, c: K) {
        if c.is_zero() {
            return;
        }
        let key = canon_quad(i, j, k, l);
        let entry = self.coeffs.entry(key).or_insert_with(K::zero);
        *entry = entry.clone() + c;
        if entry.is_zero() {
            self.coeffs.remove(&key);
        }
    }

    pub fn coeff(&self, i: usize, j: usize, k: usize, l: usize) -> K {
        self.coeffs
            .get(&canon_quad(i, j, k, l))
            .cloned()
            .unwrap_or_else(K::zero)
    }

    pub fn eval(&self, x: &[K], y: &[K]) -> K {
        let mut acc = K::zero();
        for (&(i, j, k, l), c) in &self.coeffs {
            acc = acc
                + c.clone()
                    * x[i].clone()
                    * x[j].clone()
                    * y[k].clone()
                    * y[l].clone();
        }
        acc
    }

    pub fn scale(&self, s: &K) -> Self {
        let mut out = Self::zero(self.n);
        for (&(i, j, k, l), c) in &self.coeffs {
            out.add_term(i, j, k, l, c.clone() * s.clone());
        }
        out
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.n, other.n);
        let mut out = self.clone();
        for (&(i, j, k, l), c) in &other.coeffs {
            out.add_term(i, j, k, l, c.clone());
        }
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!(self.n, other.n);
        let mut out = self.clone();
        for (&(i, j, k, l), c) in &other.coeffs {
            out.add_term(i, j, k, l, -c.clone());
        }
        out
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.coeffs
            .values()
            .map(|c| c.abs_f64())
            .fold(0.0, f64::max)
    }

    pub fn to_f64(&self) -> BiformQuad<f64> {
        let mut out = BiformQuad::zero(self.n);
        for (&(i, j, k, l), c) in &self.coeffs {
            out.add_term(i, j, k, l, c.to_f64());
        }
        out
    }

    /// `(Σ x_i y_i)²`, the square of the ideal generator.
    pub fn inner_product_squared(n: usize) -> Self {
        let mut p = Self::zero(n);
        for i in 0..n {
            for j in 0..n {
                p.add_term(i, j, i, j, K::one());
            }
        }
        p
    }

    /// `(Σ x_i²)(Σ y_j²)`, the biform that is identically 1 on T.
    pub fn sphere_product(n: usize) -> Self {
        let mut p = Self::zero(n);
        for i in 0..n {
            for j in 0..n {
                p.add_term(i, i, j, j, K::one());
            }
        }
        p
    }

    /// Canonical monomial list for dimension n: all (i≤j, k≤l), in order.
    pub fn basis(n: usize) -> Vec<Quad> {
        let mut v = Vec::new();
        for i in 0..n {
            for j in i..n {
                for k in 0..n {
                    for l in k..n {
                        v.push((i, j, k, l));
                    }
                }
            }
        }
        v
    }

    /// Coefficient vector in the canonical basis order.
    pub fn coeff_vec(&self) -> Vec<K> {
        Self::basis(self.n)
            .into_iter()
            .map(|(i, j, k, l)| self.coeff(i, j, k, l))
            .collect()
    }

    pub fn from_coeff_vec(n: usize, v: &[K]) -> Self {
        let basis = Self::basis(n);
        assert_eq!(v.len(), basis.len());
        let mut p = Self::zero(n);
        for ((i, j, k, l), c) in basis.into_iter().zip(v.iter()) {
            p.add_term(i, j, k, l, c.clone());
        }
        p
    }
}

impl<K: Coeff> fmt::Display for BiformQuad<K> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.coeffs.is_empty() {
            return write!(f, "0");
        }
        let mut first = true;
        for (&(i, j, k, l), c) in &self.coeffs {
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            write!(
                f,
                "{:?}*x{}x{}y{}y{}",
                c,
                i + 1,
                j + 1,
                k + 1,
                l + 1
            )?;
        }
        Ok(())
    }
}

/// A bilinear form `g(x, y) = xᵀ B y`.
#[derive(Clone, Debug, PartialEq)]
pub struct BilinearForm<K> {
    pub n: usize,
    pub b: MatK<K>,
}

impl<K: Coeff> BilinearForm<K> {
    pub fn zero(n: usize) -> Self {
        BilinearForm {
            n,
            b: MatK::zeros(n, n),
        }
    }

    pub fn from_matrix(b: MatK<K>) -> Self {
        assert_eq!(b.rows, b.cols);
        BilinearForm { n: b.rows, b }
    }

    /// The form `xᵀy`.
    pub fn inner_product(n: usize) -> Self {
        BilinearForm {
            n,
            b: MatK::identity(n),
        }
    }

    pub fn eval(&self, x: &[K], y: &[K]) -> K {
        let mut acc = K::zero();
        for i in 0..self.n {
            for j in 0..self.n {
                acc = acc + x[i].clone() * self.b.get(i, j).clone() * y[j].clone();
            }
        }
        acc
    }

    /// Symmetric part `(B + Bᵀ)/2` and skew part `(B − Bᵀ)/2`; they
    /// recompose to B exactly.
    pub fn split(&self) -> (MatK<K>, MatK<K>) {
        let half = K::one() / K::from_int(2);
        let bt = self.b.transpose();
        let sym = self.b.add(&bt).scale(&half);
        let skew = self.b.sub(&bt).scale(&half);
        (sym, skew)
    }

    /// Product with the ideal generator: `g · (xᵀy)` as a biform.
    pub fn times_inner_product(&self) -> BiformQuad<K> {
        let mut p = BiformQuad::zero(self.n);
        for a in 0..self.n {
            for b in 0..self.n {
                let c = self.b.get(a, b).clone();
                if c.is_zero() {
                    continue;
                }
                for m in 0..self.n {
                    p.add_term(a, m, b, m, c.clone());
                }
            }
        }
        p
    }

    pub fn to_f64(&self) -> BilinearForm<f64> {
        BilinearForm {
            n: self.n,
            b: self.b.to_f64(),
        }
    }
}

/// `p_A(x, y) = yᵀ A(xxᵀ) y` with the convention
/// `A(xxᵀ) = Σ_i x_i² M_ii + Σ_{i<j} x_i x_j M_ij`.
///
/// Coefficients: `x_i² y_k y_l (k<l) ↦ 2(M_ii)_{kl}`, `x_i² y_k² ↦ (M_ii)_{kk}`,
/// `x_i x_j y_k y_l (i<j, k<l) ↦ 2(M_ij)_{kl}`, `x_i x_j y_k² ↦ (M_ij)_{kk}`.
pub fn map_to_biform<K: Coeff>(a: &SymMapTensor<K>) -> BiformQuad<K> {
    let n = a.n;
    let two = K::from_int(2);
    let mut p = BiformQuad::zero(n);
    let push = |i: usize, j: usize, m: &MatK<K>, p: &mut BiformQuad<K>| {
        for k in 0..n {
            p.add_term(i, j, k, k, m.get(k, k).clone());
            for l in k + 1..n {
                p.add_term(i, j, k, l, two.clone() * m.get(k, l).clone());
            }
        }
    };
    for i in 0..n {
        push(i, i, &a.diag[i], &mut p);
    }
    for (idx, (i, j)) in pairs(n).into_iter().enumerate() {
        push(i, j, &a.offdiag[idx], &mut p);
    }
    p
}

/// Inverse of [`map_to_biform`]; exact in rational mode.
pub fn biform_to_map<K: Coeff>(p: &BiformQuad<K>) -> SymMapTensor<K> {
    let n = p.n;
    let half = K::one() / K::from_int(2);
    let mut a = SymMapTensor::zero(n);
    let fill = |i: usize, j: usize| -> MatK<K> {
        let mut m = MatK::zeros(n, n);
        for k in 0..n {
            m.set(k, k, p.coeff(i, j, k, k));
            for l in k + 1..n {
                let v = half.clone() * p.coeff(i, j, k, l);
                m.set(k, l, v.clone());
                m.set(l, k, v);
            }
        }
        m
    };
    for i in 0..n {
        a.diag[i] = fill(i, i);
    }
    for (idx, (i, j)) in pairs(n).into_iter().enumerate() {
        a.offdiag[idx] = fill(i, j);
    }
    a
}

/// The drift map `X ↦ CX + XCᵀ` restricted to symmetric X.
///
/// These are exactly the maps whose biform lies in the ideal `I`.
pub fn lie_map<K: Coeff>(c: &MatK<K>) -> SymMapTensor<K> {
    let n = c.rows;
    assert_eq!(c.rows, c.cols);
    let col = |i: usize| -> Vec<K> { (0..n).map(|r| c.get(r, i).clone()).collect() };
    let mut a = SymMapTensor::zero(n);
    // A(E_ii) = c_i e_iᵀ + e_i c_iᵀ; A(E_ij + E_ji) = c_i e_jᵀ + c_j e_iᵀ + e_j c_iᵀ + e_i c_jᵀ.
    for i in 0..n {
        let ci = col(i);
        for r in 0..n {
            a.diag[i].add_at(r, i, ci[r].clone());
            a.diag[i].add_at(i, r, ci[r].clone());
        }
    }
    for (idx, (i, j)) in pairs(n).into_iter().enumerate() {
        let ci = col(i);
        let cj = col(j);
        for r in 0..n {
            a.offdiag[idx].add_at(r, j, ci[r].clone());
            a.offdiag[idx].add_at(j, r, ci[r].clone());
            a.offdiag[idx].add_at(r, i, cj[r].clone());
            a.offdiag[idx].add_at(i, r, cj[r].clone());
        }
    }
    a
}

/// Gaussian elimination solve over an arbitrary field; pivots chosen by
/// largest |·| (exact fields just need a nonzero pivot).
pub fn solve_linear<K: Coeff>(a: &MatK<K>, b: &[K]) -> Option<Vec<K>> {
    let n = a.rows;
    assert_eq!(a.rows, a.cols);
    assert_eq!(b.len(), n);
    let mut m = a.clone();
    let mut rhs = b.to_vec();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&r1, &r2| {
                m.get(r1, col)
                    .abs_f64()
                    .partial_cmp(&m.get(r2, col).abs_f64())
                    .unwrap()
            })
            .unwrap();
        if m.get(piv, col).is_zero() {
            return None;
        }
        if piv != col {
            for j in 0..n {
                let tmp = m.get(col, j).clone();
                m.set(col, j, m.get(piv, j).clone());
                m.set(piv, j, tmp);
            }
            rhs.swap(col, piv);
        }
        let inv = K::one() / m.get(col, col).clone();
        for r in 0..n {
            if r == col || m.get(r, col).is_zero() {
                continue;
            }
            let factor = m.get(r, col).clone() * inv.clone();
            for j in col..n {
                let v = m.get(r, j).clone() - factor.clone() * m.get(col, j).clone();
                m.set(r, j, v);
            }
            rhs[r] = rhs[r].clone() - factor * rhs[col].clone();
        }
    }
    let mut x = vec![K::zero(); n];
    for i in 0..n {
        x[i] = rhs[i].clone() / m.get(i, i).clone();
    }
    Some(x)
}

/// Splits `p = canonical + g·(xᵀy)` where `canonical` is the orthogonal
/// projection of the coefficient vector onto the complement of the
/// n²-dimensional subspace `(xᵀy)·{bilinear forms}` under the standard
/// coefficient inner product. `canonical` is zero iff `p ∈ I`.
pub fn reduce_mod_ideal<K: Coeff>(p: &BiformQuad<K>) -> (BiformQuad<K>, BilinearForm<K>) {
    let n = p.n;
    // Columns: coefficient vectors of (xᵀy)·x_a y_b.
    let mut cols: Vec<Vec<K>> = Vec::with_capacity(n * n);
    for a in 0..n {
        for b in 0..n {
            let mut g = BilinearForm::zero(n);
            g.b.set(a, b, K::one());
            cols.push(g.times_inner_product().coeff_vec());
        }
    }
    let pv = p.coeff_vec();
    let dim = cols.len();
    // Normal equations Gc = Vᵀp; the Gram matrix is positive definite
    // because the columns are linearly independent.
    let mut gram = MatK::zeros(dim, dim);
    let mut rhs = vec![K::zero(); dim];
    for r in 0..dim {
        for c in r..dim {
            let mut acc = K::zero();
            for t in 0..cols[r].len() {
                acc = acc + cols[r][t].clone() * cols[c][t].clone();
            }
            gram.set(r, c, acc.clone());
            gram.set(c, r, acc);
        }
        let mut acc = K::zero();
        for t in 0..pv.len() {
            acc = acc + cols[r][t].clone() * pv[t].clone();
        }
        rhs[r] = acc;
    }
    let coeffs = solve_linear(&gram, &rhs).expect("ideal Gram matrix is nonsingular");
    let mut mult = BilinearForm::zero(n);
    for a in 0..n {
        for b in 0..n {
            mult.b.set(a, b, coeffs[a * n + b].clone());
        }
    }
    let canonical = p.sub(&mult.times_inner_product());
    (canonical, mult)
}

/// Exponent vector over n variables; always homogeneous of the degree the
/// context prescribes.
pub type Exps = Vec<u8>;

fn exps_add(a: &Exps, b: &Exps) -> Exps {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

fn unit_exp(n: usize, i: usize, e: u8) -> Exps {
    let mut v = vec![0u8; n];
    v[i] = e;
    v
}

/// The biform `q(x, α) = p(Ψ(x, α))`: quartic in x, quadratic in α.
#[derive(Clone, Debug, PartialEq)]
pub struct QAlphaForm<K> {
    pub n: usize,
    /// Keyed by (x-exponents of degree 4, α-exponents of degree 2).
    pub coeffs: BTreeMap<(Exps, Exps), K>,
}

impl<K: Coeff> QAlphaForm<K> {
    pub fn zero(n: usize) -> Self {
        QAlphaForm {
            n,
            coeffs: BTreeMap::new(),
        }
    }

    pub fn add_term(&mut self, xe: Exps, ae: Exps, c: K) {
        if c.is_zero() {
            return;
        }
        let key = (xe, ae);
        let entry = self.coeffs.entry(key.clone()).or_insert_with(K::zero);
        *entry = entry.clone() + c;
        if entry.is_zero() {
            self.coeffs.remove(&key);
        }
    }

    pub fn eval(&self, x: &[K], alpha: &[K]) -> K {
        let mut acc = K::zero();
        for ((xe, ae), c) in &self.coeffs {
            let mut term = c.clone();
            for (i, &e) in xe.iter().enumerate() {
                for _ in 0..e {
                    term = term * x[i].clone();
                }
            }
            for (i, &e) in ae.iter().enumerate() {
                for _ in 0..e {
                    term = term * alpha[i].clone();
                }
            }
            acc = acc + term;
        }
        acc
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }
}

/// The substitution Ψ of the parameterization (x, α) ↦ (x, y):
/// `y_1 = α_1 x_2`, `y_i = α_i x_{i+1} − α_{i−1} x_{i−1}` for 1 < i < n,
/// `y_n = −α_{n−1} x_{n−1}` (1-based as written; stored 0-based).
/// Returns, for each y-coordinate, its terms (α index, x index, sign).
pub fn psi_terms(n: usize) -> Vec<Vec<(usize, usize, i8)>> {
    assert!(n >= 2);
    let mut rows = Vec::with_capacity(n);
    rows.push(vec![(0, 1, 1i8)]);
    for k in 1..n - 1 {
        rows.push(vec![(k, k + 1, 1), (k - 1, k - 1, -1)]);
    }
    rows.push(vec![(n - 2, n - 2, -1)]);
    rows
}

/// Evaluates Ψ at a point: maps (x, α) to (x, y).
pub fn psi_eval<K: Coeff>(x: &[K], alpha: &[K]) -> Vec<K> {
    let n = x.len();
    psi_terms(n)
        .iter()
        .map(|terms| {
            let mut acc = K::zero();
            for &(a, b, s) in terms {
                let t = alpha[a].clone() * x[b].clone();
                acc = if s > 0 { acc + t } else { acc - t };
            }
            acc
        })
        .collect()
}

/// Substitutes Ψ into a biquadratic biform, producing `q` of bidegree (4, 2)
/// in (x, α).
pub fn substitute_psi<K: Coeff>(p: &BiformQuad<K>) -> QAlphaForm<K> {
    let n = p.n;
    assert!(n >= 2, "Ψ substitution needs n ≥ 2");
    let psi = psi_terms(n);
    let mut q = QAlphaForm::zero(n);
    for (&(i, j, k, l), c) in &p.coeffs {
        for &(ak, xk, sk) in &psi[k] {
            for &(al, xl, sl) in &psi[l] {
                let sign = (sk * sl) as i64;
                let mut xe = unit_exp(n, i, 1);
                xe = exps_add(&xe, &unit_exp(n, j, 1));
                xe = exps_add(&xe, &unit_exp(n, xk, 1));
                xe = exps_add(&xe, &unit_exp(n, xl, 1));
                let ae = exps_add(&unit_exp(n - 1, ak, 1), &unit_exp(n - 1, al, 1));
                q.add_term(xe, ae, c.clone() * K::from_int(sign));
            }
        }
    }
    q
}

/// A quartic form in x, sparse over exponent vectors of degree 4.
#[derive(Clone, Debug, PartialEq)]
pub struct QuarticForm<K> {
    pub n: usize,
    pub coeffs: BTreeMap<Exps, K>,
}

impl<K: Coeff> QuarticForm<K> {
    pub fn zero(n: usize) -> Self {
        QuarticForm {
            n,
            coeffs: BTreeMap::new(),
        }
    }

    pub fn add_term(&mut self, xe: Exps, c: K) {
        if c.is_zero() {
            return;
        }
        let entry = self.coeffs.entry(xe.clone()).or_insert_with(K::zero);
        *entry = entry.clone() + c;
        if entry.is_zero() {
            self.coeffs.remove(&xe);
        }
    }

    pub fn eval(&self, x: &[K]) -> K {
        let mut acc = K::zero();
        for (xe, c) in &self.coeffs {
            let mut term = c.clone();
            for (i, &e) in xe.iter().enumerate() {
                for _ in 0..e {
                    term = term * x[i].clone();
                }
            }
            acc = acc + term;
        }
        acc
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn scale(&self, s: &K) -> Self {
        let mut out = Self::zero(self.n);
        for (xe, c) in &self.coeffs {
            out.add_term(xe.clone(), c.clone() * s.clone());
        }
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (xe, c) in &other.coeffs {
            out.add_term(xe.clone(), -c.clone());
        }
        out
    }
}

/// The symmetric (n−1)×(n−1) matrix of quartic forms with
/// `αᵀ Q_A(x) α = q_A(x, α)`.
#[derive(Clone, Debug, PartialEq)]
pub struct MatrixQuarticPoly<K> {
    pub n: usize,
    /// Row-major (n−1)² entries; entry (i, j) equals entry (j, i) exactly.
    pub entries: Vec<QuarticForm<K>>,
}

impl<K: Coeff> MatrixQuarticPoly<K> {
    pub fn dim(&self) -> usize {
        self.n - 1
    }

    pub fn entry(&self, i: usize, j: usize) -> &QuarticForm<K> {
        &self.entries[i * self.dim() + j]
    }

    /// Evaluates to a symmetric (n−1)×(n−1) matrix at a point x.
    pub fn eval(&self, x: &[K]) -> MatK<K> {
        let m = self.dim();
        let mut out = MatK::zeros(m, m);
        for i in 0..m {
            for j in 0..m {
                out.set(i, j, self.entry(i, j).eval(x));
            }
        }
        out
    }

    pub fn quadratic_eval(&self, x: &[K], alpha: &[K]) -> K {
        let m = self.dim();
        let q = self.eval(x);
        let mut acc = K::zero();
        for i in 0..m {
            for j in 0..m {
                acc = acc + alpha[i].clone() * q.get(i, j).clone() * alpha[j].clone();
            }
        }
        acc
    }

    pub fn trace(&self) -> QuarticForm<K> {
        let mut t = QuarticForm::zero(self.n);
        for i in 0..self.dim() {
            for (xe, c) in &self.entry(i, i).coeffs {
                t.add_term(xe.clone(), c.clone());
            }
        }
        t
    }

    pub fn to_f64(&self) -> MatrixQuarticPoly<f64> {
        MatrixQuarticPoly {
            n: self.n,
            entries: self
                .entries
                .iter()
                .map(|e| {
                    let mut out = QuarticForm::zero(e.n);
                    for (xe, c) in &e.coeffs {
                        out.add_term(xe.clone(), c.to_f64());
                    }
                    out
                })
                .collect(),
        }
    }
}

/// Collects `q(x, α)` into the matrix `Q_A`: diagonal (i, i) is the
/// coefficient form of α_i², off-diagonal (i, j) is half the coefficient
/// form of α_i α_j.
pub fn build_qa<K: Coeff>(q: &QAlphaForm<K>) -> MatrixQuarticPoly<K> {
    let n = q.n;
    let m = n - 1;
    let half = K::one() / K::from_int(2);
    let mut entries = vec![QuarticForm::zero(n); m * m];
    for ((xe, ae), c) in &q.coeffs {
        let idx: Vec<usize> = ae
            .iter()
            .enumerate()
            .filter(|(_, &e)| e > 0)
            .map(|(i, _)| i)
            .collect();
        match idx.as_slice() {
            [i] => {
                debug_assert_eq!(ae[*i], 2);
                entries[i * m + i].add_term(xe.clone(), c.clone());
            }
            [i, j] => {
                let v = half.clone() * c.clone();
                entries[i * m + j].add_term(xe.clone(), v.clone());
                entries[j * m + i].add_term(xe.clone(), v);
            }
            _ => unreachable!("α-degree is exactly 2"),
        }
    }
    MatrixQuarticPoly { n, entries }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::BigRational;
    use num_traits::Zero;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    type Rat = BigRational;

    fn rat(v: i64) -> Rat {
        Coeff::from_int(v)
    }

    fn random_rat_matrix(n: usize, rng: &mut ChaCha8Rng) -> MatK<Rat> {
        let mut m = MatK::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                m.set(i, j, Rat::from_ratio(rng.gen_range(-9..=9), rng.gen_range(1..=4)));
            }
        }
        m
    }

    fn random_rat_map(n: usize, rng: &mut ChaCha8Rng) -> SymMapTensor<Rat> {
        let mut a = SymMapTensor::zero(n);
        let sym = |rng: &mut ChaCha8Rng| {
            let m = random_rat_matrix(n, rng);
            let half: Rat = Rat::from_ratio(1, 2);
            m.add(&m.transpose()).scale(&half)
        };
        for i in 0..n {
            a.diag[i] = sym(rng);
        }
        for idx in 0..a.offdiag.len() {
            a.offdiag[idx] = sym(rng);
        }
        a
    }

    #[test]
    fn identity_map_gives_inner_product_squared() {
        let a = SymMapTensor::<Rat>::identity_map(3);
        let p = map_to_biform(&a);
        assert_eq!(p, BiformQuad::inner_product_squared(3));
    }

    #[test]
    fn trace_map_gives_sphere_product() {
        let a = SymMapTensor::<Rat>::trace_map(4);
        let p = map_to_biform(&a);
        assert_eq!(p, BiformQuad::sphere_product(4));
    }

    #[test]
    fn biform_eval_matches_naive_expansion() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = random_rat_map(3, &mut rng);
        let p = map_to_biform(&a);
        for _ in 0..20 {
            let x: Vec<Rat> = (0..3).map(|_| rat(rng.gen_range(-5..=5))).collect();
            let y: Vec<Rat> = (0..3).map(|_| rat(rng.gen_range(-5..=5))).collect();
            // yᵀ A(xxᵀ) y computed through the map directly.
            let mut xxt = MatK::zeros(3, 3);
            for i in 0..3 {
                for j in 0..3 {
                    xxt.set(i, j, x[i].clone() * x[j].clone());
                }
            }
            let ax = a.apply(&xxt);
            let mut direct = Rat::zero();
            for i in 0..3 {
                for j in 0..3 {
                    direct = direct + y[i].clone() * ax.get(i, j).clone() * y[j].clone();
                }
            }
            assert_eq!(p.eval(&x, &y), direct);
        }
    }

    #[test]
    fn map_biform_round_trip_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in 2..=4 {
            let a = random_rat_map(n, &mut rng);
            let p = map_to_biform(&a);
            let back = biform_to_map(&p);
            assert_eq!(a, back);
            // p = 0 → zero map.
            assert_eq!(biform_to_map(&BiformQuad::<Rat>::zero(n)), SymMapTensor::zero(n));
        }
    }

    #[test]
    fn inner_product_squared_round_trips_to_identity() {
        let p = BiformQuad::<Rat>::inner_product_squared(3);
        assert_eq!(biform_to_map(&p), SymMapTensor::identity_map(3));
    }

    #[test]
    fn map_to_biform_is_linear() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let a = random_rat_map(3, &mut rng);
        let b = random_rat_map(3, &mut rng);
        let sum = a.add(&b);
        assert_eq!(
            map_to_biform(&sum),
            map_to_biform(&a).add(&map_to_biform(&b))
        );
    }

    #[test]
    fn lie_map_special_cases() {
        let zero = MatK::<Rat>::zeros(3, 3);
        assert_eq!(lie_map(&zero), SymMapTensor::zero(3));
        // C = I gives A(X) = 2X.
        let id = MatK::<Rat>::identity(3);
        let a = lie_map(&id);
        let two = rat(2);
        let mut x = MatK::zeros(3, 3);
        x.set(0, 1, rat(3));
        x.set(1, 0, rat(3));
        x.set(2, 2, rat(-1));
        assert_eq!(a.apply(&x), x.scale(&two));
    }

    #[test]
    fn lie_map_biform_lies_in_ideal() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..10 {
            let c = random_rat_matrix(3, &mut rng);
            let p = map_to_biform(&lie_map(&c));
            let (canonical, mult) = reduce_mod_ideal(&p);
            assert!(canonical.is_zero(), "p_{{CX+XCᵀ}} must reduce to 0 mod I");
            assert_eq!(mult.times_inner_product(), p);
        }
    }

    #[test]
    fn reduce_mod_ideal_examples() {
        // (xᵀy)² is in I with multiplier xᵀy.
        let p = BiformQuad::<Rat>::inner_product_squared(3);
        let (canonical, mult) = reduce_mod_ideal(&p);
        assert!(canonical.is_zero());
        assert_eq!(mult, BilinearForm::inner_product(3));
        // (Σx²)(Σy²) is 1 on T, hence not in I.
        let q = BiformQuad::<Rat>::sphere_product(3);
        let (canonical, _) = reduce_mod_ideal(&q);
        assert!(!canonical.is_zero());
    }

    #[test]
    fn reduce_is_projection() {
        // canonical part is unchanged by a second reduction, and
        // p = canonical + mult·(xᵀy) exactly.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = map_to_biform(&random_rat_map(3, &mut rng));
        let (canonical, mult) = reduce_mod_ideal(&p);
        assert_eq!(canonical.add(&mult.times_inner_product()), p);
        let (canonical2, mult2) = reduce_mod_ideal(&canonical);
        assert_eq!(canonical2, canonical);
        assert!(mult2.times_inner_product().is_zero());
    }

    #[test]
    fn psi_image_lies_in_variety() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in 2..=5 {
            let x: Vec<Rat> = (0..n).map(|_| rat(rng.gen_range(-5..=5))).collect();
            let alpha: Vec<Rat> = (0..n - 1).map(|_| rat(rng.gen_range(-5..=5))).collect();
            let y = psi_eval(&x, &alpha);
            let dot = x
                .iter()
                .zip(&y)
                .fold(Rat::zero(), |acc, (a, b)| acc + a.clone() * b.clone());
            assert_eq!(dot, Rat::zero());
        }
    }

    #[test]
    fn substitute_psi_matches_pointwise_eval() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let p = map_to_biform(&random_rat_map(3, &mut rng));
        let q = substitute_psi(&p);
        for _ in 0..50 {
            let x: Vec<Rat> = (0..3).map(|_| rat(rng.gen_range(-4..=4))).collect();
            let alpha: Vec<Rat> = (0..2).map(|_| rat(rng.gen_range(-4..=4))).collect();
            let y = psi_eval(&x, &alpha);
            assert_eq!(q.eval(&x, &alpha), p.eval(&x, &y));
        }
    }

    #[test]
    fn substitute_psi_kills_ideal() {
        let q = substitute_psi(&BiformQuad::<Rat>::inner_product_squared(4));
        assert!(q.is_zero());
    }

    #[test]
    fn n2_psi_identity_coefficientwise() {
        // q_A(x, α) = α₁² · p_A((x₁,x₂),(x₂,−x₁)) for n = 2.
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let p = map_to_biform(&random_rat_map(2, &mut rng));
        let q = substitute_psi(&p);
        // Build the right-hand side directly.
        let mut expect = QAlphaForm::zero(2);
        for (&(i, j, k, l), c) in &p.coeffs {
            // y₁ ↦ x₂, y₂ ↦ −x₁ (0-based: y_0 → x_1, y_1 → −x_0).
            let sub = |idx: usize| -> (usize, i64) { if idx == 0 { (1, 1) } else { (0, -1) } };
            let (bk, sk) = sub(k);
            let (bl, sl) = sub(l);
            let mut xe = vec![0u8; 2];
            xe[i] += 1;
            xe[j] += 1;
            xe[bk] += 1;
            xe[bl] += 1;
            expect.add_term(xe, vec![2u8], c.clone() * Rat::from_int(sk * sl));
        }
        assert_eq!(q, expect);
    }

    #[test]
    fn qa_matrix_matches_quadratic_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(53);
        let p = map_to_biform(&SymMapTensor::<Rat>::trace_map(3));
        let q = substitute_psi(&p);
        let qa = build_qa(&q);
        assert_eq!(qa.dim(), 2);
        for _ in 0..30 {
            let x: Vec<Rat> = (0..3).map(|_| rat(rng.gen_range(-4..=4))).collect();
            let alpha: Vec<Rat> = (0..2).map(|_| rat(rng.gen_range(-4..=4))).collect();
            assert_eq!(qa.quadratic_eval(&x, &alpha), q.eval(&x, &alpha));
        }
        // Symmetry is exact.
        for i in 0..2 {
            for j in 0..2 {
                assert_eq!(qa.entry(i, j), qa.entry(j, i));
            }
        }
    }

    #[test]
    fn qa_of_zero_is_zero_and_n2_is_scalar() {
        let qa = build_qa(&QAlphaForm::<Rat>::zero(3));
        assert!(qa.entries.iter().all(|e| e.is_zero()));
        let mut rng = ChaCha8Rng::seed_from_u64(59);
        let p = map_to_biform(&random_rat_map(2, &mut rng));
        let qa = build_qa(&substitute_psi(&p));
        assert_eq!(qa.dim(), 1);
        // The single entry is p((x₁,x₂),(x₂,−x₁)).
        for _ in 0..20 {
            let x: Vec<Rat> = (0..2).map(|_| rat(rng.gen_range(-4..=4))).collect();
            let y = vec![x[1].clone(), -x[0].clone()];
            assert_eq!(qa.entry(0, 0).eval(&x), p.eval(&x, &y));
        }
    }

    #[test]
    fn bilinear_split_recomposes() {
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        let g = BilinearForm::from_matrix(random_rat_matrix(4, &mut rng));
        let (s, a) = g.split();
        assert_eq!(s.add(&a), g.b);
        assert_eq!(s, s.transpose());
        assert_eq!(a, a.transpose().scale(&rat(-1)));
    }
}
