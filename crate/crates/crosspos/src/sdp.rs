//! Solver-agnostic semidefinite feasibility problems and a built-in dense
//! interior-point backend.
//!
//! Problems are stated over a list of PSD blocks plus unconstrained scalar
//! variables, with sparse linear equalities and either a pure feasibility
//! objective or "maximize one designated free variable". That last form is
//! what the certificate layer uses everywhere: feasibility questions are
//! posed as "maximize the margin t with `G − tI ⪰ 0`", which keeps every
//! solve strictly feasible and bounded.
//!
//! The backend is a standard infeasible-start primal-dual predictor-corrector
//! method (HKM direction, symmetrized). Free variables are eliminated by
//! Gauss-Jordan pivoting before the cone iteration starts and recovered
//! afterwards, together with dual multipliers for the original equalities.
//! Block sizes in this crate stay ≤ ~100 and constraint counts ≤ ~800, so
//! dense Schur-complement linear algebra is the right tool.
//!
//! Certificate soundness never rests on the solver status: callers re-verify
//! every returned matrix independently.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Where a coefficient in an equality row points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "var")]
pub enum Term {
    /// Coefficient of the upper-triangle entry (i, j), i ≤ j, of a PSD
    /// block. The functional contributes `coeff · X[i,j]` (entries are not
    /// double-counted; symmetry is implicit).
    #[serde(rename = "block")]
    Block {
        block: usize,
        i: usize,
        j: usize,
        coeff: f64,
    },
    /// Coefficient of a free scalar variable.
    #[serde(rename = "free")]
    Free { idx: usize, coeff: f64 },
}

/// A sparse linear equality `Σ terms = rhs`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Equality {
    pub terms: Vec<Term>,
    pub rhs: f64,
}

/// Objective of an [`SdpProblem`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Objective {
    #[serde(rename = "feasibility")]
    Feasibility,
    /// Maximize the designated free variable (margin problems).
    #[serde(rename = "maximize_free")]
    MaximizeFree(usize),
}

/// A conic feasibility problem over PSD blocks and free scalars.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SdpProblem {
    /// (name, side length) of each PSD block.
    pub blocks: Vec<(String, usize)>,
    pub free_vars: usize,
    pub equalities: Vec<Equality>,
    pub objective: Objective,
}

impl SdpProblem {
    pub fn new(objective: Objective) -> Self {
        SdpProblem {
            blocks: vec![],
            free_vars: 0,
            equalities: vec![],
            objective,
        }
    }

    pub fn add_block(&mut self, name: &str, size: usize) -> usize {
        self.blocks.push((name.to_string(), size));
        self.blocks.len() - 1
    }

    pub fn add_free(&mut self) -> usize {
        self.free_vars += 1;
        self.free_vars - 1
    }

    pub fn add_equality(&mut self, terms: Vec<Term>, rhs: f64) {
        self.equalities.push(Equality { terms, rhs });
    }

    /// Validates that every term references a declared variable.
    pub fn validate(&self) -> Result<(), String> {
        for (r, eq) in self.equalities.iter().enumerate() {
            for t in &eq.terms {
                match *t {
                    Term::Block { block, i, j, .. } => {
                        let size = self
                            .blocks
                            .get(block)
                            .ok_or_else(|| format!("row {r}: unknown block {block}"))?
                            .1;
                        if i > j || j >= size {
                            return Err(format!("row {r}: bad entry ({i},{j}) in block {block}"));
                        }
                    }
                    Term::Free { idx, .. } => {
                        if idx >= self.free_vars {
                            return Err(format!("row {r}: unknown free variable {idx}"));
                        }
                    }
                }
            }
        }
        if let Objective::MaximizeFree(idx) = self.objective {
            if idx >= self.free_vars {
                return Err(format!("objective references unknown free variable {idx}"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SdpStatus {
    #[serde(rename = "optimal")]
    Optimal,
    /// Primal equalities appear unsatisfiable over the cone.
    #[serde(rename = "infeasible")]
    Infeasible,
    /// Iteration limit or numerical trouble; best iterate returned.
    #[serde(rename = "unknown")]
    Unknown,
}

/// Solver output: block values, free values, equality duals, diagnostics.
#[derive(Clone, Debug)]
pub struct SdpSolution {
    pub status: SdpStatus,
    pub blocks: Vec<DMatrix<f64>>,
    pub free: Vec<f64>,
    /// Dual multipliers, one per original equality row.
    pub duals: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub duality_gap: f64,
}

/// A conic-feasibility backend. Any PSD-cone solver can stand behind this.
pub trait SdpBackend {
    fn solve(&self, prob: &SdpProblem) -> Result<SdpSolution, String>;
}

/// Settings for the built-in interior-point backend.
#[derive(Clone, Copy, Debug)]
pub struct IpmSettings {
    pub max_iter: usize,
    pub tol: f64,
    pub step_frac: f64,
}

impl Default for IpmSettings {
    fn default() -> Self {
        IpmSettings {
            max_iter: 120,
            tol: 1e-10,
            step_frac: 0.98,
        }
    }
}

/// Dense primal-dual interior-point solver (HKM predictor-corrector).
#[derive(Clone, Copy, Debug, Default)]
pub struct InteriorPointSolver {
    pub settings: IpmSettings,
}

impl SdpBackend for InteriorPointSolver {
    fn solve(&self, prob: &SdpProblem) -> Result<SdpSolution, String> {
        prob.validate()?;
        solve_ipm(prob, &self.settings)
    }
}

// --------------------------------------------------------------------------
// svec layout: block b of size s contributes s(s+1)/2 coordinates with the
// usual √2 scaling on off-diagonal entries, so ⟨A, X⟩ = svec(A)ᵀ svec(X).
// --------------------------------------------------------------------------

const SQRT2: f64 = std::f64::consts::SQRT_2;

#[derive(Clone)]
struct Layout {
    sizes: Vec<usize>,
    offsets: Vec<usize>,
    total: usize,
}

impl Layout {
    fn new(sizes: &[usize]) -> Self {
        let mut offsets = Vec::with_capacity(sizes.len());
        let mut total = 0;
        for &s in sizes {
            offsets.push(total);
            total += s * (s + 1) / 2;
        }
        Layout {
            sizes: sizes.to_vec(),
            offsets,
            total,
        }
    }

    fn index(&self, block: usize, i: usize, j: usize) -> usize {
        debug_assert!(i <= j);
        self.offsets[block] + j * (j + 1) / 2 + i
    }

    fn svec(&self, mats: &[DMatrix<f64>]) -> DVector<f64> {
        let mut v = DVector::zeros(self.total);
        for (b, m) in mats.iter().enumerate() {
            let s = self.sizes[b];
            for j in 0..s {
                for i in 0..=j {
                    let idx = self.index(b, i, j);
                    v[idx] = if i == j { m[(i, j)] } else { SQRT2 * m[(i, j)] };
                }
            }
        }
        v
    }

    fn unsvec(&self, v: &DVector<f64>) -> Vec<DMatrix<f64>> {
        self.sizes
            .iter()
            .enumerate()
            .map(|(b, &s)| {
                let mut m = DMatrix::zeros(s, s);
                for j in 0..s {
                    for i in 0..=j {
                        let val = v[self.index(b, i, j)];
                        if i == j {
                            m[(i, j)] = val;
                        } else {
                            m[(i, j)] = val / SQRT2;
                            m[(j, i)] = val / SQRT2;
                        }
                    }
                }
                m
            })
            .collect()
    }
}

/// Sparse row over svec coordinates.
#[derive(Clone, Debug)]
struct SpRow {
    entries: Vec<(usize, f64)>,
}

impl SpRow {
    fn dot(&self, v: &DVector<f64>) -> f64 {
        self.entries.iter().map(|&(k, c)| c * v[k]).sum()
    }

    fn norm(&self) -> f64 {
        self.entries.iter().map(|&(_, c)| c * c).sum::<f64>().sqrt()
    }

    fn scale(&mut self, s: f64) {
        for e in &mut self.entries {
            e.1 *= s;
        }
    }
}

struct Reduced {
    layout: Layout,
    rows: Vec<SpRow>,
    rhs: DVector<f64>,
    /// Objective over svec coordinates (to be maximized).
    obj: DVector<f64>,
    /// Pivot bookkeeping for free-variable recovery: (free idx, row over
    /// svec coords, rhs) with the free variable isolated on the left.
    pivots: Vec<(usize, SpRow, f64)>,
    /// Row-combination matrix mapping original rows to final rows, for dual
    /// recovery.
    trans: DMatrix<f64>,
    reduced_of_final: Vec<usize>,
    pivot_of_final: Vec<usize>,
    cfree: Vec<f64>,
    row_scales: Vec<f64>,
}

/// Eliminates free variables by Gauss-Jordan pivoting and normalizes rows.
fn reduce_problem(prob: &SdpProblem) -> Result<Reduced, String> {
    let sizes: Vec<usize> = prob.blocks.iter().map(|b| b.1).collect();
    let layout = Layout::new(&sizes);
    let m = prob.equalities.len();
    let nf = prob.free_vars;

    let mut xrows: Vec<Vec<(usize, f64)>> = vec![vec![]; m];
    let mut frows: Vec<Vec<f64>> = vec![vec![0.0; nf]; m];
    let mut rhs: Vec<f64> = Vec::with_capacity(m);
    for (r, eq) in prob.equalities.iter().enumerate() {
        for t in &eq.terms {
            match *t {
                Term::Block { block, i, j, coeff } => {
                    let idx = layout.index(block, i, j);
                    // ⟨A, X⟩ convention: coeff multiplies X[i,j] once, so the
                    // svec coefficient carries 1/√2 off the diagonal.
                    let c = if i == j { coeff } else { coeff / SQRT2 };
                    xrows[r].push((idx, c));
                }
                Term::Free { idx, coeff } => frows[r][idx] += coeff,
            }
        }
        xrows[r].sort_by_key(|e| e.0);
        xrows[r].dedup_by(|b, a| {
            if a.0 == b.0 {
                a.1 += b.1;
                true
            } else {
                false
            }
        });
        rhs.push(eq.rhs);
    }

    let mut cfree = vec![0.0; nf];
    if let Objective::MaximizeFree(idx) = prob.objective {
        cfree[idx] = 1.0;
    }

    let mut trans = DMatrix::<f64>::identity(m, m);
    let mut used = vec![false; m];
    let mut pivot_rows: Vec<(usize, usize)> = Vec::new();

    for f in 0..nf {
        let mut best = (0usize, 0.0f64);
        for r in 0..m {
            if !used[r] && frows[r][f].abs() > best.1 {
                best = (r, frows[r][f].abs());
            }
        }
        let col_scale: f64 = frows
            .iter()
            .map(|row| row[f].abs())
            .fold(0.0, f64::max)
            .max(1.0);
        if best.1 <= 1e-12 * col_scale {
            if cfree[f] != 0.0 {
                return Err(format!(
                    "objective variable {f} is unconstrained; problem unbounded"
                ));
            }
            continue;
        }
        let p = best.0;
        used[p] = true;
        pivot_rows.push((f, p));
        let piv = frows[p][f];
        for v in frows[p].iter_mut() {
            *v /= piv;
        }
        for e in xrows[p].iter_mut() {
            e.1 /= piv;
        }
        rhs[p] /= piv;
        for c in 0..m {
            trans[(p, c)] /= piv;
        }
        let prow_f = frows[p].clone();
        let prow_x = xrows[p].clone();
        let prow_rhs = rhs[p];
        let prow_t: Vec<f64> = (0..m).map(|c| trans[(p, c)]).collect();
        for r in 0..m {
            if r == p {
                continue;
            }
            let factor = frows[r][f];
            if factor == 0.0 {
                continue;
            }
            for (v, pv) in frows[r].iter_mut().zip(&prow_f) {
                *v -= factor * pv;
            }
            frows[r][f] = 0.0;
            let mut merged = Vec::with_capacity(xrows[r].len() + prow_x.len());
            let (mut a, mut b) = (0usize, 0usize);
            while a < xrows[r].len() || b < prow_x.len() {
                if b >= prow_x.len() || (a < xrows[r].len() && xrows[r][a].0 < prow_x[b].0) {
                    merged.push(xrows[r][a]);
                    a += 1;
                } else if a >= xrows[r].len() || prow_x[b].0 < xrows[r][a].0 {
                    merged.push((prow_x[b].0, -factor * prow_x[b].1));
                    b += 1;
                } else {
                    merged.push((xrows[r][a].0, xrows[r][a].1 - factor * prow_x[b].1));
                    a += 1;
                    b += 1;
                }
            }
            xrows[r] = merged;
            rhs[r] -= factor * prow_rhs;
            for c in 0..m {
                trans[(r, c)] -= factor * prow_t[c];
            }
        }
    }

    // Objective after substitution: maximize Σ cfree[f]·(rhs_p − xrow_p·x).
    let mut obj = DVector::<f64>::zeros(layout.total);
    for &(f, p) in &pivot_rows {
        let c = cfree[f];
        if c == 0.0 {
            continue;
        }
        for &(k, v) in &xrows[p] {
            obj[k] -= c * v;
        }
    }

    let mut rows = Vec::new();
    let mut red_rhs = Vec::new();
    let mut reduced_of_final = Vec::new();
    let mut row_scales = Vec::new();
    for r in 0..m {
        if used[r] {
            continue;
        }
        let mut row = SpRow {
            entries: xrows[r].clone(),
        };
        row.entries.retain(|&(_, c)| c != 0.0);
        let nrm = row.norm();
        if nrm <= 1e-13 {
            if rhs[r].abs() > 1e-9 {
                return Err("inconsistent equality with empty support".into());
            }
            continue; // redundant row
        }
        let s = 1.0 / nrm;
        row.scale(s);
        rows.push(row);
        red_rhs.push(rhs[r] * s);
        reduced_of_final.push(r);
        row_scales.push(s);
    }

    let pivots = pivot_rows
        .iter()
        .map(|&(f, p)| {
            (
                f,
                SpRow {
                    entries: xrows[p].clone(),
                },
                rhs[p],
            )
        })
        .collect();

    Ok(Reduced {
        layout,
        rows,
        rhs: DVector::from_vec(red_rhs),
        obj,
        pivots,
        trans,
        reduced_of_final,
        pivot_of_final: pivot_rows.iter().map(|&(_, p)| p).collect(),
        cfree,
        row_scales,
    })
}

fn sym(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Largest step α ∈ (0, cap] with `M + α·dM ≻ 0`, via the spectrum of
/// `L⁻¹ dM L⁻ᵀ`.
fn max_step(m: &DMatrix<f64>, dm: &DMatrix<f64>, cap: f64) -> f64 {
    let chol = match m.clone().cholesky() {
        Some(c) => c,
        None => return 0.0,
    };
    let l_inv_dm = chol.l().solve_lower_triangular(dm).unwrap();
    let w = chol
        .l()
        .solve_lower_triangular(&l_inv_dm.transpose())
        .unwrap();
    let lam_min = sym(&w)
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .fold(f64::INFINITY, |a, &b| a.min(b));
    if lam_min >= -1e-14 {
        cap
    } else {
        (-1.0 / lam_min).min(cap)
    }
}

fn solve_ipm(prob: &SdpProblem, settings: &IpmSettings) -> Result<SdpSolution, String> {
    let red = reduce_problem(prob)?;
    let layout = red.layout.clone();
    let m = red.rows.len();
    let nblocks = layout.sizes.len();
    let nu: usize = layout.sizes.iter().sum();
    if nu == 0 {
        return Err("no PSD blocks".into());
    }

    // Internally minimize ⟨C, X⟩ with C = −obj (callers maximize).
    let cvec = -&red.obj;
    let cmats = layout.unsvec(&cvec);
    let cnorm = cvec.norm().max(1.0);
    let bnorm = red.rhs.norm().max(1.0);

    let mut xi: f64 = 10.0;
    for (r, row) in red.rows.iter().enumerate() {
        xi = xi.max((1.0 + red.rhs[r].abs()) / (1.0 + row.norm()));
    }
    let eta = 10.0f64.max(cnorm);
    let mut xs: Vec<DMatrix<f64>> = layout
        .sizes
        .iter()
        .map(|&s| DMatrix::identity(s, s) * xi)
        .collect();
    let mut zs: Vec<DMatrix<f64>> = layout
        .sizes
        .iter()
        .map(|&s| DMatrix::identity(s, s) * eta)
        .collect();
    let mut y = DVector::<f64>::zeros(m);

    let a_apply = |v: &DVector<f64>| -> DVector<f64> {
        DVector::from_iterator(m, red.rows.iter().map(|r| r.dot(v)))
    };
    let at_apply = |w: &DVector<f64>| -> DVector<f64> {
        let mut out = DVector::zeros(layout.total);
        for (r, row) in red.rows.iter().enumerate() {
            let c = w[r];
            if c != 0.0 {
                for &(k, v) in &row.entries {
                    out[k] += c * v;
                }
            }
        }
        out
    };

    let mut status = SdpStatus::Unknown;
    let mut iters = 0;
    let (mut rel_p, mut rel_d, mut rel_g) = (f64::INFINITY, f64::INFINITY, f64::INFINITY);
    // Best-iterate snapshot: Mehrotra steps can overshoot once the Schur
    // complement degenerates near the optimum; keep the cleanest point.
    let mut best_merit = f64::INFINITY;
    let mut best: Option<(Vec<DMatrix<f64>>, Vec<DMatrix<f64>>, DVector<f64>, f64, f64, f64)> =
        None;

    for it in 0..settings.max_iter {
        iters = it;
        let xsv = layout.svec(&xs);
        let rp = &red.rhs - a_apply(&xsv);
        let aty = layout.unsvec(&at_apply(&y));
        let rd: Vec<DMatrix<f64>> = (0..nblocks)
            .map(|b| &cmats[b] - &zs[b] - &aty[b])
            .collect();
        let gap: f64 = (0..nblocks).map(|b| (&xs[b] * &zs[b]).trace()).sum();
        let mu = gap / nu as f64;
        let pobj = cvec.dot(&xsv);
        let dobj = red.rhs.dot(&y);
        rel_p = rp.norm() / bnorm;
        rel_d = rd.iter().map(|r| r.norm_squared()).sum::<f64>().sqrt() / cnorm;
        rel_g = gap.abs() / (1.0 + pobj.abs() + dobj.abs());
        if std::env::var("CROSSPOS_SDP_TRACE").is_ok() {
            eprintln!("it {it:3} mu {mu:10.3e} rp {rel_p:9.2e} rd {rel_d:9.2e} gap {rel_g:9.2e} pobj {pobj:12.5e} dobj {dobj:12.5e}");
        }
        let merit = rel_p.max(rel_d).max(rel_g);
        if merit < best_merit {
            best_merit = merit;
            best = Some((xs.clone(), zs.clone(), y.clone(), rel_p, rel_d, rel_g));
        } else if best_merit < 1e-8 && merit > 1e3 * best_merit {
            break; // numerical endgame: diverging past a converged point
        }
        if rel_p < settings.tol && rel_d < settings.tol && rel_g < settings.tol.max(1e-12) {
            status = SdpStatus::Optimal;
            break;
        }
        if y.norm() > 1e10 * bnorm && rel_d < 1e-7 {
            status = SdpStatus::Infeasible;
            break;
        }

        let mut zinvs = Vec::with_capacity(nblocks);
        let mut chol_fail = false;
        for z in &zs {
            match z.clone().cholesky() {
                Some(c) => zinvs.push(c.inverse()),
                None => {
                    chol_fail = true;
                    break;
                }
            }
        }
        if chol_fail {
            break; // return best iterate as Unknown
        }

        // Schur complement M[r][c] = ⟨A_r, sym(X A_c Z⁻¹)⟩ (symmetric PSD).
        let mut schur = DMatrix::<f64>::zeros(m, m);
        for c in 0..m {
            let mut v = DVector::zeros(layout.total);
            for &(k, val) in &red.rows[c].entries {
                v[k] = val;
            }
            let amat = layout.unsvec(&v);
            let mut w = Vec::with_capacity(nblocks);
            for b in 0..nblocks {
                w.push(sym(&(&xs[b] * &amat[b] * &zinvs[b])));
            }
            let wv = layout.svec(&w);
            for r in 0..m {
                schur[(r, c)] += red.rows[r].dot(&wv);
            }
        }
        schur = sym(&schur);

        let mut chol_schur = None;
        let mut jitter = 0.0;
        for attempt in 0..4 {
            let trial = if attempt == 0 {
                schur.clone()
            } else {
                jitter = if jitter == 0.0 {
                    1e-12 * schur.trace().abs().max(1e-12)
                } else {
                    jitter * 100.0
                };
                &schur + DMatrix::identity(m, m) * jitter
            };
            if let Some(ch) = trial.cholesky() {
                chol_schur = Some(ch);
                break;
            }
        }
        let chol_schur = match chol_schur {
            Some(ch) => ch,
            None => break,
        };

        let rd_mats = &rd;
        let solve_dir = |sigma_mu: f64,
                         corr: Option<&Vec<DMatrix<f64>>>|
         -> (Vec<DMatrix<f64>>, Vec<DMatrix<f64>>, DVector<f64>) {
            // dX = sym((σμI − corr)Z⁻¹ − X − X·dZ·Z⁻¹), dZ = Rd − mat(Aᵀdy).
            let mut stuff = Vec::with_capacity(nblocks);
            for b in 0..nblocks {
                let s = layout.sizes[b];
                let mut t = DMatrix::<f64>::identity(s, s) * sigma_mu;
                if let Some(cc) = corr {
                    t -= &cc[b];
                }
                let term = &t * &zinvs[b] - &xs[b] - &xs[b] * &rd_mats[b] * &zinvs[b];
                stuff.push(sym(&term));
            }
            let rhs_y = &rp - a_apply(&layout.svec(&stuff));
            let mut dy = chol_schur.solve(&rhs_y);
            let aty_d = layout.unsvec(&at_apply(&dy));
            let mut dz = Vec::with_capacity(nblocks);
            let mut dx = Vec::with_capacity(nblocks);
            for b in 0..nblocks {
                let dzb = &rd_mats[b] - &aty_d[b];
                // dX = (σμI − corr)Z⁻¹ − X − X·dZ·Z⁻¹, i.e. stuff plus the
                // X·mat(Aᵀdy)·Z⁻¹ part that the Schur solve determined.
                let dxb = sym(&(&stuff[b] + &xs[b] * &aty_d[b] * &zinvs[b]));
                dx.push(dxb);
                dz.push(dzb);
            }
            // Iterative refinement of A(dX) = rp: the products above lose
            // digits once Z is nearly singular, and the injected error
            // otherwise accumulates into the primal residual.
            for _ in 0..2 {
                let err = &rp - a_apply(&layout.svec(&dx));
                if err.norm() <= 1e-14 * (1.0 + rp.norm()) {
                    break;
                }
                let ddy = chol_schur.solve(&err);
                let aty_dd = layout.unsvec(&at_apply(&ddy));
                for b in 0..nblocks {
                    let corr_b = sym(&(&xs[b] * &aty_dd[b] * &zinvs[b]));
                    dx[b] += corr_b;
                    dz[b] -= &aty_dd[b];
                }
                dy += ddy;
            }
            (dx, dz, dy)
        };

        // Predictor.
        let (dxa, dza, _) = solve_dir(0.0, None);
        let mut ap = 1.0f64;
        let mut ad = 1.0f64;
        for b in 0..nblocks {
            ap = ap.min(max_step(&xs[b], &dxa[b], 1.0));
            ad = ad.min(max_step(&zs[b], &dza[b], 1.0));
        }
        ap *= settings.step_frac;
        ad *= settings.step_frac;
        let mut gap_aff = 0.0;
        for b in 0..nblocks {
            gap_aff += ((&xs[b] + &dxa[b] * ap) * (&zs[b] + &dza[b] * ad)).trace();
        }
        let sigma = ((gap_aff / gap).clamp(0.0, 1.0)).powi(3).max(1e-10);

        // Corrector.
        let corr: Vec<DMatrix<f64>> = (0..nblocks).map(|b| &dxa[b] * &dza[b]).collect();
        let (dx, dz, dy) = solve_dir(sigma * mu, Some(&corr));
        let mut ap = 1.0f64;
        let mut ad = 1.0f64;
        for b in 0..nblocks {
            ap = ap.min(max_step(&xs[b], &dx[b], 1.0));
            ad = ad.min(max_step(&zs[b], &dz[b], 1.0));
        }
        ap *= settings.step_frac;
        ad *= settings.step_frac;
        for b in 0..nblocks {
            xs[b] += &dx[b] * ap;
            zs[b] += &dz[b] * ad;
        }
        y += &dy * ad;
    }

    // Fall back to the best iterate seen.
    if let Some((bx, bz, by, bp, bd, bg)) = best {
        if bp.max(bd).max(bg) < rel_p.max(rel_d).max(rel_g) {
            xs = bx;
            zs = bz;
            y = by;
            rel_p = bp;
            rel_d = bd;
            rel_g = bg;
        }
    }
    if status == SdpStatus::Unknown
        && rel_p < settings.tol * 10.0
        && rel_d < settings.tol * 10.0
        && rel_g < settings.tol * 10.0
    {
        status = SdpStatus::Optimal;
    }
    let _ = &zs;
    let xsv = layout.svec(&xs);
    let mut free = vec![0.0; prob.free_vars];
    for (f, row, r) in &red.pivots {
        free[*f] = *r - row.dot(&xsv);
    }

    // Dual recovery: the final system rows are linear combinations (trans)
    // of the original rows; pivot-row multipliers are pinned by dual
    // feasibility on their free variable.
    let m_orig = prob.equalities.len();
    let mut y_final = DVector::<f64>::zeros(m_orig);
    for (pos, &orig) in red.reduced_of_final.iter().enumerate() {
        y_final[orig] = y[pos] * red.row_scales[pos];
    }
    for (pos, &orig) in red.pivot_of_final.iter().enumerate() {
        let f = red.pivots[pos].0;
        y_final[orig] = red.cfree[f];
    }
    let duals_vec = red.trans.transpose() * y_final;
    let duals: Vec<f64> = duals_vec.iter().map(|v| -v).collect();

    let objective = match prob.objective {
        Objective::Feasibility => 0.0,
        Objective::MaximizeFree(idx) => free[idx],
    };

    Ok(SdpSolution {
        status,
        blocks: xs,
        free,
        duals,
        objective,
        iterations: iters,
        primal_residual: rel_p,
        dual_residual: rel_d,
        duality_gap: rel_g,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn min_eig(m: &DMatrix<f64>) -> f64 {
        m.clone()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .fold(f64::INFINITY, |a, &b| a.min(b))
    }

    /// LP corner case: maximize −(x₁+x₂) s.t. x₁ ≥ 3, x₂ ≥ 4 via 1×1 blocks.
    #[test]
    fn lp_as_sdp() {
        let mut p = SdpProblem::new(Objective::MaximizeFree(2));
        let b1 = p.add_block("s1", 1);
        let b2 = p.add_block("s2", 1);
        let x1 = p.add_free();
        let x2 = p.add_free();
        let t = p.add_free();
        p.add_equality(
            vec![
                Term::Block {
                    block: b1,
                    i: 0,
                    j: 0,
                    coeff: 1.0,
                },
                Term::Free { idx: x1, coeff: -1.0 },
            ],
            -3.0,
        );
        p.add_equality(
            vec![
                Term::Block {
                    block: b2,
                    i: 0,
                    j: 0,
                    coeff: 1.0,
                },
                Term::Free { idx: x2, coeff: -1.0 },
            ],
            -4.0,
        );
        p.add_equality(
            vec![
                Term::Free { idx: t, coeff: 1.0 },
                Term::Free { idx: x1, coeff: 1.0 },
                Term::Free { idx: x2, coeff: 1.0 },
            ],
            0.0,
        );
        let sol = InteriorPointSolver::default().solve(&p).unwrap();
        assert_eq!(sol.status, SdpStatus::Optimal);
        assert!((sol.free[x1] - 3.0).abs() < 1e-7, "x1 = {}", sol.free[x1]);
        assert!((sol.free[x2] - 4.0).abs() < 1e-7);
        assert!((sol.objective + 7.0).abs() < 1e-7);
    }

    /// max t with A − tI ⪰ 0 recovers the smallest eigenvalue of A.
    #[test]
    fn min_eigenvalue_problem() {
        let a = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, -0.7, 0.5, -0.7, 2.0]);
        let exact = min_eig(&a);
        let mut p = SdpProblem::new(Objective::MaximizeFree(0));
        let h = p.add_block("H", 3);
        let t = p.add_free();
        for i in 0..3 {
            for j in i..3 {
                let mut terms = vec![Term::Block {
                    block: h,
                    i,
                    j,
                    coeff: 1.0,
                }];
                if i == j {
                    terms.push(Term::Free { idx: t, coeff: 1.0 });
                }
                p.add_equality(terms, a[(i, j)]);
            }
        }
        let sol = InteriorPointSolver::default().solve(&p).unwrap();
        assert_eq!(sol.status, SdpStatus::Optimal);
        assert!(
            (sol.objective - exact).abs() < 1e-8,
            "t* = {} vs λmin = {exact}",
            sol.objective
        );
        assert!(min_eig(&sol.blocks[0]) >= -1e-9);
    }

    /// Random feasible equality system with a margin: returned X satisfies
    /// the equalities, stays PSD, and reports a strictly positive margin.
    #[test]
    fn random_feasibility_with_margin() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let s = 6;
        let mut x0 = DMatrix::<f64>::zeros(s, s);
        for i in 0..s {
            for j in 0..s {
                x0[(i, j)] = rng.gen_range(-1.0..1.0);
            }
        }
        let x0 = &x0 * x0.transpose() + DMatrix::identity(s, s) * 0.5;
        let mut p = SdpProblem::new(Objective::MaximizeFree(0));
        let hb = p.add_block("H", s);
        let t = p.add_free();
        let cap = p.add_block("cap", 1);
        for _ in 0..8 {
            let mut terms = vec![];
            let mut bval = 0.0;
            let mut diag_sum = 0.0;
            for i in 0..s {
                for j in i..s {
                    let c: f64 = rng.gen_range(-1.0..1.0);
                    // Functional value c·X_ij + c·X_ji for i < j: write 2c on
                    // the upper triangle; b evaluated at X0 guarantees a
                    // margin of at least λmin(X0) > 0.
                    let cc = if i == j { c } else { 2.0 * c };
                    bval += cc * x0[(i, j)];
                    terms.push(Term::Block {
                        block: hb,
                        i,
                        j,
                        coeff: cc,
                    });
                    if i == j {
                        diag_sum += cc;
                    }
                }
            }
            terms.push(Term::Free {
                idx: t,
                coeff: diag_sum,
            });
            p.add_equality(terms, bval);
        }
        p.add_equality(
            vec![
                Term::Free { idx: t, coeff: 1.0 },
                Term::Block {
                    block: cap,
                    i: 0,
                    j: 0,
                    coeff: 1.0,
                },
            ],
            1.0,
        );
        let sol = InteriorPointSolver::default().solve(&p).unwrap();
        assert_eq!(sol.status, SdpStatus::Optimal);
        let tstar = sol.free[t];
        assert!(tstar > 1e-4, "margin t* = {tstar}");
        assert!(min_eig(&sol.blocks[0]) >= -1e-9);
        assert!(sol.primal_residual < 1e-9);
        assert!(sol.dual_residual < 1e-9);
    }

    /// Problem JSON round-trips through the documented adapter format.
    #[test]
    fn problem_serde_round_trip() {
        let mut p = SdpProblem::new(Objective::MaximizeFree(0));
        p.add_block("G", 2);
        p.add_free();
        p.add_equality(
            vec![
                Term::Block {
                    block: 0,
                    i: 0,
                    j: 1,
                    coeff: 2.0,
                },
                Term::Free { idx: 0, coeff: -1.0 },
            ],
            0.5,
        );
        let text = serde_json::to_string(&p).unwrap();
        let back: SdpProblem = serde_json::from_str(&text).unwrap();
        assert_eq!(back.blocks, p.blocks);
        assert_eq!(back.equalities.len(), 1);
        assert_eq!(back.equalities[0].terms, p.equalities[0].terms);
    }
}
