//! JSON persistence and run reports.
//!
//! Every file format the CLI reads or writes lives here, mirrored by the
//! schema documents under `schemas/` at the repository root (version 1):
//!
//! - biforms: `{"n": …, "coeffs": [{"i","j","k","l","c"}]}` with 1-based
//!   canonical indices i ≤ j, k ≤ l and coefficients that are JSON numbers
//!   or exact `"p/q"` strings;
//! - maps on symmetric matrices: row-major images of the basis matrices;
//! - seed-point files: rows `[x₁…x_n, y₁…y_n]`;
//! - general (x, y)-polynomials for the Monte Carlo integrator;
//! - certificates and full generator runs.
//!
//! Output floats are rendered with 17 significant digits (`{:.16e}`), which
//! round-trips `f64` exactly; re-running a command with the same seed
//! reproduces output files byte-for-byte. Run reports carry wall-clock
//! timings and are written separately from the reproducible artifacts.

use crate::certify::{BidegForm, NotSosWitness, PsatzCertificate, SosCertificateModI};
use crate::generator::GeneratorOutput;
use crate::polyalg::{BiformQuad, BilinearForm, MatK, SymMapTensor};
use crate::scalar::{rational_to_string, Scalar};
use nalgebra::DMatrix;
use num_rational::BigRational;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::collections::BTreeMap;
use std::io::Write;

pub const SCHEMA_VERSION: &str = "1";

#[derive(Debug)]
pub struct IoError(pub String);

impl std::fmt::Display for IoError {
    fmt_impl!();
}

macro_rules! fmt_impl {
    () => {
        fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
            write!(f, "{}", self.0)
        }
    };
}
use fmt_impl;

impl std::error::Error for IoError {}

fn err<T>(msg: impl Into<String>) -> Result<T, IoError> {
    Err(IoError(msg.into()))
}

// ---------------------------------------------------------------------------
// 17-significant-digit JSON rendering.
// ---------------------------------------------------------------------------

/// Serializes a JSON value with every float rendered as `{:.16e}`
/// (17 significant digits, lossless for f64).
pub fn to_json_17(value: &Value) -> String {
    let mut out = String::new();
    render(value, &mut out);
    out
}

fn render(value: &Value, out: &mut String) {
    match value {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                out.push_str(&i.to_string());
            } else if let Some(u) = n.as_u64() {
                out.push_str(&u.to_string());
            } else {
                let f = n.as_f64().unwrap_or(f64::NAN);
                out.push_str(&format!("{f:.16e}"));
            }
        }
        Value::String(s) => {
            out.push_str(&serde_json::to_string(s).expect("string serialization"));
        }
        Value::Array(items) => {
            out.push('[');
            for (k, item) in items.iter().enumerate() {
                if k > 0 {
                    out.push(',');
                }
                render(item, out);
            }
            out.push(']');
        }
        Value::Object(map) => {
            out.push('{');
            for (k, (key, item)) in map.iter().enumerate() {
                if k > 0 {
                    out.push(',');
                }
                out.push_str(&serde_json::to_string(key).expect("key serialization"));
                out.push(':');
                render(item, out);
            }
            out.push('}');
        }
    }
}

pub fn write_json_17(path: &std::path::Path, value: &Value) -> Result<(), IoError> {
    let mut f = std::fs::File::create(path)
        .map_err(|e| IoError(format!("cannot create {}: {e}", path.display())))?;
    f.write_all(to_json_17(value).as_bytes())
        .and_then(|_| f.write_all(b"\n"))
        .map_err(|e| IoError(format!("cannot write {}: {e}", path.display())))
}

// ---------------------------------------------------------------------------
// Biforms.
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct CoeffEntry {
    i: usize,
    j: usize,
    k: usize,
    l: usize,
    c: Scalar,
}

#[derive(Serialize, Deserialize)]
struct BiformJson {
    n: usize,
    coeffs: Vec<CoeffEntry>,
}

/// A biform parsed from JSON: exact when every coefficient was a rational
/// string, floating otherwise.
pub enum ParsedBiform {
    Rational(BiformQuad<BigRational>),
    Float(BiformQuad<f64>),
}

impl ParsedBiform {
    pub fn to_f64(&self) -> BiformQuad<f64> {
        match self {
            ParsedBiform::Rational(p) => p.to_f64(),
            ParsedBiform::Float(p) => p.clone(),
        }
    }
}

pub fn biform_to_value(p: &BiformQuad<f64>) -> Value {
    let coeffs: Vec<Value> = p
        .coeffs
        .iter()
        .map(|(&(i, j, k, l), &c)| {
            serde_json::json!({
                "i": i + 1, "j": j + 1, "k": k + 1, "l": l + 1, "c": c,
            })
        })
        .collect();
    serde_json::json!({ "n": p.n, "coeffs": coeffs })
}

pub fn biform_rational_to_value(p: &BiformQuad<BigRational>) -> Value {
    let coeffs: Vec<Value> = p
        .coeffs
        .iter()
        .map(|(&(i, j, k, l), c)| {
            serde_json::json!({
                "i": i + 1, "j": j + 1, "k": k + 1, "l": l + 1,
                "c": rational_to_string(c),
            })
        })
        .collect();
    serde_json::json!({ "n": p.n, "coeffs": coeffs })
}

pub fn biform_from_value(v: &Value) -> Result<ParsedBiform, IoError> {
    let parsed: BiformJson =
        serde_json::from_value(v.clone()).map_err(|e| IoError(format!("biform: {e}")))?;
    if parsed.n < 2 {
        return err("biform: n must be ≥ 2");
    }
    let all_rational = parsed
        .coeffs
        .iter()
        .all(|e| matches!(e.c, Scalar::Rational(_)));
    let check = |e: &CoeffEntry| -> Result<(usize, usize, usize, usize), IoError> {
        if e.i < 1 || e.j < e.i || e.j > parsed.n || e.k < 1 || e.l < e.k || e.l > parsed.n {
            return err(format!(
                "biform: indices ({},{},{},{}) violate 1 ≤ i ≤ j ≤ n, 1 ≤ k ≤ l ≤ n",
                e.i, e.j, e.k, e.l
            ));
        }
        Ok((e.i - 1, e.j - 1, e.k - 1, e.l - 1))
    };
    if all_rational {
        let mut p = BiformQuad::<BigRational>::zero(parsed.n);
        for e in &parsed.coeffs {
            let (i, j, k, l) = check(e)?;
            if let Scalar::Rational(r) = &e.c {
                p.add_term(i, j, k, l, r.clone());
            }
        }
        Ok(ParsedBiform::Rational(p))
    } else {
        let mut p = BiformQuad::<f64>::zero(parsed.n);
        for e in &parsed.coeffs {
            let (i, j, k, l) = check(e)?;
            p.add_term(i, j, k, l, e.c.to_f64());
        }
        Ok(ParsedBiform::Float(p))
    }
}

// ---------------------------------------------------------------------------
// Maps on symmetric matrices.
// ---------------------------------------------------------------------------

fn matrix_to_value(m: &MatK<f64>) -> Value {
    Value::Array(
        (0..m.rows)
            .map(|i| {
                Value::Array(
                    (0..m.cols)
                        .map(|j| serde_json::json!(*m.get(i, j)))
                        .collect(),
                )
            })
            .collect(),
    )
}

fn matrix_from_value(v: &Value, n: usize) -> Result<MatK<f64>, IoError> {
    let rows: Vec<Vec<Value>> =
        serde_json::from_value(v.clone()).map_err(|e| IoError(format!("matrix: {e}")))?;
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return err(format!("matrix: expected {n}×{n}"));
    }
    let mut m = MatK::zeros(n, n);
    for (i, row) in rows.iter().enumerate() {
        for (j, cell) in row.iter().enumerate() {
            let s: Scalar =
                serde_json::from_value(cell.clone()).map_err(|e| IoError(format!("matrix: {e}")))?;
            m.set(i, j, s.to_f64());
        }
    }
    Ok(m)
}

pub fn symmap_to_value(a: &SymMapTensor<f64>) -> Value {
    let diag: Vec<Value> = a.diag.iter().map(matrix_to_value).collect();
    let offdiag: Vec<Value> = crate::polyalg::pairs(a.n)
        .into_iter()
        .zip(&a.offdiag)
        .map(|((i, j), m)| {
            serde_json::json!({ "i": i + 1, "j": j + 1, "m": matrix_to_value(m) })
        })
        .collect();
    serde_json::json!({ "n": a.n, "diag": diag, "offdiag": offdiag })
}

pub fn symmap_from_value(v: &Value) -> Result<SymMapTensor<f64>, IoError> {
    let n = v["n"]
        .as_u64()
        .ok_or_else(|| IoError("map: missing n".into()))? as usize;
    if n < 2 {
        return err("map: n must be ≥ 2");
    }
    let diag = v["diag"]
        .as_array()
        .ok_or_else(|| IoError("map: missing diag".into()))?;
    if diag.len() != n {
        return err(format!("map: expected {n} diagonal images"));
    }
    let mut a = SymMapTensor::zero(n);
    for (i, m) in diag.iter().enumerate() {
        a.diag[i] = matrix_from_value(m, n)?;
    }
    let off = v["offdiag"]
        .as_array()
        .ok_or_else(|| IoError("map: missing offdiag".into()))?;
    if off.len() != n * (n - 1) / 2 {
        return err(format!("map: expected {} off-diagonal images", n * (n - 1) / 2));
    }
    for entry in off {
        let i = entry["i"].as_u64().ok_or_else(|| IoError("map: offdiag i".into()))? as usize;
        let j = entry["j"].as_u64().ok_or_else(|| IoError("map: offdiag j".into()))? as usize;
        if i < 1 || j <= i || j > n {
            return err(format!("map: bad pair ({i},{j})"));
        }
        let idx = crate::polyalg::pair_index(i - 1, j - 1, n);
        a.offdiag[idx] = matrix_from_value(&entry["m"], n)?;
    }
    // Symmetry gate from the storage contract.
    let asym = a.max_asymmetry();
    if asym > 1e-12 * a.diag.iter().chain(a.offdiag.iter()).map(|m| m.max_abs()).fold(1.0, f64::max)
    {
        return err(format!("map: stored image asymmetry {asym:e} exceeds 1e-12"));
    }
    Ok(a)
}

// ---------------------------------------------------------------------------
// Seed-point files (rows of [x | y]).
// ---------------------------------------------------------------------------

pub struct SeedFile {
    pub n: usize,
    pub pairs: Vec<(Vec<f64>, Vec<f64>)>,
    /// Exact pairs when every entry was rational.
    pub exact: Option<Vec<(Vec<BigRational>, Vec<BigRational>)>>,
}

pub fn seeds_from_value(v: &Value) -> Result<SeedFile, IoError> {
    let n = v["n"]
        .as_u64()
        .ok_or_else(|| IoError("seeds: missing n".into()))? as usize;
    let rows = v["rows"]
        .as_array()
        .ok_or_else(|| IoError("seeds: missing rows".into()))?;
    let mut pairs = Vec::new();
    let mut exact: Option<Vec<(Vec<BigRational>, Vec<BigRational>)>> = Some(Vec::new());
    for row in rows {
        let cells = row
            .as_array()
            .ok_or_else(|| IoError("seeds: row is not an array".into()))?;
        if cells.len() != 2 * n {
            return err(format!("seeds: row length {} ≠ 2n = {}", cells.len(), 2 * n));
        }
        let scalars: Vec<Scalar> = cells
            .iter()
            .map(|c| serde_json::from_value(c.clone()).map_err(|e| IoError(format!("seeds: {e}"))))
            .collect::<Result<_, _>>()?;
        let x: Vec<f64> = scalars[..n].iter().map(Scalar::to_f64).collect();
        let y: Vec<f64> = scalars[n..].iter().map(Scalar::to_f64).collect();
        if let Some(ex) = exact.as_mut() {
            if scalars.iter().all(|s| s.as_rational().is_some()) {
                ex.push((
                    scalars[..n]
                        .iter()
                        .map(|s| s.as_rational().unwrap().clone())
                        .collect(),
                    scalars[n..]
                        .iter()
                        .map(|s| s.as_rational().unwrap().clone())
                        .collect(),
                ));
            } else {
                exact = None;
            }
        }
        pairs.push((x, y));
    }
    Ok(SeedFile { n, pairs, exact })
}

pub fn seeds_to_value_rational(n: usize, pairs: &[(Vec<BigRational>, Vec<BigRational>)]) -> Value {
    let rows: Vec<Value> = pairs
        .iter()
        .map(|(x, y)| {
            Value::Array(
                x.iter()
                    .chain(y.iter())
                    .map(|r| Value::String(rational_to_string(r)))
                    .collect(),
            )
        })
        .collect();
    serde_json::json!({ "n": n, "rows": rows })
}

// ---------------------------------------------------------------------------
// General polynomials in (x, y).
// ---------------------------------------------------------------------------

pub fn poly_to_value(p: &crate::stiefel::PolyXY) -> Value {
    let terms: Vec<Value> = p
        .terms
        .iter()
        .map(|(xe, ye, c)| serde_json::json!({ "xe": xe, "ye": ye, "c": c }))
        .collect();
    serde_json::json!({ "n": p.n, "terms": terms })
}

pub fn poly_from_value(v: &Value) -> Result<crate::stiefel::PolyXY, IoError> {
    // Accept either the generic term list or a biform file.
    if v.get("coeffs").is_some() {
        let b = biform_from_value(v)?;
        return Ok(crate::stiefel::PolyXY::from_biform(&b.to_f64()));
    }
    let n = v["n"]
        .as_u64()
        .ok_or_else(|| IoError("poly: missing n".into()))? as usize;
    let terms = v["terms"]
        .as_array()
        .ok_or_else(|| IoError("poly: missing terms".into()))?;
    let mut out = crate::stiefel::PolyXY::zero(n);
    for t in terms {
        let xe: Vec<u8> =
            serde_json::from_value(t["xe"].clone()).map_err(|e| IoError(format!("poly: {e}")))?;
        let ye: Vec<u8> =
            serde_json::from_value(t["ye"].clone()).map_err(|e| IoError(format!("poly: {e}")))?;
        let c: Scalar =
            serde_json::from_value(t["c"].clone()).map_err(|e| IoError(format!("poly: {e}")))?;
        if xe.len() != n || ye.len() != n {
            return err("poly: exponent vectors must have length n");
        }
        out.terms.push((xe, ye, c.to_f64()));
    }
    Ok(out)
}

/// Parses a monomial string over `z`, `v`, `w` variables, e.g.
/// `"z1^4"`, `"z12*z12"`, `"w12^2*w34^2"`, into a polynomial.
pub fn monomial_poly(spec: &str, n: usize) -> Result<crate::stiefel::PolyXY, IoError> {
    use crate::stiefel::PolyXY;
    let mut acc = PolyXY {
        n,
        terms: vec![(vec![0; n], vec![0; n], 1.0)],
    };
    for factor in spec.split('*') {
        let factor = factor.trim();
        if factor.is_empty() {
            return err("monomial: empty factor");
        }
        let (base, power) = match factor.split_once('^') {
            Some((b, p)) => (
                b.trim(),
                p.trim()
                    .parse::<usize>()
                    .map_err(|e| IoError(format!("monomial: bad power: {e}")))?,
            ),
            None => (factor, 1),
        };
        let kind = base
            .chars()
            .next()
            .ok_or_else(|| IoError("monomial: empty base".into()))?;
        let digits: String = base.chars().skip(1).collect();
        let idx: Vec<usize> = if digits.contains(',') {
            digits
                .split(',')
                .map(|d| d.trim().parse::<usize>())
                .collect::<Result<_, _>>()
                .map_err(|e| IoError(format!("monomial: bad index: {e}")))?
        } else {
            digits
                .chars()
                .map(|ch| {
                    ch.to_digit(10)
                        .map(|d| d as usize)
                        .ok_or_else(|| IoError(format!("monomial: bad index char {ch:?}")))
                })
                .collect::<Result<_, _>>()?
        };
        let term = match (kind, idx.as_slice()) {
            ('z', [i]) => zij_poly(n, i - 1, i - 1)?,
            ('z', [i, j]) => zij_poly(n, i - 1, j - 1)?,
            ('v', [i, j]) => {
                let mut p = zij_poly(n, i - 1, j - 1)?;
                p.terms.extend(zij_poly(n, j - 1, i - 1)?.terms);
                p
            }
            ('w', [i, j]) => {
                let mut p = zij_poly(n, i - 1, j - 1)?;
                for (xe, ye, c) in zij_poly(n, j - 1, i - 1)?.terms {
                    p.terms.push((xe, ye, -c));
                }
                p
            }
            _ => return err(format!("monomial: cannot parse factor {factor:?}")),
        };
        for _ in 0..power {
            acc = acc.mul(&term);
        }
    }
    Ok(acc)
}

fn zij_poly(n: usize, i: usize, j: usize) -> Result<crate::stiefel::PolyXY, IoError> {
    if i >= n || j >= n {
        return err(format!("monomial: index out of range for n = {n}"));
    }
    let mut xe = vec![0u8; n];
    let mut ye = vec![0u8; n];
    xe[i] = 1;
    ye[j] = 1;
    Ok(crate::stiefel::PolyXY {
        n,
        terms: vec![(xe, ye, 1.0)],
    })
}

// ---------------------------------------------------------------------------
// Certificates and runs.
// ---------------------------------------------------------------------------

fn dmatrix_to_value(m: &DMatrix<f64>) -> Value {
    Value::Array(
        (0..m.nrows())
            .map(|i| {
                Value::Array((0..m.ncols()).map(|j| serde_json::json!(m[(i, j)])).collect())
            })
            .collect(),
    )
}

fn bilinear_to_value(g: &BilinearForm<f64>) -> Value {
    matrix_to_value(&g.b)
}

pub fn sos_certificate_to_value(c: &SosCertificateModI) -> Value {
    serde_json::json!({
        "gram": dmatrix_to_value(&c.gram),
        "multiplier": bilinear_to_value(&c.multiplier),
    })
}

pub fn notsos_witness_to_value(w: &NotSosWitness) -> Value {
    serde_json::json!({
        "functional": biform_to_value(&w.functional),
        "margin": w.margin,
    })
}

fn bideg_to_value(b: &BidegForm) -> Value {
    let terms: Vec<Value> = b
        .coeffs
        .iter()
        .map(|((xe, ye), c)| serde_json::json!({ "xe": xe, "ye": ye, "c": c }))
        .collect();
    serde_json::json!({
        "n": b.n, "xdeg": b.xdeg, "ydeg": b.ydeg, "terms": terms,
    })
}

pub fn psatz_certificate_to_value(c: &PsatzCertificate) -> Value {
    serde_json::json!({
        "d": c.d,
        "sigma1_gram": dmatrix_to_value(&c.sigma1_gram),
        "sigma2_gram": dmatrix_to_value(&c.sigma2_gram),
        "lambda": bideg_to_value(&c.lambda),
        "anchor": { "x": c.anchor.0, "y": c.anchor.1 },
        "delta": c.delta,
    })
}

pub fn generator_output_to_value(out: &GeneratorOutput, seed: Option<u64>) -> Value {
    let seeds: Vec<Value> = out
        .seeds
        .iter()
        .map(|(x, y)| serde_json::json!({ "x": x, "y": y }))
        .collect();
    serde_json::json!({
        "version": SCHEMA_VERSION,
        "n": out.n,
        "seed": seed,
        "delta": out.delta,
        "seeds": seeds,
        "z_points": out.z_points,
        "h_forms": out.h_forms,
        "tangent_bases": out.tangent_bases,
        "v": dmatrix_to_value(&out.v),
        "f_biform": biform_to_value(&out.f_biform),
        "h_sq_biform": biform_to_value(&out.h_sq_biform),
        "capital_f": biform_to_value(&out.capital_f),
        "psatz": out.psatz.as_ref().map(psatz_certificate_to_value),
        "not_sos": out.not_sos.as_ref().map(notsos_witness_to_value),
    })
}

/// Wall-clock report of one CLI invocation. Written to stdout (or a side
/// file), never into the reproducible artifacts: timings vary run to run,
/// verdicts and outputs do not.
#[derive(Serialize)]
pub struct RunReport {
    pub command: String,
    pub config: BTreeMap<String, String>,
    pub seed: Option<u64>,
    pub timings_ms: BTreeMap<String, f64>,
    pub verdicts: BTreeMap<String, String>,
    pub certificate_paths: Vec<String>,
    pub tool_version: String,
}

impl RunReport {
    pub fn new(command: &str) -> Self {
        RunReport {
            command: command.to_string(),
            config: BTreeMap::new(),
            seed: None,
            timings_ms: BTreeMap::new(),
            verdicts: BTreeMap::new(),
            certificate_paths: vec![],
            tool_version: crate::VERSION.to_string(),
        }
    }

    pub fn to_value(&self) -> Value {
        serde_json::to_value(self).expect("report serialization")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{proper_map_3x3, seed_points_3x3};
    use crate::polyalg::map_to_biform;
    use crate::scalar::parse_rational;

    #[test]
    fn float_rendering_has_17_digits_and_round_trips() {
        let v = serde_json::json!({ "a": 0.1, "b": [1.0, -75.356], "c": 3 });
        let s = to_json_17(&v);
        assert!(s.contains("1.0000000000000001e-1"), "{s}");
        assert!(s.contains("\"c\":3"));
        let back: Value = serde_json::from_str(&s).unwrap();
        assert_eq!(back["a"].as_f64().unwrap(), 0.1);
        assert_eq!(back["b"][1].as_f64().unwrap(), -75.356);
    }

    #[test]
    fn biform_json_round_trip() {
        let p = map_to_biform(&proper_map_3x3());
        let v = biform_to_value(&p);
        let back = biform_from_value(&v).unwrap().to_f64();
        assert_eq!(p, back);
        // Exact rational coefficients survive as rationals.
        let mut pr = BiformQuad::<BigRational>::zero(3);
        pr.add_term(0, 1, 0, 2, parse_rational("-21/2").unwrap());
        let v = biform_rational_to_value(&pr);
        match biform_from_value(&v).unwrap() {
            ParsedBiform::Rational(q) => assert_eq!(q, pr),
            _ => panic!("expected rational parse"),
        }
    }

    #[test]
    fn biform_rejects_bad_indices() {
        let v = serde_json::json!({
            "n": 3,
            "coeffs": [{ "i": 2, "j": 1, "k": 1, "l": 1, "c": 1.0 }],
        });
        assert!(biform_from_value(&v).is_err());
    }

    #[test]
    fn symmap_json_round_trip() {
        let a = proper_map_3x3();
        let v = symmap_to_value(&a);
        let back = symmap_from_value(&v).unwrap();
        assert_eq!(a, back);
    }

    #[test]
    fn seed_file_round_trip_keeps_exactness() {
        let pairs = seed_points_3x3();
        let v = seeds_to_value_rational(3, &pairs);
        let parsed = seeds_from_value(&v).unwrap();
        assert_eq!(parsed.n, 3);
        assert_eq!(parsed.pairs.len(), 5);
        let exact = parsed.exact.expect("rational rows stay exact");
        assert_eq!(exact, pairs);
    }

    #[test]
    fn monomial_strings_parse() {
        use crate::scalar::Coeff;
        use crate::stiefel::{mc_integrate, moment2, MomentKey};
        let p = monomial_poly("z12*z12", 3).unwrap();
        assert_eq!(p.terms.len(), 1);
        // Quick agreement check against the exact table.
        let exact = moment2(3, &MomentKey::new(3, &[(0, 1), (0, 1)])).to_f64();
        let (est, se) = mc_integrate(&p, 3, 60_000, 5);
        assert!((est - exact).abs() <= 4.0 * se);
        let w = monomial_poly("w12^4", 3).unwrap();
        assert_eq!(w.terms.len(), 5);
        assert!(monomial_poly("q1", 3).is_err());
        // Two-digit indices need the comma form.
        let big = monomial_poly("z10,11^2", 12).unwrap();
        assert_eq!(big.terms.len(), 1);
    }

    #[test]
    fn poly_accepts_biform_files() {
        let p = map_to_biform(&proper_map_3x3());
        let v = biform_to_value(&p);
        let poly = poly_from_value(&v).unwrap();
        assert_eq!(poly.terms.len(), p.coeffs.len());
    }
}
