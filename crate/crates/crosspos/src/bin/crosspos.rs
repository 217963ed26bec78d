//! Command-line front door: generation, certification, moments, Monte
//! Carlo integration, reverse Hölder scans, and the n = 3 certificates.
//!
//! Exit codes: 0 verdict reached / success, 1 usage error, 2 generator
//! failed to certify any δ, 3 inconclusive certification.

use clap::{Parser, Subcommand};
use crosspos::certify::{
    certify_psatz, certify_sos_mod_i, falsify_cross_positivity, default_backend, PsatzVerdict,
    SosVerdict,
};
use crosspos::generator::{generate, GenError, GenerateOptions};
use crosspos::io::{
    self, biform_from_value, monomial_poly, poly_from_value, seeds_from_value, symmap_from_value,
    write_json_17, RunReport,
};
use crosspos::nsatz3::{
    check_trace_det, construct_drift_c, denominator_power_search, unit_sphere_representation,
    DetVerdict, TraceVerdict,
};
use crosspos::polyalg::{build_qa, map_to_biform, substitute_psi, BiformQuad, BilinearForm, MatK};
use crosspos::stiefel::{
    holder_check, l2_norm, l4_norm, mc_integrate, sample, SymmetryClass,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;
use std::path::PathBuf;
use std::time::Instant;

#[derive(Parser)]
#[command(name = "crosspos", version, about = "cross-positive maps: generation and certificates")]
struct Cli {
    /// Emit machine-readable JSON instead of human-readable lines.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a proper cross-positive map from random (or supplied) seeds.
    Gen {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Seed-point file (rows [x | y]); replaces random step-1 data.
        #[arg(long)]
        seeds_file: Option<PathBuf>,
        #[arg(long, default_value_t = 1e-6)]
        delta_min: f64,
        #[arg(long, default_value_t = 3)]
        d_max: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Certify or refute (complete) cross-positivity of a map or biform.
    Certify {
        #[arg(long, conflicts_with = "biform")]
        map: Option<PathBuf>,
        #[arg(long)]
        biform: Option<PathBuf>,
        /// Which checks to run: sos, psatz, falsify, or all.
        #[arg(long, default_value = "all")]
        check: String,
        /// Positivstellensatz multiplier half-degree cap.
        #[arg(long, default_value_t = 2)]
        d: usize,
        #[arg(long, default_value_t = 1000)]
        restarts: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1e-7)]
        tol: f64,
        /// Write certificates to this JSON file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Exact moments of the invariant measure on orthonormal 2-frames.
    Moments {
        #[arg(long)]
        n: usize,
        /// Monomial over z/v/w variables, e.g. "z1^4", "z12*z12", "w12^4".
        #[arg(long)]
        monomial: String,
    },
    /// Monte Carlo integration over the invariant measure.
    Mc {
        #[arg(long)]
        n: usize,
        #[arg(long, conflicts_with = "monomial")]
        poly: Option<PathBuf>,
        #[arg(long)]
        monomial: Option<String>,
        #[arg(long, default_value_t = 1_000_000)]
        trials: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Reverse Hölder scan over random bilinear forms of one symmetry class.
    Holder {
        #[arg(long)]
        n: usize,
        /// sym, skew, or general.
        #[arg(long)]
        class: String,
        #[arg(long, default_value_t = 10_000)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// n = 3 certificates on the 2×2 quartic matrix polynomial of a map.
    Nsatz3 {
        #[arg(long)]
        map: PathBuf,
        /// trace-det, denom-power, or drift.
        #[arg(long, default_value = "trace-det")]
        check: String,
        /// Distinguished vector for the drift construction, "a,b,c".
        #[arg(long)]
        x0: Option<String>,
        #[arg(long, default_value_t = 4)]
        nmax: usize,
        /// Experimental search modulo the unit-sphere ideal.
        #[arg(long)]
        unit_sphere_rep: bool,
        #[arg(long, default_value_t = 4)]
        deg_cap: usize,
    },
}

fn main() {
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            1
        }
    };
    std::process::exit(code);
}

fn load_json(path: &PathBuf) -> Result<Value, String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
}

fn run(cli: Cli) -> Result<i32, String> {
    match cli.command {
        Command::Gen {
            n,
            seed,
            seeds_file,
            delta_min,
            d_max,
            out,
        } => cmd_gen(cli.json, n, seed, seeds_file, delta_min, d_max, out),
        Command::Certify {
            map,
            biform,
            check,
            d,
            restarts,
            seed,
            tol,
            out,
        } => cmd_certify(cli.json, map, biform, &check, d, restarts, seed, tol, out),
        Command::Moments { n, monomial } => cmd_moments(cli.json, n, &monomial),
        Command::Mc {
            n,
            poly,
            monomial,
            trials,
            seed,
        } => cmd_mc(cli.json, n, poly, monomial, trials, seed),
        Command::Holder {
            n,
            class,
            trials,
            seed,
        } => cmd_holder(cli.json, n, &class, trials, seed),
        Command::Nsatz3 {
            map,
            check,
            x0,
            nmax,
            unit_sphere_rep,
            deg_cap,
        } => cmd_nsatz3(cli.json, map, &check, x0, nmax, unit_sphere_rep, deg_cap),
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_gen(
    json: bool,
    n: usize,
    seed: u64,
    seeds_file: Option<PathBuf>,
    delta_min: f64,
    d_max: usize,
    out: PathBuf,
) -> Result<i32, String> {
    if n < 3 {
        return Err("n ≥ 3 required".into());
    }
    let mut report = RunReport::new("gen");
    report.seed = Some(seed);
    report.config.insert("n".into(), n.to_string());
    report.config.insert("delta_min".into(), delta_min.to_string());
    report.config.insert("d_max".into(), d_max.to_string());
    let user_seeds = match &seeds_file {
        Some(path) => {
            let sf = seeds_from_value(&load_json(path)?).map_err(|e| e.to_string())?;
            if sf.n != n {
                return Err(format!("seeds file has n = {}, expected {n}", sf.n));
            }
            report
                .config
                .insert("seeds_file".into(), path.display().to_string());
            Some(sf.pairs)
        }
        None => None,
    };
    let opts = GenerateOptions {
        delta_min,
        d_max,
        tol: 1e-7,
    };
    let t0 = Instant::now();
    let result = generate(n, seed, user_seeds, &opts, &default_backend());
    report
        .timings_ms
        .insert("generate".into(), t0.elapsed().as_secs_f64() * 1e3);
    match result {
        Ok(output) => {
            write_json_17(&out, &io::generator_output_to_value(&output, Some(seed)))
                .map_err(|e| e.to_string())?;
            report
                .verdicts
                .insert("delta".into(), format!("{:.3e}", output.delta));
            report
                .verdicts
                .insert("status".into(), "proper map generated".into());
            report.certificate_paths.push(out.display().to_string());
            emit_report(json, &report);
            Ok(0)
        }
        Err(GenError::NoDeltaFound(partial)) => {
            let mut v = io::generator_output_to_value(&partial, Some(seed));
            v["failed"] = Value::Bool(true);
            write_json_17(&out, &v).map_err(|e| e.to_string())?;
            report
                .verdicts
                .insert("status".into(), "no certifiable δ above the floor".into());
            emit_report(json, &report);
            Ok(2)
        }
        Err(e) => Err(e.to_string()),
    }
}

fn emit_report(json: bool, report: &RunReport) {
    if json {
        println!("{}", io::to_json_17(&report.to_value()));
    } else {
        for (k, v) in &report.verdicts {
            println!("{k}: {v}");
        }
        for p in &report.certificate_paths {
            println!("wrote {p}");
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_certify(
    json: bool,
    map: Option<PathBuf>,
    biform: Option<PathBuf>,
    check: &str,
    d_cap: usize,
    restarts: usize,
    seed: u64,
    tol: f64,
    out: Option<PathBuf>,
) -> Result<i32, String> {
    let p: BiformQuad<f64> = match (&map, &biform) {
        (Some(path), None) => {
            let a = symmap_from_value(&load_json(path)?).map_err(|e| e.to_string())?;
            map_to_biform(&a)
        }
        (None, Some(path)) => biform_from_value(&load_json(path)?)
            .map_err(|e| e.to_string())?
            .to_f64(),
        _ => return Err("exactly one of --map/--biform is required".into()),
    };
    if p.n < 3 && (check == "psatz" || check == "all" || check == "sos") {
        return Err("certification requires n ≥ 3".into());
    }
    let backend = default_backend();
    let mut report = RunReport::new("certify");
    report.seed = Some(seed);
    report.config.insert("check".into(), check.into());
    report.config.insert("tol".into(), tol.to_string());
    let mut cert_values = serde_json::Map::new();
    let mut inconclusive = false;

    if check == "sos" || check == "all" {
        let t0 = Instant::now();
        let verdict = certify_sos_mod_i(&p, tol, &backend);
        report
            .timings_ms
            .insert("sos".into(), t0.elapsed().as_secs_f64() * 1e3);
        match verdict {
            SosVerdict::Sos(cert) => {
                report.verdicts.insert(
                    "completely cross-positive".into(),
                    "yes (sum of squares modulo the ideal)".into(),
                );
                cert_values.insert("sos".into(), io::sos_certificate_to_value(&cert));
            }
            SosVerdict::NotSos(w) => {
                report.verdicts.insert(
                    "completely cross-positive".into(),
                    format!("no (separating functional, margin {:.3e})", w.margin),
                );
                cert_values.insert("not_sos".into(), io::notsos_witness_to_value(&w));
            }
            SosVerdict::Inconclusive(msg) => {
                report
                    .verdicts
                    .insert("completely cross-positive".into(), format!("inconclusive: {msg}"));
                inconclusive = true;
            }
        }
    }
    if check == "psatz" || check == "all" {
        let anchor = sample(p.n, seed ^ 0xa17c);
        let t0 = Instant::now();
        let mut line = String::new();
        let mut found = false;
        for d in 1..=d_cap.max(1) {
            match certify_psatz(&p, d, (&anchor.x, &anchor.y), tol, &backend)
                .map_err(|e| e.to_string())?
            {
                PsatzVerdict::Nonneg(cert) => {
                    line = format!("certified (degree-{d} certificate)");
                    cert_values.insert("psatz".into(), io::psatz_certificate_to_value(&cert));
                    found = true;
                    break;
                }
                PsatzVerdict::Infeasible => {
                    line = format!("no certificate at degree ≤ {d}");
                }
                PsatzVerdict::Inconclusive(msg) => {
                    line = format!("inconclusive at degree {d}: {msg}");
                }
            }
        }
        report
            .timings_ms
            .insert("psatz".into(), t0.elapsed().as_secs_f64() * 1e3);
        if !found && line.starts_with("inconclusive") {
            inconclusive = true;
        }
        report.verdicts.insert("cross-positive".into(), line);
    }
    if check == "falsify" || check == "all" {
        let t0 = Instant::now();
        let witness = falsify_cross_positivity(&p, restarts, seed);
        report
            .timings_ms
            .insert("falsify".into(), t0.elapsed().as_secs_f64() * 1e3);
        match witness {
            Some(w) => {
                report.verdicts.insert(
                    "falsified".into(),
                    format!("witness x={:?}, y={:?}, value={:.3e}", w.x, w.y, w.value),
                );
                cert_values.insert(
                    "falsify_witness".into(),
                    serde_json::json!({ "x": w.x, "y": w.y, "value": w.value }),
                );
            }
            None => {
                report.verdicts.insert(
                    "falsified".into(),
                    format!("no counterexample in {restarts} restarts"),
                );
            }
        }
    }
    if let Some(path) = out {
        write_json_17(&path, &Value::Object(cert_values)).map_err(|e| e.to_string())?;
        report.certificate_paths.push(path.display().to_string());
    }
    if json {
        println!("{}", io::to_json_17(&report.to_value()));
    } else {
        for (k, v) in &report.verdicts {
            println!("{k}: {v}");
        }
    }
    Ok(if inconclusive { 3 } else { 0 })
}

fn cmd_moments(json: bool, n: usize, monomial: &str) -> Result<i32, String> {
    if n < 3 {
        return Err("n ≥ 3 required".into());
    }
    match crosspos::stiefel::exact_monomial_moment(n, monomial) {
        Ok(Some(value)) => {
            if json {
                println!(
                    "{}",
                    io::to_json_17(&serde_json::json!({
                        "n": n, "monomial": monomial,
                        "exact": crosspos::scalar::rational_to_string(&value),
                        "value": crosspos::scalar::Coeff::to_f64(&value),
                    }))
                );
            } else {
                println!("{}", crosspos::scalar::rational_to_string(&value));
            }
            Ok(0)
        }
        Ok(None) => Err(format!(
            "the moment of {monomial:?} is not tabulated; use `mc --monomial` instead"
        )),
        Err(e) => Err(e),
    }
}

fn cmd_mc(
    json: bool,
    n: usize,
    poly: Option<PathBuf>,
    monomial: Option<String>,
    trials: u64,
    seed: u64,
) -> Result<i32, String> {
    if n < 3 {
        return Err("n ≥ 3 required".into());
    }
    let p = match (&poly, &monomial) {
        (Some(path), None) => poly_from_value(&load_json(path)?).map_err(|e| e.to_string())?,
        (None, Some(spec)) => monomial_poly(spec, n).map_err(|e| e.to_string())?,
        _ => return Err("exactly one of --poly/--monomial is required".into()),
    };
    if p.n != n {
        return Err(format!("polynomial has n = {}, expected {n}", p.n));
    }
    let (est, se) = mc_integrate(&p, n, trials, seed);
    if json {
        println!(
            "{}",
            io::to_json_17(&serde_json::json!({
                "n": n, "trials": trials, "seed": seed,
                "estimate": est, "stderr": se,
            }))
        );
    } else {
        println!("estimate {est:.10e}  stderr {se:.3e}  ({trials} trials, seed {seed})");
    }
    Ok(0)
}

fn cmd_holder(json: bool, n: usize, class: &str, trials: usize, seed: u64) -> Result<i32, String> {
    if n < 3 {
        return Err("n ≥ 3 required".into());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (bound, bound_name) = match class {
        "sym" => (3f64.sqrt(), "√3"),
        "skew" => (6f64.powf(0.25), "⁴√6"),
        "general" => (6f64.sqrt(), "√6"),
        _ => return Err("class must be sym, skew, or general".into()),
    };
    let mut max_ratio: f64 = 0.0;
    for _ in 0..trials {
        let mut b = MatK::<f64>::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                b.set(i, j, rng.gen_range(-1.0..1.0));
            }
        }
        let g = BilinearForm::from_matrix(b);
        let (s, a) = g.split();
        let ratio = match class {
            "sym" => {
                let gs = BilinearForm::from_matrix(s);
                let (l4, _) = l4_norm(&gs, n, 1_000, seed);
                l4 / l2_norm(&gs, n)
            }
            "skew" => {
                let ga = BilinearForm::from_matrix(a);
                let (l4, _) = l4_norm(&ga, n, 1_000, seed);
                l4 / l2_norm(&ga, n)
            }
            _ => {
                // Certified upper bound for the mixed ratio: the triangle
                // inequality over the exact symmetric and skew fourth
                // norms (the true ratio is below it).
                let gs = BilinearForm::from_matrix(s);
                let ga = BilinearForm::from_matrix(a);
                let (l4s, _) = l4_norm(&gs, n, 1_000, seed);
                let (l4a, _) = l4_norm(&ga, n, 1_000, seed);
                (l4s + l4a) / l2_norm(&g, n)
            }
        };
        if ratio.is_finite() {
            max_ratio = max_ratio.max(ratio);
        }
    }
    let pass = max_ratio <= bound + 1e-9;
    if json {
        println!(
            "{}",
            io::to_json_17(&serde_json::json!({
                "n": n, "class": class, "trials": trials,
                "max_ratio": max_ratio, "bound": bound, "pass": pass,
            }))
        );
    } else {
        println!(
            "max ratio ≤ {max_ratio:.6} {} {bound_name} = {bound:.6} over {trials} forms",
            if pass { "≤" } else { ">" }
        );
    }
    Ok(if pass { 0 } else { 3 })
}

#[allow(clippy::too_many_arguments)]
fn cmd_nsatz3(
    json: bool,
    map: PathBuf,
    check: &str,
    x0: Option<String>,
    nmax: usize,
    unit_sphere_rep: bool,
    deg_cap: usize,
) -> Result<i32, String> {
    let a = symmap_from_value(&load_json(&map)?).map_err(|e| e.to_string())?;
    if a.n != 3 {
        return Err("nsatz3 requires a map on 3×3 matrices".into());
    }
    let backend = default_backend();
    let mut report = RunReport::new("nsatz3");
    report.config.insert("check".into(), check.into());
    let q = build_qa(&substitute_psi(&map_to_biform(&a)));
    let mut inconclusive = false;
    match check {
        "trace-det" => {
            let t0 = Instant::now();
            let r = check_trace_det(&q, nmax, &backend);
            report
                .timings_ms
                .insert("trace_det".into(), t0.elapsed().as_secs_f64() * 1e3);
            match r.trace {
                TraceVerdict::Positive { epsilon, .. } => {
                    report
                        .verdicts
                        .insert("trace".into(), format!("strictly positive (margin {epsilon:.3e})"));
                }
                TraceVerdict::Falsified { x, value } => {
                    report
                        .verdicts
                        .insert("trace".into(), format!("zero/negative at {x:?}: {value:.3e}"));
                }
                TraceVerdict::Inconclusive => {
                    report.verdicts.insert("trace".into(), "inconclusive".into());
                    inconclusive = true;
                }
            }
            match r.det {
                DetVerdict::Nonnegative { power, .. } => {
                    report.verdicts.insert(
                        "det".into(),
                        format!("nonnegative (sum of squares at power N = {power})"),
                    );
                }
                DetVerdict::Falsified { x, value } => {
                    report
                        .verdicts
                        .insert("det".into(), format!("negative at {x:?}: {value:.3e}"));
                }
                DetVerdict::Inconclusive => {
                    report.verdicts.insert("det".into(), "inconclusive".into());
                    inconclusive = true;
                }
            }
        }
        "denom-power" => {
            let t0 = Instant::now();
            let res = denominator_power_search(&q, nmax, &backend);
            report
                .timings_ms
                .insert("denom_power".into(), t0.elapsed().as_secs_f64() * 1e3);
            match res {
                Some((n_pow, _)) => {
                    report.verdicts.insert(
                        "denominator power".into(),
                        format!("matrix sum of squares at N = {n_pow}"),
                    );
                }
                None => {
                    report.verdicts.insert(
                        "denominator power".into(),
                        format!("none found with N ≤ {nmax} (not a disproof)"),
                    );
                    inconclusive = true;
                }
            }
        }
        "drift" => {
            let x0 = x0.ok_or("drift requires --x0 \"a,b,c\"")?;
            let parts: Vec<f64> = x0
                .split(',')
                .map(|s| s.trim().parse::<f64>().map_err(|e| e.to_string()))
                .collect::<Result<_, _>>()?;
            if parts.len() != 3 {
                return Err("--x0 must have three components".into());
            }
            let t0 = Instant::now();
            let res = construct_drift_c(&a, &parts, &backend);
            report
                .timings_ms
                .insert("drift".into(), t0.elapsed().as_secs_f64() * 1e3);
            match res {
                Ok(d) => {
                    report.verdicts.insert(
                        "drift".into(),
                        format!(
                            "decomposed: A = bilinear-SOS map + (CX + XCᵀ), ‖C‖∞ = {:.3e}",
                            d.c.max_abs()
                        ),
                    );
                }
                Err(e) => {
                    report.verdicts.insert("drift".into(), format!("failed: {e}"));
                    inconclusive = true;
                }
            }
        }
        other => return Err(format!("unknown check {other:?}")),
    }
    if unit_sphere_rep {
        let t0 = Instant::now();
        let res = unit_sphere_representation(&q, deg_cap, &backend);
        report
            .timings_ms
            .insert("unit_sphere".into(), t0.elapsed().as_secs_f64() * 1e3);
        report.verdicts.insert(
            "unit-sphere representation (experimental)".into(),
            match res {
                Some(_) => "found within the degree cap".into(),
                None => "not found within the degree cap (no completeness claim)".into(),
            },
        );
    }
    if json {
        println!("{}", io::to_json_17(&report.to_value()));
    } else {
        for (k, v) in &report.verdicts {
            println!("{k}: {v}");
        }
    }
    Ok(if inconclusive { 3 } else { 0 })
}
