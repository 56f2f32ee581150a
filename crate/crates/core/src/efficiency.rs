//! Trace upper bound, relative difference, attainment, proportional
//! efficiency and (r, ρ) sweeps.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::covmodels::{
    markov_case, omega_matrices, star_traces, vstar, CovSpec, Family, Kernel, MarkovScenario, ProportionalScenario,
};
use crate::designs::{is_binary, make_oa, Design};
use crate::error::{Error, Result};
use crate::infomat::{info_univariate, TraceEvaluator};
use crate::matlib::{centering, from_rows, Matrix, Tolerance};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceComponents {
    pub c11: f64,
    pub c12: f64,
    pub c22: f64,
    /// (n·tr H_pψ'Ω1ψ, n·tr H_pψ'Ω4ψ).
    pub c22_parts: (f64, f64),
}

/// c11 = n(tr Ω1 + tr Ω4), c12 = n(tr Ω1ψ + tr Ω4ψ), c22 = n(tr H_pψ'Ω1ψ + tr H_pψ'Ω4ψ).
pub fn trace_components(s: &MarkovScenario, n: usize, p: usize) -> Result<TraceComponents> {
    let (o1, _, o4) = omega_matrices(s, p)?;
    let psi = crate::designs::shift_matrix(p)?;
    let hp = centering(p)?;
    let nf = n as f64;
    let cc = |o: &Matrix| (&hp * psi.transpose() * o * &psi).trace();
    let parts = (nf * cc(&o1), nf * cc(&o4));
    Ok(TraceComponents {
        c11: nf * (o1.trace() + o4.trace()),
        c12: nf * ((&o1 * &psi).trace() + (&o4 * &psi).trace()),
        c22: parts.0 + parts.1,
        c22_parts: parts,
    })
}

fn check_square_class(t: usize, p: usize) -> Result<()> {
    if p != t || t < 3 {
        return Err(Error::ClassViolation(format!("upper bound needs p = t >= 3, got t = {t}, p = {p}")));
    }
    Ok(())
}

/// Upper bound u on tr C_{d(s2)} over binary designs with p = t.
pub fn upper_bound_u(s: &MarkovScenario, t: usize, n: usize, p: usize) -> Result<f64> {
    check_square_class(t, p)?;
    let t1 = star_traces(&vstar(&s.v1(p)?)?);
    let tr = star_traces(&vstar(&s.v_r(p)?)?);
    let w = (1.0 + s.rho_bar().powi(2)) / s.sigma12();
    let num = t1.b + w * tr.b;
    Ok(n as f64 * ((t1.a + w * tr.a) - num * num / (t1.c + w * tr.c)))
}

/// u − tr C_{d*(s2)} written as an explicit non-negative quadratic form.
pub fn oa_bound_gap(s: &MarkovScenario, n: usize, p: usize) -> Result<f64> {
    let t1 = star_traces(&vstar(&s.v1(p)?)?);
    let tr = star_traces(&vstar(&s.v_r(p)?)?);
    let k = 1.0 + s.rho_bar().powi(2);
    let x = t1.b * tr.c - tr.b * t1.c;
    Ok(n as f64 * k * x * x / ((s.sigma12() * t1.c + k * tr.c) * t1.c * tr.c))
}

/// RD = 1 − tr C_{d(s2)} / u for a binary design with p = t.
pub fn relative_difference(d: &Design, s: &MarkovScenario, tol: Tolerance) -> Result<f64> {
    if !is_binary(d) || d.p() != d.t() {
        return Err(Error::ClassViolation("relative difference needs a binary design with p = t".into()));
    }
    let u = upper_bound_u(s, d.t(), d.n(), d.p())?;
    let tr = TraceEvaluator::markov(s, d.t(), d.n(), d.p(), tol)?.trace(d)?;
    Ok(1.0 - tr / u)
}

/// tr(V1*ψ)·tr(H_pψ'V_R*ψ) = tr(V_R*ψ)·tr(H_pψ'V1*ψ), to eq_tol.
pub fn attains_bound(s: &MarkovScenario, p: usize, tol: Tolerance) -> Result<bool> {
    let t1 = star_traces(&vstar(&s.v1(p)?)?);
    let tr = star_traces(&vstar(&s.v_r(p)?)?);
    let lhs = t1.b * tr.c;
    let rhs = tr.b * t1.c;
    Ok((lhs - rhs).abs() <= tol.eq_tol * lhs.abs().max(rhs.abs()))
}

/// e = tr C_{d(s1)} / tr C_{d*(s1)}; Γ cancels.
pub fn efficiency_proportional(d: &Design, dstar: &Design, s: &ProportionalScenario, tol: Tolerance) -> Result<f64> {
    if (d.t(), d.n(), d.p()) != (dstar.t(), dstar.n(), dstar.p()) {
        return Err(Error::dims("designs differ in (t, n, p)"));
    }
    let v = s.v_matrix(d.p())?;
    let num = info_univariate(d, &v, tol)?.trace();
    let den = info_univariate(dstar, &v, tol)?.trace();
    Ok(num / den)
}

/// {0.01, 0.05, 0.10, …, 0.95, 0.99}.
pub fn default_r_grid() -> Vec<f64> {
    let mut g = vec![0.01];
    g.extend((1..=19).map(|k| k as f64 / 20.0));
    g.push(0.99);
    g
}

/// {±0.01, ±0.05, ±0.10, …, ±0.95, ±0.99}, ascending.
pub fn default_rho_grid() -> Vec<f64> {
    let pos = default_r_grid();
    let mut g: Vec<f64> = pos.iter().rev().map(|x| -x).collect();
    g.extend(pos);
    g
}

/// Which scenarios a sweep visits at each (r, ρ).
#[derive(Debug, Clone, PartialEq)]
pub enum CaseSpec {
    /// Markov case 1–7.
    Markov(usize),
    /// Proportional structure with V from this family; ρ sets the correlation in Γ.
    Proportional(Family),
}

impl CaseSpec {
    pub fn label(&self) -> String {
        match self {
            CaseSpec::Markov(c) => c.to_string(),
            CaseSpec::Proportional(f) => f.name().to_string(),
        }
    }

    pub fn structure(&self) -> &'static str {
        match self {
            CaseSpec::Markov(_) => "markov",
            CaseSpec::Proportional(_) => "proportional",
        }
    }

    pub fn parse(s: &str) -> Result<CaseSpec> {
        if let Ok(c) = s.trim().parse::<usize>() {
            if (1..=7).contains(&c) {
                return Ok(CaseSpec::Markov(c));
            }
            return Err(Error::invalid(format!("case must be 1..7, got {c}")));
        }
        Ok(CaseSpec::Proportional(s.parse()?))
    }
}

#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub designs: Vec<(String, Design)>,
    pub cases: Vec<CaseSpec>,
    pub r_grid: Vec<f64>,
    pub rho_grid: Vec<f64>,
    pub sigma11: f64,
    pub sigma22: f64,
    pub tol: Tolerance,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub structure: &'static str,
    pub case: String,
    pub design: String,
    pub t: usize,
    pub n: usize,
    pub p: usize,
    pub r: f64,
    pub rho: f64,
    pub sigma11: f64,
    pub sigma22: f64,
    /// (trace, upper bound, RD) or the error code.
    pub value: std::result::Result<(f64, f64, f64), String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepAggregate {
    pub design: String,
    pub case: String,
    pub r: f64,
    pub min_rd: f64,
    pub max_rd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub aggregates: Vec<SweepAggregate>,
}

impl SweepResult {
    pub fn aggregate(&self, design: &str, case: &str, r: f64) -> Option<&SweepAggregate> {
        self.aggregates.iter().find(|a| a.design == design && a.case == case && a.r == r)
    }

    /// Largest RD over every valid row of a design.
    pub fn max_rd(&self, design: &str) -> Option<f64> {
        self.aggregates.iter().filter(|a| a.design == design).map(|a| a.max_rd).reduce(f64::max)
    }
}

fn check_grid(grid: &[f64], what: &str, signed: bool) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::invalid(format!("{what} grid is empty")));
    }
    for &x in grid {
        let a = if signed { x.abs() } else { x };
        if !(a > 0.0 && a < 1.0) {
            return Err(Error::invalid(format!("{what} grid value {x} outside the open interval")));
        }
    }
    Ok(())
}

/// Per-(case, r, ρ) context shared by all designs.
enum CellEval {
    Markov { ev: TraceEvaluator, u: f64 },
    Proportional { ev: TraceEvaluator, reference: Option<f64> },
}

fn cell_eval(case: &CaseSpec, r: f64, rho: f64, s11: f64, s22: f64, dims: (usize, usize, usize), tol: Tolerance) -> Result<CellEval> {
    let (t, n, p) = dims;
    match case {
        CaseSpec::Markov(c) => {
            let s = markov_case(*c, r, s11, s22, rho)?;
            let u = if p == t { upper_bound_u(&s, t, n, p)? } else { f64::NAN };
            Ok(CellEval::Markov { ev: TraceEvaluator::markov(&s, t, n, p, tol)?, u })
        }
        CaseSpec::Proportional(f) => {
            let off = rho * (s11 * s22).sqrt();
            let gamma = from_rows(&[&[s11, off], &[off, s22]]);
            let s = ProportionalScenario::new(gamma, CovSpec::Kernel(Kernel::new(*f, r)?))?;
            let ev = TraceEvaluator::proportional(&s, t, n, p, tol)?;
            let reference = if p == t && t >= 2 && n % (t * (t - 1)) == 0 {
                make_oa(t, n / (t * (t - 1))).ok().map(|oa| ev.trace(&oa)).transpose()?
            } else {
                None
            };
            Ok(CellEval::Proportional { ev, reference })
        }
    }
}

fn eval_cell(cell: &Result<CellEval>, d: &Design) -> std::result::Result<(f64, f64, f64), String> {
    let cell = cell.as_ref().map_err(|e| e.code().to_string())?;
    match cell {
        CellEval::Markov { ev, u } => {
            if !is_binary(d) || d.p() != d.t() {
                return Err(Error::ClassViolation(String::new()).code().to_string());
            }
            let tr = ev.trace(d).map_err(|e| e.code().to_string())?;
            Ok((tr, *u, 1.0 - tr / u))
        }
        CellEval::Proportional { ev, reference } => {
            let tr = ev.trace(d).map_err(|e| e.code().to_string())?;
            let u = reference.unwrap_or(f64::NAN);
            Ok((tr, u, 1.0 - tr / u))
        }
    }
}

/// Evaluate every (design, case, r, ρ) cell; rows ordered by design, case, r, ρ.
pub fn sweep(spec: &SweepSpec) -> Result<SweepResult> {
    if spec.designs.is_empty() {
        return Err(Error::invalid("sweep needs at least one design"));
    }
    if spec.cases.is_empty() {
        return Err(Error::invalid("sweep needs at least one case"));
    }
    check_grid(&spec.r_grid, "r", false)?;
    check_grid(&spec.rho_grid, "rho", true)?;
    let dims = {
        let d = &spec.designs[0].1;
        (d.t(), d.n(), d.p())
    };
    if spec.designs.iter().any(|(_, d)| (d.t(), d.n(), d.p()) != dims) {
        return Err(Error::dims("all sweep designs must share (t, n, p)"));
    }
    let mut r_grid = spec.r_grid.clone();
    r_grid.sort_by(f64::total_cmp);
    let mut rho_grid = spec.rho_grid.clone();
    rho_grid.sort_by(f64::total_cmp);

    let mut cells: Vec<(usize, f64, f64)> = Vec::new();
    for c in 0..spec.cases.len() {
        for &r in &r_grid {
            cells.extend(rho_grid.iter().map(|&rho| (c, r, rho)));
        }
    }
    // values[cell][design]
    let values: Vec<Vec<std::result::Result<(f64, f64, f64), String>>> = cells
        .par_iter()
        .map(|&(c, r, rho)| {
            let ctx = cell_eval(&spec.cases[c], r, rho, spec.sigma11, spec.sigma22, dims, spec.tol);
            spec.designs.iter().map(|(_, d)| eval_cell(&ctx, d)).collect()
        })
        .collect();

    let mut rows = Vec::with_capacity(cells.len() * spec.designs.len());
    let mut aggregates = Vec::new();
    for (k, (name, d)) in spec.designs.iter().enumerate() {
        for (ci, case) in spec.cases.iter().enumerate() {
            for &r in &r_grid {
                let mut lo = f64::INFINITY;
                let mut hi = f64::NEG_INFINITY;
                for (idx, &(c, rr, rho)) in cells.iter().enumerate() {
                    if c != ci || rr != r {
                        continue;
                    }
                    let value = values[idx][k].clone();
                    if let Ok((_, _, rd)) = value {
                        if rd.is_finite() {
                            lo = lo.min(rd);
                            hi = hi.max(rd);
                        }
                    }
                    rows.push(SweepRow {
                        structure: case.structure(),
                        case: case.label(),
                        design: name.clone(),
                        t: d.t(),
                        n: d.n(),
                        p: d.p(),
                        r,
                        rho,
                        sigma11: spec.sigma11,
                        sigma22: spec.sigma22,
                        value,
                    });
                }
                if lo.is_finite() {
                    aggregates.push(SweepAggregate { design: name.clone(), case: case.label(), r, min_rd: lo, max_rd: hi });
                }
            }
        }
    }
    Ok(SweepResult { rows, aggregates })
}

/// Format with 12 significant digits, no trailing zeros.
pub fn fmt_sig(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return if x.is_nan() { String::new() } else if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let exp = x.abs().log10().floor() as i32;
    if (-5..12).contains(&exp) {
        let decimals = (11 - exp).max(0) as usize;
        let s = format!("{x:.decimals$}");
        let s = if s.contains('.') { s.trim_end_matches('0').trim_end_matches('.').to_string() } else { s };
        if s == "-0" {
            "0".into()
        } else {
            s
        }
    } else {
        let s = format!("{x:.11e}");
        let (mant, e) = s.split_once('e').expect("exponent");
        let mant = if mant.contains('.') { mant.trim_end_matches('0').trim_end_matches('.') } else { mant };
        format!("{mant}e{e}")
    }
}

pub const CSV_HEADER: &str = "structure,case,design,t,n,p,r,rho,sigma11,sigma22,trace,upper_bound,rd";
pub const AGG_HEADER: &str = "design,case,r,min_rd,max_rd";

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn write_sweep_csv<W: Write>(res: &SweepResult, mut w: W) -> std::io::Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for row in &res.rows {
        let (trace, ub, rd) = match &row.value {
            Ok((a, b, c)) => (fmt_sig(*a), fmt_sig(*b), fmt_sig(*c)),
            Err(code) => (format!("ERR:{code}"), String::new(), String::new()),
        };
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            row.structure,
            csv_field(&row.case),
            csv_field(&row.design),
            row.t,
            row.n,
            row.p,
            fmt_sig(row.r),
            fmt_sig(row.rho),
            fmt_sig(row.sigma11),
            fmt_sig(row.sigma22),
            trace,
            ub,
            rd
        )?;
    }
    Ok(())
}

pub fn write_aggregate_csv<W: Write>(res: &SweepResult, mut w: W) -> std::io::Result<()> {
    writeln!(w, "{AGG_HEADER}")?;
    for a in &res.aggregates {
        writeln!(
            w,
            "{},{},{},{},{}",
            csv_field(&a.design),
            csv_field(&a.case),
            fmt_sig(a.r),
            fmt_sig(a.min_rd),
            fmt_sig(a.max_rd)
        )?;
    }
    Ok(())
}

/// Efficiency e of `d` against `dstar` for each family and r.
pub fn efficiency_grid(d: &Design, dstar: &Design, families: &[Family], r_grid: &[f64], tol: Tolerance) -> Result<Vec<(Family, f64, f64)>> {
    let cells: Vec<(Family, f64)> = families.iter().flat_map(|&f| r_grid.iter().map(move |&r| (f, r))).collect();
    cells
        .par_iter()
        .map(|&(f, r)| {
            let s = ProportionalScenario::new(crate::matlib::identity(2), CovSpec::Kernel(Kernel::new(f, r)?))?;
            Ok((f, r, efficiency_proportional(d, dstar, &s, tol)?))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::infomat::{info_markov, info_markov_oa_closed, Method, Representation};
    use proptest::prelude::*;

    fn tol() -> Tolerance {
        Tolerance::default()
    }

    fn degenerate(r: f64, rho: f64) -> MarkovScenario {
        let k = CovSpec::Kernel(Kernel::new(Family::Mat15, r).unwrap());
        MarkovScenario::new(1.0, 1.0, rho, k.clone(), k).unwrap()
    }

    #[test]
    fn bound_attained_when_proportional() {
        let s = degenerate(0.4, 0.6);
        let u = upper_bound_u(&s, 3, 6, 3).unwrap();
        let tr = info_markov_oa_closed(&s, 3, 6).unwrap().trace();
        assert!((u - tr).abs() < 1e-10 * u);
        assert!(attains_bound(&s, 3, tol()).unwrap());
        assert!(relative_difference(&fixtures::dstar_t3(), &s, tol()).unwrap().abs() < 1e-8);
    }

    #[test]
    fn bound_equals_component_form() {
        for c in 1..=7 {
            let s = markov_case(c, 0.5, 1.0, 1.0, 0.5).unwrap();
            let tc = trace_components(&s, 6, 3).unwrap();
            let u = upper_bound_u(&s, 3, 6, 3).unwrap();
            assert!((u - (tc.c11 - tc.c12 * tc.c12 / tc.c22)).abs() < 1e-10 * u);
            assert!(tc.c22 > 0.0);
        }
    }

    #[test]
    fn ns1_bound_from_closed_traces() {
        let r: f64 = 0.5;
        let s = markov_case(7, r, 1.0, 1.0, 0.5).unwrap();
        let q = r * r - 4.0 * r + 3.0;
        let qr = r.powi(4) - 4.0 * r * r + 3.0;
        let b1 = -2.0 / q;
        let br = -2.0 / qr;
        let c1 = 2.0 * (3.0 * r + 5.0) / (3.0 * (r.powi(3) - 3.0 * r * r - r + 3.0));
        let cr = 2.0 * (3.0 * r * r + 5.0) / (3.0 * (r.powi(6) - 3.0 * r.powi(4) - r * r + 3.0));
        // tr V* for the 3x3 displayed form: (4q/c + 2)/q
        let a1 = (4.0 * q / (r.powi(3) - 3.0 * r * r - r + 3.0) + 2.0) / q;
        let rr = r * r;
        let ar = (4.0 * qr / (rr.powi(3) - 3.0 * rr * rr - rr + 3.0) + 2.0) / qr;
        let w = (1.0 + 0.25) / 0.75;
        let want = 6.0 * ((a1 + w * ar) - (b1 + w * br).powi(2) / (c1 + w * cr));
        let u = upper_bound_u(&s, 3, 6, 3).unwrap();
        assert!((u - want).abs() < 1e-10 * want);
        let tc = trace_components(&s, 6, 3).unwrap();
        let rb2_s12 = 0.25 / 0.75;
        assert!((tc.c11 / 6.0 - (a1 + rb2_s12 * ar + ar / 0.75)).abs() < 1e-10);
    }

    #[test]
    fn rd_class_violation() {
        let s = markov_case(7, 0.5, 1.0, 1.0, 0.5).unwrap();
        let d = Design::from_labels(3, &[&[1, 2], &[1, 3], &[2, 1]]).unwrap();
        assert!(matches!(relative_difference(&d, &s, tol()), Err(Error::ClassViolation(_))));
        assert!(upper_bound_u(&s, 3, 6, 4).is_err());
    }

    #[test]
    fn rd_orders_d1_above_dstar() {
        for c in 1..=7 {
            let s = markov_case(c, 0.5, 1.0, 1.0, 0.5).unwrap();
            let a = relative_difference(&fixtures::d1_t3(), &s, tol()).unwrap();
            let b = relative_difference(&fixtures::dstar_t3(), &s, tol()).unwrap();
            assert!(a > b && a < 1.0 && b >= 0.0);
        }
    }

    #[test]
    fn attainment_examples() {
        assert!(!attains_bound(&markov_case(5, 0.5, 1.0, 1.0, 0.5).unwrap(), 3, tol()).unwrap());
        for k in 1..10 {
            let s = markov_case(7, k as f64 / 10.0, 1.0, 1.0, 0.5).unwrap();
            assert!(!attains_bound(&s, 3, tol()).unwrap());
        }
    }

    #[test]
    fn efficiency_examples() {
        let k = CovSpec::Kernel(Kernel::new(Family::Mat05, 0.3).unwrap());
        let s1 = ProportionalScenario::new(from_rows(&[&[1.0, 0.5], &[0.5, 1.0]]), k.clone()).unwrap();
        let s2 = ProportionalScenario::new(from_rows(&[&[3.0, -1.0], &[-1.0, 2.0]]), k).unwrap();
        let d = fixtures::d1_t3();
        let ds = fixtures::dstar_t3();
        assert!((efficiency_proportional(&ds, &ds, &s1, tol()).unwrap() - 1.0).abs() < 1e-14);
        let e1 = efficiency_proportional(&d, &ds, &s1, tol()).unwrap();
        let e2 = efficiency_proportional(&d, &ds, &s2, tol()).unwrap();
        assert!((e1 - e2).abs() < 1e-12 && e1 < 1.0);
        assert!(efficiency_proportional(&d, &fixtures::dstar_t4(), &s1, tol()).is_err());
    }

    #[test]
    fn grids() {
        let r = default_r_grid();
        assert_eq!(r.len(), 21);
        assert_eq!((r[0], r[20]), (0.01, 0.99));
        let rho = default_rho_grid();
        assert_eq!(rho.len(), 42);
        assert!(rho.windows(2).all(|w| w[0] < w[1]));
        assert!(!rho.contains(&0.0));
    }

    #[test]
    fn fmt_sig_cases() {
        assert_eq!(fmt_sig(0.5), "0.5");
        assert_eq!(fmt_sig(1.0 / 3.0), "0.333333333333");
        assert_eq!(fmt_sig(123456.789), "123456.789");
        assert_eq!(fmt_sig(-2.0), "-2");
        assert_eq!(fmt_sig(1.5e-9), "1.5e-9");
        assert_eq!(fmt_sig(0.0), "0");
        assert_eq!(fmt_sig(2.0f64.sqrt() * 1e13), "1.41421356237e13");
    }

    #[test]
    fn sweep_structure_and_sigma_invariance() {
        let mk = |s: f64| SweepSpec {
            designs: vec![("d1".into(), fixtures::d1_t3()), ("dstar".into(), fixtures::dstar_t3())],
            cases: vec![CaseSpec::Markov(7), CaseSpec::Markov(2)],
            r_grid: vec![0.5, 0.2],
            rho_grid: vec![0.3, -0.3],
            sigma11: s,
            sigma22: s,
            tol: tol(),
        };
        let a = sweep(&mk(1.0)).unwrap();
        let b = sweep(&mk(4.0)).unwrap();
        assert_eq!(a.rows.len(), 16);
        assert_eq!(a.rows[0].r, 0.2);
        assert_eq!(a.rows[0].rho, -0.3);
        assert_eq!(a.rows[0].design, "d1");
        for (x, y) in a.rows.iter().zip(&b.rows) {
            let (rx, ry) = (x.value.as_ref().unwrap().2, y.value.as_ref().unwrap().2);
            assert!((rx - ry).abs() < 1e-10);
        }
        assert_eq!(a.aggregates.len(), 8);
        let mut out = Vec::new();
        write_sweep_csv(&a, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.starts_with(CSV_HEADER));
        assert_eq!(text.lines().count(), 17);
        assert!(!text.contains('\r'));
    }

    #[test]
    fn sweep_error_cells() {
        let bad = Design::from_labels(3, &[&[1, 2], &[1, 3], &[2, 1]]).unwrap();
        let spec = SweepSpec {
            designs: vec![("bad".into(), bad)],
            cases: vec![CaseSpec::Markov(7)],
            r_grid: vec![0.5],
            rho_grid: vec![0.5],
            sigma11: 1.0,
            sigma22: 1.0,
            tol: tol(),
        };
        let res = sweep(&spec).unwrap();
        assert_eq!(res.rows[0].value, Err("class".into()));
        assert!(res.aggregates.is_empty());
        let mut out = Vec::new();
        write_sweep_csv(&res, &mut out).unwrap();
        assert!(String::from_utf8(out).unwrap().contains("ERR:class"));
        let empty = SweepSpec { designs: vec![], ..spec.clone() };
        assert!(sweep(&empty).is_err());
        let badgrid = SweepSpec { r_grid: vec![1.2], ..spec };
        assert!(sweep(&badgrid).is_err());
    }

    #[test]
    fn proportional_sweep_rows() {
        let spec = SweepSpec {
            designs: vec![("d1".into(), fixtures::d1_t3()), ("dstar".into(), fixtures::dstar_t3())],
            cases: vec![CaseSpec::Proportional(Family::Mat05)],
            r_grid: vec![0.5],
            rho_grid: vec![0.5],
            sigma11: 1.0,
            sigma22: 1.0,
            tol: tol(),
        };
        let res = sweep(&spec).unwrap();
        let rd_star = res.rows[1].value.as_ref().unwrap().2;
        assert!(rd_star.abs() < 1e-12);
        assert!(res.rows[0].value.as_ref().unwrap().2 > 0.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn gap_identity_and_dominance(c in 1usize..8, r in 0.05..0.95f64, rho in -0.95..0.95f64, s22 in 0.3..3.0f64) {
            prop_assume!(rho.abs() > 0.01);
            let s = markov_case(c, r, 1.0, s22, rho).unwrap();
            let u = upper_bound_u(&s, 3, 6, 3).unwrap();
            let tr = info_markov_oa_closed(&s, 3, 6).unwrap().trace();
            let gap = oa_bound_gap(&s, 6, 3).unwrap();
            prop_assert!(((u - tr) - gap).abs() <= 1e-8 * u);
            for d in [fixtures::d1_t3(), fixtures::dstar_t3()] {
                let c = info_markov(&d, &s, Method::Closed, Representation::Z43, tol()).unwrap();
                prop_assert!(c.trace() <= u * (1.0 + 1e-8));
            }
            let att = attains_bound(&s, 3, tol()).unwrap();
            let rd = relative_difference(&fixtures::dstar_t3(), &s, tol()).unwrap();
            prop_assert_eq!(att, rd.abs() <= 1e-8);
        }
    }
}
