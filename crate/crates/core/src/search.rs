//! Enumeration and sampling of binary designs with p = t, ranked by the
//! trace of the direct-effect information matrix.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::covmodels::Scenario;
use crate::designs::{make_balanced_uniform, make_oa, make_uniform, Design};
use crate::efficiency::upper_bound_u;
use crate::error::{Error, Result};
use crate::infomat::TraceEvaluator;
use crate::matlib::Tolerance;

pub const DEFAULT_CAP: u64 = 10_000_000;

/// All permutations of 0..t in lexicographic order.
pub fn permutations(t: usize) -> Vec<Vec<usize>> {
    let mut cur: Vec<usize> = (0..t).collect();
    let mut out = vec![cur.clone()];
    loop {
        let Some(i) = (1..t).rev().find(|&i| cur[i - 1] < cur[i]) else { break };
        let j = (i..t).rev().find(|&j| cur[j] > cur[i - 1]).expect("pivot");
        cur.swap(i - 1, j);
        cur[i..].reverse();
        out.push(cur.clone());
    }
    out
}

/// (t!)^n as a float (may exceed u64).
pub fn binary_class_size(t: usize, n: usize) -> f64 {
    let f: f64 = (1..=t).map(|k| k as f64).product();
    f.powi(n as i32)
}

/// Streams every binary design with p = t; column 0 is the most significant digit.
#[derive(Debug, Clone)]
pub struct BinaryEnumerator {
    t: usize,
    n: usize,
    perms: Vec<Vec<usize>>,
    digits: Vec<usize>,
    remaining: u64,
}

impl BinaryEnumerator {
    pub fn len(&self) -> u64 {
        self.remaining
    }

    pub fn is_empty(&self) -> bool {
        self.remaining == 0
    }
}

impl Iterator for BinaryEnumerator {
    type Item = Design;

    fn next(&mut self) -> Option<Design> {
        if self.remaining == 0 {
            return None;
        }
        let cols: Vec<Vec<usize>> = self.digits.iter().map(|&k| self.perms[k].clone()).collect();
        let d = Design::from_columns(self.t, &cols).expect("permutation columns are valid");
        self.remaining -= 1;
        for k in (0..self.n).rev() {
            self.digits[k] += 1;
            if self.digits[k] < self.perms.len() {
                break;
            }
            self.digits[k] = 0;
        }
        Some(d)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let r = self.remaining as usize;
        (r, Some(r))
    }
}

/// Full enumeration of the binary class, refusing when (t!)^n exceeds `cap`.
pub fn enumerate_binary(t: usize, n: usize, cap: u64) -> Result<BinaryEnumerator> {
    if t < 2 || n == 0 {
        return Err(Error::invalid("enumeration needs t >= 2 and n >= 1"));
    }
    let count = binary_class_size(t, n);
    if count > cap as f64 {
        return Err(Error::CapacityExceeded { count, cap });
    }
    Ok(BinaryEnumerator { t, n, perms: permutations(t), digits: vec![0; n], remaining: count as u64 })
}

/// The designs d1, d2 (even t) and the OA for (t, n), where they exist.
pub fn reference_fixtures(t: usize, n: usize) -> Vec<Design> {
    let mut out = Vec::new();
    if n.is_multiple_of(t) {
        if let Ok(d) = make_uniform(t, n / t) {
            out.push(d);
        }
        if let Ok(d) = make_balanced_uniform(t, n / t) {
            out.push(d);
        }
    }
    if t >= 2 && n.is_multiple_of(t * (t - 1)) {
        if let Ok(d) = make_oa(t, n / (t * (t - 1))) {
            out.push(d);
        }
    }
    out
}

/// Seeded random binary designs; fixtures (if requested) come first and count toward `count`.
pub fn sample_binary(t: usize, n: usize, count: usize, seed: u64, include_fixtures: bool) -> Result<impl Iterator<Item = Design>> {
    if t < 2 || n == 0 {
        return Err(Error::invalid("sampling needs t >= 2 and n >= 1"));
    }
    let mut fixtures = if include_fixtures { reference_fixtures(t, n) } else { Vec::new() };
    fixtures.truncate(count);
    let random = count - fixtures.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sampled = (0..random).map(move |_| {
        let cols: Vec<Vec<usize>> = (0..n)
            .map(|_| {
                let mut c: Vec<usize> = (0..t).collect();
                c.shuffle(&mut rng);
                c
            })
            .collect();
        Design::from_columns(t, &cols).expect("permutation columns are valid")
    });
    Ok(fixtures.into_iter().chain(sampled))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankedDesign {
    #[serde(serialize_with = "ser_design")]
    pub design: Design,
    pub trace: f64,
    /// Position in the input stream (0-based).
    pub index: u64,
}

fn ser_design<S: serde::Serializer>(d: &Design, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&d.to_text())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchReport {
    pub evaluated: u64,
    pub best: Vec<RankedDesign>,
    /// 1 + number of designs whose trace strictly exceeds the reference's.
    pub oa_rank: Option<u64>,
    pub reference_trace: Option<f64>,
    /// Designs within eq_tol of the best trace.
    pub ties: u64,
    /// Markov upper bound u, when it applies.
    pub upper_bound: Option<f64>,
    pub exceeding_bound: u64,
}

impl SearchReport {
    pub fn best_trace(&self) -> Option<f64> {
        self.best.first().map(|b| b.trace)
    }
}

#[derive(Debug, Clone)]
pub struct RankOptions {
    pub top: usize,
    /// Reference design (the OA) whose rank is reported.
    pub reference: Option<Design>,
    pub tol: Tolerance,
    pub chunk: usize,
}

impl Default for RankOptions {
    fn default() -> Self {
        RankOptions { top: 10, reference: None, tol: Tolerance::default(), chunk: 4096 }
    }
}

fn evaluator(s: &Scenario, t: usize, n: usize, p: usize, tol: Tolerance) -> Result<TraceEvaluator> {
    match s {
        Scenario::Proportional(ps) => TraceEvaluator::proportional(ps, t, n, p, tol),
        Scenario::Markov(ms) => TraceEvaluator::markov(ms, t, n, p, tol),
    }
}

fn close(a: f64, b: f64, tol: Tolerance) -> bool {
    (a - b).abs() <= tol.eq_tol * a.abs().max(b.abs())
}

/// Sort by trace descending; runs within eq_tol of their head are ordered by index.
fn order_ranked(v: &mut [RankedDesign], tol: Tolerance) {
    v.sort_by(|a, b| b.trace.total_cmp(&a.trace).then(a.index.cmp(&b.index)));
    let mut start = 0;
    while start < v.len() {
        let head = v[start].trace;
        let mut end = start + 1;
        while end < v.len() && close(head, v[end].trace, tol) {
            end += 1;
        }
        v[start..end].sort_by_key(|r| r.index);
        start = end;
    }
}

/// Evaluate every design and rank by trace.
pub fn rank_by_trace<I>(designs: I, scenario: &Scenario, opts: &RankOptions) -> Result<SearchReport>
where
    I: IntoIterator<Item = Design>,
{
    let tol = opts.tol;
    let mut iter = designs.into_iter().peekable();
    let first = iter.peek().ok_or_else(|| Error::invalid("no designs to rank"))?;
    let (t, n, p) = (first.t(), first.n(), first.p());
    let ev = evaluator(scenario, t, n, p, tol)?;
    let reference_trace = opts.reference.as_ref().map(|d| ev.trace(d)).transpose()?;
    let upper_bound = match scenario {
        Scenario::Markov(ms) if p == t && t >= 3 => Some(upper_bound_u(ms, t, n, p)?),
        _ => None,
    };

    let mut best: Vec<RankedDesign> = Vec::new();
    let mut best_trace = f64::NEG_INFINITY;
    // traces near the running maximum, for the tie count
    let mut band: Vec<f64> = Vec::new();
    let mut evaluated = 0u64;
    let mut above_ref = 0u64;
    let mut exceeding = 0u64;
    let chunk = opts.chunk.max(1);
    let top = opts.top.max(1);
    loop {
        let batch: Vec<Design> = iter.by_ref().take(chunk).collect();
        if batch.is_empty() {
            break;
        }
        if batch.iter().any(|d| (d.t(), d.n(), d.p()) != (t, n, p)) {
            return Err(Error::dims("all ranked designs must share (t, n, p)"));
        }
        let threshold = if best.len() >= top { best[best.len() - 1].trace } else { f64::NEG_INFINITY };
        let cut = threshold - tol.eq_tol * threshold.abs();
        let traces: Vec<f64> = batch.par_iter().map(|d| ev.trace(d)).collect::<Result<_>>()?;
        let len = batch.len() as u64;
        for (k, (d, tr)) in batch.into_iter().zip(traces).enumerate() {
            if let Some(rt) = reference_trace {
                if tr > rt + tol.eq_tol * rt.abs() {
                    above_ref += 1;
                }
            }
            if let Some(u) = upper_bound {
                if tr > u + tol.eq_tol * u.abs() {
                    exceeding += 1;
                }
            }
            let band_floor = |b: f64| b - 1e3 * tol.eq_tol * b.abs();
            if tr > best_trace {
                best_trace = tr;
                band.retain(|&x| x >= band_floor(best_trace));
            }
            if tr >= band_floor(best_trace) {
                band.push(tr);
            }
            if tr >= cut {
                best.push(RankedDesign { design: d, trace: tr, index: evaluated + k as u64 });
            }
        }
        evaluated += len;
        order_ranked(&mut best, tol);
        best.truncate(top);
    }
    let ties = band.iter().filter(|&&x| close(x, best_trace, tol)).count() as u64;
    Ok(SearchReport {
        evaluated,
        best,
        oa_rank: reference_trace.map(|_| above_ref + 1),
        reference_trace,
        ties,
        upper_bound,
        exceeding_bound: exceeding,
    })
}

/// Evaluator for a scenario at the given dimensions (exposed for benches).
pub fn scenario_evaluator(s: &Scenario, t: usize, n: usize, p: usize, tol: Tolerance) -> Result<TraceEvaluator> {
    evaluator(s, t, n, p, tol)
}
