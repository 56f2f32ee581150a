//! Direct-effect information matrices: A* by brute force and in closed form,
//! Schur complements over the carryover columns, and the OA closed form.

use serde::Serialize;

use crate::covmodels::{
    build_markov_sigma, build_proportional_sigma, omega_matrices, star_traces, vstar, MarkovScenario,
    ProportionalScenario,
};
use crate::designs::{carryover_matrix, treatment_matrix, Design};
use crate::error::{Error, Result};
use crate::matlib::{
    centering, identity, kron, max_abs, ones, pinv, proj_perp, sym_inv_sqrt, symmetrize, Matrix, Tolerance,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Structure {
    Univariate,
    Proportional,
    Markov,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Brute,
    Closed,
}

/// How the carryover nuisance columns enter C_{d(s2)}.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Representation {
    /// Carryover columns I ⊗ F_d.
    Z4,
    /// Direct projection onto the complement of [Z1, I ⊗ F_d H_t] after whitening.
    Z42,
    /// Carryover columns I ⊗ F_d H_t.
    #[default]
    Z43,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InfoMatrix {
    #[serde(serialize_with = "ser_matrix")]
    pub matrix: Matrix,
    pub structure: Structure,
    pub method: Method,
    pub design_id: String,
    pub scenario: String,
}

fn ser_matrix<S: serde::Serializer>(m: &Matrix, s: S) -> std::result::Result<S::Ok, S::Error> {
    crate::matlib::to_rows(m).serialize(s)
}

impl InfoMatrix {
    pub fn trace(&self) -> f64 {
        self.matrix.trace()
    }
}

/// Compact identifier: periods separated by '/', 1-based labels.
pub fn design_id(d: &Design) -> String {
    d.rows()
        .iter()
        .map(|r| r.iter().map(|x| (x + 1).to_string()).collect::<Vec<_>>().join(","))
        .collect::<Vec<_>>()
        .join("/")
}

/// Z1 = [I_g ⊗ 1_np, I_g ⊗ P, I_g ⊗ U] with P = 1_n ⊗ I_p and U = I_n ⊗ 1_p.
#[derive(Debug, Clone, PartialEq)]
pub struct NuisanceBasis {
    pub z1: Matrix,
    pub g: usize,
    pub n: usize,
    pub p: usize,
}

impl NuisanceBasis {
    pub fn new(g: usize, n: usize, p: usize) -> Self {
        let ig = identity(g);
        let intercept = ones(n * p, 1);
        let pm = kron(&ones(n, 1), &identity(p));
        let um = kron(&identity(n), &ones(p, 1));
        let parts = [kron(&ig, &intercept), kron(&ig, &pm), kron(&ig, &um)];
        NuisanceBasis { z1: hcat(&parts), g, n, p }
    }

    /// Subject effects only (I_g ⊗ U), for the no-period-effect model.
    pub fn subjects_only(g: usize, n: usize, p: usize) -> Matrix {
        kron(&identity(g), &kron(&identity(n), &ones(p, 1)))
    }
}

pub fn hcat(parts: &[Matrix]) -> Matrix {
    let rows = parts[0].nrows();
    let cols: usize = parts.iter().map(|m| m.ncols()).sum();
    let mut out = Matrix::zeros(rows, cols);
    let mut c = 0;
    for m in parts {
        assert_eq!(m.nrows(), rows, "hcat row mismatch");
        out.view_mut((0, c), (rows, m.ncols())).copy_from(m);
        c += m.ncols();
    }
    out
}

/// A* = Σ^{-1/2} pr⊥(Σ^{-1/2} Z1) Σ^{-1/2}.
pub fn astar_brute(sigma: &Matrix, z1: &NuisanceBasis, tol: Tolerance) -> Result<Matrix> {
    if sigma.nrows() != z1.z1.nrows() {
        return Err(Error::dims(format!("Sigma is {}x{}, Z1 has {} rows", sigma.nrows(), sigma.ncols(), z1.z1.nrows())));
    }
    let r = sym_inv_sqrt(sigma, tol)?;
    let q = proj_perp(&(&r * &z1.z1), tol)?;
    Ok(symmetrize(&(&r * q * &r)))
}

/// A* = Γ⁻¹ ⊗ (H_n ⊗ V*).
pub fn astar_proportional_closed(s: &ProportionalScenario, n: usize, p: usize) -> Result<Matrix> {
    let vs = vstar(&s.v_matrix(p)?)?;
    Ok(kron(&s.gamma_inv()?, &kron(&centering(n)?, &vs)))
}

fn block2(a: &Matrix, b: &Matrix, c: &Matrix) -> Matrix {
    let m = a.nrows();
    let mut out = Matrix::zeros(2 * m, 2 * m);
    out.view_mut((0, 0), (m, m)).copy_from(a);
    out.view_mut((0, m), (m, m)).copy_from(b);
    out.view_mut((m, 0), (m, m)).copy_from(b);
    out.view_mut((m, m), (m, m)).copy_from(c);
    out
}

/// A* = [H_n⊗Ω1, −H_n⊗Ω2; −H_n⊗Ω2, H_n⊗Ω4].
pub fn astar_markov_closed(s: &MarkovScenario, n: usize, p: usize) -> Result<Matrix> {
    let (o1, o2, o4) = omega_matrices(s, p)?;
    let h = centering(n)?;
    Ok(block2(&kron(&h, &o1), &(-kron(&h, &o2)), &kron(&h, &o4)))
}

/// Same block form with I_n in place of H_n (no period effects).
pub fn astar_markov_noperiod_closed(s: &MarkovScenario, n: usize, p: usize) -> Result<Matrix> {
    let (o1, o2, o4) = omega_matrices(s, p)?;
    let i = identity(n);
    Ok(block2(&kron(&i, &o1), &(-kron(&i, &o2)), &kron(&i, &o4)))
}

/// C = X'AX − X'AW (W'AW)⁻ W'AX.
pub fn schur_info(a: &Matrix, x: &Matrix, w: &Matrix, tol: Tolerance) -> Result<Matrix> {
    let ax = a * x;
    let aw = a * w;
    let c11 = x.transpose() * &ax;
    let c12 = x.transpose() * &aw;
    let c22 = w.transpose() * &aw;
    let reps = (0..x.ncols()).map(|j| x.column(j).norm_squared()).fold(0.0, f64::max);
    schur_from_blocks(&c11, &c12, &c22, max_abs(a) * reps, tol)
}

/// C11 − C12 C22⁺ C12'. A result that is rounding noise relative to `scale`
/// (fully aliased direct effects) is returned as exactly zero.
fn schur_from_blocks(c11: &Matrix, c12: &Matrix, c22: &Matrix, scale: f64, tol: Tolerance) -> Result<Matrix> {
    let c = symmetrize(&(c11 - c12 * pinv(&symmetrize(c22), tol)? * c12.transpose()));
    if max_abs(&c) <= tol.rank_tol * scale {
        return Ok(Matrix::zeros(c.nrows(), c.ncols()));
    }
    Ok(c)
}

fn carry_columns(d: &Design, repr: Representation) -> Result<Matrix> {
    let f = carryover_matrix(d);
    Ok(match repr {
        Representation::Z4 => f,
        Representation::Z42 | Representation::Z43 => f * centering(d.t())?,
    })
}

fn check_dims(d: &Design, what: &str) -> Result<()> {
    if d.p() < 2 {
        return Err(Error::invalid(format!("{what}: design needs p >= 2 for carryover effects")));
    }
    Ok(())
}

/// X'Σ^{-1/2} pr⊥(Σ^{-1/2}[Z1, W]) Σ^{-1/2} X.
fn info_z42(sigma: &Matrix, z1: &NuisanceBasis, x: &Matrix, w: &Matrix, tol: Tolerance) -> Result<Matrix> {
    let r = sym_inv_sqrt(sigma, tol)?;
    let q = proj_perp(&(&r * hcat(&[z1.z1.clone(), w.clone()])), tol)?;
    let rx = &r * x;
    Ok(symmetrize(&(rx.transpose() * q * rx)))
}

/// C_{d(uni)} with A_uni = H_n ⊗ V*.
pub fn info_univariate(d: &Design, v: &Matrix, tol: Tolerance) -> Result<Matrix> {
    check_dims(d, "info_univariate")?;
    if v.nrows() != d.p() || v.ncols() != d.p() {
        return Err(Error::dims(format!("V is {}x{}, design has p = {}", v.nrows(), v.ncols(), d.p())));
    }
    let a = kron(&centering(d.n())?, &vstar(v)?);
    schur_info(&a, &treatment_matrix(d), &carry_columns(d, Representation::Z43)?, tol)
}

/// C_{d(s1)} under the proportional structure.
pub fn info_proportional(d: &Design, s: &ProportionalScenario, method: Method, tol: Tolerance) -> Result<InfoMatrix> {
    check_dims(d, "info_proportional")?;
    let g = s.g();
    let matrix = match method {
        Method::Closed => kron(&s.gamma_inv()?, &info_univariate(d, &s.v_matrix(d.p())?, tol)?),
        Method::Brute => {
            let sigma = build_proportional_sigma(s, d.n(), d.p())?;
            let z1 = NuisanceBasis::new(g, d.n(), d.p());
            let a = astar_brute(&sigma, &z1, tol)?;
            let ig = identity(g);
            let x = kron(&ig, &treatment_matrix(d));
            let w = kron(&ig, &carry_columns(d, Representation::Z43)?);
            schur_info(&a, &x, &w, tol)?
        }
    };
    Ok(InfoMatrix {
        matrix,
        structure: Structure::Proportional,
        method,
        design_id: design_id(d),
        scenario: s.describe(),
    })
}

/// C_{d(s2)} under the Markov structure in the chosen representation.
///
/// `Z42` is a projection on the whitened scale and always uses Σ directly.
pub fn info_markov(
    d: &Design,
    s: &MarkovScenario,
    method: Method,
    repr: Representation,
    tol: Tolerance,
) -> Result<InfoMatrix> {
    check_dims(d, "info_markov")?;
    let i2 = identity(2);
    let x = kron(&i2, &treatment_matrix(d));
    let w = kron(&i2, &carry_columns(d, repr)?);
    let (matrix, method) = match (repr, method) {
        (Representation::Z42, _) => {
            let sigma = build_markov_sigma(s, d.n(), d.p())?;
            (info_z42(&sigma, &NuisanceBasis::new(2, d.n(), d.p()), &x, &w, tol)?, Method::Brute)
        }
        (_, Method::Brute) => {
            let sigma = build_markov_sigma(s, d.n(), d.p())?;
            let a = astar_brute(&sigma, &NuisanceBasis::new(2, d.n(), d.p()), tol)?;
            (schur_info(&a, &x, &w, tol)?, Method::Brute)
        }
        (_, Method::Closed) => (schur_info(&astar_markov_closed(s, d.n(), d.p())?, &x, &w, tol)?, Method::Closed),
    };
    Ok(InfoMatrix { matrix, structure: Structure::Markov, method, design_id: design_id(d), scenario: s.describe() })
}

/// C̃_{d(s2)}: the Markov information matrix without period effects.
pub fn info_markov_noperiod(d: &Design, s: &MarkovScenario, tol: Tolerance) -> Result<InfoMatrix> {
    check_dims(d, "info_markov_noperiod")?;
    let i2 = identity(2);
    let x = kron(&i2, &treatment_matrix(d));
    let w = kron(&i2, &carry_columns(d, Representation::Z43)?);
    let a = astar_markov_noperiod_closed(s, d.n(), d.p())?;
    Ok(InfoMatrix {
        matrix: schur_info(&a, &x, &w, tol)?,
        structure: Structure::Markov,
        method: Method::Closed,
        design_id: design_id(d),
        scenario: s.describe(),
    })
}

/// Brute-force C̃_{d(s2)} projecting out I_2 ⊗ U only.
pub fn info_markov_noperiod_brute(d: &Design, s: &MarkovScenario, tol: Tolerance) -> Result<InfoMatrix> {
    check_dims(d, "info_markov_noperiod")?;
    let sigma = build_markov_sigma(s, d.n(), d.p())?;
    let z = NuisanceBasis { z1: NuisanceBasis::subjects_only(2, d.n(), d.p()), g: 2, n: d.n(), p: d.p() };
    let a = astar_brute(&sigma, &z, tol)?;
    let i2 = identity(2);
    let x = kron(&i2, &treatment_matrix(d));
    let w = kron(&i2, &carry_columns(d, Representation::Z43)?);
    Ok(InfoMatrix {
        matrix: schur_info(&a, &x, &w, tol)?,
        structure: Structure::Markov,
        method: Method::Brute,
        design_id: design_id(d),
        scenario: s.describe(),
    })
}

/// (Λ1, Λ2, Λ4) of the OA closed form at p periods.
pub fn oa_lambdas(s: &MarkovScenario, p: usize) -> Result<(f64, f64, f64)> {
    let t1 = star_traces(&vstar(&s.v1(p)?)?);
    let tr = star_traces(&vstar(&s.v_r(p)?)?);
    let e1 = t1.a - t1.b * t1.b / t1.c;
    let er = tr.a - tr.b * tr.b / tr.c;
    let rb = s.rho_bar();
    let s12 = s.sigma12();
    Ok((e1 + rb * rb / s12 * er, -rb / s12 * er, er / s12))
}

/// C_{d*(s2)} = (n/(t−1)) [Λ1 Λ2; Λ2 Λ4] ⊗ H_t for an OA_I(n, t, t, 2).
pub fn info_markov_oa_closed(s: &MarkovScenario, t: usize, n: usize) -> Result<InfoMatrix> {
    if t < 2 || !n.is_multiple_of(t * (t - 1)) || n == 0 {
        return Err(Error::invalid(format!("n = {n} is not a positive multiple of t(t-1) = {}", t * t.saturating_sub(1))));
    }
    let (l1, l2, l4) = oa_lambdas(s, t)?;
    let lam = crate::matlib::from_rows(&[&[l1, l2], &[l2, l4]]) * (n as f64 / (t as f64 - 1.0));
    Ok(InfoMatrix {
        matrix: kron(&lam, &centering(t)?),
        structure: Structure::Markov,
        method: Method::Closed,
        design_id: format!("OA_I({n},{t},{t},2)"),
        scenario: s.describe(),
    })
}

/// Check the InfoMatrix invariants: symmetry, PSD and 1_t annihilation per block.
pub fn check_info_invariants(c: &Matrix, t: usize, tol: Tolerance) -> bool {
    let scale = max_abs(c).max(1.0);
    let sym = max_abs(&(c - c.transpose())) <= tol.eq_tol * scale;
    let psd = crate::matlib::loewner_leq(&Matrix::zeros(c.nrows(), c.ncols()), c, tol).unwrap_or(false);
    let ann = max_abs(&(c * kron(&identity(c.nrows() / t), &ones(t, 1)))) <= tol.eq_tol * scale * t as f64;
    sym && psd && ann
}

/// X'(H_n ⊗ Ω)Y for X, Y ∈ {T_d, F_d}, accumulated subject by subject:
/// Σ_j X_j'ΩY_j − (1/n)(Σ_j X_j)'Ω(Σ_j Y_j).
struct Grams {
    tt: Matrix,
    tf: Matrix,
    ff: Matrix,
}

fn centered_grams(d: &Design, omega: &Matrix) -> Grams {
    let (t, n, p) = (d.t(), d.n(), d.p());
    let mut tt = Matrix::zeros(t, t);
    let mut tf = Matrix::zeros(t, t);
    let mut ff = Matrix::zeros(t, t);
    // period-by-treatment counts of current and previous treatments
    let mut st = Matrix::zeros(p, t);
    let mut sf = Matrix::zeros(p, t);
    for j in 0..n {
        for i in 0..p {
            let a = d.at(i, j);
            st[(i, a)] += 1.0;
            if i > 0 {
                sf[(i, d.at(i - 1, j))] += 1.0;
            }
            for k in 0..p {
                let w = omega[(i, k)];
                let b = d.at(k, j);
                tt[(a, b)] += w;
                if k > 0 {
                    tf[(a, d.at(k - 1, j))] += w;
                    if i > 0 {
                        ff[(d.at(i - 1, j), d.at(k - 1, j))] += w;
                    }
                }
            }
        }
    }
    let inv_n = 1.0 / n as f64;
    let os_t = omega * &st;
    let os_f = omega * &sf;
    tt -= st.transpose() * &os_t * inv_n;
    tf -= st.transpose() * &os_f * inv_n;
    ff -= sf.transpose() * &os_f * inv_n;
    Grams { tt, tf, ff }
}

/// Closed-form A* held in factored form for fast trace evaluation:
/// A* = Σ_{k,l} E_kl ⊗ (H_n ⊗ Ω_kl).
#[derive(Debug, Clone)]
pub struct TraceEvaluator {
    omegas: Vec<Vec<Matrix>>,
    n: usize,
    p: usize,
    t: usize,
    /// tr(Γ⁻¹) for the proportional structure (omegas hold the univariate part).
    factor: f64,
    h_t: Matrix,
    tol: Tolerance,
}

impl TraceEvaluator {
    pub fn markov(s: &MarkovScenario, t: usize, n: usize, p: usize, tol: Tolerance) -> Result<Self> {
        let (o1, o2, o4) = omega_matrices(s, p)?;
        let neg = -o2;
        Ok(TraceEvaluator {
            omegas: vec![vec![o1, neg.clone()], vec![neg, o4]],
            n,
            p,
            t,
            factor: 1.0,
            h_t: centering(t)?,
            tol,
        })
    }

    pub fn proportional(s: &ProportionalScenario, t: usize, n: usize, p: usize, tol: Tolerance) -> Result<Self> {
        let mut ev = TraceEvaluator::univariate(&s.v_matrix(p)?, t, n, tol)?;
        ev.factor = s.gamma_inv()?.trace();
        Ok(ev)
    }

    /// Univariate evaluator with V directly.
    pub fn univariate(v: &Matrix, t: usize, n: usize, tol: Tolerance) -> Result<Self> {
        Ok(TraceEvaluator {
            omegas: vec![vec![vstar(v)?]],
            n,
            p: v.nrows(),
            t,
            factor: 1.0,
            h_t: centering(t)?,
            tol,
        })
    }

    /// The direct-effect information matrix (univariate part for the proportional structure).
    pub fn info(&self, d: &Design) -> Result<Matrix> {
        if (d.t(), d.n(), d.p()) != (self.t, self.n, self.p) {
            return Err(Error::dims(format!(
                "design is (t, n, p) = ({}, {}, {}), evaluator expects ({}, {}, {})",
                d.t(),
                d.n(),
                d.p(),
                self.t,
                self.n,
                self.p
            )));
        }
        let g = self.omegas.len();
        let t = self.t;
        let h = &self.h_t;
        let mut c11 = Matrix::zeros(g * t, g * t);
        let mut c12 = Matrix::zeros(g * t, g * t);
        let mut c22 = Matrix::zeros(g * t, g * t);
        for k in 0..g {
            for l in 0..g {
                let gr = centered_grams(d, &self.omegas[k][l]);
                c11.view_mut((k * t, l * t), (t, t)).copy_from(&gr.tt);
                c12.view_mut((k * t, l * t), (t, t)).copy_from(&(&gr.tf * h));
                c22.view_mut((k * t, l * t), (t, t)).copy_from(&(h * &gr.ff * h));
            }
        }
        let omega = self.omegas.iter().flatten().map(max_abs).fold(0.0, f64::max);
        let reps = d.replications().into_iter().max().unwrap_or(0);
        schur_from_blocks(&c11, &c12, &c22, omega * reps as f64, self.tol)
    }

    pub fn trace(&self, d: &Design) -> Result<f64> {
        Ok(self.factor * self.info(d)?.trace())
    }
}
