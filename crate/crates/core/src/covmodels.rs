//! Within-period covariance kernels, dispersion builders for the proportional
//! and generalized Markov-type structures, and the starred matrices.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matlib::{centering, ensure_spd, identity, kron, ones, spd_inverse, symmetrize, Matrix, Tolerance};

/// Kernel families of the Matérn type.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Family {
    Mat05,
    Mat15,
    MatInf,
}

impl Family {
    pub const ALL: [Family; 3] = [Family::Mat05, Family::Mat15, Family::MatInf];

    /// Correlation at lag `h` for parameter `r` (natural log in Mat15).
    pub fn correlation(self, r: f64, h: usize) -> f64 {
        let h = h as f64;
        match self {
            Family::Mat05 => r.powf(h),
            Family::Mat15 => (1.0 - h * r.ln()) * r.powf(h),
            Family::MatInf => r.powf(h * h),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Family::Mat05 => "Mat05",
            Family::Mat15 => "Mat15",
            Family::MatInf => "MatInf",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    /// Accepts "Mat05", "Mat0.5", "Mat(0.5)", "MatInf", "Mat(inf)" and similar, case-insensitively.
    fn from_str(s: &str) -> Result<Self> {
        let key: String = s.to_ascii_lowercase().chars().filter(|c| !"()._ -".contains(*c)).collect();
        match key.trim_start_matches("mat") {
            "05" => Ok(Family::Mat05),
            "15" => Ok(Family::Mat15),
            "inf" | "infinity" | "∞" => Ok(Family::MatInf),
            _ => Err(Error::invalid(format!("unknown kernel family {s:?} (expected Mat05, Mat15 or MatInf)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kernel {
    pub family: Family,
    pub r: f64,
    pub scale: f64,
}

impl Kernel {
    pub fn new(family: Family, r: f64) -> Result<Self> {
        Kernel::scaled(family, r, 1.0)
    }

    pub fn scaled(family: Family, r: f64, scale: f64) -> Result<Self> {
        if !(r > 0.0 && r < 1.0) {
            return Err(Error::invalid(format!("kernel parameter r must lie in (0, 1), got {r}")));
        }
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::invalid(format!("kernel scale must be positive, got {scale}")));
        }
        Ok(Kernel { family, r, scale })
    }
}

/// p×p kernel matrix with entry scale·k(|i1 − i2|).
pub fn build_kernel_matrix(k: &Kernel, p: usize) -> Result<Matrix> {
    let k = Kernel::scaled(k.family, k.r, k.scale)?;
    if p == 0 {
        return Err(Error::invalid("kernel matrix needs p >= 1"));
    }
    Ok(Matrix::from_fn(p, p, |i, j| k.scale * k.family.correlation(k.r, i.abs_diff(j))))
}

/// A within-period covariance: a kernel or a user-supplied matrix.
#[derive(Debug, Clone, PartialEq)]
pub enum CovSpec {
    Kernel(Kernel),
    Explicit(Matrix),
}

impl CovSpec {
    pub fn matrix(&self, p: usize) -> Result<Matrix> {
        match self {
            CovSpec::Kernel(k) => build_kernel_matrix(k, p),
            CovSpec::Explicit(m) if m.nrows() == p && m.ncols() == p => Ok(m.clone()),
            CovSpec::Explicit(m) => Err(Error::dims(format!(
                "explicit covariance is {}x{}, design has p = {p}",
                m.nrows(),
                m.ncols()
            ))),
        }
    }

    fn describe(&self) -> String {
        match self {
            CovSpec::Kernel(k) => format!("{}({})", k.family, k.r),
            CovSpec::Explicit(_) => "explicit".into(),
        }
    }
}

/// Σ = Γ ⊗ (I_n ⊗ V).
#[derive(Debug, Clone, PartialEq)]
pub struct ProportionalScenario {
    pub gamma: Matrix,
    pub v: CovSpec,
}

impl ProportionalScenario {
    pub fn new(gamma: Matrix, v: CovSpec) -> Result<Self> {
        ensure_spd(&gamma, "Gamma", Tolerance::default())?;
        Ok(ProportionalScenario { gamma, v })
    }

    pub fn g(&self) -> usize {
        self.gamma.nrows()
    }

    pub fn v_matrix(&self, p: usize) -> Result<Matrix> {
        let v = self.v.matrix(p)?;
        ensure_spd(&v, "V", Tolerance::default())?;
        Ok(v)
    }

    pub fn gamma_inv(&self) -> Result<Matrix> {
        spd_inverse(&self.gamma, "Gamma", Tolerance::default())
    }

    pub fn describe(&self) -> String {
        format!("proportional g={} V={}", self.g(), self.v.describe())
    }
}

/// Bivariate generalized Markov-type structure with V1 = σ11·V_C.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovScenario {
    pub sigma11: f64,
    pub sigma22: f64,
    pub rho: f64,
    /// Correlation structure V_C of response 1 (scaled by σ11 to give V1).
    pub vc: CovSpec,
    pub vr: CovSpec,
}

impl MarkovScenario {
    pub fn new(sigma11: f64, sigma22: f64, rho: f64, vc: CovSpec, vr: CovSpec) -> Result<Self> {
        if !(sigma11 > 0.0 && sigma11.is_finite()) || !(sigma22 > 0.0 && sigma22.is_finite()) {
            return Err(Error::invalid(format!("sigma11 and sigma22 must be positive, got {sigma11}, {sigma22}")));
        }
        if !(rho.abs() > 0.0 && rho.abs() < 1.0) {
            return Err(Error::invalid(format!("rho must satisfy 0 < |rho| < 1, got {rho}")));
        }
        Ok(MarkovScenario { sigma11, sigma22, rho, vc, vr })
    }

    /// ρ̄ = ρ·sqrt(σ22/σ11).
    pub fn rho_bar(&self) -> f64 {
        self.rho * (self.sigma22 / self.sigma11).sqrt()
    }

    /// σ12 = σ22(1 − ρ²).
    pub fn sigma12(&self) -> f64 {
        self.sigma22 * (1.0 - self.rho * self.rho)
    }

    pub fn v1(&self, p: usize) -> Result<Matrix> {
        let v = self.vc.matrix(p)? * self.sigma11;
        ensure_spd(&v, "V1", Tolerance::default())?;
        Ok(v)
    }

    pub fn v_r(&self, p: usize) -> Result<Matrix> {
        let v = self.vr.matrix(p)?;
        ensure_spd(&v, "V_R", Tolerance::default())?;
        Ok(v)
    }

    pub fn with_rho(&self, rho: f64) -> Result<Self> {
        MarkovScenario::new(self.sigma11, self.sigma22, rho, self.vc.clone(), self.vr.clone())
    }

    pub fn with_sigmas(&self, sigma11: f64, sigma22: f64) -> Result<Self> {
        MarkovScenario::new(sigma11, sigma22, self.rho, self.vc.clone(), self.vr.clone())
    }

    pub fn describe(&self) -> String {
        format!(
            "markov V1={} VR={} sigma11={} sigma22={} rho={}",
            self.vc.describe(),
            self.vr.describe(),
            self.sigma11,
            self.sigma22,
            self.rho
        )
    }
}

/// Either dispersion structure.
#[derive(Debug, Clone, PartialEq)]
pub enum Scenario {
    Proportional(ProportionalScenario),
    Markov(MarkovScenario),
}

impl Scenario {
    pub fn structure(&self) -> &'static str {
        match self {
            Scenario::Proportional(_) => "proportional",
            Scenario::Markov(_) => "markov",
        }
    }
}

/// Names of the seven Markov cases as (V1, V_R).
pub const CASE_NAMES: [&str; 7] = [
    "V1: Mat(0.5), VR: Mat(1.5)",
    "V1: Mat(0.5), VR: Mat(inf)",
    "V1: Mat(1.5), VR: Mat(0.5)",
    "V1: Mat(1.5), VR: Mat(inf)",
    "V1: Mat(inf), VR: Mat(0.5)",
    "V1: Mat(inf), VR: Mat(1.5)",
    "V1: Mat(0.5), VR: Mat(0.5) with r^2 (NS1)",
];

/// Markov Case 1–7 at correlation parameter r. Case 7 uses V_R = Mat05(r²).
pub fn markov_case(case: usize, r: f64, sigma11: f64, sigma22: f64, rho: f64) -> Result<MarkovScenario> {
    use Family::*;
    let (f1, fr, rr) = match case {
        1 => (Mat05, Mat15, r),
        2 => (Mat05, MatInf, r),
        3 => (Mat15, Mat05, r),
        4 => (Mat15, MatInf, r),
        5 => (MatInf, Mat05, r),
        6 => (MatInf, Mat15, r),
        7 => (Mat05, Mat05, r * r),
        _ => return Err(Error::invalid(format!("case must be 1..7, got {case}"))),
    };
    MarkovScenario::new(
        sigma11,
        sigma22,
        rho,
        CovSpec::Kernel(Kernel::new(f1, r)?),
        CovSpec::Kernel(Kernel::new(fr, rr)?),
    )
}

pub fn build_proportional_sigma(s: &ProportionalScenario, n: usize, p: usize) -> Result<Matrix> {
    ensure_spd(&s.gamma, "Gamma", Tolerance::default())?;
    let v = s.v_matrix(p)?;
    Ok(kron(&s.gamma, &kron(&identity(n), &v)))
}

/// Σ for the bivariate Markov-type structure (2np × 2np).
pub fn build_markov_sigma(s: &MarkovScenario, n: usize, p: usize) -> Result<Matrix> {
    let v1 = s.v1(p)?;
    let vr = s.v_r(p)?;
    let in_ = identity(n);
    let s11 = kron(&in_, &v1);
    let ratio = s.sigma22 / s.sigma11;
    let s12 = &s11 * (s.rho * ratio.sqrt());
    let s22 = &s11 * (s.rho * s.rho * ratio) + kron(&in_, &vr) * s.sigma12();
    let m = n * p;
    let mut sigma = Matrix::zeros(2 * m, 2 * m);
    sigma.view_mut((0, 0), (m, m)).copy_from(&s11);
    sigma.view_mut((0, m), (m, m)).copy_from(&s12);
    sigma.view_mut((m, 0), (m, m)).copy_from(&s12);
    sigma.view_mut((m, m), (m, m)).copy_from(&s22);
    ensure_spd(&sigma, "Sigma", Tolerance::default())?;
    Ok(sigma)
}

/// V* = V⁻¹ − (1'V⁻¹1)⁻¹ V⁻¹ J V⁻¹.
pub fn vstar(v: &Matrix) -> Result<Matrix> {
    let vi = spd_inverse(v, "V", Tolerance::default())?;
    let p = v.nrows();
    let w = &vi * ones(p, 1);
    let denom = w.sum();
    Ok(symmetrize(&(&vi - (&w * w.transpose()) / denom)))
}

/// (Ω1, Ω2, Ω4) with Ω1 = V1* + (ρ̄²/σ12)V_R*, Ω2 = (ρ̄/σ12)V_R*, Ω4 = V_R*/σ12.
pub fn omega_matrices(s: &MarkovScenario, p: usize) -> Result<(Matrix, Matrix, Matrix)> {
    let v1s = vstar(&s.v1(p)?)?;
    let vrs = vstar(&s.v_r(p)?)?;
    let rb = s.rho_bar();
    let s12 = s.sigma12();
    let o1 = &v1s + &vrs * (rb * rb / s12);
    let o2 = &vrs * (rb / s12);
    let o4 = &vrs / s12;
    Ok((o1, o2, o4))
}

/// The traces (tr V*, tr V*ψ, tr H_p ψ'V*ψ) used by every closed form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StarTraces {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

pub fn star_traces(vs: &Matrix) -> StarTraces {
    let p = vs.nrows();
    let psi = crate::designs::shift_matrix(p).expect("p >= 1");
    let hp = centering(p).expect("p >= 1");
    StarTraces {
        a: vs.trace(),
        b: (vs * &psi).trace(),
        c: (hp * psi.transpose() * vs * &psi).trace(),
    }
}

// ---------------------------------------------------------------- JSON config

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    pub family: String,
    pub r: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplicitMarkov {
    #[serde(rename = "V1")]
    pub v1: Vec<Vec<f64>>,
    #[serde(rename = "VR")]
    pub vr: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ExplicitConfig {
    Matrix(Vec<Vec<f64>>),
    Markov(ExplicitMarkov),
}

/// Scenario file contents. Unknown keys are rejected.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub structure: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<Vec<Vec<f64>>>,
    #[serde(default, rename = "kernelV", skip_serializing_if = "Option::is_none")]
    pub kernel_v: Option<KernelConfig>,
    #[serde(default, rename = "kernelV1", skip_serializing_if = "Option::is_none")]
    pub kernel_v1: Option<KernelConfig>,
    #[serde(default, rename = "kernelVR", skip_serializing_if = "Option::is_none")]
    pub kernel_vr: Option<KernelConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma11: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma22: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    /// Raw covariance matrices: V for proportional, {"V1", "VR"} for Markov.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explicit: Option<ExplicitConfig>,
}

fn kernel_from(cfg: &KernelConfig, scale: f64) -> Result<CovSpec> {
    let fam: Family = cfg.family.parse()?;
    Ok(CovSpec::Kernel(Kernel::scaled(fam, cfg.r, cfg.scale.unwrap_or(1.0) * scale)?))
}

fn explicit_matrix(rows: &[Vec<f64>], what: &str) -> Result<Matrix> {
    let m = crate::matlib::try_from_rows(rows)?;
    ensure_spd(&m, what, Tolerance::default())?;
    Ok(m)
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse { line: Some(e.line()), msg: e.to_string() })
    }

    pub fn into_scenario(self) -> Result<Scenario> {
        match self.structure.as_str() {
            "proportional" => {
                if self.kernel_v1.is_some() || self.kernel_vr.is_some() || self.rho.is_some() {
                    return Err(Error::invalid("proportional scenario takes gamma and kernelV only"));
                }
                let gamma_rows = self.gamma.ok_or_else(|| Error::invalid("proportional scenario needs \"gamma\""))?;
                let gamma = explicit_matrix(&gamma_rows, "Gamma")?;
                if let Some(g) = self.g {
                    if g != gamma.nrows() {
                        return Err(Error::dims(format!("g = {g} but gamma is {}x{}", gamma.nrows(), gamma.ncols())));
                    }
                }
                let v = match (self.kernel_v, self.explicit) {
                    (Some(k), None) => kernel_from(&k, 1.0)?,
                    (None, Some(ExplicitConfig::Matrix(m))) => CovSpec::Explicit(explicit_matrix(&m, "V")?),
                    (None, Some(ExplicitConfig::Markov(_))) => {
                        return Err(Error::invalid("proportional \"explicit\" must be a single matrix"))
                    }
                    (Some(_), Some(_)) => return Err(Error::invalid("give either kernelV or explicit, not both")),
                    (None, None) => return Err(Error::invalid("proportional scenario needs \"kernelV\" or \"explicit\"")),
                };
                Ok(Scenario::Proportional(ProportionalScenario::new(gamma, v)?))
            }
            "markov" => {
                if self.gamma.is_some() || self.kernel_v.is_some() {
                    return Err(Error::invalid("markov scenario does not take gamma or kernelV"));
                }
                if let Some(g) = self.g {
                    if g != 2 {
                        return Err(Error::Unsupported(format!("markov structure requires g = 2, got {g}")));
                    }
                }
                let s11 = self.sigma11.ok_or_else(|| Error::invalid("markov scenario needs \"sigma11\""))?;
                let s22 = self.sigma22.ok_or_else(|| Error::invalid("markov scenario needs \"sigma22\""))?;
                let rho = self.rho.ok_or_else(|| Error::invalid("markov scenario needs \"rho\""))?;
                if !(s11 > 0.0) {
                    return Err(Error::invalid(format!("sigma11 must be positive, got {s11}")));
                }
                let (vc, vr) = match (self.kernel_v1, self.kernel_vr, self.explicit) {
                    (Some(k1), Some(kr), None) => (kernel_from(&k1, 1.0)?, kernel_from(&kr, 1.0)?),
                    (None, None, Some(ExplicitConfig::Markov(e))) => (
                        CovSpec::Explicit(explicit_matrix(&e.v1, "V1")? / s11),
                        CovSpec::Explicit(explicit_matrix(&e.vr, "V_R")?),
                    ),
                    _ => {
                        return Err(Error::invalid(
                            "markov scenario needs kernelV1 and kernelVR, or explicit {\"V1\", \"VR\"}",
                        ))
                    }
                };
                Ok(Scenario::Markov(MarkovScenario::new(s11, s22, rho, vc, vr)?))
            }
            other => Err(Error::invalid(format!("structure must be \"proportional\" or \"markov\", got {other:?}"))),
        }
    }
}

pub fn parse_scenario(text: &str) -> Result<Scenario> {
    ScenarioConfig::from_json(text)?.into_scenario()
}
