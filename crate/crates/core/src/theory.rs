//! Numerical checks of the benefit/cost analysis of null-space denoising.
//!
//! With orthonormal target and noise bases `T_t` (k×d) and `T_n` (p×d), the
//! coupling matrix is `A = T_t T_nᵀ` and `ε = ‖A‖₂`. Denoising removes the
//! noise leakage `B = ‖R_n Aᵀ‖_F` (first order in ε) at the price of the lost
//! target signal `C = ‖R_t A Aᵀ‖_F ≤ ‖R_t‖_F ε²` (second order).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Serialize, Serializer};

use crate::aobo::OrthogonalBasis;
use crate::error::{invalid, shape_err, Result};
use crate::linalg::{frobenius_norm, matmul, matmul_nt, spectral_norm, transpose, Matrix};
use crate::nsdp::SubspaceConfig;
use crate::par::Execution;
use crate::synthgen::coupled_bases;

/// Costs below this are treated as zero when forming `B / C`.
pub const COST_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Coupling {
    /// `k × p` matrix `T_t T_nᵀ`.
    pub matrix: Matrix,
    /// Spectral norm of `matrix`: the largest principal cosine.
    pub epsilon: f64,
}

pub fn coupling(target: &OrthogonalBasis, noise: &OrthogonalBasis) -> Result<Coupling> {
    if target.dim() != noise.dim() {
        return shape_err(format!(
            "target dimension {} differs from noise dimension {}",
            target.dim(),
            noise.dim()
        ));
    }
    let matrix = matmul_nt(target.vectors(), noise.vectors())?;
    let epsilon = spectral_norm(&matrix)?;
    Ok(Coupling { matrix, epsilon })
}

/// `‖R_n Aᵀ‖_F`.
pub fn benefit(r_n: &Matrix, a: &Matrix) -> Result<f64> {
    if r_n.cols() != a.cols() {
        return shape_err(format!(
            "R_n has {} columns but coupling has {} noise directions",
            r_n.cols(),
            a.cols()
        ));
    }
    Ok(frobenius_norm(&matmul_nt(r_n, a)?))
}

/// `‖R_t A Aᵀ‖_F`.
pub fn cost(r_t: &Matrix, a: &Matrix) -> Result<f64> {
    if r_t.cols() != a.rows() {
        return shape_err(format!(
            "R_t has {} columns but coupling has {} target directions",
            r_t.cols(),
            a.rows()
        ));
    }
    let ra = matmul(r_t, a)?;
    Ok(frobenius_norm(&matmul_nt(&ra, a)?))
}

/// Benefit in its unexpanded form `‖R_n T_n T_tᵀ‖_F`.
pub fn benefit_projection_form(
    r_n: &Matrix,
    target: &OrthogonalBasis,
    noise: &OrthogonalBasis,
) -> Result<f64> {
    let leak = matmul(r_n, noise.vectors())?;
    Ok(frobenius_norm(&matmul_nt(&leak, target.vectors())?))
}

/// Cost in its unexpanded form `‖R_t T_t P_n T_tᵀ‖_F` with `P_n = T_nᵀ T_n`.
pub fn cost_projection_form(
    r_t: &Matrix,
    target: &OrthogonalBasis,
    noise: &OrthogonalBasis,
) -> Result<f64> {
    let p_n = matmul(&transpose(noise.vectors()), noise.vectors())?;
    let signal = matmul(r_t, target.vectors())?;
    let removed = matmul(&signal, &p_n)?;
    Ok(frobenius_norm(&matmul_nt(&removed, target.vectors())?))
}

/// `B / C`, with the degenerate cases made explicit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Ratio {
    Finite(f64),
    /// `C` below [`COST_FLOOR`] while `B` is not.
    Infinite,
    /// Both terms below [`COST_FLOOR`].
    Undefined,
}

impl Ratio {
    pub fn new(benefit: f64, cost: f64) -> Self {
        if cost < COST_FLOOR {
            if benefit < COST_FLOOR {
                Ratio::Undefined
            } else {
                Ratio::Infinite
            }
        } else {
            Ratio::Finite(benefit / cost)
        }
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            Ratio::Finite(v) => Some(v),
            _ => None,
        }
    }
}

impl Serialize for Ratio {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Ratio::Finite(v) => s.serialize_f64(*v),
            Ratio::Infinite => s.serialize_str("inf"),
            Ratio::Undefined => s.serialize_str("undefined"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenefitCostReport {
    pub epsilon: f64,
    pub benefit: f64,
    /// Benefit evaluated without the coupling-matrix shortcut.
    pub benefit_projection_form: f64,
    pub cost: f64,
    pub cost_projection_form: f64,
    /// `‖R_t‖_F · ε²`.
    pub cost_upper_bound: f64,
    pub ratio: Ratio,
    /// `B / (‖R_n‖_F · ε)`; absent when ε or `R_n` is zero.
    pub c1_empirical: Option<f64>,
    pub r_t_norm: f64,
    pub r_n_norm: f64,
}

impl BenefitCostReport {
    pub fn evaluate(
        r_t: &Matrix,
        r_n: &Matrix,
        target: &OrthogonalBasis,
        noise: &OrthogonalBasis,
    ) -> Result<Self> {
        if r_t.rows() != r_n.rows() {
            return shape_err(format!(
                "R_t has {} rows, R_n has {}",
                r_t.rows(),
                r_n.rows()
            ));
        }
        let c = coupling(target, noise)?;
        let eps = c.epsilon;
        let b = benefit(r_n, &c.matrix)?;
        let cst = cost(r_t, &c.matrix)?;
        let r_t_norm = frobenius_norm(r_t);
        let r_n_norm = frobenius_norm(r_n);
        let c1_empirical = (eps > 0.0 && r_n_norm > 0.0).then(|| b / (r_n_norm * eps));
        Ok(BenefitCostReport {
            epsilon: eps,
            benefit: b,
            benefit_projection_form: benefit_projection_form(r_n, target, noise)?,
            cost: cst,
            cost_projection_form: cost_projection_form(r_t, target, noise)?,
            cost_upper_bound: r_t_norm * eps * eps,
            ratio: Ratio::new(b, cst),
            c1_empirical,
            r_t_norm,
            r_n_norm,
        })
    }

    /// `C ≤ ‖R_t‖_F ε²` up to `1e-9` relative slack.
    pub fn cost_bound_holds(&self) -> bool {
        self.cost <= self.cost_upper_bound + 1e-9 * (1.0 + self.cost_upper_bound)
    }

    /// Largest relative disagreement between the coupling-matrix and
    /// projection forms of `B` and `C`.
    pub fn lemma_discrepancy(&self) -> f64 {
        let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE);
        let b = if self.benefit == 0.0 && self.benefit_projection_form < 1e-15 {
            0.0
        } else {
            rel(self.benefit, self.benefit_projection_form)
        };
        let c = if self.cost == 0.0 && self.cost_projection_form < 1e-15 {
            0.0
        } else {
            rel(self.cost, self.cost_projection_form)
        };
        b.max(c)
    }
}

/// One planted instance: coupled bases and Gaussian coefficient matrices.
#[derive(Debug, Clone)]
pub struct TrialInstance {
    pub bases: SubspaceConfig,
    pub r_t: Matrix,
    pub r_n: Matrix,
    pub report: BenefitCostReport,
}

pub fn theorem_trial(d: usize, k: usize, p: usize, m: usize, eps: f64, seed: u64) -> Result<TrialInstance> {
    if m == 0 {
        return invalid("trial needs at least one sample");
    }
    let bases = coupled_bases(d, k, p, eps, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gaussian = |rows: usize, cols: usize| {
        let data = (0..rows * cols)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        Matrix::from_parts(rows, cols, data)
    };
    let r_t = gaussian(m, k);
    let r_n = gaussian(m, p);
    let report = BenefitCostReport::evaluate(&r_t, &r_n, &bases.target, &bases.noise)?;
    Ok(TrialInstance { bases, r_t, r_n, report })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TheoremConfig {
    pub d: usize,
    pub k: usize,
    pub p: usize,
    /// Rows of `R_t` and `R_n` per trial.
    pub m: usize,
    pub eps: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    #[serde(skip)]
    pub execution: Execution,
}

impl TheoremConfig {
    pub fn new(d: usize, k: usize, p: usize, eps: Vec<f64>, trials: usize, seed: u64) -> Self {
        TheoremConfig {
            d,
            k,
            p,
            m: 32,
            eps,
            trials,
            seed,
            execution: Execution::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpsilonSummary {
    pub epsilon: f64,
    pub trials: usize,
    pub cost_bound_violations: usize,
    pub median_benefit: f64,
    pub median_cost: f64,
    /// Median of the finite `B / C` values.
    pub median_ratio: Option<f64>,
    pub infinite_ratios: usize,
    pub undefined_ratios: usize,
    /// Median over trials of `B / (‖R_n‖_F ε)`, the constant in the benefit
    /// lower bound.
    pub c1_median: Option<f64>,
    pub c1_min: Option<f64>,
    pub c1_max: Option<f64>,
    /// `median(B/C) · ε · ‖R_t‖_F / ‖R_n‖_F` using per-ensemble median norms.
    pub normalized_ratio_median: Option<f64>,
    /// Trials where `B/C ≥ c1 · (‖R_n‖_F / ‖R_t‖_F) / ε` with the trial's own
    /// empirical `c1`.
    pub ratio_bound_holds: usize,
    pub max_lemma_discrepancy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingEntry {
    pub eps_low: f64,
    pub eps_high: f64,
    /// `median_ratio(eps_low) / median_ratio(eps_high)`.
    pub factor: Option<f64>,
    /// `eps_high / eps_low`, the factor a pure `1/ε` law predicts.
    pub predicted_factor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TheoremReport {
    pub config: TheoremConfig,
    pub per_epsilon: Vec<EpsilonSummary>,
    /// Least-squares slope of ln(median C) against ln ε.
    pub cost_slope: Option<f64>,
    /// Least-squares slope of ln(median B) against ln ε.
    pub benefit_slope: Option<f64>,
    pub scaling: Vec<ScalingEntry>,
}

impl TheoremReport {
    pub fn total_violations(&self) -> usize {
        self.per_epsilon.iter().map(|s| s.cost_bound_violations).sum()
    }
}

/// Runs `trials` planted instances per ε. Trial `t` uses sub-seed
/// `seed + t` for every ε, so parallel and sequential runs agree exactly.
pub fn verify_theorem(cfg: &TheoremConfig) -> Result<TheoremReport> {
    if cfg.d <= cfg.k + cfg.p {
        return invalid(format!(
            "need d > k + p, got d={}, k={}, p={}",
            cfg.d, cfg.k, cfg.p
        ));
    }
    if cfg.k == 0 || cfg.p == 0 || cfg.trials == 0 || cfg.m == 0 {
        return invalid("k, p, m and trials must all be positive");
    }
    if cfg.eps.is_empty() {
        return invalid("no epsilon values given");
    }
    if let Some(e) = cfg.eps.iter().find(|e| !(0.0..1.0).contains(*e)) {
        return invalid(format!("epsilon {e} outside [0, 1)"));
    }

    let mut per_epsilon = Vec::with_capacity(cfg.eps.len());
    for &eps in &cfg.eps {
        let reports: Vec<Result<BenefitCostReport>> = cfg.execution.map(cfg.trials, |t| {
            theorem_trial(cfg.d, cfg.k, cfg.p, cfg.m, eps, cfg.seed.wrapping_add(t as u64))
                .map(|inst| inst.report)
        });
        let reports = reports.into_iter().collect::<Result<Vec<_>>>()?;
        per_epsilon.push(summarize(eps, &reports));
    }

    let fit = |pick: fn(&EpsilonSummary) -> f64| {
        let pts: Vec<(f64, f64)> = per_epsilon
            .iter()
            .filter(|s| s.epsilon > 0.0 && pick(s) > 0.0)
            .map(|s| (s.epsilon.ln(), pick(s).ln()))
            .collect();
        slope(&pts)
    };
    let cost_slope = fit(|s| s.median_cost);
    let benefit_slope = fit(|s| s.median_benefit);

    let mut scaling = Vec::new();
    for w in per_epsilon.windows(2) {
        let (lo, hi) = if w[0].epsilon <= w[1].epsilon {
            (&w[0], &w[1])
        } else {
            (&w[1], &w[0])
        };
        if lo.epsilon <= 0.0 {
            continue;
        }
        let factor = match (lo.median_ratio, hi.median_ratio) {
            (Some(a), Some(b)) if b > 0.0 => Some(a / b),
            _ => None,
        };
        scaling.push(ScalingEntry {
            eps_low: lo.epsilon,
            eps_high: hi.epsilon,
            factor,
            predicted_factor: hi.epsilon / lo.epsilon,
        });
    }

    Ok(TheoremReport {
        config: cfg.clone(),
        per_epsilon,
        cost_slope,
        benefit_slope,
        scaling,
    })
}

fn summarize(eps: f64, reports: &[BenefitCostReport]) -> EpsilonSummary {
    let col = |f: fn(&BenefitCostReport) -> f64| reports.iter().map(f).collect::<Vec<_>>();
    let finite: Vec<f64> = reports.iter().filter_map(|r| r.ratio.finite()).collect();
    let c1: Vec<f64> = reports.iter().filter_map(|r| r.c1_empirical).collect();
    let median_ratio = median(&finite);
    let normalized_ratio_median = median_ratio.and_then(|r| {
        let rt = median(&col(|r| r.r_t_norm))?;
        let rn = median(&col(|r| r.r_n_norm))?;
        (rn > 0.0).then(|| r * eps * rt / rn)
    });
    let ratio_bound_holds = reports
        .iter()
        .filter(|r| match (r.ratio, r.c1_empirical) {
            (Ratio::Finite(ratio), Some(c1)) => {
                let bound = c1 * (r.r_n_norm / r.r_t_norm) / r.epsilon;
                ratio >= bound * (1.0 - 1e-9)
            }
            (Ratio::Infinite, _) => true,
            _ => false,
        })
        .count();
    EpsilonSummary {
        epsilon: eps,
        trials: reports.len(),
        cost_bound_violations: reports.iter().filter(|r| !r.cost_bound_holds()).count(),
        median_benefit: median(&col(|r| r.benefit)).unwrap_or(0.0),
        median_cost: median(&col(|r| r.cost)).unwrap_or(0.0),
        median_ratio,
        infinite_ratios: reports.iter().filter(|r| r.ratio == Ratio::Infinite).count(),
        undefined_ratios: reports.iter().filter(|r| r.ratio == Ratio::Undefined).count(),
        c1_median: median(&c1),
        c1_min: c1.iter().copied().reduce(f64::min),
        c1_max: c1.iter().copied().reduce(f64::max),
        normalized_ratio_median,
        ratio_bound_holds,
        max_lemma_discrepancy: reports
            .iter()
            .map(BenefitCostReport::lemma_discrepancy)
            .fold(0.0, f64::max),
    }
}

pub(crate) fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

fn slope(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn axis_basis(d: usize, idx: &[usize]) -> OrthogonalBasis {
        let rows: Vec<Vec<f64>> = idx
            .iter()
            .map(|&i| {
                let mut v = vec![0.0; d];
                v[i] = 1.0;
                v
            })
            .collect();
        OrthogonalBasis::from_rows(Matrix::from_rows(&rows).unwrap()).unwrap()
    }

    #[test]
    fn coupling_extremes() {
        let a = axis_basis(4, &[0, 1]);
        let b = axis_basis(4, &[2, 3]);
        let c = coupling(&a, &b).unwrap();
        assert_eq!(c.matrix.max_abs(), 0.0);
        assert_eq!(c.epsilon, 0.0);
        assert_abs_diff_eq!(coupling(&a, &a).unwrap().epsilon, 1.0, epsilon = 1e-12);
        assert!(coupling(&a, &axis_basis(5, &[0])).is_err());
    }

    #[test]
    fn benefit_and_cost_hand_values() {
        let zero = Matrix::zeros(1, 2);
        let a = Matrix::from_rows(&[vec![0.1, 0.0]]).unwrap();
        assert_eq!(benefit(&zero, &a).unwrap(), 0.0);
        assert_eq!(benefit(&Matrix::from_rows(&[vec![1.0, 0.0]]).unwrap(), &Matrix::zeros(1, 2)).unwrap(), 0.0);
        let r_n = Matrix::from_rows(&[vec![1.0, 0.0]]).unwrap();
        assert_abs_diff_eq!(benefit(&r_n, &a).unwrap(), 0.1, epsilon = 1e-15);

        let eps = 0.3;
        let r_t = Matrix::from_rows(&[vec![1.0]]).unwrap();
        let a1 = Matrix::from_rows(&[vec![eps]]).unwrap();
        assert_abs_diff_eq!(cost(&r_t, &a1).unwrap(), eps * eps, epsilon = 1e-15);
        assert_eq!(cost(&r_t, &Matrix::zeros(1, 3)).unwrap(), 0.0);
        assert!(cost(&Matrix::zeros(2, 2), &a1).is_err());
        assert!(benefit(&Matrix::zeros(2, 3), &a1).is_err());
    }

    #[test]
    fn planted_cost_bound() {
        let inst = theorem_trial(12, 3, 3, 40, 0.05, 9).unwrap();
        let r_t = inst.r_t.scale(10.0 / frobenius_norm(&inst.r_t));
        let rep = BenefitCostReport::evaluate(&r_t, &inst.r_n, &inst.bases.target, &inst.bases.noise).unwrap();
        assert_abs_diff_eq!(rep.r_t_norm, 10.0, epsilon = 1e-12);
        assert!(rep.cost <= 0.025 + 1e-12);
        assert!(rep.cost_bound_holds());
    }

    #[test]
    fn ratio_classification() {
        assert_eq!(Ratio::new(0.0, 0.0), Ratio::Undefined);
        assert_eq!(Ratio::new(1.0, 1e-13), Ratio::Infinite);
        assert_eq!(Ratio::new(2.0, 1.0), Ratio::Finite(2.0));
    }

    #[test]
    fn zero_epsilon_ensemble_is_undefined() {
        let cfg = TheoremConfig::new(10, 2, 2, vec![0.0], 5, 3);
        let rep = verify_theorem(&cfg).unwrap();
        let s = &rep.per_epsilon[0];
        assert_eq!(s.undefined_ratios, 5);
        assert_eq!(s.median_benefit, 0.0);
        assert_eq!(s.median_cost, 0.0);
        assert!(s.median_ratio.is_none());
        assert!(rep.cost_slope.is_none());
    }

    #[test]
    fn infeasible_configs_rejected() {
        assert!(verify_theorem(&TheoremConfig::new(8, 4, 4, vec![0.1], 1, 0)).is_err());
        assert!(verify_theorem(&TheoremConfig::new(9, 4, 4, vec![1.0], 1, 0)).is_err());
        assert!(verify_theorem(&TheoremConfig::new(9, 4, 4, vec![], 1, 0)).is_err());
        assert!(verify_theorem(&TheoremConfig::new(9, 4, 4, vec![0.1], 0, 0)).is_err());
    }

    #[test]
    fn parallel_and_sequential_agree() {
        let mut cfg = TheoremConfig::new(20, 3, 3, vec![0.02, 0.2], 16, 5);
        cfg.execution = Execution::Sequential;
        let a = verify_theorem(&cfg).unwrap();
        cfg.execution = Execution::Parallel;
        let b = verify_theorem(&cfg).unwrap();
        assert_eq!(a.per_epsilon, b.per_epsilon);
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(&[]), None);
    }
}
