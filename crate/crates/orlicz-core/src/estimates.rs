//! Two-sided empirical evaluation of the gradient estimates on solved
//! instances.
//!
//! Every check computes both sides of an inequality on a coarse and a fine
//! level of the same instance and reports the measured constant
//! `lhs / sum(rhs)`. No numeric constants exist to compare against, so the
//! pass criterion is the falsifiable part of an existence statement:
//! the constant is finite and moves at most a declared fraction (default
//! 25%) under grid refinement.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::grid::{
    distribution_function, mean_abs, Ball, DiracLoading, Grid, GridField, MeasureData, Region,
};
use crate::math;
use crate::maximal::{anchor_ladder, restricted_m0, restricted_m1, weight_convention_factor};
use crate::norms::{self, BallFamilyConfig};
use crate::report::{EstimateId, EstimateReport};
use crate::solver::{
    sola_sequence, solve_comparison, solve_dirichlet, BoundaryTrace, OperatorSpec, SolaSequence,
    SolveOpts, SolveResult,
};
use crate::young::{IndexLevel, IndexPair, YoungFunction};
use crate::{Error, Result};

/// Everything needed to (re)build an instance, kept for rescaling checks.
#[derive(Clone)]
pub struct InstanceInputs {
    pub modular: YoungFunction,
    pub mu: MeasureData,
    pub boundary: BoundaryTrace,
    pub grids: Vec<Grid>,
    /// Truncation levels for measure data; `None` solves the discretized
    /// density directly.
    pub sola_levels: Option<Vec<f64>>,
    pub loading: DiracLoading,
    pub window: Ball,
    pub opts: SolveOpts,
}

/// One resolution level of a solved instance.
pub struct InstanceLevel {
    pub spec: OperatorSpec,
    pub grid: Grid,
    pub mu: MeasureData,
    /// The bounded nodal density actually fed to the solver.
    pub data: GridField,
    pub solve: SolveResult,
    pub sola: Option<SolaSequence>,
}

/// A solved instance at one or more grid resolutions (coarse first), with
/// the evaluation window `B_R` the theorem checks use.
pub struct Instance {
    pub inputs: InstanceInputs,
    pub levels: Vec<InstanceLevel>,
    pub indices: IndexPair,
}

impl Instance {
    /// Solve the instance on every grid.
    pub fn build(inputs: InstanceInputs) -> Result<Instance> {
        if inputs.grids.is_empty() {
            return Err(Error::InvalidParameter("instance needs at least one grid".into()));
        }
        let indices = inputs.modular.estimate_indices(IndexLevel::BigG)?;
        let mut levels = Vec::new();
        for grid in &inputs.grids {
            let n = grid.dim();
            let w = &inputs.window;
            for d in 0..n {
                let lo = grid.origin()[d];
                let hi = lo + grid.extent()[d];
                if w.center[d] - 2.0 * w.radius < lo - 1e-12 || w.center[d] + 2.0 * w.radius > hi + 1e-12
                {
                    return Err(Error::InvalidParameter(
                        "instance window must satisfy B_2R inside the grid box".into(),
                    ));
                }
            }
            let spec = OperatorSpec::isotropic(inputs.modular.clone())?;
            let (data, solve, sola) = match &inputs.sola_levels {
                Some(levels_k) => {
                    let seq = sola_sequence(
                        &spec,
                        &inputs.mu,
                        &inputs.boundary,
                        grid,
                        levels_k,
                        inputs.loading,
                        &inputs.opts,
                    )?;
                    let data = seq.truncated_data.last().unwrap().clone();
                    let solve = seq.members.last().unwrap().clone();
                    (data, solve, Some(seq))
                }
                None => {
                    let data = crate::grid::discretize_measure(&inputs.mu, grid, inputs.loading)?;
                    let solve = solve_dirichlet(&spec, &data, &inputs.boundary, &inputs.opts)?;
                    (data, solve, None)
                }
            };
            if !solve.converged {
                return Err(Error::SolverDiverged {
                    residual: solve.residual_norm,
                    iterations: solve.iterations,
                });
            }
            levels.push(InstanceLevel {
                spec,
                grid: *grid,
                mu: inputs.mu.clone(),
                data,
                solve,
                sola,
            });
        }
        Ok(Instance { inputs, levels, indices })
    }

    /// Rebuild with data scaled by `lam^(p-1)` and trace by `lam` — the
    /// homogeneity rescaling for power growth.
    pub fn rescaled(&self, lam: f64) -> Result<Instance> {
        if !self.inputs.modular.is_power() {
            return Err(Error::InvalidParameter(
                "homogeneity rescaling needs pure power growth".into(),
            ));
        }
        let p = self.indices.s_upper; // = i_G = p for powers
        let data_factor = math::pow(lam, p - 1.0);
        let mut inputs = self.inputs.clone();
        inputs.mu = scale_measure(&self.inputs.mu, data_factor);
        inputs.boundary = scale_boundary(&self.inputs.boundary, lam);
        inputs.sola_levels = inputs
            .sola_levels
            .map(|ls| ls.iter().map(|k| k * data_factor).collect());
        Instance::build(inputs)
    }

    pub fn window(&self) -> Ball {
        self.inputs.window
    }
}

fn scale_measure(mu: &MeasureData, c: f64) -> MeasureData {
    MeasureData {
        atoms: mu.atoms.iter().map(|(loc, m)| (*loc, m * c)).collect(),
        density: mu.density.as_ref().map(|d| d.scale(c)),
        total_mass_bound: mu.total_mass_bound * math::abs(c),
    }
}

fn scale_boundary(b: &BoundaryTrace, c: f64) -> BoundaryTrace {
    match b {
        BoundaryTrace::Zero => BoundaryTrace::Zero,
        BoundaryTrace::Affine { coef, offset } => BoundaryTrace::Affine {
            coef: [coef[0] * c, coef[1] * c, coef[2] * c],
            offset: offset * c,
        },
        BoundaryTrace::Nodal(f) => BoundaryTrace::Nodal(f.scale(c)),
    }
}

/// `g(|Du|)` as a nodal field.
pub fn g_of_gradient(level: &InstanceLevel) -> GridField {
    level.solve.du.magnitude().map(|t| level.spec.modular.g(t))
}

fn drift(coarse: f64, fine: f64) -> f64 {
    if coarse == 0.0 {
        if fine == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        math::abs(fine - coarse) / math::abs(coarse)
    }
}

/// Admissible upper bound for the Lorentz-scale data exponent,
/// `n i_G / (n s_G - n + i_G)`.
pub fn lorentz_q_bound(n: usize, indices: &IndexPair) -> f64 {
    let nn = n as f64;
    nn * indices.i_lower / (nn * indices.s_upper - nn + indices.i_lower)
}

/// Admissible upper bound for the Morrey-scale data exponent,
/// `theta i_G / (theta s_G - theta + i_G)`.
pub fn morrey_q_bound(theta: f64, indices: &IndexPair) -> f64 {
    theta * indices.i_lower / (theta * indices.s_upper - theta + indices.i_lower)
}

/// Run a per-level evaluation on the coarse and fine levels and combine the
/// constants into a report.
fn two_level_report(
    id: EstimateId,
    inst: &Instance,
    threshold: f64,
    params: Vec<(String, String)>,
    eval: impl Fn(&InstanceLevel) -> Result<(f64, Vec<(String, f64)>)>,
) -> Result<EstimateReport> {
    let mut constants = Vec::new();
    let mut lhs0 = 0.0;
    let mut rhs0: Vec<(String, f64)> = Vec::new();
    for (k, level) in inst.levels.iter().enumerate() {
        let (lhs, rhs_terms) = eval(level)?;
        let rhs_total: f64 = rhs_terms.iter().map(|(_, v)| v).sum();
        let c = if rhs_total > 0.0 { lhs / rhs_total } else { f64::INFINITY };
        if k == 0 {
            lhs0 = lhs;
            rhs0 = rhs_terms;
        }
        constants.push(c);
    }
    let stability = if constants.len() > 1 { drift(constants[0], constants[1]) } else { 0.0 };
    let pass = EstimateReport::evaluate(constants[0], stability, threshold);
    Ok(EstimateReport {
        id,
        lhs: lhs0,
        rhs_terms: rhs0,
        empirical_constant: constants[0],
        params,
        refinement_stability: stability,
        pass,
        notes: Vec::new(),
    })
}

/// Lorentz-scale estimate: averaged `L(nq/(n-q), s)` norm of `g(|Du|)` on
/// `B_{R/2}` against `g` of the gradient average on `B_{2R}` plus the
/// averaged `L(q,s)` norm of the data on `B_R`.
pub fn check_theorem1_lorentz(
    inst: &Instance,
    q: f64,
    s: f64,
    threshold: f64,
) -> Result<EstimateReport> {
    let n = inst.levels[0].grid.dim();
    let bound = lorentz_q_bound(n, &inst.indices);
    if !(q > 1.0 && q <= bound + 1e-9) {
        return Err(Error::InvalidParameter(format!(
            "data exponent out of range: need 1 < q <= n i_G/(n s_G - n + i_G) = {bound}, got q = {q}"
        )));
    }
    if !(s > 0.0) {
        return Err(Error::InvalidParameter(format!("second index must be positive, got {s}")));
    }
    let w = inst.window();
    let target = n as f64 * q / (n as f64 - q);
    two_level_report(
        EstimateId::Thm1Lorentz,
        inst,
        threshold,
        vec![
            ("q".into(), format!("{q}")),
            ("s".into(), format!("{s}")),
            ("target".into(), format!("{target}")),
            ("R".into(), format!("{}", w.radius)),
        ],
        |level| {
            let gdu = g_of_gradient(level);
            let lhs = norms::lorentz_norm(&gdu, target, s, &Region::Ball(w.scaled(0.5)), true)?.value;
            let avg = mean_abs(&level.solve.du.magnitude(), &Region::Ball(w.scaled(2.0)));
            let rhs1 = level.spec.modular.g(avg);
            let rhs2 = norms::lorentz_norm(&level.data, q, s, &Region::Ball(w), true)?.value;
            Ok((lhs, vec![("g(mean|Du|)".into(), rhs1), ("data".into(), rhs2)]))
        },
    )
}

/// Borderline `L log L` estimate: averaged `L^{n/(n-1)}` norm of `g(|Du|)`
/// on `B_{R/2}`; also confirms `g^{n/(n-1)}(|Du|)` stays integrable under
/// refinement.
pub fn check_corollary_llogl(inst: &Instance, threshold: f64) -> Result<EstimateReport> {
    if !inst.inputs.mu.is_density() {
        return Err(Error::InvalidParameter(
            "L log L data must be given by a density, not atoms".into(),
        ));
    }
    let n = inst.levels[0].grid.dim() as f64;
    let w = inst.window();
    let target = n / (n - 1.0);
    let cfg = BallFamilyConfig::default();
    let mut report = two_level_report(
        EstimateId::CorLlogL,
        inst,
        threshold,
        vec![("target".into(), format!("{target}")), ("R".into(), format!("{}", w.radius))],
        |level| {
            let gdu = g_of_gradient(level);
            let lhs = norms::lebesgue_norm(&gdu, target, &Region::Ball(w.scaled(0.5)), true)?.value;
            let avg = mean_abs(&level.solve.du.magnitude(), &Region::Ball(w));
            let rhs1 = level.spec.modular.g(avg);
            let rhs2 = norms::llogl_norm(&level.data, &Region::Ball(w), None, true, &cfg)?.value;
            Ok((lhs, vec![("g(mean|Du|)".into(), rhs1), ("llogl data".into(), rhs2)]))
        },
    )?;
    // headline implication: the integral of g^{n/(n-1)}(|Du|) is finite and
    // refinement-stable
    let masses: Vec<f64> = inst
        .levels
        .iter()
        .map(|level| {
            let gp = g_of_gradient(level).map(|t| math::pow(t, target));
            crate::grid::integral(&gp, &Region::Ball(w))
        })
        .collect();
    let mass_drift = if masses.len() > 1 { drift(masses[0], masses[1]) } else { 0.0 };
    report
        .params
        .push(("integral g^{n/(n-1)}".into(), format!("{:.6e}", masses[0])));
    report.params.push(("integral drift".into(), format!("{mass_drift:.3}")));
    if !(masses[0].is_finite() && mass_drift <= threshold) {
        report.pass = false;
        report.notes.push("g^{n/(n-1)}(|Du|) mass not refinement-stable".into());
    }
    Ok(report)
}

/// Morrey-scale estimate with the `R^{(theta-q)/q - n}` prefactor.
pub fn check_theorem2_morrey(
    inst: &Instance,
    q: f64,
    theta: f64,
    threshold: f64,
) -> Result<EstimateReport> {
    let n = inst.levels[0].grid.dim() as f64;
    if !(inst.indices.i_lower - 1e-9 <= theta && theta <= n + 1e-12) {
        return Err(Error::InvalidParameter(format!(
            "Morrey exponent out of range: need i_G <= theta <= n, i.e. {} <= theta <= {n}, got {theta}",
            inst.indices.i_lower
        )));
    }
    let bound = morrey_q_bound(theta, &inst.indices);
    if !(q > 1.0 && q <= bound + 1e-9) {
        return Err(Error::InvalidParameter(format!(
            "data exponent out of range: need 1 < q <= theta i_G/(theta s_G - theta + i_G) = {bound}, got q = {q}"
        )));
    }
    let w = inst.window();
    let target = theta * q / (theta - q);
    let cfg = BallFamilyConfig::default();
    two_level_report(
        EstimateId::Thm2Morrey,
        inst,
        threshold,
        vec![
            ("q".into(), format!("{q}")),
            ("theta".into(), format!("{theta}")),
            ("target".into(), format!("{target}")),
            ("R".into(), format!("{}", w.radius)),
        ],
        |level| {
            let gdu = g_of_gradient(level);
            let lhs =
                norms::morrey_norm(&gdu, target, theta, &Region::Ball(w.scaled(0.5)), true, false, &cfg)?
                    .value;
            let avg = mean_abs(&level.solve.du.magnitude(), &Region::Ball(w.scaled(2.0)));
            let prefactor = math::pow(w.radius, (theta - q) / q - n);
            let rhs1 = prefactor * level.spec.modular.g(avg);
            let rhs2 =
                norms::morrey_norm(&level.data, q, theta, &Region::Ball(w), true, false, &cfg)?.value;
            Ok((lhs, vec![("R-pref g(mean|Du|)".into(), rhs1), ("morrey data".into(), rhs2)]))
        },
    )
}

/// Borderline Morrey case with `L log L^theta` data.
pub fn check_corollary_borderline_morrey(
    inst: &Instance,
    theta: f64,
    threshold: f64,
) -> Result<EstimateReport> {
    if !inst.inputs.mu.is_density() {
        return Err(Error::InvalidParameter(
            "L log L^theta data must be given by a density".into(),
        ));
    }
    let n = inst.levels[0].grid.dim() as f64;
    if !(2.0 - 1e-12 <= theta && theta <= n + 1e-12) {
        return Err(Error::InvalidParameter(format!(
            "need 2 <= theta <= n = {n}, got {theta}"
        )));
    }
    let w = inst.window();
    let target = theta / (theta - 1.0);
    let cfg = BallFamilyConfig::default();
    two_level_report(
        EstimateId::CorBorderlineMorrey,
        inst,
        threshold,
        vec![("theta".into(), format!("{theta}")), ("target".into(), format!("{target}"))],
        |level| {
            let gdu = g_of_gradient(level);
            let lhs =
                norms::morrey_norm(&gdu, target, theta, &Region::Ball(w.scaled(0.5)), true, false, &cfg)?
                    .value;
            let avg = mean_abs(&level.solve.du.magnitude(), &Region::Ball(w.scaled(2.0)));
            let rhs1 = math::pow(w.radius, theta - 1.0 - n) * level.spec.modular.g(avg);
            let rhs2 =
                norms::llogl_norm(&level.data, &Region::Ball(w), Some(theta), true, &cfg)?.value;
            Ok((lhs, vec![("R-pref g(mean|Du|)".into(), rhs1), ("llogl^theta data".into(), rhs2)]))
        },
    )
}

/// Lorentz-Morrey estimate; `s = inf` exercises the Marcinkiewicz-Morrey
/// branch.
pub fn check_theorem3_lorentz_morrey(
    inst: &Instance,
    q: f64,
    s: f64,
    theta: f64,
    threshold: f64,
) -> Result<EstimateReport> {
    let n = inst.levels[0].grid.dim() as f64;
    if !(inst.indices.i_lower - 1e-9 <= theta && theta <= n + 1e-12) {
        return Err(Error::InvalidParameter(format!(
            "Morrey exponent out of range: need i_G <= theta <= n, got {theta}"
        )));
    }
    let bound = morrey_q_bound(theta, &inst.indices);
    if !(q > 1.0 && q <= bound + 1e-9) {
        return Err(Error::InvalidParameter(format!(
            "data exponent out of range: need 1 < q <= {bound}, got q = {q}"
        )));
    }
    if !(s > 0.0) {
        return Err(Error::InvalidParameter("second index must be positive".into()));
    }
    let w = inst.window();
    let target_t = theta * q / (theta - q);
    let target_s = if s.is_finite() { theta * s / (theta - q) } else { f64::INFINITY };
    let cfg = BallFamilyConfig::default();
    two_level_report(
        EstimateId::Thm3LorentzMorrey,
        inst,
        threshold,
        vec![
            ("q".into(), format!("{q}")),
            ("s".into(), format!("{s}")),
            ("theta".into(), format!("{theta}")),
            ("target".into(), format!("L^th({target_t},{target_s})")),
        ],
        |level| {
            let gdu = g_of_gradient(level);
            let lhs = norms::lorentz_morrey_norm(
                &gdu,
                target_t,
                target_s,
                theta,
                &Region::Ball(w.scaled(0.25)),
                true,
                false,
                &cfg,
            )?
            .value;
            let avg = mean_abs(&level.solve.du.magnitude(), &Region::Ball(w));
            let rhs1 = level.spec.modular.g(avg);
            let rhs2 = norms::lorentz_morrey_norm(
                &level.data,
                q,
                s,
                theta,
                &Region::Ball(w),
                true,
                false,
                &cfg,
            )?
            .value;
            Ok((lhs, vec![("g(mean|Du|)".into(), rhs1), ("lorentz-morrey data".into(), rhs2)]))
        },
    )
}

/// Optional Morrey/Lorentz-scale parameters for the comparison corollary
/// variants.
#[derive(Clone, Copy, Debug)]
pub struct ComparisonVariants {
    pub q: f64,
    pub theta: f64,
    pub gamma: f64,
}

/// Comparison estimate: average of `g(|Du - Dv|)` on each ladder ball
/// against `|mu|(B_R)/R^{n-1}`; the empirical constant is the worst ratio,
/// stability the drift across the ladder and one refinement.
pub fn check_comparison(
    inst: &Instance,
    r_max: f64,
    ladder_levels: usize,
    variants: Option<ComparisonVariants>,
    threshold: f64,
) -> Result<EstimateReport> {
    let w = inst.window();
    let n = inst.levels[0].grid.dim();
    let mut per_level_worst = Vec::new();
    let mut ladder_drift = 0.0f64;
    let mut rhs0 = Vec::new();
    let mut lhs0 = 0.0;
    let mut notes = Vec::new();
    for (li, level) in inst.levels.iter().enumerate() {
        let ladder = crate::grid::dyadic_ladder(r_max, ladder_levels);
        let mut ratios = Vec::new();
        for &r in &ladder {
            if 2.0 * r < 4.0 * level.grid.h() {
                notes.push(format!("ladder entry {r} skipped: fewer than 4 cells across"));
                continue;
            }
            let ball = Ball { center: w.center, radius: r };
            let v = solve_comparison(&level.spec, &level.solve.u, &ball, &inst.inputs.opts)?;
            if !v.converged {
                return Err(Error::SolverDiverged {
                    residual: v.residual_norm,
                    iterations: v.iterations,
                });
            }
            let diff = level.solve.du.sub(&v.du)?.magnitude().map(|t| level.spec.modular.g(t));
            let region = Region::Ball(ball);
            let lhs = mean_region(&diff, &region);
            let mass = measure_variation_on_grid(level, &ball);
            let rhs = mass * math::pow(r, 1.0 - n as f64);
            if mass == 0.0 {
                if lhs > level.solve.tolerance * 10.0 {
                    notes.push(format!("zero-mass ball {r}: lhs {lhs} above solver accuracy"));
                }
                continue; // 0/0 skipped
            }
            let ratio = lhs / rhs;
            if li == 0 && rhs0.is_empty() {
                lhs0 = lhs;
                rhs0.push(("|mu|(B_R)/R^{n-1}".into(), rhs));
            }
            ratios.push(ratio);
            // corollary variants for density data
            if li == 0 {
                if let Some(var) = variants {
                    if level.mu.is_density() {
                        let total = integral_region(&diff, &region);
                        let f_l1 = integral_region(&level.data.magnitude(), &region);
                        if f_l1 > 0.0 {
                            rhs0.push((format!("1st-order variant R={r}"), total / (r * f_l1)));
                        }
                        let cfg = BallFamilyConfig::default();
                        let mor = norms::morrey_norm(
                            &level.data,
                            var.q,
                            var.theta,
                            &region,
                            false,
                            false,
                            &cfg,
                        )?
                        .value;
                        if mor > 0.0 {
                            let pref = math::pow(r, (var.q - var.theta) / var.q);
                            rhs0.push((format!("morrey variant R={r}"), lhs / (pref * mor)));
                        }
                        let lm = norms::lorentz_morrey_norm(
                            &level.data,
                            var.gamma,
                            var.q,
                            var.theta,
                            &region,
                            false,
                            false,
                            &cfg,
                        )?
                        .value;
                        if lm > 0.0 {
                            let pref =
                                math::pow(r, n as f64 - (var.theta - var.gamma) / var.gamma);
                            rhs0.push((format!("lorentz-morrey variant R={r}"), total / (pref * lm)));
                        }
                    }
                }
            }
        }
        if ratios.is_empty() {
            notes.push("no admissible ladder balls with mass".into());
            per_level_worst.push(0.0);
            continue;
        }
        let worst = ratios.iter().cloned().fold(0.0f64, math::fmax);
        let best = ratios.iter().cloned().fold(f64::INFINITY, math::fmin);
        ladder_drift = math::fmax(ladder_drift, if best > 0.0 { worst / best - 1.0 } else { f64::INFINITY });
        per_level_worst.push(worst);
    }
    let refine_drift = if per_level_worst.len() > 1 {
        drift(per_level_worst[0], per_level_worst[1])
    } else {
        0.0
    };
    let stability = math::fmax(ladder_drift, refine_drift);
    let pass = EstimateReport::evaluate(per_level_worst[0], stability, threshold);
    Ok(EstimateReport {
        id: EstimateId::Prop42Comparison,
        lhs: lhs0,
        rhs_terms: rhs0,
        empirical_constant: per_level_worst[0],
        params: vec![
            ("ladder levels".into(), format!("{ladder_levels}")),
            ("ladder drift".into(), format!("{ladder_drift:.3}")),
            ("refine drift".into(), format!("{refine_drift:.3}")),
        ],
        refinement_stability: stability,
        pass,
        notes,
    })
}

fn mean_region(f: &GridField, region: &Region) -> f64 {
    mean_abs(f, region)
}

fn integral_region(f: &GridField, region: &Region) -> f64 {
    crate::grid::integral(f, region)
}

/// Total variation of the instance's measure on a ball: exact atoms plus
/// the nodal density integral (matches the data the solver saw).
fn measure_variation_on_grid(level: &InstanceLevel, ball: &Ball) -> f64 {
    let n = level.grid.dim();
    if level.mu.atoms.is_empty() {
        integral_region(&level.data.magnitude(), &Region::Ball(*ball))
    } else {
        level.mu.variation_on_ball(n, ball)
    }
}

/// Configuration of the super-level-set check.
#[derive(Clone, Debug)]
pub struct SuperLevelConfig {
    pub r1: f64,
    pub r2: f64,
    pub h_sweep: Vec<f64>,
    pub t_sweep: Vec<f64>,
    /// Sweep of the dimensional constant in the lambda threshold.
    pub cn_sweep: Vec<f64>,
    pub lambda_count: usize,
    /// Decades of lambda above the threshold.
    pub lambda_decades: f64,
    pub chi_step: f64,
    pub ladder_levels: usize,
    /// Explicit lambda grid as multiples of the threshold; entries below 1
    /// are rejected.
    pub lambda_multipliers: Option<Vec<f64>>,
}

impl SuperLevelConfig {
    pub fn default_for(n: usize) -> Self {
        SuperLevelConfig {
            r1: 0.5,
            r2: 0.75,
            h_sweep: vec![8.0, 16.0],
            t_sweep: vec![2.0, 4.0],
            cn_sweep: vec![1.0, math::pow(2.0, n as f64)],
            lambda_count: 24,
            lambda_decades: 2.0,
            chi_step: 1.0 / 32.0,
            ladder_levels: 6,
            lambda_multipliers: None,
        }
    }
}

/// Super-level-set decay: for every lambda above the threshold,
/// `|{x in r1 B : M0 > H T lambda}|` is controlled by the decayed measure
/// of `{M0 > lambda}` on `r2 B` plus the set where the first-order maximal
/// function of the data exceeds `g(eps lambda)`. The report carries the
/// largest exponent `chi` for which the inequality holds across the sweep.
pub fn check_superlevel(inst: &Instance, cfg: &SuperLevelConfig) -> Result<EstimateReport> {
    if !(0.0 < cfg.r1 && cfg.r1 < cfg.r2 && cfg.r2 <= 1.0) {
        return Err(Error::InvalidParameter("need 0 < r1 < r2 <= 1".into()));
    }
    let multipliers: Vec<f64> = match &cfg.lambda_multipliers {
        Some(ms) => {
            if let Some(bad) = ms.iter().find(|&&m| m < 1.0) {
                return Err(Error::InvalidParameter(format!(
                    "lambda grid must stay above the threshold lambda_0 (multiplier {bad} < 1)"
                )));
            }
            ms.clone()
        }
        None => (0..cfg.lambda_count)
            .map(|k| {
                math::pow(10.0, cfg.lambda_decades * k as f64 / (cfg.lambda_count - 1) as f64)
            })
            .collect(),
    };
    let level = &inst.levels[0];
    let n = level.grid.dim();
    let w = inst.window();
    let anchor = w.scaled(2.0);
    let (ladder, truncated) = anchor_ladder(&anchor, &level.grid, cfg.ladder_levels);
    let m0 = restricted_m0(&level.solve.du.magnitude(), &anchor, &ladder)?;
    let m1 = restricted_m1(&level.mu, &level.grid, &anchor, &ladder)?;
    let g = |t: f64| level.spec.modular.g(t);
    let big_g = |t: f64| level.spec.modular.big_g(t);
    let mean_du = mean_abs(&level.solve.du.magnitude(), &Region::Ball(anchor));
    let r1_region = Region::Ball(w.scaled(cfg.r1));
    let r2_region = Region::Ball(w.scaled(cfg.r2));

    let chi_fits_at = |h: f64, t: f64, cn: f64, chi: f64| -> (bool, usize) {
        let ht = h * t;
        let decay = 1.0 / math::pow(big_g(ht), chi);
        let c_star = h / math::pow(20.0, n as f64);
        let eps = c_star * ht / math::pow(big_g(ht), chi);
        let lambda0 =
            cn / math::pow(cfg.r2 - cfg.r1, n as f64) * math::pow(big_g(ht), chi) / ht * mean_du;
        let mut violations = 0usize;
        for &mult in &multipliers {
            let lam = lambda0 * mult;
            let lhs = distribution_function(&m0.field, ht * lam, &r1_region);
            let rhs = decay * distribution_function(&m0.field, lam, &r2_region)
                + distribution_function(&m1.field, g(eps * lam), &r1_region);
            if lhs > rhs * (1.0 + 1e-12) {
                violations += 1;
            }
        }
        (violations == 0, violations)
    };

    let mut fitted = Vec::new();
    let mut all_pass = true;
    let mut params: Vec<(String, String)> = Vec::new();
    for &h in &cfg.h_sweep {
        for &t in &cfg.t_sweep {
            for &cn in &cfg.cn_sweep {
                // largest chi in (1, 2] that holds for every lambda
                let mut chi_hat = 0.0f64;
                let steps = (1.0 / cfg.chi_step) as usize;
                for j in (1..=steps).rev() {
                    let chi = 1.0 + j as f64 * cfg.chi_step;
                    let (ok, _) = chi_fits_at(h, t, cn, chi);
                    if ok {
                        chi_hat = chi;
                        break;
                    }
                }
                fitted.push(chi_hat);
                if chi_hat < 1.0 + cfg.chi_step {
                    all_pass = false;
                }
                params.push((
                    format!("chi_hat(H={h},T={t},c_n={cn})"),
                    format!("{chi_hat:.4}"),
                ));
            }
        }
    }
    let chi_min = fitted.iter().cloned().fold(f64::INFINITY, math::fmin);
    params.push(("lambda0 mean|Du|_2B".into(), format!("{mean_du:.6e}")));
    params.push((
        "weight conversion omega_n^(1/n-1)".into(),
        format!("{:.6}", weight_convention_factor(n)),
    ));
    let mut notes = Vec::new();
    if truncated {
        notes.push("maximal ladder truncated at grid resolution".into());
    }
    Ok(EstimateReport {
        id: EstimateId::Prop52SuperLevel,
        lhs: chi_min,
        rhs_terms: vec![("chi floor".into(), 1.0 + cfg.chi_step)],
        empirical_constant: chi_min,
        params,
        refinement_stability: 0.0,
        pass: all_pass && chi_min.is_finite(),
        notes,
    })
}

/// Largest chi in (1, 2] with
/// `avg_{B_R} G^chi(|Dv|) <= 10 (1 + G^chi(avg_{B_2R} |Dv|))` across the
/// ball ladder and every level of a homogeneous instance.
pub fn fit_higher_integrability(inst: &Instance, chi_step: f64) -> Result<(f64, EstimateReport)> {
    let w = inst.window();
    let radii = [w.radius * 0.5, w.radius * 0.375, w.radius * 0.25];
    let ratio_at = |chi: f64| -> f64 {
        let mut worst = 0.0f64;
        for level in &inst.levels {
            for &r in &radii {
                let inner = Region::Ball(Ball { center: w.center, radius: r });
                let outer = Region::Ball(Ball { center: w.center, radius: 2.0 * r });
                let gchi = level
                    .solve
                    .du
                    .magnitude()
                    .map(|t| math::pow(level.spec.modular.big_g(t), chi));
                let lhs = mean_abs(&gchi, &inner);
                let avg = mean_abs(&level.solve.du.magnitude(), &outer);
                let rhs = 1.0 + math::pow(level.spec.modular.big_g(avg), chi);
                worst = math::fmax(worst, lhs / rhs);
            }
        }
        worst
    };
    let steps = (1.0 / chi_step) as usize;
    let mut chi_hat = 1.0 + chi_step;
    let mut worst_at_hat = ratio_at(chi_hat);
    for j in (1..=steps).rev() {
        let chi = 1.0 + j as f64 * chi_step;
        let worst = ratio_at(chi);
        if worst <= 10.0 {
            chi_hat = chi;
            worst_at_hat = worst;
            break;
        }
    }
    let report = EstimateReport {
        id: EstimateId::P41iiHigherInt,
        lhs: worst_at_hat,
        rhs_terms: vec![("bound".into(), 10.0)],
        empirical_constant: worst_at_hat,
        params: vec![("chi_hat".into(), format!("{chi_hat:.4}"))],
        refinement_stability: 0.0,
        pass: worst_at_hat.is_finite() && worst_at_hat <= 10.0,
        notes: Vec::new(),
    };
    Ok((chi_hat, report))
}

/// Reverse Hoelder ratio `avg_{B_R} G(|Dv|) / G(avg_{B_2R} |Dv|)` over a
/// ball ladder, on a homogeneous instance.
pub fn check_reverse_hoelder(inst: &Instance, threshold: f64) -> Result<EstimateReport> {
    homogeneous_ratio_check(inst, EstimateId::P41iRevHolder, threshold, |level, r, w| {
        let inner = Region::Ball(Ball { center: w.center, radius: r });
        let outer = Region::Ball(Ball { center: w.center, radius: 2.0 * r });
        let gdu = g_big_of(level);
        let lhs = mean_abs(&gdu, &inner);
        let avg = mean_abs(&level.solve.du.magnitude(), &outer);
        let rhs = level.spec.modular.big_g(avg);
        (lhs, rhs)
    })
}

fn g_big_of(level: &InstanceLevel) -> GridField {
    level.solve.du.magnitude().map(|t| level.spec.modular.big_g(t))
}

/// Caccioppoli ratio `int_{B_R} G(|Dv|) / int_{B_2R} G(|v - mean|/R)`.
pub fn check_caccioppoli(inst: &Instance, threshold: f64) -> Result<EstimateReport> {
    homogeneous_ratio_check(inst, EstimateId::P41iiiCaccioppoli, threshold, |level, r, w| {
        let inner = Region::Ball(Ball { center: w.center, radius: r });
        let outer = Region::Ball(Ball { center: w.center, radius: 2.0 * r });
        let lhs = integral_region(&g_big_of(level), &inner);
        let mean_u = crate::grid::mean(&level.solve.u, &inner);
        let shifted = level.solve.u.map(|v| level.spec.modular.big_g(math::abs(v - mean_u) / r));
        let rhs = integral_region(&shifted, &outer);
        (lhs, rhs)
    })
}

fn homogeneous_ratio_check(
    inst: &Instance,
    id: EstimateId,
    threshold: f64,
    eval: impl Fn(&InstanceLevel, f64, &Ball) -> (f64, f64),
) -> Result<EstimateReport> {
    let w = inst.window();
    let radii = [w.radius * 0.5, w.radius * 0.375, w.radius * 0.25];
    let mut per_level_worst = Vec::new();
    let mut spread = 0.0f64;
    let mut lhs0 = 0.0;
    let mut rhs0 = 0.0;
    for level in &inst.levels {
        let mut worst = 0.0f64;
        let mut best = f64::INFINITY;
        for &r in &radii {
            let (lhs, rhs) = eval(level, r, &w);
            if rhs <= 0.0 {
                continue;
            }
            let ratio = lhs / rhs;
            if per_level_worst.is_empty() && lhs0 == 0.0 {
                lhs0 = lhs;
                rhs0 = rhs;
            }
            worst = math::fmax(worst, ratio);
            best = math::fmin(best, ratio);
        }
        spread = math::fmax(spread, if best > 0.0 { worst / best - 1.0 } else { f64::INFINITY });
        per_level_worst.push(worst);
    }
    let refine = if per_level_worst.len() > 1 {
        drift(per_level_worst[0], per_level_worst[1])
    } else {
        0.0
    };
    let stability = math::fmax(refine, 0.0);
    let pass = EstimateReport::evaluate(per_level_worst[0], stability, threshold)
        && spread.is_finite();
    Ok(EstimateReport {
        id,
        lhs: lhs0,
        rhs_terms: vec![("denominator".into(), rhs0)],
        empirical_constant: per_level_worst[0],
        params: vec![
            ("ladder spread".into(), format!("{spread:.3}")),
            ("refine drift".into(), format!("{refine:.3}")),
        ],
        refinement_stability: stability,
        pass,
        notes: Vec::new(),
    })
}

/// Gradient decay of homogeneous solutions:
/// `avg_{B_rho} g(|Dv|) <= c (rho/R)^{-beta} avg_{B_2R} g(|Dv|)`; the decay
/// exponent is fitted, never asserted.
pub fn check_morrey_decay(inst: &Instance, _threshold: f64) -> Result<EstimateReport> {
    let w = inst.window();
    let big_r = w.radius * 0.5;
    let level = &inst.levels[0];
    let outer = Region::Ball(Ball { center: w.center, radius: 2.0 * big_r });
    let gdu = g_of_gradient(level);
    let denom = mean_abs(&gdu, &outer);
    let mut pts = Vec::new();
    let mut worst = 0.0f64;
    for j in 0..4 {
        let rho = big_r * math::pow(0.5, j as f64);
        if rho < 2.0 * level.grid.h() {
            break;
        }
        let inner = Region::Ball(Ball { center: w.center, radius: rho });
        let ratio = mean_abs(&gdu, &inner) / denom;
        if ratio > 0.0 {
            pts.push((math::ln(rho / big_r), math::ln(ratio)));
        }
        worst = math::fmax(worst, ratio);
    }
    let beta_hat = if pts.len() > 1 { math::fmax(-fit_slope(&pts), 0.0) } else { 0.0 };
    Ok(EstimateReport {
        id: EstimateId::P41ivMorreyDecay,
        lhs: worst,
        rhs_terms: vec![("avg g(|Dv|) on B_2R".into(), denom)],
        empirical_constant: worst,
        params: vec![("beta_hat".into(), format!("{beta_hat:.4}"))],
        refinement_stability: 0.0,
        pass: worst.is_finite(),
        notes: Vec::new(),
    })
}

fn fit_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

/// Preliminary Morrey estimate on nested boxes with the distance prefactor.
pub fn check_prelim_morrey(
    inst: &Instance,
    q: f64,
    theta: f64,
    inner_half: f64,
    outer_half: f64,
    threshold: f64,
) -> Result<EstimateReport> {
    let n = inst.levels[0].grid.dim() as f64;
    if !(q > 1.0 && q < theta && theta <= n + 1e-12) {
        return Err(Error::InvalidParameter(format!(
            "need 1 < q < theta <= n = {n}, got q={q}, theta={theta}"
        )));
    }
    if !(inner_half < outer_half) {
        return Err(Error::InvalidParameter(
            "nested regions need positive separation".into(),
        ));
    }
    let w = inst.window();
    let sep = outer_half - inner_half;
    let theta_m = (theta - q) / q;
    let cfg = BallFamilyConfig::default();
    two_level_report(
        EstimateId::Prop54PrelimMorrey,
        inst,
        threshold,
        vec![
            ("q".into(), format!("{q}")),
            ("theta".into(), format!("{theta}")),
            ("separation".into(), format!("{sep}")),
        ],
        |level| {
            if sep < level.grid.h() {
                return Err(Error::InvalidParameter(
                    "nested regions need at least one cell of nodal separation".into(),
                ));
            }
            let mk_box = |half: f64| Region::Box {
                lo: [w.center[0] - half, w.center[1] - half, w.center[2] - half],
                hi: [w.center[0] + half, w.center[1] + half, w.center[2] + half],
            };
            let omega1 = mk_box(inner_half);
            let omega2 = mk_box(outer_half);
            let gdu = g_of_gradient(level);
            let lhs = norms::morrey_norm(&gdu, 1.0, theta_m, &omega1, false, true, &cfg)?.value;
            let l1 = norms::lebesgue_norm(&gdu, 1.0, &omega2, false)?.value;
            let rhs1 = math::pow(sep, theta_m - n) * l1;
            let rhs2 = norms::morrey_norm(&level.data, q, theta, &omega2, false, false, &cfg)?.value;
            Ok((lhs, vec![("dist-pref L1".into(), rhs1), ("morrey data".into(), rhs2)]))
        },
    )
}

/// Lorentz estimate for the maximal operator pair: averaged `L(t,gamma)`
/// norm of `g(|Du|)` on `B/2` against `g` of the gradient average on `2B`
/// plus the averaged norm of the first-order maximal function of the data.
pub fn check_maximal_lorentz(
    inst: &Instance,
    t: f64,
    gamma: f64,
    chi_hat: f64,
    threshold: f64,
) -> Result<EstimateReport> {
    let t_bound = chi_hat * inst.indices.i_lower / (inst.indices.s_upper - 1.0);
    if !(1.0 <= t && t < t_bound) {
        return Err(Error::InvalidParameter(format!(
            "need 1 <= t < chi i_G/(s_G - 1) = {t_bound}, got t = {t}"
        )));
    }
    let w = inst.window();
    let mut report = two_level_report(
        EstimateId::Prop53MaximalLorentz,
        inst,
        threshold,
        vec![
            ("t".into(), format!("{t}")),
            ("gamma".into(), format!("{gamma}")),
            ("admissible t interval".into(), format!("[1, {t_bound:.4})")),
        ],
        |level| {
            let anchor = w.scaled(2.0);
            let (ladder, _) = anchor_ladder(&anchor, &level.grid, 6);
            let m1 = restricted_m1(&level.mu, &level.grid, &anchor, &ladder)?;
            let gdu = g_of_gradient(level);
            let lhs = norms::lorentz_norm(&gdu, t, gamma, &Region::Ball(w.scaled(0.5)), true)?.value;
            let avg = mean_abs(&level.solve.du.magnitude(), &Region::Ball(anchor));
            let rhs1 = level.spec.modular.g(avg);
            let rhs2 = norms::lorentz_norm(&m1.field, t, gamma, &Region::Ball(w), true)?.value;
            Ok((lhs, vec![("g(mean|Du|)".into(), rhs1), ("M1 of data".into(), rhs2)]))
        },
    )?;
    report
        .notes
        .push(format!("weight conversion factor {}", weight_convention_factor(inst.levels[0].grid.dim())));
    Ok(report)
}

/// The sharpness probe on a measure-data instance with an approximation
/// sequence: the weak norm of `g(|Du_k|)` on a fixed annulus is stable in
/// the truncation level and under refinement, while the strong norm grows
/// as the annulus hugs the singularity.
#[derive(Clone, Debug)]
pub struct SharpnessProbe {
    pub weak_level_drift: f64,
    pub weak_refine_drift: f64,
    pub weak_values: Vec<f64>,
    pub strong_values: Vec<f64>,
    pub strong_growth: Vec<f64>,
    pub pass_weak: bool,
    pub pass_strong: bool,
}

pub fn probe_sharpness(
    inst: &Instance,
    r_out: f64,
    r_in_seq: &[f64],
    weak_drift_bound: f64,
    strong_growth_floor: f64,
) -> Result<SharpnessProbe> {
    let n = inst.levels[0].grid.dim() as f64;
    let target = n / (n - 1.0);
    let center = inst
        .inputs
        .mu
        .atoms
        .first()
        .map(|(loc, _)| *loc)
        .unwrap_or(inst.window().center);
    // the singular cell is excluded at 4h of the grid the norm runs on
    let annulus = |r_in: f64, h: f64| Region::Annulus {
        center,
        r_inner: math::fmax(r_in, 4.0 * h),
        r_outer: r_out,
    };
    // weak norm per truncation level on the coarse grid
    let coarse = &inst.levels[0];
    let sola = coarse
        .sola
        .as_ref()
        .ok_or_else(|| Error::InvalidParameter("sharpness probe needs an approximation sequence".into()))?;
    let weak_of = |level: &InstanceLevel, member: &SolveResult| -> Result<f64> {
        let g = member.du.magnitude().map(|t| level.spec.modular.g(t));
        let fixed = annulus(r_in_seq[0], level.grid.h());
        Ok(norms::marcinkiewicz_norm(&g, target, &fixed, false)?.value)
    };
    let members = &sola.members;
    if members.len() < 2 {
        return Err(Error::InvalidParameter("probe needs at least two truncation levels".into()));
    }
    let weak_last = weak_of(coarse, &members[members.len() - 1])?;
    let weak_prev = weak_of(coarse, &members[members.len() - 2])?;
    let weak_level_drift = drift(weak_prev, weak_last);
    let weak_refine_drift = if inst.levels.len() > 1 {
        let fine = &inst.levels[1];
        let fine_weak = weak_of(fine, &fine.solve)?;
        drift(weak_last, fine_weak)
    } else {
        0.0
    };
    // strong norm over shrinking inner radii on the finest level
    let finest = inst.levels.last().unwrap();
    let gdu = g_of_gradient(finest);
    let mut strong = Vec::new();
    for &r_in in r_in_seq {
        if r_in < 4.0 * finest.grid.h() {
            return Err(Error::InvalidParameter(format!(
                "annulus inner radius {r_in} is inside the excluded 4h core"
            )));
        }
        strong.push(
            norms::lebesgue_norm(&gdu, target, &annulus(r_in, finest.grid.h()), false)?.value,
        );
    }
    let growth: Vec<f64> = strong.windows(2).map(|w| w[1] / w[0] - 1.0).collect();
    let pass_weak = weak_level_drift <= weak_drift_bound && weak_refine_drift <= weak_drift_bound;
    let pass_strong = growth.iter().all(|&x| x >= strong_growth_floor);
    Ok(SharpnessProbe {
        weak_level_drift,
        weak_refine_drift,
        weak_values: vec![weak_prev, weak_last],
        strong_values: strong,
        strong_growth: growth,
        pass_weak,
        pass_strong,
    })
}

/// Exponent identity of the power case: the Lorentz-scale target space
/// applied to `g(t) = t^{p-1}` is the Lebesgue-scale target `nq/(n-q)` of
/// the gradient power — an arithmetic identity, not a norm comparison.
pub fn power_case_exponent_identity(n: usize, p: f64, q: f64) -> (f64, f64) {
    let nn = n as f64;
    let lorentz_target = nn * q / (nn - q);
    // |Du|^{p-1} in L^{nq/(n-q)} corresponds to |Du| in L^{nq(p-1)/(n-q)}
    let gradient_target = lorentz_target * (p - 1.0);
    (lorentz_target, gradient_target)
}

