//! The suite runner: builds the declared instances, executes every check
//! section concurrently, and collects deterministic-order reports.

use crate::instances;
use crate::manifest::{self, Section};
use crate::{LabError, Result};
use orlicz_core::estimates::{self, ComparisonVariants, Instance, SuperLevelConfig};
use orlicz_core::grid::{Ball, Grid};
use orlicz_core::maximal::{riesz_mapping_check, RieszCase};
use orlicz_core::norms::BallFamilyConfig;
use orlicz_core::report::{EstimateId, EstimateReport, DEFAULT_STABILITY_THRESHOLD};
use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

/// One executed (or failed) check.
#[derive(Clone, Debug)]
pub struct ReportRow {
    pub label: String,
    pub report: Option<EstimateReport>,
    pub error: Option<String>,
}

impl ReportRow {
    pub fn passed(&self) -> bool {
        self.error.is_none() && self.report.as_ref().map(|r| r.pass).unwrap_or(false)
    }
}

pub struct SuiteOutcome {
    pub rows: Vec<ReportRow>,
}

impl SuiteOutcome {
    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(ReportRow::passed)
    }
}

fn parse_index(v: &str) -> Result<f64> {
    if v == "inf" || v == "infinity" {
        Ok(f64::INFINITY)
    } else {
        v.parse().map_err(|_| LabError::Parse(format!("bad index `{v}`")))
    }
}

/// Run a suite manifest. Instance construction and manifest errors abort
/// (configuration errors); individual check failures and precondition
/// rejections become failed rows with partial reports preserved.
pub fn run_suite(text: &str, base: &Path) -> Result<SuiteOutcome> {
    let sections = manifest::parse_sections(text)?;
    let mut instances_map: BTreeMap<String, Arc<Instance>> = BTreeMap::new();
    let mut checks: Vec<Section> = Vec::new();
    for sec in &sections {
        match sec.header.first().map(String::as_str) {
            Some("instance") => {
                let name = sec
                    .header
                    .get(1)
                    .ok_or_else(|| LabError::Parse("instance section needs a name".into()))?;
                let inst = instances::build_instance(sec, base)?;
                instances_map.insert(name.clone(), Arc::new(inst));
            }
            Some("check") => checks.push(sec.clone()),
            Some("probe") => {} // handled by the probe subcommand
            Some(other) => {
                return Err(LabError::Parse(format!("unknown section kind `{other}`")))
            }
            None => {}
        }
    }
    let mut rows: Vec<ReportRow> = Vec::new();
    std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for sec in &checks {
            let label = sec.header[1..].join(" ");
            let instances_map = &instances_map;
            handles.push((label.clone(), scope.spawn(move || run_check(sec, instances_map))));
        }
        for (label, handle) in handles {
            let outcome = handle.join().unwrap_or_else(|_| Err(LabError::Parse("check panicked".into())));
            rows.push(match outcome {
                Ok(report) => ReportRow { label, report: Some(report), error: None },
                Err(e) => ReportRow { label, report: None, error: Some(e.to_string()) },
            });
        }
    });
    rows.sort_by(|a, b| {
        let ka = a.report.as_ref().map(|r| r.id.as_str()).unwrap_or("zz-error");
        let kb = b.report.as_ref().map(|r| r.id.as_str()).unwrap_or("zz-error");
        ka.cmp(kb).then(a.label.cmp(&b.label))
    });
    Ok(SuiteOutcome { rows })
}

fn instance<'a>(
    sec: &Section,
    map: &'a BTreeMap<String, Arc<Instance>>,
) -> Result<&'a Arc<Instance>> {
    let name = manifest::need(sec, "instance")?;
    map.get(name)
        .ok_or_else(|| LabError::Parse(format!("check references unknown instance `{name}`")))
}

fn run_check(sec: &Section, map: &BTreeMap<String, Arc<Instance>>) -> Result<EstimateReport> {
    let kind = sec
        .header
        .get(1)
        .ok_or_else(|| LabError::Parse("check section needs a kind".into()))?
        .as_str();
    let threshold = manifest::opt_f64(sec, "threshold", DEFAULT_STABILITY_THRESHOLD)?;
    match kind {
        "theorem1" => {
            let inst = instance(sec, map)?;
            let q = manifest::need_f64(sec, "q")?;
            let s = parse_index(manifest::need(sec, "s")?)?;
            Ok(estimates::check_theorem1_lorentz(inst, q, s, threshold)?)
        }
        "theorem2" => {
            let inst = instance(sec, map)?;
            let q = manifest::need_f64(sec, "q")?;
            let theta = manifest::need_f64(sec, "theta")?;
            Ok(estimates::check_theorem2_morrey(inst, q, theta, threshold)?)
        }
        "theorem3" => {
            let inst = instance(sec, map)?;
            let q = manifest::need_f64(sec, "q")?;
            let s = parse_index(manifest::need(sec, "s")?)?;
            let theta = manifest::need_f64(sec, "theta")?;
            Ok(estimates::check_theorem3_lorentz_morrey(inst, q, s, theta, threshold)?)
        }
        "llogl" => {
            let inst = instance(sec, map)?;
            Ok(estimates::check_corollary_llogl(inst, threshold)?)
        }
        "borderline-morrey" => {
            let inst = instance(sec, map)?;
            let theta = manifest::need_f64(sec, "theta")?;
            Ok(estimates::check_corollary_borderline_morrey(inst, theta, threshold)?)
        }
        "comparison" => {
            let inst = instance(sec, map)?;
            let r_max = manifest::opt_f64(sec, "r_max", inst.window().radius)?;
            let levels = manifest::opt_f64(sec, "ladder", 4.0)? as usize;
            let variants = match (sec.keys.get("q"), sec.keys.get("theta"), sec.keys.get("gamma")) {
                (Some(q), Some(theta), Some(gamma)) => Some(ComparisonVariants {
                    q: q.parse().map_err(|_| LabError::Parse("bad q".into()))?,
                    theta: theta.parse().map_err(|_| LabError::Parse("bad theta".into()))?,
                    gamma: gamma.parse().map_err(|_| LabError::Parse("bad gamma".into()))?,
                }),
                _ => None,
            };
            Ok(estimates::check_comparison(inst, r_max, levels, variants, threshold)?)
        }
        "superlevel" => {
            let inst = instance(sec, map)?;
            let mut cfg = SuperLevelConfig::default_for(inst.levels[0].grid.dim());
            cfg.r1 = manifest::opt_f64(sec, "r1", cfg.r1)?;
            cfg.r2 = manifest::opt_f64(sec, "r2", cfg.r2)?;
            if let Some(v) = sec.keys.get("h_sweep") {
                cfg.h_sweep = manifest::float_list(v)?;
            }
            if let Some(v) = sec.keys.get("t_sweep") {
                cfg.t_sweep = manifest::float_list(v)?;
            }
            if let Some(v) = sec.keys.get("lambda_multipliers") {
                cfg.lambda_multipliers = Some(manifest::float_list(v)?);
            }
            Ok(estimates::check_superlevel(inst, &cfg)?)
        }
        "prelim-morrey" => {
            let inst = instance(sec, map)?;
            let q = manifest::need_f64(sec, "q")?;
            let theta = manifest::need_f64(sec, "theta")?;
            let inner = manifest::opt_f64(sec, "inner_half", 0.5)?;
            let outer = manifest::opt_f64(sec, "outer_half", 0.8)?;
            Ok(estimates::check_prelim_morrey(inst, q, theta, inner, outer, threshold)?)
        }
        "rev-holder" => {
            let inst = instance(sec, map)?;
            Ok(estimates::check_reverse_hoelder(inst, threshold)?)
        }
        "caccioppoli" => {
            let inst = instance(sec, map)?;
            Ok(estimates::check_caccioppoli(inst, threshold)?)
        }
        "higher-int" => {
            let inst = instance(sec, map)?;
            let step = manifest::opt_f64(sec, "chi_step", 1.0 / 32.0)?;
            let (_, report) = estimates::fit_higher_integrability(inst, step)?;
            Ok(report)
        }
        "morrey-decay" => {
            let inst = instance(sec, map)?;
            Ok(estimates::check_morrey_decay(inst, threshold)?)
        }
        "maximal-lorentz" => {
            let inst = instance(sec, map)?;
            let t = manifest::need_f64(sec, "t")?;
            let gamma = parse_index(manifest::need(sec, "gamma")?)?;
            let step = manifest::opt_f64(sec, "chi_step", 1.0 / 32.0)?;
            let (chi_hat, _) = estimates::fit_higher_integrability(inst, step)?;
            Ok(estimates::check_maximal_lorentz(inst, t, gamma, chi_hat, threshold)?)
        }
        "riesz" => run_riesz(sec),
        "scale-invariance" => {
            let inst = instance(sec, map)?;
            let lambda = manifest::opt_f64(sec, "lambda", 3.0)?;
            let tol = manifest::opt_f64(sec, "tol", 1e-6)?;
            let q = manifest::need_f64(sec, "q")?;
            let s = parse_index(sec.keys.get("s").map(String::as_str).unwrap_or("1.1"))?;
            let base_kind = sec.keys.get("base").map(String::as_str).unwrap_or("theorem1");
            let run = |inst: &Instance| -> Result<f64> {
                let rep = match base_kind {
                    "theorem1" => estimates::check_theorem1_lorentz(inst, q, s, 1.0)?,
                    "theorem2" => {
                        let theta = manifest::need_f64(sec, "theta")?;
                        estimates::check_theorem2_morrey(inst, q, theta, 1.0)?
                    }
                    "theorem3" => {
                        let theta = manifest::need_f64(sec, "theta")?;
                        estimates::check_theorem3_lorentz_morrey(inst, q, s, theta, 1.0)?
                    }
                    other => return Err(LabError::Parse(format!("bad base check `{other}`"))),
                };
                Ok(rep.empirical_constant)
            };
            let c0 = run(inst)?;
            let scaled = inst.rescaled(lambda)?;
            let c1 = run(&scaled)?;
            let rel = (c1 - c0).abs() / c0.abs().max(f64::MIN_POSITIVE);
            Ok(EstimateReport {
                id: match base_kind {
                    "theorem2" => EstimateId::Thm2Morrey,
                    "theorem3" => EstimateId::Thm3LorentzMorrey,
                    _ => EstimateId::Thm1Lorentz,
                },
                lhs: c0,
                rhs_terms: vec![("rescaled constant".into(), c1)],
                empirical_constant: rel,
                params: vec![
                    ("lambda".into(), format!("{lambda}")),
                    ("mode".into(), "scale-invariance".into()),
                ],
                refinement_stability: rel,
                pass: rel <= tol,
                notes: vec![format!("relative deviation {rel:.3e} (tol {tol:.1e})")],
            })
        }
        other => Err(LabError::Parse(format!("unknown check kind `{other}`"))),
    }
}

fn run_riesz(sec: &Section) -> Result<EstimateReport> {
    let dim: usize = manifest::need(sec, "dim")?
        .parse()
        .map_err(|_| LabError::Parse("bad dim".into()))?;
    let cells = manifest::usize_list(manifest::need(sec, "cells")?)?;
    if cells.len() != 2 {
        return Err(LabError::Parse("riesz check needs exactly two cells entries".into()));
    }
    let half = manifest::opt_f64(sec, "half", 1.0)?;
    let radius = manifest::opt_f64(sec, "radius", 0.45 * half)?;
    let profile = instances::builtin_profile(
        sec.keys.get("profile").map(String::as_str).unwrap_or("const"),
    )?;
    let case = match manifest::need(sec, "case")? {
        "lorentz" => RieszCase::Lorentz {
            q: manifest::need_f64(sec, "q")?,
            s: parse_index(manifest::need(sec, "s")?)?,
        },
        "llogl" => RieszCase::LlogL,
        "morrey" => RieszCase::Morrey {
            q: manifest::need_f64(sec, "q")?,
            theta: manifest::need_f64(sec, "theta")?,
        },
        "lorentz-morrey" => RieszCase::LorentzMorrey {
            q: manifest::need_f64(sec, "q")?,
            theta: manifest::need_f64(sec, "theta")?,
            s: parse_index(manifest::need(sec, "s")?)?,
        },
        other => return Err(LabError::Parse(format!("unknown riesz case `{other}`"))),
    };
    let coarse = Grid::centered_cube(dim, half, cells[0])?;
    let fine = Grid::centered_cube(dim, half, cells[1])?;
    let ball = Ball::new(&[0.0; 3][..dim], radius)?;
    let cfg = BallFamilyConfig::default();
    Ok(riesz_mapping_check(case, &|x| profile(x), &ball, (&coarse, &fine), 5, &cfg)?)
}

/// Run the `[probe]` section of a manifest against its instance.
pub fn run_probe(text: &str, base: &Path) -> Result<(estimates::SharpnessProbe, String)> {
    let sections = manifest::parse_sections(text)?;
    let mut instances_map: BTreeMap<String, Arc<Instance>> = BTreeMap::new();
    let mut probe_sec: Option<Section> = None;
    for sec in &sections {
        match sec.header.first().map(String::as_str) {
            Some("instance") => {
                let name = sec
                    .header
                    .get(1)
                    .ok_or_else(|| LabError::Parse("instance section needs a name".into()))?;
                instances_map.insert(name.clone(), Arc::new(instances::build_instance(sec, base)?));
            }
            Some("probe") => probe_sec = Some(sec.clone()),
            _ => {}
        }
    }
    let sec = probe_sec.ok_or_else(|| LabError::Parse("manifest has no [probe] section".into()))?;
    let inst = instance(&sec, &instances_map)?;
    let r_out = manifest::opt_f64(&sec, "r_out", 0.4)?;
    let r_in = manifest::float_list(manifest::need(&sec, "r_in")?)?;
    let weak_drift = manifest::opt_f64(&sec, "weak_drift", 0.10)?;
    let strong_growth = manifest::opt_f64(&sec, "strong_growth", 0.15)?;
    let probe = estimates::probe_sharpness(inst, r_out, &r_in, weak_drift, strong_growth)?;
    let label = manifest::need(&sec, "instance")?.to_string();
    Ok((probe, label))
}
