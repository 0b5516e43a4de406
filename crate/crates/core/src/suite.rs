//! The acceptance suite: every verification criterion as a library check
//! returning its measured value against a pinned tolerance. The `acceptance`
//! integration test asserts each criterion; the CLI `suite` command runs
//! them all and emits a machine-readable summary.

use num_complex::Complex64;

use crate::error::Result;
use crate::extension::{flat_model_of, residual_check, solve_jet};
use crate::fields::random_trig_scalar;
use crate::flow::{gradient_flow, FlowConfig};
use crate::grid::{exterior_derivative, CoordOneForm, GridScalar, GridSpec, Scheme};
use crate::mapcalc::{frame_apply, h_pair, MapField, PullbackSection};
use crate::paneitz::{
    covariance_check, f1, gradient_check, invariance_check, p1, p1_scalar, scalar_map,
};
use crate::structure::{conformal_rescale, heisenberg, reeb_field, reeb_residual, solve_structure, FlatModel, PseudohermitianData};
use crate::target::TargetMetric;

#[derive(Debug, Clone, serde::Serialize)]
pub struct CriterionResult {
    pub id: String,
    pub name: String,
    /// Measured value; the criterion passes when `measured <= tolerance`
    /// unless `lower_bound` flips the comparison.
    pub measured: f64,
    pub tolerance: f64,
    /// True when the criterion demands `measured >= tolerance` instead.
    pub lower_bound: bool,
    pub passed: bool,
}

impl CriterionResult {
    fn upper(id: &str, name: &str, measured: f64, tolerance: f64) -> CriterionResult {
        CriterionResult {
            id: id.into(),
            name: name.into(),
            measured,
            tolerance,
            lower_bound: false,
            passed: measured <= tolerance,
        }
    }

    fn lower(id: &str, name: &str, measured: f64, tolerance: f64) -> CriterionResult {
        CriterionResult {
            id: id.into(),
            name: name.into(),
            measured,
            tolerance,
            lower_bound: true,
            passed: measured >= tolerance,
        }
    }

    pub fn line(&self) -> String {
        let rel = if self.lower_bound { ">=" } else { "<=" };
        format!(
            "criterion {:>3}: {} (measured {:.3e} {} {:.3e}) - {}",
            self.id,
            if self.passed { "PASS" } else { "FAIL" },
            self.measured,
            rel,
            self.tolerance,
            self.name
        )
    }
}

fn flat_structure(npts: usize, scheme: Scheme) -> Result<PseudohermitianData> {
    let spec = GridSpec::cubic(3, npts, scheme)?;
    solve_structure(&heisenberg(1, &spec)?)
}

fn trig_u(spec: &GridSpec) -> GridScalar {
    GridScalar::from_real_fn(spec, |p| {
        0.1 * (2.0 * std::f64::consts::PI * p[0]).sin()
            * (2.0 * std::f64::consts::PI * p[1]).sin()
    })
}

/// 1. `f1(identity) = -Vol/2` on flat Heisenberg, 32^3 spectral.
pub fn criterion_1() -> Result<CriterionResult> {
    let s = flat_structure(32, Scheme::Spectral)?;
    let map = MapField::identity(s.model())?;
    let v = f1(&map, &s)?;
    Ok(CriterionResult::upper(
        "1",
        "f1(identity) = -1/2 Vol",
        (v + 0.5).abs(),
        1e-8,
    ))
}

/// 2. The bundle projection is critical: `|p1(pi)|_inf` at 32^3.
pub fn criterion_2() -> Result<CriterionResult> {
    let s = flat_structure(32, Scheme::Spectral)?;
    let map = MapField::projection(s.model());
    let p = p1(&map, &s)?;
    Ok(CriterionResult::upper(
        "2",
        "projection map is critical",
        p.norm_inf(),
        1e-10,
    ))
}

/// 3. Identity into the Webster target with vanishing torsion is critical.
pub fn criterion_3() -> Result<CriterionResult> {
    let s = flat_structure(32, Scheme::Spectral)?;
    let map = MapField::identity(s.model())?;
    let p = p1(&map, &s)?;
    Ok(CriterionResult::upper(
        "3",
        "identity map is critical (torsion-free)",
        p.norm_inf(),
        1e-8,
    ))
}

/// 4a. Covariance of `p1` under constant rescaling (exact case).
pub fn criterion_4a() -> Result<CriterionResult> {
    let spec = GridSpec::cubic(3, 32, Scheme::Spectral)?;
    let cf = heisenberg(1, &spec)?;
    let f = random_trig_scalar(&spec, 11, 1, 1.0, &[0, 1]);
    let map = scalar_map(f);
    let mut worst: f64 = 0.0;
    for &c in &[0.1, 0.2, 0.3] {
        let u = GridScalar::constant(&spec, Complex64::new(c, 0.0));
        let rep = covariance_check(&map, &cf, &u, "constant")?;
        worst = worst.max(rep.rel_error);
    }
    Ok(CriterionResult::upper(
        "4a",
        "p1 covariance, constant factor",
        worst,
        1e-10,
    ))
}

/// 4b. Covariance under a generic factor at 64^3 spectral.
pub fn criterion_4b() -> Result<CriterionResult> {
    let spec = GridSpec::cubic(3, 64, Scheme::Spectral)?;
    let cf = heisenberg(1, &spec)?;
    let f = random_trig_scalar(&spec, 11, 1, 1.0, &[0, 1]);
    let map = scalar_map(f);
    let rep = covariance_check(&map, &cf, &trig_u(&spec), "0.1 sin(2 pi x) sin(2 pi y)")?;
    Ok(CriterionResult::upper(
        "4b",
        "p1 covariance, generic factor, 64^3 spectral",
        rep.rel_error,
        1e-6,
    ))
}

/// 4c. fd4 refinement 16 -> 32 -> 64 recovers order >= 3.5 on the
/// covariance error (least-squares slope in log h).
pub fn criterion_4c() -> Result<CriterionResult> {
    let mut errs = Vec::new();
    for npts in [16usize, 32, 64] {
        let spec = GridSpec::cubic(3, npts, Scheme::Fd4)?;
        let cf = heisenberg(1, &spec)?;
        let f = random_trig_scalar(&spec, 11, 1, 1.0, &[0, 1]);
        let map = scalar_map(f);
        let rep = covariance_check(&map, &cf, &trig_u(&spec), "generic, fd4")?;
        errs.push(rep.rel_error);
    }
    let order = loglog_slope(&[16.0, 32.0, 64.0], &errs);
    Ok(CriterionResult::lower(
        "4c",
        "p1 covariance fd4 refinement order",
        order,
        3.5,
    ))
}

/// Least-squares slope of ln(err) against ln(1/n).
fn loglog_slope(ns: &[f64], errs: &[f64]) -> f64 {
    let xs: Vec<f64> = ns.iter().map(|&n| (1.0 / n).ln()).collect();
    let ys: Vec<f64> = errs.iter().map(|&e| e.max(1e-300).ln()).collect();
    let n = xs.len() as f64;
    let sx: f64 = xs.iter().sum();
    let sy: f64 = ys.iter().sum();
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| x * y).sum();
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

/// 5a. Invariance of `f1` under constant rescaling.
pub fn criterion_5a() -> Result<CriterionResult> {
    let spec = GridSpec::cubic(3, 32, Scheme::Spectral)?;
    let cf = heisenberg(1, &spec)?;
    let f = random_trig_scalar(&spec, 11, 1, 1.0, &[0, 1]);
    let map = scalar_map(f);
    let u = GridScalar::constant(&spec, Complex64::new(0.2, 0.0));
    let err = invariance_check(&map, &cf, &u)?;
    Ok(CriterionResult::upper(
        "5a",
        "f1 invariance, constant factor",
        err,
        1e-10,
    ))
}

/// 5b. Invariance under a generic factor at 64^3 spectral.
pub fn criterion_5b() -> Result<CriterionResult> {
    let spec = GridSpec::cubic(3, 64, Scheme::Spectral)?;
    let cf = heisenberg(1, &spec)?;
    let f = random_trig_scalar(&spec, 11, 1, 1.0, &[0, 1]);
    let map = scalar_map(f);
    let err = invariance_check(&map, &cf, &trig_u(&spec))?;
    Ok(CriterionResult::upper(
        "5b",
        "f1 invariance, generic factor, 64^3 spectral",
        err,
        1e-6,
    ))
}

/// 6a. Gradient identity on flat-torus targets, three seeded maps.
pub fn criterion_6a() -> Result<CriterionResult> {
    let s = flat_structure(32, Scheme::Spectral)?;
    let spec = s.spec().clone();
    let mut worst: f64 = 0.0;
    for seed in [101u64, 102, 103] {
        let f = random_trig_scalar(&spec, seed, 1, 0.8, &[0, 1, 2]);
        let g = random_trig_scalar(&spec, seed + 50, 1, 0.8, &[0, 1, 2]);
        let map = scalar_map(f);
        let dot = PullbackSection::from_comps(TargetMetric::flat_torus(1), vec![g]);
        worst = worst.max(gradient_check(&map, &dot, &s)?);
    }
    Ok(CriterionResult::upper(
        "6a",
        "gradient identity, flat target, 3 seeds",
        worst,
        1e-6,
    ))
}

/// 6b. Gradient identity on the embedded sphere, three seeded maps.
pub fn criterion_6b() -> Result<CriterionResult> {
    let s = flat_structure(32, Scheme::Spectral)?;
    let spec = s.spec().clone();
    let mut worst: f64 = 0.0;
    for seed in [201u64, 202, 203] {
        let north = MapField::constant(s.model(), TargetMetric::Sphere2, &[0.0, 0.0, 1.0])?;
        let vx = random_trig_scalar(&spec, seed, 1, 0.25, &[0, 1]);
        let vy = random_trig_scalar(&spec, seed + 10, 1, 0.25, &[0, 1]);
        let dir = PullbackSection::from_comps(
            TargetMetric::Sphere2,
            vec![vx, vy, GridScalar::zeros(&spec)],
        );
        let map = north.retract(&dir, 1.0)?;
        let wx = random_trig_scalar(&spec, seed + 20, 1, 0.3, &[0, 1]);
        let wy = random_trig_scalar(&spec, seed + 30, 1, 0.3, &[0, 1]);
        let wz = random_trig_scalar(&spec, seed + 40, 1, 0.3, &[0, 1]);
        let raw = PullbackSection::from_comps(TargetMetric::Sphere2, vec![wx, wy, wz]);
        let phi_sec = PullbackSection::from_comps(TargetMetric::Sphere2, map.comps.clone());
        let dot = raw.sub(&phi_sec.scale_field(&h_pair(&map, &raw, &phi_sec)));
        worst = worst.max(gradient_check(&map, &dot, &s)?);
    }
    Ok(CriterionResult::upper(
        "6b",
        "gradient identity, sphere target, 3 seeds",
        worst,
        1e-5,
    ))
}

/// 7. Scalar reduction: `p1(f) = -(Lap^2 + R^2) f` against the composed
/// operator oracle, five seeded band-limited scalars.
pub fn criterion_7() -> Result<CriterionResult> {
    let s = flat_structure(32, Scheme::Spectral)?;
    let m = s.model().clone();
    let mut worst: f64 = 0.0;
    for seed in 1u64..=5 {
        let f = random_trig_scalar(s.spec(), seed, 1, 1.0, &[0, 1, 2]);
        let p = p1_scalar(&f, &s)?;
        let oracle = m.sub_laplacian(&m.sub_laplacian(&f)).add(&m.r2(&f)).neg();
        worst = worst.max(p.sub(&oracle).norm_inf());
    }
    Ok(CriterionResult::upper(
        "7",
        "scalar reduction vs composed-operator oracle",
        worst,
        1e-10,
    ))
}

/// 8a. Jet/operator consistency: `solve_jet` log coefficient vs `p1`.
pub fn criterion_8a() -> Result<CriterionResult> {
    let s = flat_structure(32, Scheme::Spectral)?;
    let m = flat_model_of(&s)?;
    let f = random_trig_scalar(s.spec(), 5, 1, 1.0, &[0, 1, 2]);
    let jet = solve_jet(&scalar_map(f.clone()), &m)?;
    let p = p1_scalar(&f, &s)?;
    Ok(CriterionResult::upper(
        "8a",
        "jet log coefficient equals p1 on flat data",
        jet.log_coeff.comps[0].sub(&p).norm_inf(),
        1e-12,
    ))
}

/// 8b. Extension residual ratio bounded within one order of magnitude
/// across `r = 1e-1, 1e-2, 1e-3`.
pub fn criterion_8b() -> Result<CriterionResult> {
    let spec = GridSpec::cubic(3, 32, Scheme::Spectral)?;
    let m = FlatModel::new(1, spec.clone())?;
    let f = random_trig_scalar(&spec, 81, 1, 1.0, &[0, 1]);
    let map = scalar_map(f);
    let jet = solve_jet(&map, &m)?;
    let ratios: Vec<f64> = [1e-1, 1e-2, 1e-3]
        .iter()
        .map(|&r| residual_check(&jet, &map, &m, &[r]))
        .collect::<Result<_>>()?;
    let lo = ratios.iter().cloned().fold(f64::INFINITY, f64::min).max(1e-300);
    let hi = ratios.iter().cloned().fold(0.0, f64::max);
    Ok(CriterionResult::upper(
        "8b",
        "extension residual ratio spread across decades",
        hi / lo,
        10.0,
    ))
}

/// 9. Self-adjointness of the log-term operator on scalars, n = 1 (32^3)
/// and n = 2 (10^5).
pub fn criterion_9() -> Result<CriterionResult> {
    let mut worst: f64 = 0.0;
    // n = 1 through the full structure path
    {
        let s = flat_structure(32, Scheme::Spectral)?;
        let f = random_trig_scalar(s.spec(), 3, 1, 1.0, &[0, 1, 2]);
        let g = random_trig_scalar(s.spec(), 4, 1, 1.0, &[0, 1, 2]);
        let pf = p1_scalar(&f, &s)?;
        let pg = p1_scalar(&g, &s)?;
        let lhs = f.mul(&pg).integral().re;
        let rhs = g.mul(&pf).integral().re;
        worst = worst.max((lhs - rhs).abs() / (f.norm_l2() * g.norm_l2()));
    }
    // n = 2 through the jet recursion
    {
        let spec = GridSpec::cubic(5, 10, Scheme::Spectral)?;
        let m = FlatModel::new(2, spec.clone())?;
        let f = random_trig_scalar(&spec, 71, 1, 1.0, &[0, 1, 2, 3]);
        let g = random_trig_scalar(&spec, 72, 1, 1.0, &[0, 2, 4]);
        let pf = solve_jet(&scalar_map(f.clone()), &m)?.log_coeff;
        let pg = solve_jet(&scalar_map(g.clone()), &m)?.log_coeff;
        let lhs = f.mul(&pg.comps[0]).integral().re;
        let rhs = g.mul(&pf.comps[0]).integral().re;
        worst = worst.max((lhs - rhs).abs() / (f.norm_l2() * g.norm_l2()));
    }
    Ok(CriterionResult::upper(
        "9",
        "self-adjointness of the log operator, n = 1 and 2",
        worst,
        1e-8,
    ))
}

/// 10. Subharmonic vanishing: the projection's jets are identically zero
/// for n = 1 and n = 2.
pub fn criterion_10() -> Result<CriterionResult> {
    let mut worst: f64 = 0.0;
    for (n, npts) in [(1usize, 32usize), (2, 8)] {
        let spec = GridSpec::cubic(2 * n + 1, npts, Scheme::Spectral)?;
        let m = FlatModel::new(n, spec)?;
        let map = MapField::projection(&m);
        let jet = solve_jet(&map, &m)?;
        worst = worst.max(jet.norm_inf());
    }
    Ok(CriterionResult::upper(
        "10",
        "projection jets vanish identically, n = 1 and 2",
        worst,
        1e-12,
    ))
}

/// 11. Flow descent: seeded perturbation of the projection; the energy is
/// non-increasing at every accepted step and `|p1|_2` drops 10x within 500
/// steps at 32^3. Returns the worst energy increase (must be <= 0 within
/// roundoff) combined with the norm-reduction check.
pub fn criterion_11() -> Result<CriterionResult> {
    let s = flat_structure(32, Scheme::Spectral)?;
    let base = MapField::projection(s.model());
    let dx = random_trig_scalar(s.spec(), 301, 2, 0.02, &[0, 1]);
    let dy = random_trig_scalar(s.spec(), 302, 2, 0.02, &[0, 1]);
    let dir = PullbackSection::from_comps(base.target.clone(), vec![dx, dy]);
    let phi0 = base.retract(&dir, 1.0)?;
    let initial = p1(&phi0, &s)?;
    let initial_norm = crate::paneitz::section_l2(&phi0, &initial, &s);
    // the operator is fourth order: plain explicit descent at 32^3 is
    // stiffness-limited (accepted steps amplify near-Nyquist roundoff), so
    // the acceptance flow runs with the documented spectral preconditioner
    let cfg = FlowConfig {
        step: 1.0,
        max_steps: 500,
        backtracking: true,
        stop_tol: initial_norm / 40.0, // flow stops at |p1| <= initial/20
        precondition: true,
    };
    let (_, trace) = gradient_flow(&phi0, &s, &cfg)?;
    let mut monotone = true;
    for w in trace.records.windows(2) {
        if w[1].f1 > w[0].f1 {
            monotone = false;
        }
    }
    let final_norm = trace.last().map(|r| r.p1_norm).unwrap_or(f64::INFINITY);
    let reduction_ok = final_norm <= initial_norm / 10.0 && trace.len() <= 501;
    let measured = if monotone && reduction_ok {
        final_norm / initial_norm
    } else {
        f64::INFINITY
    };
    Ok(CriterionResult::upper(
        "11",
        "gradient flow: monotone descent, 10x obstruction drop <= 500 steps",
        measured,
        0.1,
    ))
}

/// 12a. `d . d = 0` on both schemes.
pub fn criterion_12a() -> Result<CriterionResult> {
    let mut worst: f64 = 0.0;
    for scheme in [Scheme::Spectral, Scheme::Fd4] {
        let spec = GridSpec::cubic(3, 32, scheme)?;
        let f = GridScalar::from_real_fn(&spec, |p| {
            (2.0 * std::f64::consts::PI * p[0]).sin()
                * (2.0 * std::f64::consts::PI * p[1]).sin()
                + (2.0 * std::f64::consts::PI * p[2]).cos()
        });
        let ddf = exterior_derivative(&CoordOneForm::from_differential(&f));
        worst = worst.max(ddf.norm_inf());
    }
    Ok(CriterionResult::upper("12a", "d^2 = 0", worst, 1e-9))
}

/// 12b. Structure-solver residuals on flat and rescaled models.
pub fn criterion_12b() -> Result<CriterionResult> {
    let mut worst: f64 = 0.0;
    let spec = GridSpec::cubic(3, 32, Scheme::Spectral)?;
    let cf = heisenberg(1, &spec)?;
    let d0 = solve_structure(&cf)?.diagnostics();
    worst = worst.max(d0.levi_residual).max(d0.structure_residual);
    let hat = conformal_rescale(&cf, &trig_u(&spec))?;
    let d1 = solve_structure(&hat)?.diagnostics();
    worst = worst.max(d1.levi_residual).max(d1.structure_residual);
    Ok(CriterionResult::upper(
        "12b",
        "structure-equation residuals, flat and rescaled",
        worst,
        1e-8,
    ))
}

/// 12c. Reeb defining equations on every built-in model.
pub fn criterion_12c() -> Result<CriterionResult> {
    let mut worst: f64 = 0.0;
    let spec = GridSpec::cubic(3, 32, Scheme::Spectral)?;
    let cf = heisenberg(1, &spec)?;
    worst = worst.max(reeb_residual(&cf, &reeb_field(&cf)?));
    let hat = conformal_rescale(&cf, &trig_u(&spec))?;
    worst = worst.max(reeb_residual(&hat, &reeb_field(&hat)?));
    Ok(CriterionResult::upper(
        "12c",
        "Reeb defining equations",
        worst,
        1e-10,
    ))
}

/// 12d. Sphere-valued sections stay tangential through the calculus.
pub fn criterion_12d() -> Result<CriterionResult> {
    let s = flat_structure(16, Scheme::Spectral)?;
    let spec = s.spec().clone();
    let north = MapField::constant(s.model(), TargetMetric::Sphere2, &[0.0, 0.0, 1.0])?;
    let vx = random_trig_scalar(&spec, 401, 1, 0.3, &[0, 1]);
    let vy = random_trig_scalar(&spec, 402, 1, 0.3, &[0, 1]);
    let dir = PullbackSection::from_comps(
        TargetMetric::Sphere2,
        vec![vx, vy, GridScalar::zeros(&spec)],
    );
    let map = north.retract(&dir, 1.0)?;
    let phi_sec = PullbackSection::from_comps(TargetMetric::Sphere2, map.comps.clone());
    let mut worst: f64 = 0.0;
    for sec in [
        frame_apply(&map, s.t1(), s.model()),
        frame_apply(&map, s.reeb(), s.model()),
        p1(&map, &s)?,
    ] {
        worst = worst.max(h_pair(&map, &sec, &phi_sec).norm_inf());
    }
    Ok(CriterionResult::upper(
        "12d",
        "sphere sections stay tangential",
        worst,
        1e-12,
    ))
}

/// Run the whole suite in order.
pub fn run_all() -> Result<Vec<CriterionResult>> {
    Ok(vec![
        criterion_1()?,
        criterion_2()?,
        criterion_3()?,
        criterion_4a()?,
        criterion_4b()?,
        criterion_4c()?,
        criterion_5a()?,
        criterion_5b()?,
        criterion_6a()?,
        criterion_6b()?,
        criterion_7()?,
        criterion_8a()?,
        criterion_8b()?,
        criterion_9()?,
        criterion_10()?,
        criterion_11()?,
        criterion_12a()?,
        criterion_12b()?,
        criterion_12c()?,
        criterion_12d()?,
    ])
}
