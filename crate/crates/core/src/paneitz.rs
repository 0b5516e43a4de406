//! The explicit dimension-3 obstruction operator `p1`, its renormalized
//! energy `f1`, and the covariance / invariance / gradient identities as
//! checkable computations.
//!
//! With `tau` the torsion in its `tau_1^{1b}` position (the conjugate of
//! the `d theta^1` structure-equation coefficient) and `S_b` the curvature
//! contraction,
//!
//! ```text
//! p1(phi) = -delta_b nabla delta_b T phi - nabla_R R phi
//!           + 4 Im( nabla_{T1b}(tau T1b phi) + omega_bar(T1b) tau T1b phi )
//!           + S_b(delta_b T phi)
//!
//! f1(phi) = -1/2 Int ( |R phi|^2 - |delta_b T phi|^2
//!                      - 4 Im( tau h(T1b phi, T1b phi) ) ) theta ^ d theta
//! ```
//!
//! Every sign and convention here is pinned by executable identities rather
//! than taken on faith; with this combination (and only this combination,
//! over a sweep of the sign/conjugation/insertion alternatives) all of the
//! following hold simultaneously on generic rescaled structures:
//!
//! * `f1` is invariant under conformal rescaling (exactly for constant
//!   factors, to discretization error otherwise),
//! * `p1` rescales by `e^{-4u}` under `theta -> e^{2u} theta`,
//! * `p1` is self-adjoint in `L^2(theta ^ d theta)`,
//! * the finite-difference derivative of `f1` along any variation matches
//!   the `p1` pairing with the constant [`GRADIENT_FACTOR`],
//! * `f1(identity) = -Vol/2` (the identity's tension vanishes, so the
//!   tension-term sign does not disturb it).
//!
//! The `omega_bar(T1b)` insertion is the frame divergence `div(T1b)` that
//! integration by parts along `T1b` produces; it vanishes on flat
//! structures. `S_b` enters with the sign matching the curvature convention
//! `R(X,Y)Z = nabla_X nabla_Y Z - nabla_Y nabla_X Z - nabla_{[X,Y]} Z`
//! (unit sphere: `R(X,Y)Z = <Y,Z>X - <X,Z>Y`). The torsion pairing
//! `h(T1b phi, T1b phi)` is complex-bilinear.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{integrate, GridScalar};
use crate::mapcalc::{
    covariant_apply, divergence_b, frame_apply, h_pair, reeb_second, s_b, tension_b, MapField,
    PullbackSection,
};
use crate::structure::{conformal_rescale, solve_structure, ContactCoframe, PseudohermitianData};
use crate::target::TargetMetric;

/// `d/d eps f1(exp_phi(eps phidot)) = GRADIENT_FACTOR * Int <phidot, p1(phi)>`.
///
/// Fixed by the finite-difference certification on flat and torsionful
/// structures (`gradient_check` drives the residual to discretization level
/// with this constant and to O(1) with any other).
pub const GRADIENT_FACTOR: f64 = -1.0;

/// Covariance exponent for `n = 1`: rescaling `theta -> e^{2u} theta`
/// multiplies `p1` by `e^{exponent * 2u} = e^{-4u}`.
pub const COVARIANCE_EXPONENT: i32 = -2;

fn check_dim3(s: &PseudohermitianData) -> Result<()> {
    if s.model().n() != 1 {
        return Err(Error::DimensionMismatch(
            "p1 and f1 are the explicit dimension-3 operators".into(),
        ));
    }
    Ok(())
}

/// The fourth-order obstruction operator; real section of `phi^* TN`.
pub fn p1(map: &MapField, s: &PseudohermitianData) -> Result<PullbackSection> {
    check_dim3(s)?;
    let model = s.model();
    let tension = tension_b(map, s)?;

    let d_t1 = covariant_apply(map, s.t1(), &tension, model)?;
    let d_t1b = covariant_apply(map, s.t1b(), &tension, model)?;
    let term1 = divergence_b(&d_t1, &d_t1b, map, s)?.neg();

    let term2 = reeb_second(map, s)?.neg();

    let mut out = term1.add(&term2);

    if s.torsion().norm_inf() > 0.0 {
        let tau = s.torsion().conj();
        let t1bphi = frame_apply(map, s.t1b(), model);
        let weighted = t1bphi.scale_field(&tau);
        let mut z = covariant_apply(map, s.t1b(), &weighted, model)?;
        // frame divergence div(T1b) = omega_bar(T1b)
        let div_t1b = s.omega().conjugate(model).pair(s.t1b());
        z = z.add(&weighted.scale_field(&div_t1b));
        out = out.add(&z.imag().scale(Complex64::new(4.0, 0.0)));
    }

    if !map.target.is_flat() {
        out = out.add(&s_b(&tension, map, s)?);
    }
    Ok(out)
}

/// The renormalized energy.
pub fn f1(map: &MapField, s: &PseudohermitianData) -> Result<f64> {
    check_dim3(s)?;
    let model = s.model();
    let tension = tension_b(map, s)?;
    let rphi = frame_apply(map, s.reeb(), model);
    let mut integrand = h_pair(map, &rphi, &rphi).sub(&h_pair(map, &tension, &tension));
    if s.torsion().norm_inf() > 0.0 {
        let tau = s.torsion().conj();
        let t1bphi = frame_apply(map, s.t1b(), model);
        let pair = h_pair(map, &t1bphi, &t1bphi); // complex-bilinear
        let tors = tau.mul(&pair).imag().scale(Complex64::new(4.0, 0.0));
        integrand = integrand.sub(&tors);
    }
    let val = integrate(&integrand, s.vol_density());
    Ok(-0.5 * val.re)
}

/// Sub-Laplacian of a scalar through the full structure machinery
/// (`delta_b d f`, with frame-connection corrections on curved structures).
pub fn sub_laplacian(f: &GridScalar, s: &PseudohermitianData) -> Result<GridScalar> {
    let map = scalar_map(f.clone());
    Ok(tension_b(&map, s)?.comps[0].clone())
}

/// The obstruction operator on a scalar.
pub fn p1_scalar(f: &GridScalar, s: &PseudohermitianData) -> Result<GridScalar> {
    let map = scalar_map(f.clone());
    Ok(p1(&map, s)?.comps[0].clone())
}

/// Wrap a scalar as a one-component flat-target map.
pub fn scalar_map(f: GridScalar) -> MapField {
    MapField::new(TargetMetric::flat_torus(1), vec![f]).expect("one component")
}

/// Plain lattice L2 norm of a section (no volume weight).
pub fn section_l2_plain(sec: &PullbackSection) -> f64 {
    sec.comps
        .iter()
        .map(|c| c.norm_l2().powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Volume-weighted L2 norm `sqrt( Int h(s, conj s) theta ^ d theta )`.
pub fn section_l2(map: &MapField, sec: &PullbackSection, s: &PseudohermitianData) -> f64 {
    let sq = h_pair(map, sec, &sec.conj());
    integrate(&sq, s.vol_density()).re.max(0.0).sqrt()
}

/// Volume-weighted L2 norm of `nabla_R R phi`.
pub fn reeb_second_norm(map: &MapField, s: &PseudohermitianData) -> Result<f64> {
    let r2 = reeb_second(map, s)?;
    Ok(section_l2(map, &r2, s))
}

/// `Int h(a, b) theta ^ d theta` (real part).
pub fn pairing_integral(
    map: &MapField,
    a: &PullbackSection,
    b: &PullbackSection,
    s: &PseudohermitianData,
) -> f64 {
    integrate(&h_pair(map, a, b), s.vol_density()).re
}

/// Outcome of a covariance check against the exact rescaling law.
#[derive(Debug, Clone, serde::Serialize)]
pub struct CovarianceReport {
    pub rel_error: f64,
    /// True when `p1(phi)` vanished and the error is reported absolutely.
    pub absolute_fallback: bool,
    pub expected_exponent: i32,
    pub dims: Vec<usize>,
    pub u_description: String,
}

/// Compare `p1` computed on the rescaled structure (`theta -> e^{2u} theta`)
/// against `e^{-4u} p1` on the base structure.
pub fn covariance_check(
    map: &MapField,
    cf: &ContactCoframe,
    u: &GridScalar,
    u_description: &str,
) -> Result<CovarianceReport> {
    let base = solve_structure(cf)?;
    let hat = solve_structure(&conformal_rescale(cf, u)?)?;
    let p = p1(map, &base)?;
    let p_hat = p1(map, &hat)?;
    let factor = u.scale(Complex64::new(2.0 * COVARIANCE_EXPONENT as f64, 0.0)).map(|v| v.exp());
    let diff = p_hat.sub(&p.scale_field(&factor));
    let err = section_l2_plain(&diff);
    let denom = section_l2_plain(&p);
    let (rel_error, absolute_fallback) = if denom < 1e-14 {
        (err, true)
    } else {
        (err / denom, false)
    };
    Ok(CovarianceReport {
        rel_error,
        absolute_fallback,
        expected_exponent: COVARIANCE_EXPONENT,
        dims: cf.spec().dims().to_vec(),
        u_description: u_description.to_string(),
    })
}

/// Relative change of `f1` under conformal rescaling:
/// `|f1_hat - f1| / (1 + |f1|)`.
pub fn invariance_check(map: &MapField, cf: &ContactCoframe, u: &GridScalar) -> Result<f64> {
    let base = solve_structure(cf)?;
    let hat = solve_structure(&conformal_rescale(cf, u)?)?;
    let a = f1(map, &base)?;
    let b = f1(map, &hat)?;
    Ok((b - a).abs() / (1.0 + a.abs()))
}

/// Fourth-order central difference in `eps` of `f1(exp_phi(eps phidot))`
/// minus the `p1` pairing scaled by [`GRADIENT_FACTOR`]; the returned
/// mismatch vanishes at the stencil/discretization order.
pub fn gradient_check(
    map: &MapField,
    phidot: &PullbackSection,
    s: &PseudohermitianData,
) -> Result<f64> {
    let h = 1e-3;
    let eval = |eps: f64| -> Result<f64> { f1(&map.retract(phidot, eps)?, s) };
    let d_eps =
        (eval(-2.0 * h)? - 8.0 * eval(-h)? + 8.0 * eval(h)? - eval(2.0 * h)?) / (12.0 * h);
    let p = p1(map, s)?;
    let pairing = pairing_integral(map, phidot, &p, s);
    Ok((d_eps - GRADIENT_FACTOR * pairing).abs())
}

/// Residual of the holomorphy identity `delta_b T phi = n J_N (R phi)` for
/// targets with the standard complex structure (even-dimensional flat tori).
pub fn holomorphic_identity_check(map: &MapField, s: &PseudohermitianData) -> Result<f64> {
    let m = map.dim();
    if !map.target.is_flat() || m % 2 != 0 {
        return Err(Error::NoComplexStructure);
    }
    let model = s.model();
    let tension = tension_b(map, s)?;
    let rphi = frame_apply(map, s.reeb(), model);
    // standard J: e_{2k} -> e_{2k+1} -> -e_{2k}
    let mut j_comps = vec![GridScalar::zeros(map.comps[0].spec()); m];
    for k in 0..m / 2 {
        j_comps[2 * k] = rphi.comps[2 * k + 1].neg();
        j_comps[2 * k + 1] = rphi.comps[2 * k].clone();
    }
    let jr = PullbackSection::from_comps(map.target.clone(), j_comps)
        .scale(Complex64::new(model.n() as f64, 0.0));
    Ok(tension.sub(&jr).norm_inf())
}
