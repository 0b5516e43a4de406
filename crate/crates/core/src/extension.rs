//! Formal harmonic-extension jets on the exact flat model (flat targets,
//! any n): the coefficient recursion, the log-term obstruction, the
//! divergence coefficients of the lambda-parametrized Einstein model, and a
//! residual check that the truncated extension annihilates the model
//! divergence to the expected order.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::mapcalc::{MapField, PullbackSection};
use crate::structure::{FlatModel, PseudohermitianData};

/// Coefficients `phi_1 .. phi_n` of the formal extension plus the log-term
/// obstruction. `coeffs[k]` stores `phi_{k+1}`; the r-expansion reads
/// `phi + sum_k phi_k r^k / k! + log_coeff r^{n+1}/(n+1)! log r`.
#[derive(Debug, Clone)]
pub struct JetExpansion {
    pub n: usize,
    pub coeffs: Vec<PullbackSection>,
    pub log_coeff: PullbackSection,
    pub lambda: f64,
}

impl JetExpansion {
    pub fn norm_inf(&self) -> f64 {
        self.coeffs
            .iter()
            .map(|c| c.norm_inf())
            .fold(self.log_coeff.norm_inf(), f64::max)
    }
}

/// Divergence coefficients of the Einstein model metric at parameter
/// `lambda` and height `r`:
///
/// ```text
/// delta omega = a_dr * omega(d_r) + a_rr * nabla_r omega(d_r)
///               + a_RR * nabla_R omega(R) + a_b * delta_b omega
/// ```
///
/// with `a_dr = (n(1+l^2r^2)/(1-l^2r^2) + (1+lr)/(1-lr) - 1) r`,
/// `a_rr = -r^2`, `a_RR = -r^2/(1-l^2r^2)^2`, `a_b = r/(1-lr)^2`.
/// Reduces to the flat-model coefficients `(n r, -r^2, -r^2, r)` at
/// `lambda = 0`.
pub fn einstein_divergence_coeffs(
    lambda: f64,
    r: f64,
    n: usize,
) -> Result<(f64, f64, f64, f64)> {
    let lr = lambda * r;
    if lr.abs() >= 1.0 {
        return Err(Error::PoleReached { value: lr.abs() });
    }
    let l2r2 = lr * lr;
    let a_dr = (n as f64 * (1.0 + l2r2) / (1.0 - l2r2) + (1.0 + lr) / (1.0 - lr) - 1.0) * r;
    let a_rr = -r * r;
    let a_rr_reeb = -r * r / ((1.0 - l2r2) * (1.0 - l2r2));
    let a_b = r / ((1.0 - lr) * (1.0 - lr));
    Ok((a_dr, a_rr, a_rr_reeb, a_b))
}

/// Extract the flat model from solved structure data; errors with
/// [`Error::NotFlatModel`] when torsion, connection, or curvature survive.
pub fn flat_model_of(s: &PseudohermitianData) -> Result<FlatModel> {
    if !s.is_flat(1e-10) {
        return Err(Error::NotFlatModel(
            "structure carries torsion, connection, or curvature".into(),
        ));
    }
    Ok(s.model().clone())
}

fn check_flat_target(map: &MapField) -> Result<()> {
    if !map.target.is_flat() {
        return Err(Error::NotFlatModel(
            "jet recursion implemented for flat targets".into(),
        ));
    }
    Ok(())
}

fn section_sub_laplacian(model: &FlatModel, s: &PullbackSection) -> PullbackSection {
    PullbackSection {
        target: s.target.clone(),
        comps: s.comps.iter().map(|c| model.sub_laplacian(c)).collect(),
    }
}

fn section_r2(model: &FlatModel, s: &PullbackSection) -> PullbackSection {
    PullbackSection {
        target: s.target.clone(),
        comps: s.comps.iter().map(|c| model.r2(c)).collect(),
    }
}

/// Solve the jet recursion on the flat model H^n:
///
/// ```text
/// phi_1 = -(1/n) Lap phi
/// phi_k = ( -Lap phi_{k-1} + (k-1) R^2 phi_{k-2} ) / (n-k+1),  2 <= k <= n
/// P_n   = Lap phi_n - n R^2 phi_{n-1}
/// ```
///
/// with `Lap = delta_b d` and `R^2 = d_t^2`, componentwise on flat targets.
pub fn solve_jet(map: &MapField, model: &FlatModel) -> Result<JetExpansion> {
    check_flat_target(map)?;
    if map.comps[0].spec() != model.spec() {
        return Err(Error::DimensionMismatch(
            "map and model live on different grids".into(),
        ));
    }
    let n = model.n();
    let phi0 = PullbackSection {
        target: map.target.clone(),
        comps: map.comps.clone(),
    };
    let mut coeffs: Vec<PullbackSection> = Vec::with_capacity(n);
    // phi_1
    coeffs.push(
        section_sub_laplacian(model, &phi0).scale(Complex64::new(-1.0 / n as f64, 0.0)),
    );
    for k in 2..=n {
        let prev = &coeffs[k - 2]; // phi_{k-1}
        let prev2 = if k == 2 { &phi0 } else { &coeffs[k - 3] }; // phi_{k-2}
        let num = section_sub_laplacian(model, prev)
            .neg()
            .add(&section_r2(model, prev2).scale(Complex64::new((k - 1) as f64, 0.0)));
        coeffs.push(num.scale(Complex64::new(1.0 / (n - k + 1) as f64, 0.0)));
    }
    let phi_n = coeffs.last().expect("n >= 1");
    let phi_nm1 = if n == 1 { &phi0 } else { &coeffs[n - 2] };
    let log_coeff = section_sub_laplacian(model, phi_n)
        .sub(&section_r2(model, phi_nm1).scale(Complex64::new(n as f64, 0.0)));
    Ok(JetExpansion {
        n,
        coeffs,
        log_coeff,
        lambda: 0.0,
    })
}

fn factorial(k: usize) -> f64 {
    (1..=k).product::<usize>() as f64
}

/// Assemble the truncated extension at height `r` (including the log term)
/// and apply the flat-model divergence of the extension's defining equation;
/// returns the max over samples of `|delta T phi~|_inf / r^{n+2}`, which the
/// recursion keeps bounded as `r -> 0`.
pub fn residual_check(
    jet: &JetExpansion,
    map: &MapField,
    model: &FlatModel,
    r_samples: &[f64],
) -> Result<f64> {
    check_flat_target(map)?;
    let n = jet.n;
    let phi0 = PullbackSection {
        target: map.target.clone(),
        comps: map.comps.clone(),
    };
    // value, first and second r-derivatives of the truncation at fixed r
    let truncation = |r: f64| -> (PullbackSection, PullbackSection, PullbackSection) {
        let mut val = phi0.clone();
        let mut d1 = phi0.scale(Complex64::ZERO);
        let mut d2 = d1.clone();
        for (i, c) in jet.coeffs.iter().enumerate() {
            let k = i + 1;
            let kf = factorial(k);
            val = val.add(&c.scale(Complex64::new(r.powi(k as i32) / kf, 0.0)));
            d1 = d1.add(&c.scale(Complex64::new(
                r.powi(k as i32 - 1) / factorial(k - 1),
                0.0,
            )));
            if k >= 2 {
                d2 = d2.add(&c.scale(Complex64::new(
                    r.powi(k as i32 - 2) / factorial(k - 2),
                    0.0,
                )));
            }
        }
        // log term p * r^{n+1}/(n+1)! * log r
        let np1 = n + 1;
        let nf = factorial(np1);
        let lr = r.ln();
        let p = &jet.log_coeff;
        val = val.add(&p.scale(Complex64::new(r.powi(np1 as i32) * lr / nf, 0.0)));
        d1 = d1.add(&p.scale(Complex64::new(
            (np1 as f64 * lr + 1.0) * r.powi(n as i32) / nf,
            0.0,
        )));
        let c2 = (np1 * n) as f64 * lr + (np1 + n) as f64;
        d2 = d2.add(&p.scale(Complex64::new(c2 * r.powi(n as i32 - 1) / nf, 0.0)));
        (val, d1, d2)
    };
    let mut worst: f64 = 0.0;
    for &r in r_samples {
        let (val, d1, d2) = truncation(r);
        let (a_dr, a_rr, a_rr_reeb, a_b) = einstein_divergence_coeffs(jet.lambda, r, n)?;
        let div = d1
            .scale(Complex64::new(a_dr, 0.0))
            .add(&d2.scale(Complex64::new(a_rr, 0.0)))
            .add(&section_r2(model, &val).scale(Complex64::new(a_rr_reeb, 0.0)))
            .add(&section_sub_laplacian(model, &val).scale(Complex64::new(a_b, 0.0)));
        worst = worst.max(div.norm_inf() / r.powi(n as i32 + 2));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::random_trig_scalar;
    use crate::grid::GridScalar;
    use crate::grid::{GridSpec, Scheme};
    use crate::paneitz::p1_scalar;
    use crate::structure::{conformal_rescale, heisenberg, solve_structure};
    use crate::target::TargetMetric;
    use std::f64::consts::PI;

    fn model(n: usize, npts: usize) -> FlatModel {
        let spec = GridSpec::cubic(2 * n + 1, npts, Scheme::Spectral).unwrap();
        FlatModel::new(n, spec).unwrap()
    }

    fn scalar(map: GridScalar) -> MapField {
        MapField::new(TargetMetric::flat_torus(1), vec![map]).unwrap()
    }

    #[test]
    fn einstein_coeffs_reduce_to_flat() {
        let (a_dr, a_rr, a_rr_reeb, a_b) = einstein_divergence_coeffs(0.0, 0.3, 2).unwrap();
        assert!((a_dr - 2.0 * 0.3).abs() < 1e-15);
        assert!((a_rr + 0.09).abs() < 1e-15);
        assert!((a_rr_reeb + 0.09).abs() < 1e-15);
        assert!((a_b - 0.3).abs() < 1e-15);
    }

    #[test]
    fn einstein_coeffs_leading_behavior() {
        // a_dr / r -> n as r -> 0 at fixed lambda
        for n in 1..=3usize {
            let (a_dr, ..) = einstein_divergence_coeffs(0.7, 1e-9, n).unwrap();
            assert!((a_dr / 1e-9 - n as f64).abs() < 1e-6);
        }
    }

    #[test]
    fn einstein_coeffs_printed_value() {
        // direct arithmetic: (1*(1.0025/0.9975) + 1.05/0.95 - 1) * 0.1
        let (a_dr, a_rr, a_rr_reeb, a_b) = einstein_divergence_coeffs(0.5, 0.1, 1).unwrap();
        assert!((a_dr - 0.11102756892230576).abs() < 1e-15, "{a_dr}");
        assert!((a_rr + 0.01).abs() < 1e-15);
        assert!((a_rr_reeb + 0.01 / 0.9975f64.powi(2)).abs() < 1e-15);
        assert!((a_b - 0.1 / 0.9025).abs() < 1e-15);
    }

    #[test]
    fn einstein_coeffs_pole() {
        match einstein_divergence_coeffs(0.5, 2.0, 1) {
            Err(Error::PoleReached { .. }) => {}
            other => panic!("expected PoleReached, got {other:?}"),
        }
    }

    #[test]
    fn jet_log_coefficient_matches_p1_on_flat_scalars() {
        let spec = GridSpec::cubic(3, 16, Scheme::Spectral).unwrap();
        let s = solve_structure(&heisenberg(1, &spec).unwrap()).unwrap();
        let m = flat_model_of(&s).unwrap();
        let f = random_trig_scalar(&spec, 5, 1, 1.0, &[0, 1, 2]);
        let jet = solve_jet(&scalar(f.clone()), &m).unwrap();
        let p = p1_scalar(&f, &s).unwrap();
        let err = jet.log_coeff.comps[0].sub(&p).norm_inf();
        assert!(err < 1e-12, "jet vs p1: {err}");
    }

    #[test]
    fn subharmonic_maps_have_zero_jets() {
        for n in 1..=2usize {
            let m = model(n, if n == 1 { 16 } else { 8 });
            let map = MapField::projection(&m);
            let jet = solve_jet(&map, &m).unwrap();
            assert!(jet.norm_inf() < 1e-12, "n = {n}: {}", jet.norm_inf());
        }
    }

    #[test]
    fn constant_map_has_zero_jet() {
        let m = model(1, 8);
        let map = MapField::constant(&m, TargetMetric::flat_torus(2), &[0.5, 0.5]).unwrap();
        let jet = solve_jet(&map, &m).unwrap();
        assert_eq!(jet.norm_inf(), 0.0);
    }

    #[test]
    fn jet_recursion_is_linear() {
        let m = model(2, 8);
        let spec = m.spec();
        let f = random_trig_scalar(spec, 61, 1, 1.0, &[0, 1, 4]);
        let g = random_trig_scalar(spec, 62, 1, 1.0, &[2, 3, 4]);
        let (a, b) = (2.0, -0.7);
        let combo = f.scale(Complex64::new(a, 0.0)).add(&g.scale(Complex64::new(b, 0.0)));
        let jf = solve_jet(&scalar(f), &m).unwrap();
        let jg = solve_jet(&scalar(g), &m).unwrap();
        let jc = solve_jet(&scalar(combo), &m).unwrap();
        let want = jf
            .log_coeff
            .scale(Complex64::new(a, 0.0))
            .add(&jg.log_coeff.scale(Complex64::new(b, 0.0)));
        let scale = 1.0 + want.norm_inf();
        assert!(jc.log_coeff.sub(&want).norm_inf() < 1e-12 * scale);
        for k in 0..2 {
            let want = jf.coeffs[k]
                .scale(Complex64::new(a, 0.0))
                .add(&jg.coeffs[k].scale(Complex64::new(b, 0.0)));
            let scale = 1.0 + want.norm_inf();
            assert!(jc.coeffs[k].sub(&want).norm_inf() < 1e-12 * scale);
        }
    }

    #[test]
    fn log_operator_self_adjoint_n2() {
        let m = model(2, 8);
        let spec = m.spec();
        let f = random_trig_scalar(spec, 71, 1, 1.0, &[0, 1, 2, 3]);
        let g = random_trig_scalar(spec, 72, 1, 1.0, &[0, 2, 4]);
        let pf = solve_jet(&scalar(f.clone()), &m).unwrap().log_coeff;
        let pg = solve_jet(&scalar(g.clone()), &m).unwrap().log_coeff;
        let lhs = f.mul(&pg.comps[0]).integral().re;
        let rhs = g.mul(&pf.comps[0]).integral().re;
        let scale = f.norm_l2() * g.norm_l2();
        assert!((lhs - rhs).abs() <= 1e-8 * scale, "{lhs} vs {rhs}");
    }

    #[test]
    fn residual_bounded_across_decades() {
        let m = model(1, 16);
        let f = random_trig_scalar(m.spec(), 81, 1, 1.0, &[0, 1]);
        let map = scalar(f);
        let jet = solve_jet(&map, &m).unwrap();
        let rs = [1e-1, 1e-2, 1e-3];
        let ratios: Vec<f64> = rs
            .iter()
            .map(|&r| residual_check(&jet, &map, &m, &[r]).unwrap())
            .collect();
        let lo = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = ratios.iter().cloned().fold(0.0, f64::max);
        assert!(hi / lo < 10.0, "ratios {ratios:?}");
    }

    #[test]
    fn residual_zero_for_constant_map() {
        let m = model(1, 8);
        let map = MapField::constant(&m, TargetMetric::flat_torus(1), &[0.3]).unwrap();
        let jet = solve_jet(&map, &m).unwrap();
        let r = residual_check(&jet, &map, &m, &[1e-1, 1e-2]).unwrap();
        assert!(r < 1e-10, "{r}");
    }

    #[test]
    fn perturbed_jet_residual_diverges() {
        let m = model(1, 16);
        let f = random_trig_scalar(m.spec(), 82, 1, 1.0, &[0, 1]);
        let map = scalar(f);
        let mut jet = solve_jet(&map, &m).unwrap();
        let one = GridScalar::constant(m.spec(), Complex64::ONE);
        jet.coeffs[0].comps[0] = jet.coeffs[0].comps[0].add(&one);
        // small enough r that the injected O(r) defect dominates the
        // log-term tail: ratio then grows like r^{-(n+1)} = r^{-2}
        let r1 = residual_check(&jet, &map, &m, &[1e-4]).unwrap();
        let r2 = residual_check(&jet, &map, &m, &[1e-5]).unwrap();
        let order = (r2 / r1).log10();
        assert!((1.6..2.4).contains(&order), "observed blow-up order {order}");
    }

    #[test]
    fn rescaled_structure_rejected() {
        let spec = GridSpec::cubic(3, 12, Scheme::Spectral).unwrap();
        let cf = heisenberg(1, &spec).unwrap();
        let u = GridScalar::from_real_fn(&spec, |p| 0.1 * (2.0 * PI * p[0]).sin());
        let s = solve_structure(&conformal_rescale(&cf, &u).unwrap()).unwrap();
        match flat_model_of(&s) {
            Err(Error::NotFlatModel(_)) => {}
            other => panic!("expected NotFlatModel, got {other:?}"),
        }
    }

    #[test]
    fn t_dependent_mode_consistency() {
        // consistency identities survive t-dependent data (same discrete
        // operators on both sides)
        let spec = GridSpec::cubic(3, 16, Scheme::Spectral).unwrap();
        let s = solve_structure(&heisenberg(1, &spec).unwrap()).unwrap();
        let m = flat_model_of(&s).unwrap();
        let f = GridScalar::from_real_fn(&spec, |p| {
            (2.0 * PI * p[2]).sin() * (2.0 * PI * p[0]).cos()
        });
        let jet = solve_jet(&scalar(f.clone()), &m).unwrap();
        let p = p1_scalar(&f, &s).unwrap();
        assert!(jet.log_coeff.comps[0].sub(&p).norm_inf() < 1e-10);
    }
}
