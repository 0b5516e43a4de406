//! Calculus of maps `phi: M -> N` on the grid: frame derivatives, the
//! pullback-connection covariant derivative, the horizontal divergence
//! `delta_b` (tensorial: frame Christoffels `omega_1^1` are inserted for the
//! frame index), the tension field, Reeb second derivatives, and the
//! curvature contraction `S_b`.

use ndarray::ArrayD;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::GridScalar;
use crate::structure::{FlatModel, FrameVectorField, PseudohermitianData};
use crate::target::TargetMetric;

/// A map from the model manifold into a Riemannian target. Components hold
/// real chart values (complex storage); torus-valued maps keep their winding
/// in the exact linear part, so coordinate charts differentiate cleanly.
#[derive(Debug, Clone)]
pub struct MapField {
    pub target: TargetMetric,
    pub comps: Vec<GridScalar>,
}

impl MapField {
    pub fn new(target: TargetMetric, comps: Vec<GridScalar>) -> Result<MapField> {
        if comps.len() != target.dim() {
            return Err(Error::DimensionMismatch(format!(
                "map with {} components into a dim-{} target",
                comps.len(),
                target.dim()
            )));
        }
        let map = MapField { target, comps };
        if map.target.is_sphere() {
            let dev = map.sphere_norm_deviation();
            if dev > 1e-10 {
                return Err(Error::FrameMismatch(format!(
                    "sphere-valued map off the unit sphere by {dev:.3e}"
                )));
            }
        }
        Ok(map)
    }

    /// Bundle projection onto the horizontal coordinates:
    /// `(x_1, y_1, .., x_n, y_n, t) -> (x_1, .., y_n)` into the flat torus.
    pub fn projection(model: &FlatModel) -> MapField {
        let comps = (0..2 * model.n())
            .map(|a| GridScalar::coordinate(model.spec(), a))
            .collect();
        MapField {
            target: TargetMetric::flat_torus(2 * model.n()),
            comps,
        }
    }

    /// The identity chart map into the Webster metric target (n = 1).
    pub fn identity(model: &FlatModel) -> Result<MapField> {
        if model.n() != 1 {
            return Err(Error::DimensionMismatch(
                "identity map into the Webster target needs n = 1".into(),
            ));
        }
        let comps = (0..3)
            .map(|a| GridScalar::coordinate(model.spec(), a))
            .collect();
        Ok(MapField {
            target: TargetMetric::Webster,
            comps,
        })
    }

    pub fn constant(model: &FlatModel, target: TargetMetric, values: &[f64]) -> Result<MapField> {
        let comps = values
            .iter()
            .map(|&v| GridScalar::constant(model.spec(), Complex64::new(v, 0.0)))
            .collect();
        MapField::new(target, comps)
    }

    pub fn dim(&self) -> usize {
        self.comps.len()
    }

    fn sphere_norm_deviation(&self) -> f64 {
        let vals = self.materialized();
        let mut dev: f64 = 0.0;
        for p in 0..vals[0].len() {
            let n2: f64 = vals.iter().map(|c| c.as_slice().unwrap()[p].re.powi(2)).sum();
            dev = dev.max((n2 - 1.0).abs());
        }
        dev
    }

    /// Materialized component arrays (linear parts folded in).
    pub fn materialized(&self) -> Vec<ArrayD<Complex64>> {
        self.comps
            .iter()
            .map(|c| c.materialize().periodic_values().clone())
            .collect()
    }

    /// Retract along a real section: pointwise target exponential.
    pub fn retract(&self, dir: &PullbackSection, step: f64) -> Result<MapField> {
        if let TargetMetric::FlatTorus { .. } = self.target {
            // additive; windings in the linear part survive untouched
            let comps = self
                .comps
                .iter()
                .zip(&dir.comps)
                .map(|(c, d)| c.add(&d.scale(Complex64::new(step, 0.0))))
                .collect();
            return Ok(MapField {
                target: self.target.clone(),
                comps,
            });
        }
        let base = self.materialized();
        let dirv = dir.materialized();
        let m = self.dim();
        let npts = base[0].len();
        let mut out = vec![GridScalar::zeros(self.comps[0].spec()); m];
        let mut p = vec![0.0; m];
        let mut v = vec![0.0; m];
        {
            let mut oslices: Vec<&mut [Complex64]> = out
                .iter_mut()
                .map(|c| c.periodic_values_mut().as_slice_mut().unwrap())
                .collect();
            for idx in 0..npts {
                for k in 0..m {
                    p[k] = base[k].as_slice().unwrap()[idx].re;
                    v[k] = dirv[k].as_slice().unwrap()[idx].re * step;
                }
                let q = self.target.exp_at(&p, &v)?;
                for k in 0..m {
                    oslices[k][idx] = Complex64::new(q[k], 0.0);
                }
            }
        }
        MapField::new(self.target.clone(), out)
    }
}

/// Section of the (complexified) pullback bundle `phi^* TN`.
#[derive(Debug, Clone)]
pub struct PullbackSection {
    pub target: TargetMetric,
    pub comps: Vec<GridScalar>,
}

impl PullbackSection {
    pub fn zeros(map: &MapField) -> PullbackSection {
        PullbackSection {
            target: map.target.clone(),
            comps: vec![GridScalar::zeros(map.comps[0].spec()); map.dim()],
        }
    }

    pub fn from_comps(target: TargetMetric, comps: Vec<GridScalar>) -> PullbackSection {
        PullbackSection { target, comps }
    }

    pub fn add(&self, o: &PullbackSection) -> PullbackSection {
        PullbackSection {
            target: self.target.clone(),
            comps: self
                .comps
                .iter()
                .zip(&o.comps)
                .map(|(a, b)| a.add(b))
                .collect(),
        }
    }

    pub fn sub(&self, o: &PullbackSection) -> PullbackSection {
        PullbackSection {
            target: self.target.clone(),
            comps: self
                .comps
                .iter()
                .zip(&o.comps)
                .map(|(a, b)| a.sub(b))
                .collect(),
        }
    }

    pub fn scale(&self, c: Complex64) -> PullbackSection {
        PullbackSection {
            target: self.target.clone(),
            comps: self.comps.iter().map(|v| v.scale(c)).collect(),
        }
    }

    pub fn scale_field(&self, f: &GridScalar) -> PullbackSection {
        PullbackSection {
            target: self.target.clone(),
            comps: self.comps.iter().map(|v| v.mul(f)).collect(),
        }
    }

    pub fn conj(&self) -> PullbackSection {
        PullbackSection {
            target: self.target.clone(),
            comps: self.comps.iter().map(|v| v.conj()).collect(),
        }
    }

    pub fn neg(&self) -> PullbackSection {
        self.scale(Complex64::new(-1.0, 0.0))
    }

    /// Componentwise imaginary part `(Z - conj Z) / 2i` as a real section.
    pub fn imag(&self) -> PullbackSection {
        self.sub(&self.conj()).scale(Complex64::new(0.0, -0.5))
    }

    pub fn norm_inf(&self) -> f64 {
        self.comps.iter().map(|c| c.norm_inf()).fold(0.0, f64::max)
    }

    /// Largest componentwise imaginary part (sanity check on real sections).
    pub fn imag_norm_inf(&self) -> f64 {
        self.comps
            .iter()
            .map(|c| c.imag().norm_inf())
            .fold(0.0, f64::max)
    }

    pub fn materialized(&self) -> Vec<ArrayD<Complex64>> {
        self.comps
            .iter()
            .map(|c| c.materialize().periodic_values().clone())
            .collect()
    }
}

/// Tangential projection against a (real, unit) sphere-valued base map,
/// complex-bilinear in the section: `s - <s, phi> phi`.
fn sphere_project(map: &MapField, s: PullbackSection) -> PullbackSection {
    let base = map.materialized();
    let mut comps: Vec<GridScalar> = s
        .comps
        .iter()
        .map(|c| c.materialize())
        .collect();
    let npts = base[0].len();
    let m = comps.len();
    let mut svals: Vec<&mut [Complex64]> = comps
        .iter_mut()
        .map(|c| c.periodic_values_mut().as_slice_mut().unwrap())
        .collect();
    for p in 0..npts {
        let mut dot = Complex64::ZERO;
        for k in 0..m {
            dot += svals[k][p] * base[k].as_slice().unwrap()[p];
        }
        for k in 0..m {
            let b = base[k].as_slice().unwrap()[p];
            svals[k][p] -= dot * b;
        }
    }
    PullbackSection {
        target: s.target,
        comps,
    }
}

/// Differential of the map along a frame field: `V phi` componentwise, with
/// tangential projection for sphere targets to kill discretization leakage.
pub fn frame_apply(map: &MapField, v: &FrameVectorField, model: &FlatModel) -> PullbackSection {
    let comps = map.comps.iter().map(|c| v.apply(model, c)).collect();
    let s = PullbackSection {
        target: map.target.clone(),
        comps,
    };
    if map.target.is_sphere() {
        sphere_project(map, s)
    } else {
        s
    }
}

/// Pullback covariant derivative `nabla^{phi^* h}_V s`.
///
/// Flat targets: componentwise derivative. Sphere: tangential projection of
/// the ambient derivative. Chart/Webster: `V s^k + Gamma^k_{ij}(phi) (V phi)^i s^j`.
pub fn covariant_apply(
    map: &MapField,
    v: &FrameVectorField,
    s: &PullbackSection,
    model: &FlatModel,
) -> Result<PullbackSection> {
    check_section(map, s)?;
    let deriv: Vec<GridScalar> = s.comps.iter().map(|c| v.apply(model, c)).collect();
    let out = PullbackSection {
        target: map.target.clone(),
        comps: deriv,
    };
    match &map.target {
        TargetMetric::FlatTorus { .. } => Ok(out),
        TargetMetric::Sphere2 => Ok(sphere_project(map, out)),
        _ => {
            let vphi = frame_apply(map, v, model);
            Ok(out.add(&christoffel_correction(map, &vphi, s)?))
        }
    }
}

/// `Gamma^k_{ij}(phi) a^i b^j` as a section (complex-bilinear in `a`, `b`).
fn christoffel_correction(
    map: &MapField,
    a: &PullbackSection,
    b: &PullbackSection,
) -> Result<PullbackSection> {
    let m = map.dim();
    let base = map.materialized();
    let av = a.materialized();
    let bv = b.materialized();
    let npts = base[0].len();
    let mut out = vec![GridScalar::zeros(map.comps[0].spec()); m];
    let mut pt = vec![0.0; m];
    {
        let mut oslices: Vec<&mut [Complex64]> = out
            .iter_mut()
            .map(|c| c.periodic_values_mut().as_slice_mut().unwrap())
            .collect();
        for p in 0..npts {
            for k in 0..m {
                pt[k] = base[k].as_slice().unwrap()[p].re;
            }
            let gam = map.target.christoffel_at(&pt);
            for k in 0..m {
                let mut acc = Complex64::ZERO;
                for i in 0..m {
                    let ai = av[i].as_slice().unwrap()[p];
                    if ai == Complex64::ZERO {
                        continue;
                    }
                    for j in 0..m {
                        let g = gam[k * m * m + i * m + j];
                        if g != 0.0 {
                            acc += g * ai * bv[j].as_slice().unwrap()[p];
                        }
                    }
                }
                oslices[k][p] = acc;
            }
        }
    }
    Ok(PullbackSection {
        target: map.target.clone(),
        comps: out,
    })
}

fn check_section(map: &MapField, s: &PullbackSection) -> Result<()> {
    if !map.target.compatible(&s.target) || s.comps.len() != map.dim() {
        return Err(Error::FrameMismatch(
            "section not based along the given map".into(),
        ));
    }
    if map.comps[0].spec() != s.comps[0].spec() {
        return Err(Error::FrameMismatch(
            "section and map live on different grids".into(),
        ));
    }
    Ok(())
}

/// Tensorial horizontal divergence of a frame-indexed pair
/// `(omega(T_1), omega(T_1bar))`:
///
/// ```text
/// delta_b omega = -nabla_{T_1}(omega(T_1b)) + omega_{1b}^{1b}(T_1) omega(T_1b)
///                 -nabla_{T_1b}(omega(T_1)) + omega_1^1(T_1b)  omega(T_1)
/// ```
pub fn divergence_b(
    w_t1: &PullbackSection,
    w_t1b: &PullbackSection,
    map: &MapField,
    s: &PseudohermitianData,
) -> Result<PullbackSection> {
    check_section(map, w_t1)?;
    check_section(map, w_t1b)?;
    let model = s.model();
    let d1 = covariant_apply(map, s.t1(), w_t1b, model)?;
    let d2 = covariant_apply(map, s.t1b(), w_t1, model)?;
    let mut out = d1.neg().sub(&d2);
    if s.omega().norm_inf() > 0.0 {
        let c_t1b = s.omega_at_t1b(); // omega_1^1(T_1b)
        let c_t1 = s.omega_bar_at_t1(); // omega_{1b}^{1b}(T_1)
        out = out
            .add(&w_t1b.scale_field(&c_t1))
            .add(&w_t1.scale_field(&c_t1b));
    }
    Ok(out)
}

/// Tension field `delta_b T phi` (divergence of the horizontal differential).
pub fn tension_b(map: &MapField, s: &PseudohermitianData) -> Result<PullbackSection> {
    let model = s.model();
    let w_t1 = frame_apply(map, s.t1(), model);
    let w_t1b = frame_apply(map, s.t1b(), model);
    divergence_b(&w_t1, &w_t1b, map, s)
}

/// `nabla^{phi^* h}_R (R phi)`.
pub fn reeb_second(map: &MapField, s: &PseudohermitianData) -> Result<PullbackSection> {
    let model = s.model();
    let rphi = frame_apply(map, s.reeb(), model);
    covariant_apply(map, s.reeb(), &rphi, model)
}

/// Curvature contraction
/// `S_b(X) = R^h(X, T_1 phi) T_1b phi + R^h(X, T_1b phi) T_1 phi`.
pub fn s_b(
    x: &PullbackSection,
    map: &MapField,
    s: &PseudohermitianData,
) -> Result<PullbackSection> {
    check_section(map, x)?;
    if map.target.is_flat() {
        return Ok(PullbackSection::zeros(map));
    }
    let model = s.model();
    let t1phi = frame_apply(map, s.t1(), model);
    let t1bphi = frame_apply(map, s.t1b(), model);
    let m = map.dim();
    let base = map.materialized();
    let xv = x.materialized();
    let av = t1phi.materialized();
    let bv = t1bphi.materialized();
    let npts = base[0].len();
    let mut out = vec![GridScalar::zeros(map.comps[0].spec()); m];
    let mut pt = vec![0.0; m];
    let mut xs = vec![Complex64::ZERO; m];
    let mut as_ = vec![Complex64::ZERO; m];
    let mut bs = vec![Complex64::ZERO; m];
    {
        let mut oslices: Vec<&mut [Complex64]> = out
            .iter_mut()
            .map(|c| c.periodic_values_mut().as_slice_mut().unwrap())
            .collect();
        for p in 0..npts {
            for k in 0..m {
                pt[k] = base[k].as_slice().unwrap()[p].re;
                xs[k] = xv[k].as_slice().unwrap()[p];
                as_[k] = av[k].as_slice().unwrap()[p];
                bs[k] = bv[k].as_slice().unwrap()[p];
            }
            let r1 = map.target.curvature_at(&pt, &xs, &as_, &bs);
            let r2 = map.target.curvature_at(&pt, &xs, &bs, &as_);
            for k in 0..m {
                oslices[k][p] = r1[k] + r2[k];
            }
        }
    }
    Ok(PullbackSection {
        target: map.target.clone(),
        comps: out,
    })
}

/// Complex-bilinear metric pairing `h(s1, s2)` along the map, pointwise.
pub fn h_pair(map: &MapField, s1: &PullbackSection, s2: &PullbackSection) -> GridScalar {
    match &map.target {
        TargetMetric::FlatTorus { .. } | TargetMetric::Sphere2 => {
            let mut acc = GridScalar::zeros(map.comps[0].spec());
            for (a, b) in s1.comps.iter().zip(&s2.comps) {
                acc = acc.add(&a.mul(b));
            }
            acc
        }
        _ => {
            let m = map.dim();
            let base = map.materialized();
            let av = s1.materialized();
            let bv = s2.materialized();
            let npts = base[0].len();
            let mut out = GridScalar::zeros(map.comps[0].spec());
            let mut pt = vec![0.0; m];
            {
                let ovals = out.periodic_values_mut().as_slice_mut().unwrap();
                for p in 0..npts {
                    for k in 0..m {
                        pt[k] = base[k].as_slice().unwrap()[p].re;
                    }
                    let g = map.target.metric_at(&pt);
                    let mut acc = Complex64::ZERO;
                    for i in 0..m {
                        for j in 0..m {
                            let gij = g[i * m + j];
                            if gij != 0.0 {
                                acc += gij
                                    * av[i].as_slice().unwrap()[p]
                                    * bv[j].as_slice().unwrap()[p];
                            }
                        }
                    }
                    ovals[p] = acc;
                }
            }
            out
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{integrate, GridScalar, GridSpec, Scheme};
    use crate::structure::{conformal_rescale, heisenberg, solve_structure};
    use std::f64::consts::PI;

    fn flat_structure(npts: usize) -> PseudohermitianData {
        let s = GridSpec::cubic(3, npts, Scheme::Spectral).unwrap();
        let cf = heisenberg(1, &s).unwrap();
        solve_structure(&cf).unwrap()
    }

    fn scalar_map(f: GridScalar) -> MapField {
        MapField::new(TargetMetric::flat_torus(1), vec![f]).unwrap()
    }

    #[test]
    fn frame_apply_projection_is_constant() {
        let s = flat_structure(8);
        let map = MapField::projection(s.model());
        let t1phi = frame_apply(&map, s.t1(), s.model());
        let c = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        let want0 = GridScalar::constant(s.spec(), c);
        let want1 = GridScalar::constant(s.spec(), -c * Complex64::new(0.0, 1.0));
        assert_eq!(t1phi.comps[0].sub(&want0).norm_inf(), 0.0);
        assert_eq!(t1phi.comps[1].sub(&want1).norm_inf(), 0.0);
    }

    #[test]
    fn frame_apply_constant_map_vanishes() {
        let s = flat_structure(8);
        let map = MapField::constant(s.model(), TargetMetric::flat_torus(2), &[0.3, 0.7]).unwrap();
        assert_eq!(frame_apply(&map, s.t1(), s.model()).norm_inf(), 0.0);
    }

    #[test]
    fn reeb_frame_apply_is_dt() {
        let s = flat_structure(12);
        let f = GridScalar::from_real_fn(s.spec(), |p| (2.0 * PI * p[2]).sin());
        let map = scalar_map(f);
        let rphi = frame_apply(&map, s.reeb(), s.model());
        let want = GridScalar::from_real_fn(s.spec(), |p| 2.0 * PI * (2.0 * PI * p[2]).cos());
        assert!(rphi.comps[0].sub(&want).norm_inf() < 1e-10);
    }

    #[test]
    fn conjugation_symmetry_bitwise() {
        let s = flat_structure(8);
        let f = GridScalar::from_real_fn(s.spec(), |p| {
            (2.0 * PI * p[0]).sin() * (2.0 * PI * p[1]).cos()
        });
        let map = scalar_map(f);
        let a = frame_apply(&map, s.t1(), s.model());
        let b = frame_apply(&map, s.t1b(), s.model());
        assert_eq!(a.conj().comps[0].sub(&b.comps[0]).norm_inf(), 0.0);
    }

    #[test]
    fn divergence_of_differential_matches_composed_operator() {
        let s = flat_structure(12);
        let f = GridScalar::from_real_fn(s.spec(), |p| {
            (2.0 * PI * p[0]).sin() * (2.0 * PI * p[1]).sin() + (2.0 * PI * p[2]).cos()
        });
        let map = scalar_map(f.clone());
        let tension = tension_b(&map, &s).unwrap();
        let m = s.model();
        let oracle = m
            .t_apply(&m.tbar_apply(&f, 0), 0)
            .add(&m.tbar_apply(&m.t_apply(&f, 0), 0))
            .neg();
        assert!(tension.comps[0].sub(&oracle).norm_inf() < 1e-11);
    }

    #[test]
    fn divergence_of_zero_is_zero() {
        let s = flat_structure(8);
        let map = MapField::projection(s.model());
        let z = PullbackSection::zeros(&map);
        let d = divergence_b(&z, &z, &map, &s).unwrap();
        assert_eq!(d.norm_inf(), 0.0);
    }

    #[test]
    fn tension_of_projection_vanishes() {
        let s = flat_structure(8);
        let map = MapField::projection(s.model());
        assert!(tension_b(&map, &s).unwrap().norm_inf() < 1e-13);
    }

    #[test]
    fn tension_of_identity_into_webster_vanishes() {
        let s = flat_structure(8);
        let map = MapField::identity(s.model()).unwrap();
        let t = tension_b(&map, &s).unwrap();
        assert!(t.norm_inf() < 1e-12, "{}", t.norm_inf());
    }

    #[test]
    fn tension_of_constant_vanishes() {
        let s = flat_structure(8);
        let map = MapField::constant(s.model(), TargetMetric::flat_torus(2), &[0.1, 0.9]).unwrap();
        assert_eq!(tension_b(&map, &s).unwrap().norm_inf(), 0.0);
    }

    #[test]
    fn reeb_second_examples() {
        let s = flat_structure(12);
        // t-independent scalar
        let f = GridScalar::from_real_fn(s.spec(), |p| (2.0 * PI * p[0]).sin());
        assert!(reeb_second(&scalar_map(f), &s).unwrap().norm_inf() < 1e-12);
        // sin(2 pi t) -> -4 pi^2 sin(2 pi t)
        let f = GridScalar::from_real_fn(s.spec(), |p| (2.0 * PI * p[2]).sin());
        let r2 = reeb_second(&scalar_map(f.clone()), &s).unwrap();
        let want = f.scale(Complex64::new(-4.0 * PI * PI, 0.0));
        assert!(r2.comps[0].sub(&want).norm_inf() < 1e-9);
    }

    fn sphere_test_map(s: &PseudohermitianData) -> MapField {
        let spec = s.spec();
        let vx = GridScalar::from_real_fn(spec, |p| 0.3 * (2.0 * PI * p[0]).sin());
        let vy = GridScalar::from_real_fn(spec, |p| 0.2 * (2.0 * PI * p[1]).cos());
        let north = MapField::constant(s.model(), TargetMetric::Sphere2, &[0.0, 0.0, 1.0]).unwrap();
        let dir = PullbackSection::from_comps(
            TargetMetric::Sphere2,
            vec![vx, vy, GridScalar::zeros(spec)],
        );
        north.retract(&dir, 1.0).unwrap()
    }

    #[test]
    fn sphere_sections_stay_tangential() {
        let s = flat_structure(8);
        let map = sphere_test_map(&s);
        let t1phi = frame_apply(&map, s.t1(), s.model());
        let rphi = frame_apply(&map, s.reeb(), s.model());
        let r2 = reeb_second(&map, &s).unwrap();
        for sec in [&t1phi, &rphi, &r2] {
            let dot = h_pair(
                &map,
                sec,
                &PullbackSection::from_comps(TargetMetric::Sphere2, map.comps.clone()),
            );
            assert!(dot.norm_inf() < 1e-12, "{}", dot.norm_inf());
        }
    }

    #[test]
    fn s_b_flat_target_zero_and_sphere_formula() {
        let s = flat_structure(8);
        let flat = MapField::projection(s.model());
        let x = frame_apply(&flat, s.reeb(), s.model());
        assert_eq!(s_b(&x, &flat, &s).unwrap().norm_inf(), 0.0);

        let map = sphere_test_map(&s);
        let zero = PullbackSection::zeros(&map);
        assert_eq!(s_b(&zero, &map, &s).unwrap().norm_inf(), 0.0);

        // cross-check one point against the constant-curvature formula
        let x = frame_apply(&map, s.reeb(), s.model());
        let sb = s_b(&x, &map, &s).unwrap();
        let t1phi = frame_apply(&map, s.t1(), s.model());
        let t1bphi = frame_apply(&map, s.t1b(), s.model());
        let idx = [2usize, 3, 1];
        let get = |sec: &PullbackSection, k: usize| sec.comps[k].value_at(&idx);
        let dot = |a: &PullbackSection, b: &PullbackSection| -> Complex64 {
            (0..3).map(|k| get(a, k) * get(b, k)).sum()
        };
        for k in 0..3 {
            let want = dot(&t1phi, &t1bphi) * get(&x, k) - dot(&x, &t1bphi) * get(&t1phi, k)
                + dot(&t1bphi, &t1phi) * get(&x, k)
                - dot(&x, &t1phi) * get(&t1bphi, k);
            assert!((get(&sb, k) - want).norm() < 1e-12);
        }
    }

    #[test]
    fn tension_and_sb_real_for_real_data() {
        let s = flat_structure(8);
        let map = sphere_test_map(&s);
        let tension = tension_b(&map, &s).unwrap();
        assert!(tension.imag_norm_inf() < 1e-10);
        let sb = s_b(&tension, &map, &s).unwrap();
        assert!(sb.imag_norm_inf() < 1e-10);
    }

    #[test]
    fn integration_by_parts_flat() {
        let s = flat_structure(12);
        let spec = s.spec();
        // scalar sections over the flat structure
        let f = GridScalar::from_real_fn(spec, |p| {
            (2.0 * PI * p[0]).sin() * (2.0 * PI * p[1]).cos()
        });
        let g = GridScalar::from_real_fn(spec, |p| {
            (2.0 * PI * p[1]).sin() + 0.5 * (2.0 * PI * p[0]).cos()
        });
        let map = scalar_map(f.clone());
        let w_t1 = frame_apply(&map, s.t1(), s.model());
        let w_t1b = frame_apply(&map, s.t1b(), s.model());
        let div = divergence_b(&w_t1, &w_t1b, &map, &s).unwrap();
        let sec = PullbackSection::from_comps(TargetMetric::flat_torus(1), vec![g.clone()]);
        let lhs = integrate(&h_pair(&map, &div, &sec).materialize(), s.vol_density());
        // frame-contracted pairing <omega, nabla s>
        let dg_t1 = covariant_apply(&map, s.t1(), &sec, s.model()).unwrap();
        let dg_t1b = covariant_apply(&map, s.t1b(), &sec, s.model()).unwrap();
        let rhs_f = h_pair(&map, &w_t1, &dg_t1b).add(&h_pair(&map, &w_t1b, &dg_t1));
        let rhs = integrate(&rhs_f, s.vol_density());
        assert!((lhs - rhs).norm() < 1e-8, "{lhs} vs {rhs}");
    }

    #[test]
    fn integration_by_parts_rescaled() {
        let spec = GridSpec::cubic(3, 16, Scheme::Spectral).unwrap();
        let cf = heisenberg(1, &spec).unwrap();
        let u = GridScalar::from_real_fn(&spec, |p| {
            0.1 * (2.0 * PI * p[0]).sin() * (2.0 * PI * p[1]).sin()
        });
        let s = solve_structure(&conformal_rescale(&cf, &u).unwrap()).unwrap();
        let f = GridScalar::from_real_fn(&spec, |p| {
            (2.0 * PI * p[0]).sin() * (2.0 * PI * p[1]).cos()
        });
        let g = GridScalar::from_real_fn(&spec, |p| (2.0 * PI * p[1]).sin());
        let map = scalar_map(f);
        let w_t1 = frame_apply(&map, s.t1(), s.model());
        let w_t1b = frame_apply(&map, s.t1b(), s.model());
        let div = divergence_b(&w_t1, &w_t1b, &map, &s).unwrap();
        let sec = PullbackSection::from_comps(TargetMetric::flat_torus(1), vec![g]);
        let lhs = integrate(&h_pair(&map, &div, &sec), s.vol_density());
        let dg_t1 = covariant_apply(&map, s.t1(), &sec, s.model()).unwrap();
        let dg_t1b = covariant_apply(&map, s.t1b(), &sec, s.model()).unwrap();
        let rhs_f = h_pair(&map, &w_t1, &dg_t1b).add(&h_pair(&map, &w_t1b, &dg_t1));
        let rhs = integrate(&rhs_f, s.vol_density());
        assert!(
            (lhs - rhs).norm() < 1e-6 * (1.0 + lhs.norm()),
            "{lhs} vs {rhs}"
        );
    }

    #[test]
    fn metric_compatibility_of_pullback_derivative() {
        let s = flat_structure(12);
        let spec = s.spec();
        // smooth non-winding map into the Webster chart
        let comps = vec![
            GridScalar::from_real_fn(spec, |p| 0.2 * (2.0 * PI * p[0]).sin()),
            GridScalar::from_real_fn(spec, |p| 0.3 * (2.0 * PI * p[1]).cos()),
            GridScalar::from_real_fn(spec, |p| 0.1 * (2.0 * PI * p[0]).cos()),
        ];
        let map = MapField::new(TargetMetric::Webster, comps).unwrap();
        let s1 = frame_apply(&map, s.reeb(), s.model());
        let s1 = PullbackSection::from_comps(
            map.target.clone(),
            vec![
                GridScalar::from_real_fn(spec, |p| (2.0 * PI * p[1]).sin()),
                s1.comps[1].clone(),
                GridScalar::constant(spec, Complex64::new(0.2, 0.0)),
            ],
        );
        let s2 = PullbackSection::from_comps(
            map.target.clone(),
            vec![
                GridScalar::constant(spec, Complex64::new(-0.4, 0.0)),
                GridScalar::from_real_fn(spec, |p| (2.0 * PI * p[0]).cos()),
                GridScalar::from_real_fn(spec, |p| 0.3 * (2.0 * PI * p[1]).sin()),
            ],
        );
        let v = s.t1();
        let lhs = v.apply(s.model(), &h_pair(&map, &s1, &s2));
        let d1 = covariant_apply(&map, v, &s1, s.model()).unwrap();
        let d2 = covariant_apply(&map, v, &s2, s.model()).unwrap();
        let rhs = h_pair(&map, &d1, &s2).add(&h_pair(&map, &s1, &d2));
        let err = lhs.sub(&rhs).norm_inf();
        assert!(err < 1e-6, "metric compatibility residual {err}");
    }
}
