//! Temporary diagnostic: pin the torsion-term variant and the S_b sign by
//! direct numerical certification (covariance + invariance + gradient +
//! self-adjointness must all hold simultaneously).

use num_complex::Complex64;

use crlab::fields::random_trig_scalar;
use crlab::grid::{integrate, GridScalar, GridSpec, Scheme};
use crlab::mapcalc::*;
use crlab::paneitz::{scalar_map, section_l2_plain};
use crlab::structure::*;
use crlab::target::TargetMetric;

#[derive(Clone, Copy, Debug)]
struct TorsVariant {
    dir_holo: bool, // true: nabla_{T1}(A' T1 phi); false: nabla_{T1b}(A' T1b phi)
    conj: bool,     // A' = conj(torsion) instead of torsion
    sign: f64,      // overall sign of the 4 Im(...) term
    div_corr: bool, // include the frame-divergence insertion in p1's term
}

fn p1_var(map: &MapField, s: &PseudohermitianData, v: TorsVariant, sb_sign: f64) -> PullbackSection {
    let model = s.model();
    let tension = tension_b(map, s).unwrap();
    let d_t1 = covariant_apply(map, s.t1(), &tension, model).unwrap();
    let d_t1b = covariant_apply(map, s.t1b(), &tension, model).unwrap();
    let term1 = divergence_b(&d_t1, &d_t1b, map, s).unwrap().neg();
    let term2 = reeb_second(map, s).unwrap().neg();
    let mut out = term1.add(&term2);
    if s.torsion().norm_inf() > 1e-13 {
        let a = if v.conj { s.torsion().conj() } else { s.torsion().clone() };
        let dir = if v.dir_holo { s.t1() } else { s.t1b() };
        let dphi = frame_apply(map, dir, model);
        let weighted = dphi.scale_field(&a);
        let mut z = covariant_apply(map, dir, &weighted, model).unwrap();
        if v.div_corr {
            // div_vol(T_1b) = omega_bar(T_1b); conjugate pattern for T_1
            let div = if v.dir_holo {
                s.omega().pair(s.t1())
            } else {
                s.omega().conjugate(model).pair(s.t1b())
            };
            z = z.add(&weighted.scale_field(&div));
        }
        out = out.add(&z.imag().scale(Complex64::new(4.0 * v.sign, 0.0)));
    }
    if !map.target.is_flat() {
        let sb = s_b(&tension, map, s).unwrap();
        out = out.add(&sb.scale(Complex64::new(sb_sign, 0.0)));
    }
    out
}

fn f1_var(map: &MapField, s: &PseudohermitianData, v: TorsVariant) -> f64 {
    let model = s.model();
    let tension = tension_b(map, s).unwrap();
    let rphi = frame_apply(map, s.reeb(), model);
    // certified quadratic part: |R phi|^2 - |delta_b T phi|^2
    let mut integrand = h_pair(map, &rphi, &rphi).sub(&h_pair(map, &tension, &tension));
    if s.torsion().norm_inf() > 1e-13 {
        let a = if v.conj { s.torsion().conj() } else { s.torsion().clone() };
        let dir = if v.dir_holo { s.t1() } else { s.t1b() };
        let dphi = frame_apply(map, dir, model);
        let pair = h_pair(map, &dphi, &dphi);
        integrand = integrand.sub(&a.mul(&pair).imag().scale(Complex64::new(4.0 * v.sign, 0.0)));
    }
    -0.5 * integrate(&integrand, s.vol_density()).re
}

fn main() {
    let spec = GridSpec::cubic(3, 16, Scheme::Spectral).unwrap();
    let cf = heisenberg(1, &spec).unwrap();
    let u = GridScalar::from_real_fn(&spec, |p| {
        0.1 * (2.0 * std::f64::consts::PI * p[0]).sin()
            * (2.0 * std::f64::consts::PI * p[1]).sin()
    });
    let base = solve_structure(&cf).unwrap();
    let hat = solve_structure(&conformal_rescale(&cf, &u).unwrap()).unwrap();

    // t-independent scalar data keeps every ingredient band-limited
    let f = random_trig_scalar(&spec, 11, 1, 1.0, &[0, 1]);
    let g = random_trig_scalar(&spec, 32, 1, 0.8, &[0, 1]);
    let map = scalar_map(f.clone());
    let dot = PullbackSection::from_comps(TargetMetric::flat_torus(1), vec![g]);
    let factor = u.scale(Complex64::new(-4.0, 0.0)).map(|v| v.exp());

    let variants = {
        let mut vs = Vec::new();
        for dir_holo in [false, true] {
            for conj in [false, true] {
                for sign in [1.0f64, -1.0] {
                    for div_corr in [false, true] {
                        vs.push(TorsVariant { dir_holo, conj, sign, div_corr });
                    }
                }
            }
        }
        vs
    };

    println!("variant: dir(T1?) conj sign | covariance | selfadj(vol-hat) | invariance | gradient");
    let h = 1e-3;
    let g2 = random_trig_scalar(&spec, 33, 1, 0.8, &[0, 1]);
    for v in variants {
        // covariance
        let p = p1_var(&map, &base, v, 1.0);
        let ph = p1_var(&map, &hat, v, 1.0);
        let cov = section_l2_plain(&ph.sub(&p.scale_field(&factor))) / section_l2_plain(&p);
        // self-adjointness wrt vol-hat
        let map2 = scalar_map(g2.clone());
        let pg = p1_var(&map2, &hat, v, 1.0);
        let lhs = integrate(&f.mul(&pg.comps[0]), hat.vol_density()).re;
        let rhs = integrate(&g2.mul(&ph.comps[0]), hat.vol_density()).re;
        let asym = (lhs - rhs).abs() / (f.norm_l2() * g2.norm_l2());
        // invariance
        let inv = {
            let a = f1_var(&map, &base, v);
            let b = f1_var(&map, &hat, v);
            (b - a).abs() / (1.0 + a.abs())
        };
        // gradient (factor -1) on the torsionful structure
        let eval = |eps: f64| f1_var(&map.retract(&dot, eps).unwrap(), &hat, v);
        let d_eps = (eval(-2.0 * h) - 8.0 * eval(-h) + 8.0 * eval(h) - eval(2.0 * h)) / (12.0 * h);
        let pairing = integrate(&h_pair(&map, &dot, &ph), hat.vol_density()).re;
        let grad = (d_eps + pairing).abs() / (1.0 + d_eps.abs());
        println!(
            "T1={} conj={} sign={:+} div={}: cov {:.2e} | adj {:.2e} | inv {:.2e} | grad {:.2e}",
            v.dir_holo as u8, v.conj as u8, v.sign, v.div_corr as u8, cov, asym, inv, grad
        );
    }

    println!("\n== sphere target, flat structure: S_b sign via gradient (factor -1) ==");
    let tors0 = TorsVariant { dir_holo: false, conj: false, sign: 1.0, div_corr: false };
    let north = MapField::constant(base.model(), TargetMetric::Sphere2, &[0.0, 0.0, 1.0]).unwrap();
    let vx = random_trig_scalar(&spec, 41, 1, 0.25, &[0, 1]);
    let vy = random_trig_scalar(&spec, 42, 1, 0.25, &[0, 1]);
    let dir = PullbackSection::from_comps(
        TargetMetric::Sphere2,
        vec![vx, vy, GridScalar::zeros(&spec)],
    );
    let smap = north.retract(&dir, 1.0).unwrap();
    let wx = random_trig_scalar(&spec, 43, 1, 0.3, &[0, 1]);
    let wy = random_trig_scalar(&spec, 44, 1, 0.3, &[0, 1]);
    let wz = random_trig_scalar(&spec, 45, 1, 0.3, &[0, 1]);
    let raw = PullbackSection::from_comps(TargetMetric::Sphere2, vec![wx, wy, wz]);
    let phi_sec = PullbackSection::from_comps(TargetMetric::Sphere2, smap.comps.clone());
    let dcoef = h_pair(&smap, &raw, &phi_sec);
    let sdot = raw.sub(&phi_sec.scale_field(&dcoef));
    for sb in [1.0f64, -1.0] {
        let eval = |eps: f64| f1_var(&smap.retract(&sdot, eps).unwrap(), &base, tors0);
        let d_eps = (eval(-2.0 * h) - 8.0 * eval(-h) + 8.0 * eval(h) - eval(2.0 * h)) / (12.0 * h);
        let p = p1_var(&smap, &base, tors0, sb);
        let pairing = integrate(&h_pair(&smap, &sdot, &p), base.vol_density()).re;
        println!(
            "  sb_sign={sb:+}: d_eps={d_eps:+.6e}, pairing={pairing:+.6e}, |d_eps + pairing| = {:.3e}",
            (d_eps + pairing).abs()
        );
    }
}
