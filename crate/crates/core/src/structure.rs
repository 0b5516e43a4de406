//! Pseudohermitian model structures on the periodic Heisenberg lattice and
//! the Tanaka-Webster data (Reeb field, connection form, torsion, scalar
//! curvature) derived from a contact coframe by pointwise structure-equation
//! solves.
//!
//! Forms are stored by their components in the *background adapted cobasis*
//! of the flat model,
//!
//! ```text
//! E^0 = dt - sum_a y_a dx_a,    E^a = (dx_a + i dy_a)/sqrt(2),    E^{a-bar} = conj(E^a),
//! ```
//!
//! whose exterior derivatives are the exact constants `d E^0 = i sum_a E^a ^ E^{a-bar}`,
//! `d E^a = 0`. Component functions of every built-in structure are smooth
//! and periodic in this basis, so grid derivatives never touch the sawtooth
//! that the bare coordinate `y` presents on the torus; the coordinate `y`
//! enters only through pointwise multiplications inside the frame fields
//! `T_a = (1/sqrt(2)) ((d_x_a + y_a d_t) - i d_y_a)` and through exact
//! pointwise basis conversions.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{
    form_pairs, pair_index, CoordOneForm, CoordTwoForm, GridScalar, GridSpec, Scheme,
    pointwise_solve,
};

const I: Complex64 = Complex64::new(0.0, 1.0);
const SQRT2_INV: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// Residual tolerance for structure-equation and normalization checks.
/// Spectral grids resolve the built-in data to roundoff; fd4 residuals decay
/// at fourth order, so the gate scales with the coarsest spacing.
pub fn residual_tol(spec: &GridSpec) -> f64 {
    match spec.scheme() {
        Scheme::Spectral => 1e-8,
        Scheme::Fd4 => {
            let h = spec.max_spacing();
            (200.0 * h.powi(4)).max(1e-8)
        }
    }
}

/// The flat Heisenberg model H^n on a `2n+1`-axis periodic grid: coordinate
/// layout `x_1, y_1, .., x_n, y_n, t` and the background frame operators.
#[derive(Debug, Clone, PartialEq)]
pub struct FlatModel {
    n: usize,
    spec: GridSpec,
}

impl FlatModel {
    pub fn new(n: usize, spec: GridSpec) -> Result<FlatModel> {
        if n == 0 {
            return Err(Error::InvalidGrid("need n >= 1".into()));
        }
        if spec.ndim() != 2 * n + 1 {
            return Err(Error::DimensionMismatch(format!(
                "Heisenberg model with n = {n} needs {} axes, grid has {}",
                2 * n + 1,
                spec.ndim()
            )));
        }
        Ok(FlatModel { n, spec })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn ndim(&self) -> usize {
        2 * self.n + 1
    }

    pub fn x_axis(&self, a: usize) -> usize {
        2 * a
    }

    pub fn y_axis(&self, a: usize) -> usize {
        2 * a + 1
    }

    pub fn t_axis(&self) -> usize {
        2 * self.n
    }

    /// Reeb direction of the flat model: `d_t`.
    pub fn r_apply(&self, f: &GridScalar) -> GridScalar {
        f.derivative(self.t_axis())
    }

    /// `T_a f = (1/sqrt(2)) (d_x_a f + y_a d_t f - i d_y_a f)`.
    pub fn t_apply(&self, f: &GridScalar, a: usize) -> GridScalar {
        let dx = f.derivative(self.x_axis(a));
        let ydt = f.derivative(self.t_axis()).mul_coord(self.y_axis(a));
        let dy = f.derivative(self.y_axis(a));
        dx.add(&ydt)
            .sub(&dy.scale(I))
            .scale(Complex64::new(SQRT2_INV, 0.0))
    }

    /// Conjugate frame field, realized as `conj . T_a . conj` so that
    /// conjugation symmetry is bitwise exact.
    pub fn tbar_apply(&self, f: &GridScalar, a: usize) -> GridScalar {
        self.t_apply(&f.conj(), a).conj()
    }

    /// Frame application by background slot index: `0` is the Reeb slot,
    /// `1..=n` the holomorphic slots, `n+1..=2n` the conjugates.
    pub fn slot_apply(&self, f: &GridScalar, slot: usize) -> GridScalar {
        if slot == 0 {
            self.r_apply(f)
        } else if slot <= self.n {
            self.t_apply(f, slot - 1)
        } else {
            self.tbar_apply(f, slot - self.n - 1)
        }
    }

    /// Background slot of the conjugated frame direction.
    pub fn conj_slot(&self, slot: usize) -> usize {
        if slot == 0 {
            0
        } else if slot <= self.n {
            slot + self.n
        } else {
            slot - self.n
        }
    }

    /// Flat sub-Laplacian `delta_b d f = -sum_a (T_a Tbar_a + Tbar_a T_a) f`.
    pub fn sub_laplacian(&self, f: &GridScalar) -> GridScalar {
        let mut acc = GridScalar::zeros(&self.spec);
        for a in 0..self.n {
            let tb = self.tbar_apply(f, a);
            let t = self.t_apply(f, a);
            acc = acc.add(&self.t_apply(&tb, a)).add(&self.tbar_apply(&t, a));
        }
        acc.neg()
    }

    /// `R^2 f = d_t^2 f`.
    pub fn r2(&self, f: &GridScalar) -> GridScalar {
        self.r_apply(&self.r_apply(f))
    }

    /// Density of the contact volume `theta ^ (d theta)^n` against the
    /// coordinate volume: the constant `n!`.
    pub fn vol_density(&self) -> f64 {
        (1..=self.n).product::<usize>() as f64
    }
}

/// One-form by components in the background adapted cobasis.
#[derive(Debug, Clone)]
pub struct FrameOneForm {
    pub comps: Vec<GridScalar>,
}

impl FrameOneForm {
    pub fn zeros(model: &FlatModel) -> FrameOneForm {
        FrameOneForm {
            comps: vec![GridScalar::zeros(model.spec()); model.ndim()],
        }
    }

    /// Basis covector `E^slot`.
    pub fn basis(model: &FlatModel, slot: usize) -> FrameOneForm {
        let mut f = FrameOneForm::zeros(model);
        f.comps[slot] = GridScalar::constant(model.spec(), Complex64::ONE);
        f
    }

    pub fn add(&self, o: &FrameOneForm) -> FrameOneForm {
        FrameOneForm {
            comps: self
                .comps
                .iter()
                .zip(&o.comps)
                .map(|(a, b)| a.add(b))
                .collect(),
        }
    }

    pub fn sub(&self, o: &FrameOneForm) -> FrameOneForm {
        FrameOneForm {
            comps: self
                .comps
                .iter()
                .zip(&o.comps)
                .map(|(a, b)| a.sub(b))
                .collect(),
        }
    }

    /// Multiply every component by a grid function.
    pub fn scale_field(&self, f: &GridScalar) -> FrameOneForm {
        FrameOneForm {
            comps: self.comps.iter().map(|c| c.mul(f)).collect(),
        }
    }

    pub fn scale(&self, c: Complex64) -> FrameOneForm {
        FrameOneForm {
            comps: self.comps.iter().map(|v| v.scale(c)).collect(),
        }
    }

    /// Complex conjugate form: conjugate components and swap barred slots.
    pub fn conjugate(&self, model: &FlatModel) -> FrameOneForm {
        let mut comps = vec![GridScalar::zeros(model.spec()); self.comps.len()];
        for (slot, c) in self.comps.iter().enumerate() {
            comps[model.conj_slot(slot)] = c.conj();
        }
        FrameOneForm { comps }
    }

    /// Pairing with a frame vector field.
    pub fn pair(&self, v: &FrameVectorField) -> GridScalar {
        let mut acc = GridScalar::zeros(self.comps[0].spec());
        for (c, w) in self.comps.iter().zip(&v.comps) {
            acc = acc.add(&c.mul(w));
        }
        acc
    }

    pub fn norm_inf(&self) -> f64 {
        self.comps.iter().map(|c| c.norm_inf()).fold(0.0, f64::max)
    }

    /// Coordinate components (pointwise exact; no derivatives involved).
    pub fn to_coord(&self, model: &FlatModel) -> CoordOneForm {
        let d = model.ndim();
        let spec = model.spec();
        let mut comps = vec![GridScalar::zeros(spec); d];
        // E^0 = dt - sum_a y_a dx_a
        comps[model.t_axis()] = comps[model.t_axis()].add(&self.comps[0]);
        for a in 0..model.n() {
            let y = self.comps[0].mul_coord(model.y_axis(a));
            comps[model.x_axis(a)] = comps[model.x_axis(a)].sub(&y);
        }
        // E^a = (dx_a + i dy_a)/sqrt(2), E^{a-bar} its conjugate
        let s = Complex64::new(SQRT2_INV, 0.0);
        for a in 0..model.n() {
            let hol = &self.comps[1 + a];
            let anti = &self.comps[1 + model.n() + a];
            comps[model.x_axis(a)] = comps[model.x_axis(a)].add(&hol.add(anti).scale(s));
            comps[model.y_axis(a)] =
                comps[model.y_axis(a)].add(&hol.sub(anti).scale(s * I));
        }
        CoordOneForm::new(comps).expect("component count matches grid")
    }
}

/// Two-form on the background pair basis `E^A ^ E^B` (`A < B`,
/// [`form_pairs`] order).
#[derive(Debug, Clone)]
pub struct FrameTwoForm {
    pub comps: Vec<GridScalar>,
}

impl FrameTwoForm {
    pub fn zeros(model: &FlatModel) -> FrameTwoForm {
        let d = model.ndim();
        FrameTwoForm {
            comps: vec![GridScalar::zeros(model.spec()); d * (d - 1) / 2],
        }
    }

    pub fn add(&self, o: &FrameTwoForm) -> FrameTwoForm {
        FrameTwoForm {
            comps: self
                .comps
                .iter()
                .zip(&o.comps)
                .map(|(a, b)| a.add(b))
                .collect(),
        }
    }

    pub fn sub(&self, o: &FrameTwoForm) -> FrameTwoForm {
        FrameTwoForm {
            comps: self
                .comps
                .iter()
                .zip(&o.comps)
                .map(|(a, b)| a.sub(b))
                .collect(),
        }
    }

    pub fn scale_field(&self, f: &GridScalar) -> FrameTwoForm {
        FrameTwoForm {
            comps: self.comps.iter().map(|c| c.mul(f)).collect(),
        }
    }

    pub fn norm_inf(&self) -> f64 {
        self.comps.iter().map(|c| c.norm_inf()).fold(0.0, f64::max)
    }

    /// Signed component for arbitrary index order; zero on the diagonal.
    pub fn component(&self, a: usize, b: usize, d: usize) -> GridScalar {
        if a == b {
            GridScalar::zeros(self.comps[0].spec())
        } else if a < b {
            self.comps[pair_index(a, b, d)].clone()
        } else {
            self.comps[pair_index(b, a, d)].neg()
        }
    }

    /// Interior product `iota_V omega` as a frame one-form.
    pub fn contract(&self, v: &FrameVectorField, model: &FlatModel) -> FrameOneForm {
        let d = model.ndim();
        let mut out = FrameOneForm::zeros(model);
        for (k, (i, j)) in form_pairs(d).into_iter().enumerate() {
            // omega(E_i, E_j) = comps[k]
            out.comps[j] = out.comps[j].add(&v.comps[i].mul(&self.comps[k]));
            out.comps[i] = out.comps[i].sub(&v.comps[j].mul(&self.comps[k]));
        }
        out
    }

    /// Coordinate components (pointwise exact).
    pub fn to_coord(&self, model: &FlatModel) -> CoordTwoForm {
        let d = model.ndim();
        let basis_coords: Vec<CoordOneForm> = (0..d)
            .map(|slot| FrameOneForm::basis(model, slot).to_coord(model))
            .collect();
        let mut comps =
            vec![GridScalar::zeros(model.spec()); d * (d - 1) / 2];
        for (k, (a, b)) in form_pairs(d).into_iter().enumerate() {
            let ea = &basis_coords[a];
            let eb = &basis_coords[b];
            for (kk, (i, j)) in form_pairs(d).into_iter().enumerate() {
                let w = ea.comps[i]
                    .mul(&eb.comps[j])
                    .sub(&ea.comps[j].mul(&eb.comps[i]));
                comps[kk] = comps[kk].add(&w.mul(&self.comps[k]));
            }
        }
        CoordTwoForm { comps }
    }
}

/// Wedge of two frame one-forms.
pub fn wedge(a: &FrameOneForm, b: &FrameOneForm, model: &FlatModel) -> FrameTwoForm {
    let d = model.ndim();
    let comps = form_pairs(d)
        .into_iter()
        .map(|(i, j)| a.comps[i].mul(&b.comps[j]).sub(&a.comps[j].mul(&b.comps[i])))
        .collect();
    FrameTwoForm { comps }
}

/// Exterior derivative in the background basis: the component functions are
/// differentiated along the background frame and the structure constant
/// `d E^0 = i sum_a E^a ^ E^{a-bar}` supplies the rest.
pub fn frame_d(omega: &FrameOneForm, model: &FlatModel) -> FrameTwoForm {
    let d = model.ndim();
    let mut out = FrameTwoForm::zeros(model);
    for (a, comp) in omega.comps.iter().enumerate() {
        for b in 0..d {
            if b == a {
                continue;
            }
            let deriv = model.slot_apply(comp, b);
            if b < a {
                let k = pair_index(b, a, d);
                out.comps[k] = out.comps[k].add(&deriv);
            } else {
                let k = pair_index(a, b, d);
                out.comps[k] = out.comps[k].sub(&deriv);
            }
        }
    }
    for a in 0..model.n() {
        let k = pair_index(1 + a, 1 + model.n() + a, d);
        out.comps[k] = out.comps[k].add(&omega.comps[0].scale(I));
    }
    out
}

/// Vector field by components in the background frame `(R_0, T_a, Tbar_a)`.
#[derive(Debug, Clone)]
pub struct FrameVectorField {
    pub comps: Vec<GridScalar>,
}

impl FrameVectorField {
    pub fn zeros(model: &FlatModel) -> FrameVectorField {
        FrameVectorField {
            comps: vec![GridScalar::zeros(model.spec()); model.ndim()],
        }
    }

    pub fn basis(model: &FlatModel, slot: usize) -> FrameVectorField {
        let mut v = FrameVectorField::zeros(model);
        v.comps[slot] = GridScalar::constant(model.spec(), Complex64::ONE);
        v
    }

    /// Conjugate vector field (conjugate weights, swap barred slots).
    pub fn conjugate(&self, model: &FlatModel) -> FrameVectorField {
        let mut comps = vec![GridScalar::zeros(model.spec()); self.comps.len()];
        for (slot, c) in self.comps.iter().enumerate() {
            comps[model.conj_slot(slot)] = c.conj();
        }
        FrameVectorField { comps }
    }

    /// Apply to a scalar: pointwise-weighted background frame derivatives.
    /// Slots with exactly-zero weight are skipped.
    pub fn apply(&self, model: &FlatModel, f: &GridScalar) -> GridScalar {
        let mut acc = GridScalar::zeros(model.spec());
        for (slot, w) in self.comps.iter().enumerate() {
            if w.as_uniform_const() == Some(Complex64::ZERO) {
                continue;
            }
            acc = acc.add(&w.mul(&model.slot_apply(f, slot)));
        }
        acc
    }

    pub fn scale_field(&self, f: &GridScalar) -> FrameVectorField {
        FrameVectorField {
            comps: self.comps.iter().map(|c| c.mul(f)).collect(),
        }
    }

    pub fn norm_inf(&self) -> f64 {
        self.comps.iter().map(|c| c.norm_inf()).fold(0.0, f64::max)
    }
}

/// Levi-normalized contact coframe `(theta, theta^1, .., theta^n)`.
#[derive(Debug, Clone)]
pub struct ContactCoframe {
    model: FlatModel,
    theta: FrameOneForm,
    theta1s: Vec<FrameOneForm>,
}

impl ContactCoframe {
    pub fn model(&self) -> &FlatModel {
        &self.model
    }

    pub fn spec(&self) -> &GridSpec {
        self.model.spec()
    }

    pub fn theta(&self) -> &FrameOneForm {
        &self.theta
    }

    pub fn theta1(&self) -> &FrameOneForm {
        &self.theta1s[0]
    }

    pub fn theta_alpha(&self, a: usize) -> &FrameOneForm {
        &self.theta1s[a]
    }

    pub fn d_theta(&self) -> FrameTwoForm {
        frame_d(&self.theta, &self.model)
    }

    /// `|| d theta - i sum_a theta^a ^ theta^{a-bar} ||_inf`.
    pub fn levi_residual(&self) -> f64 {
        let mut want = FrameTwoForm::zeros(&self.model);
        for t1 in &self.theta1s {
            let t1b = t1.conjugate(&self.model);
            want = want.add(&wedge(t1, &t1b, &self.model));
        }
        let want = FrameTwoForm {
            comps: want.comps.iter().map(|c| c.scale(I)).collect(),
        };
        self.d_theta().sub(&want).norm_inf()
    }

    /// Density of `theta ^ d theta` against the coordinate volume (n = 1).
    pub fn vol_density(&self) -> GridScalar {
        assert_eq!(self.model.n(), 1, "volume density implemented for n = 1");
        let dtheta = self.d_theta();
        let d = 3;
        // (a E^0 + b E^1 + c E^2) ^ (p E^01 + q E^02 + s E^12) = (a s - b q + c p) V,
        // with V = E^0^E^1^E^2 = -i dx^dy^dt.
        let a = &self.theta.comps[0];
        let b = &self.theta.comps[1];
        let c = &self.theta.comps[2];
        let p = &dtheta.comps[pair_index(0, 1, d)];
        let q = &dtheta.comps[pair_index(0, 2, d)];
        let s = &dtheta.comps[pair_index(1, 2, d)];
        let w = a.mul(s).sub(&b.mul(q)).add(&c.mul(p));
        w.scale(-I)
    }

    /// Dual frame `(R-slot, T_1, .., T_n, Tbar_1, ..)` by pointwise solve of
    /// the full coframe matrix. Not the Reeb field: use [`reeb_field`] for
    /// the vector normalized against `d theta`.
    pub fn dual_frame(&self) -> Result<Vec<FrameVectorField>> {
        let d = self.model.ndim();
        let mut rows = Vec::with_capacity(d);
        rows.push(self.theta.clone());
        for t in &self.theta1s {
            rows.push(t.clone());
        }
        for t in &self.theta1s {
            rows.push(t.conjugate(&self.model));
        }
        // coefficient matrix: entry (row, col) = row-th coframe's col-th comp
        let mut a = Vec::with_capacity(d * d);
        for row in &rows {
            for col in 0..d {
                a.push(row.comps[col].clone());
            }
        }
        let spec = self.spec();
        let mut frames = Vec::with_capacity(d);
        for k in 0..d {
            let mut b = vec![GridScalar::zeros(spec); d];
            b[k] = GridScalar::constant(spec, Complex64::ONE);
            let comps = pointwise_solve(&a, &b)?;
            frames.push(FrameVectorField { comps });
        }
        Ok(frames)
    }
}

/// The flat Heisenberg coframe: `theta = E^0`, `theta^a = E^a`.
pub fn heisenberg(n: usize, spec: &GridSpec) -> Result<ContactCoframe> {
    let model = FlatModel::new(n, spec.clone())?;
    let theta = FrameOneForm::basis(&model, 0);
    let theta1s = (0..n).map(|a| FrameOneForm::basis(&model, 1 + a)).collect();
    Ok(ContactCoframe {
        model,
        theta,
        theta1s,
    })
}

/// Reeb field of a contact coframe: the pointwise `(2n+1) x (2n+1)` system
/// `theta(R) = 1`, `d theta(R, E_b) = 0` for every horizontal frame slot.
pub fn reeb_field(cf: &ContactCoframe) -> Result<FrameVectorField> {
    let model = cf.model();
    let d = model.ndim();
    let spec = cf.spec();
    let dtheta = cf.d_theta();
    let mut a = Vec::with_capacity(d * d);
    for col in 0..d {
        a.push(cf.theta.comps[col].clone());
    }
    for b_slot in 1..d {
        for col in 0..d {
            a.push(dtheta.component(col, b_slot, d));
        }
    }
    let mut b = vec![GridScalar::zeros(spec); d];
    b[0] = GridScalar::constant(spec, Complex64::ONE);
    let comps = pointwise_solve(&a, &b)?;
    Ok(FrameVectorField { comps })
}

/// Residuals of the Reeb defining equations `theta(R) = 1`, `iota_R d theta = 0`.
pub fn reeb_residual(cf: &ContactCoframe, reeb: &FrameVectorField) -> f64 {
    let one = GridScalar::constant(cf.spec(), Complex64::ONE);
    let r1 = cf.theta.pair(reeb).sub(&one).norm_inf();
    let r2 = cf.d_theta().contract(reeb, cf.model()).norm_inf();
    r1.max(r2)
}

/// Diagnostics captured while solving the structure equations.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct StructureDiagnostics {
    pub levi_residual: f64,
    pub reeb_residual: f64,
    pub structure_residual: f64,
}

/// Tanaka-Webster data of an `n = 1` contact coframe.
#[derive(Debug, Clone)]
pub struct PseudohermitianData {
    coframe: ContactCoframe,
    t1: FrameVectorField,
    t1b: FrameVectorField,
    reeb: FrameVectorField,
    omega: FrameOneForm,
    torsion: GridScalar,
    scal_w: GridScalar,
    vol_density: GridScalar,
    diagnostics: StructureDiagnostics,
}

impl PseudohermitianData {
    pub fn coframe(&self) -> &ContactCoframe {
        &self.coframe
    }

    pub fn model(&self) -> &FlatModel {
        self.coframe.model()
    }

    pub fn spec(&self) -> &GridSpec {
        self.coframe.spec()
    }

    pub fn t1(&self) -> &FrameVectorField {
        &self.t1
    }

    pub fn t1b(&self) -> &FrameVectorField {
        &self.t1b
    }

    pub fn reeb(&self) -> &FrameVectorField {
        &self.reeb
    }

    /// Connection form `omega_1^1`.
    pub fn omega(&self) -> &FrameOneForm {
        &self.omega
    }

    /// Torsion coefficient `A = tau_1^{1-bar}`.
    pub fn torsion(&self) -> &GridScalar {
        &self.torsion
    }

    /// Webster scalar curvature in the solver's normalization: twice the
    /// coefficient of `i theta^1 ^ theta^{1-bar}` in `d omega_1^1`.
    pub fn scal_w(&self) -> &GridScalar {
        &self.scal_w
    }

    /// Density of `theta ^ d theta` against `dx dy dt`.
    pub fn vol_density(&self) -> &GridScalar {
        &self.vol_density
    }

    pub fn diagnostics(&self) -> StructureDiagnostics {
        self.diagnostics
    }

    /// `omega_1^1(T_1-bar)`: the frame Christoffel entering horizontal
    /// divergences.
    pub fn omega_at_t1b(&self) -> GridScalar {
        self.omega.pair(&self.t1b)
    }

    /// `omega_{1-bar}^{1-bar}(T_1) = conj(omega_1^1(T_1-bar))` for the
    /// built-in real structures.
    pub fn omega_bar_at_t1(&self) -> GridScalar {
        self.omega.conjugate(self.model()).pair(&self.t1)
    }

    /// True when torsion, connection, and curvature all vanish to roundoff.
    pub fn is_flat(&self, tol: f64) -> bool {
        self.torsion.norm_inf() <= tol
            && self.omega.norm_inf() <= tol
            && self.scal_w.norm_inf() <= tol
    }
}

/// Solve the structure equations of an `n = 1` Levi-normalized coframe:
/// decompose `d theta^1 = a theta^theta^1 + b theta^theta^{1b} + c theta^1^theta^{1b}`,
/// set `omega_1^1 = -a theta - conj(c) theta^1 + c theta^{1b}` and torsion
/// `A = b`, then extract the scalar curvature from `d omega_1^1`.
pub fn solve_structure(cf: &ContactCoframe) -> Result<PseudohermitianData> {
    if cf.model().n() != 1 {
        return Err(Error::DimensionMismatch(
            "structure solver requires an n = 1 coframe".into(),
        ));
    }
    let model = cf.model().clone();
    let tol = residual_tol(cf.spec());
    let levi = cf.levi_residual();
    if levi > tol {
        return Err(Error::StructureResidual {
            residual: levi,
            tol,
        });
    }

    let theta1b = cf.theta1().conjugate(&model);
    let w_t_t1 = wedge(cf.theta(), cf.theta1(), &model);
    let w_t_t1b = wedge(cf.theta(), &theta1b, &model);
    let w_t1_t1b = wedge(cf.theta1(), &theta1b, &model);

    let (a, b, c) = decompose_two_form(
        &frame_d(cf.theta1(), &model),
        [&w_t_t1, &w_t_t1b, &w_t1_t1b],
    )?;

    // residual of the reconstructed structure equation
    let recon = w_t_t1
        .scale_field(&a)
        .add(&w_t_t1b.scale_field(&b))
        .add(&w_t1_t1b.scale_field(&c));
    let structure_residual = frame_d(cf.theta1(), &model).sub(&recon).norm_inf();
    if structure_residual > tol {
        return Err(Error::StructureResidual {
            residual: structure_residual,
            tol,
        });
    }

    let omega = cf
        .theta()
        .scale_field(&a.neg())
        .add(&cf.theta1().scale_field(&c.conj().neg()))
        .add(&theta1b.scale_field(&c));
    let torsion = b;

    let (_, _, s) = decompose_two_form(
        &frame_d(&omega, &model),
        [&w_t_t1, &w_t_t1b, &w_t1_t1b],
    )?;
    let scal_w = s.scale(-I).scale(Complex64::new(2.0, 0.0));

    let reeb = reeb_field(cf)?;
    let reeb_res = reeb_residual(cf, &reeb);
    let frames = cf.dual_frame()?;
    let t1 = frames[1].clone();
    let t1b = t1.conjugate(&model);

    let vol_density = cf.vol_density();
    if vol_density
        .materialize()
        .periodic_values()
        .iter()
        .any(|v| v.norm() < 1e-10)
    {
        return Err(Error::SingularFrame {
            index: 0,
            cond: f64::INFINITY,
        });
    }

    Ok(PseudohermitianData {
        coframe: cf.clone(),
        t1,
        t1b,
        reeb,
        omega,
        torsion,
        scal_w,
        vol_density,
        diagnostics: StructureDiagnostics {
            levi_residual: levi,
            reeb_residual: reeb_res,
            structure_residual,
        },
    })
}

/// Decompose an `n = 1` frame two-form on a pointwise basis of three wedges.
fn decompose_two_form(
    form: &FrameTwoForm,
    basis: [&FrameTwoForm; 3],
) -> Result<(GridScalar, GridScalar, GridScalar)> {
    let mut a = Vec::with_capacity(9);
    for row in 0..3 {
        for w in basis.iter() {
            a.push(w.comps[row].clone());
        }
    }
    let b = vec![
        form.comps[0].clone(),
        form.comps[1].clone(),
        form.comps[2].clone(),
    ];
    let x = pointwise_solve(&a, &b)?;
    Ok((x[0].clone(), x[1].clone(), x[2].clone()))
}

/// Conformal rescaling `theta-hat = e^{2u} theta`,
/// `theta-hat^1 = e^u (theta^1 + 2 i u_{1-bar} theta)` with `u_{1-bar}`
/// taken along the coframe's own dual frame.
pub fn conformal_rescale(cf: &ContactCoframe, u: &GridScalar) -> Result<ContactCoframe> {
    if cf.model().n() != 1 {
        return Err(Error::DimensionMismatch(
            "conformal rescaling implemented for n = 1".into(),
        ));
    }
    let imag = u.imag().norm_inf();
    if imag > 1e-12 * (1.0 + u.norm_inf()) {
        return Err(Error::Config(
            "conformal factor must be real-valued".into(),
        ));
    }
    let model = cf.model().clone();
    let frames = cf.dual_frame()?;
    let t1b = frames[1].conjugate(&model);
    let u1b = t1b.apply(&model, u);

    let e2u = u.scale(Complex64::new(2.0, 0.0)).map(|v| v.exp());
    let eu = u.map(|v| v.exp());

    let theta = cf.theta().scale_field(&e2u);
    let theta1 = cf
        .theta1()
        .add(&cf.theta().scale_field(&u1b.scale(I * 2.0)))
        .scale_field(&eu);

    let out = ContactCoframe {
        model,
        theta,
        theta1s: vec![theta1],
    };
    let tol = residual_tol(out.spec());
    let residual = out.levi_residual();
    if residual > tol {
        return Err(Error::NormalizationFailure { residual, tol });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr;
    use crate::grid::GridSpec;
    use std::f64::consts::PI;

    fn spec3(n: usize, scheme: Scheme) -> GridSpec {
        GridSpec::cubic(3, n, scheme).unwrap()
    }

    fn trig_u(spec: &GridSpec, amp: f64) -> GridScalar {
        GridScalar::from_real_fn(spec, move |p| {
            amp * (2.0 * PI * p[0]).sin() * (2.0 * PI * p[1]).sin()
        })
    }

    #[test]
    fn flat_coframe_is_levi_normalized_exactly() {
        let s = spec3(8, Scheme::Spectral);
        let cf = heisenberg(1, &s).unwrap();
        assert_eq!(cf.levi_residual(), 0.0);
    }

    #[test]
    fn flat_dtheta_equals_dx_dy_in_coordinates() {
        let s = spec3(8, Scheme::Spectral);
        let cf = heisenberg(1, &s).unwrap();
        let dtheta = cf.d_theta().to_coord(cf.model());
        // pair order (x,y), (x,t), (y,t)
        let one = GridScalar::constant(&s, Complex64::ONE);
        assert!(dtheta.comps[0].sub(&one).norm_inf() < 1e-14);
        assert!(dtheta.comps[1].norm_inf() < 1e-14);
        assert!(dtheta.comps[2].norm_inf() < 1e-14);
        // and i theta^1 ^ theta^{1b} agrees exactly
        let w = wedge(
            cf.theta1(),
            &cf.theta1().conjugate(cf.model()),
            cf.model(),
        );
        let w = FrameTwoForm {
            comps: w.comps.iter().map(|c| c.scale(I)).collect(),
        };
        assert!(cf.d_theta().sub(&w).norm_inf() < 1e-14);
    }

    #[test]
    fn flat_vol_density_is_one() {
        let s = spec3(8, Scheme::Spectral);
        let cf = heisenberg(1, &s).unwrap();
        let one = GridScalar::constant(&s, Complex64::ONE);
        assert!(cf.vol_density().sub(&one).norm_inf() < 1e-14);
    }

    #[test]
    fn higher_model_dtheta_has_block_structure() {
        let s = GridSpec::cubic(5, 8, Scheme::Spectral).unwrap();
        let cf = heisenberg(2, &s).unwrap();
        let dtheta = cf.d_theta().to_coord(cf.model());
        let d = 5;
        let one = GridScalar::constant(&s, Complex64::ONE);
        for (k, (i, j)) in form_pairs(d).into_iter().enumerate() {
            let want_one = (i, j) == (0, 1) || (i, j) == (2, 3); // dx1^dy1 + dx2^dy2
            let err = if want_one {
                dtheta.comps[k].sub(&one).norm_inf()
            } else {
                dtheta.comps[k].norm_inf()
            };
            assert!(err < 1e-13, "pair ({i},{j}): {err}");
        }
    }

    #[test]
    fn reeb_of_flat_model_is_dt() {
        let s = spec3(8, Scheme::Spectral);
        let cf = heisenberg(1, &s).unwrap();
        let r = reeb_field(&cf).unwrap();
        let one = GridScalar::constant(&s, Complex64::ONE);
        assert!(r.comps[0].sub(&one).norm_inf() < 1e-13);
        assert!(r.comps[1].norm_inf() < 1e-13);
        assert!(r.comps[2].norm_inf() < 1e-13);
        assert!(reeb_residual(&cf, &r) < 1e-12);
    }

    #[test]
    fn reeb_of_rescaled_gains_horizontal_components() {
        let s = spec3(16, Scheme::Spectral);
        let cf = heisenberg(1, &s).unwrap();
        let u = GridScalar::from_real_fn(&s, |p| 0.1 * (2.0 * PI * p[0]).sin());
        let hat = conformal_rescale(&cf, &u).unwrap();
        let r = reeb_field(&hat).unwrap();
        assert!(r.comps[1].norm_inf() > 1e-3, "expected horizontal part");
        assert!(reeb_residual(&hat, &r) < 1e-10);
    }

    #[test]
    fn rescale_by_zero_is_identity() {
        let s = spec3(8, Scheme::Spectral);
        let cf = heisenberg(1, &s).unwrap();
        let zero = GridScalar::zeros(&s);
        let hat = conformal_rescale(&cf, &zero).unwrap();
        assert_eq!(hat.theta().sub(cf.theta()).norm_inf(), 0.0);
        assert_eq!(hat.theta1().sub(cf.theta1()).norm_inf(), 0.0);
        // and the solved structures agree exactly
        let s0 = solve_structure(&cf).unwrap();
        let s1 = solve_structure(&hat).unwrap();
        assert_eq!(s0.torsion().sub(s1.torsion()).norm_inf(), 0.0);
        assert_eq!(s0.scal_w().sub(s1.scal_w()).norm_inf(), 0.0);
    }

    #[test]
    fn rescale_by_constant_scales_exactly() {
        let s = spec3(8, Scheme::Spectral);
        let cf = heisenberg(1, &s).unwrap();
        let c = 0.3;
        let u = GridScalar::constant(&s, Complex64::new(c, 0.0));
        let hat = conformal_rescale(&cf, &u).unwrap();
        assert!(hat.levi_residual() < 1e-12);
        let data = solve_structure(&hat).unwrap();
        assert!(data.torsion().norm_inf() < 1e-12);
        assert!(data.scal_w().norm_inf() < 1e-12);
        assert!(data.omega().norm_inf() < 1e-12);
    }

    #[test]
    fn rescale_generic_levi_residual_small_on_spectral() {
        let s = GridSpec::cubic(3, 32, Scheme::Spectral).unwrap();
        let cf = heisenberg(1, &s).unwrap();
        let u = trig_u(&s, 0.1);
        let hat = conformal_rescale(&cf, &u).unwrap();
        assert!(hat.levi_residual() < 1e-8, "{}", hat.levi_residual());
    }

    #[test]
    fn flat_structure_solves_to_zero_data() {
        let s = spec3(8, Scheme::Spectral);
        let cf = heisenberg(1, &s).unwrap();
        let data = solve_structure(&cf).unwrap();
        assert!(data.torsion().norm_inf() < 1e-13);
        assert!(data.scal_w().norm_inf() < 1e-13);
        assert!(data.omega().norm_inf() < 1e-13);
        assert!(data.is_flat(1e-12));
        let one = GridScalar::constant(&s, Complex64::ONE);
        assert!(data.vol_density().sub(&one).norm_inf() < 1e-13);
    }

    #[test]
    fn rescaled_structure_has_torsion_and_curvature() {
        let s = GridSpec::cubic(3, 24, Scheme::Spectral).unwrap();
        let cf = heisenberg(1, &s).unwrap();
        let u = GridScalar::from_real_fn(&s, |p| 0.1 * (2.0 * PI * p[0]).sin());
        let hat = conformal_rescale(&cf, &u).unwrap();
        let data = solve_structure(&hat).unwrap();
        assert!(data.torsion().norm_inf() > 1e-3, "torsion should appear");
        assert!(data.scal_w().norm_inf() > 1e-3, "curvature should appear");
        assert!(data.diagnostics().structure_residual < 1e-10);
        assert!(data.diagnostics().reeb_residual < 1e-10);
        // unitary normalization: omega + conj(omega) vanishes on frame slots
        let ob = data.omega().conjugate(data.model());
        let sum = data.omega().add(&ob);
        assert!(sum.comps[1].norm_inf() < 1e-10);
        assert!(sum.comps[2].norm_inf() < 1e-10);
    }

    #[test]
    fn structure_residual_decays_at_fourth_order_under_fd4() {
        let errs: Vec<f64> = [16usize, 32]
            .iter()
            .map(|&n| {
                let s = spec3(n, Scheme::Fd4);
                let cf = heisenberg(1, &s).unwrap();
                let u = trig_u(&s, 0.1);
                let hat = conformal_rescale(&cf, &u).unwrap();
                hat.levi_residual()
            })
            .collect();
        let order = (errs[0] / errs[1]).log2();
        assert!(order > 3.5, "observed order {order}");
    }

    #[test]
    fn rescaled_via_expression_factor() {
        // same path the CLI takes: conformal factor given as an expression
        let s = spec3(16, Scheme::Spectral);
        let cf = heisenberg(1, &s).unwrap();
        let u = expr::eval_str("0.1*sin(2*pi*x)*sin(2*pi*y)", &s).unwrap();
        let hat = conformal_rescale(&cf, &u).unwrap();
        assert!(solve_structure(&hat).is_ok());
    }

    #[test]
    fn heisenberg_rejects_wrong_grid() {
        let s = spec3(8, Scheme::Spectral);
        assert!(heisenberg(2, &s).is_err());
    }
}
