//! Periodic grid functions on [0, L)^d with spectral or fourth-order
//! finite-difference derivatives, exterior calculus in coordinate components,
//! and periodic quadrature.
//!
//! A [`GridScalar`] is a complex-valued sample array plus an optional *exact
//! linear part* `sum_j c_j x_j`. The linear part lets coordinate charts and
//! winding maps (values that drift by one period per period) differentiate
//! exactly instead of via the sawtooth their samples would present to the
//! derivative stencil. Derivatives consume the linear part exactly; products
//! with non-constant factors materialize it into the samples.

use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::Arc;

use ndarray::{ArrayD, IxDyn};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Derivative discretization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Scheme {
    /// Fourier differentiation; exact for band-limited data.
    Spectral,
    /// Fourth-order central differences with periodic wrap.
    Fd4,
}

impl Scheme {
    pub fn parse(s: &str) -> Result<Scheme> {
        match s {
            "spectral" => Ok(Scheme::Spectral),
            "fd4" => Ok(Scheme::Fd4),
            other => Err(Error::Config(format!(
                "unknown scheme `{other}` (expected `spectral` or `fd4`)"
            ))),
        }
    }
}

/// Shape of a periodic grid: points and period per axis, plus the scheme.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    dims: Vec<usize>,
    periods: Vec<f64>,
    scheme: Scheme,
}

impl GridSpec {
    pub fn new(dims: Vec<usize>, periods: Vec<f64>, scheme: Scheme) -> Result<GridSpec> {
        if dims.is_empty() {
            return Err(Error::InvalidGrid("no axes".into()));
        }
        if dims.len() != periods.len() {
            return Err(Error::InvalidGrid(format!(
                "{} dims but {} periods",
                dims.len(),
                periods.len()
            )));
        }
        if let Some(&d) = dims.iter().find(|&&d| d < 8) {
            return Err(Error::InvalidGrid(format!("axis with {d} points; need >= 8")));
        }
        if let Some(&p) = periods.iter().find(|&&p| !(p > 0.0) || !p.is_finite()) {
            return Err(Error::InvalidGrid(format!("non-positive period {p}")));
        }
        Ok(GridSpec {
            dims,
            periods,
            scheme,
        })
    }

    /// Unit periods on every axis.
    pub fn unit(dims: Vec<usize>, scheme: Scheme) -> Result<GridSpec> {
        let periods = vec![1.0; dims.len()];
        GridSpec::new(dims, periods, scheme)
    }

    /// Cubical grid with `n` points per axis and unit periods.
    pub fn cubic(d: usize, n: usize, scheme: Scheme) -> Result<GridSpec> {
        GridSpec::unit(vec![n; d], scheme)
    }

    pub fn ndim(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn periods(&self) -> &[f64] {
        &self.periods
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn with_scheme(&self, scheme: Scheme) -> GridSpec {
        GridSpec {
            scheme,
            ..self.clone()
        }
    }

    /// Same axes with every point count multiplied by `factor`.
    pub fn refined(&self, factor: usize) -> Result<GridSpec> {
        GridSpec::new(
            self.dims.iter().map(|&n| n * factor).collect(),
            self.periods.clone(),
            self.scheme,
        )
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn volume(&self) -> f64 {
        self.periods.iter().product()
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.periods[axis] / self.dims[axis] as f64
    }

    /// Coarsest spacing over all axes.
    pub fn max_spacing(&self) -> f64 {
        (0..self.ndim())
            .map(|a| self.spacing(a))
            .fold(0.0, f64::max)
    }

    /// Variable names in expression order: `x,y,t` (d = 3) or
    /// `x1,y1,..,xn,yn,t` (d = 2n+1).
    pub fn axis_names(&self) -> Vec<String> {
        let d = self.ndim();
        if d == 3 {
            return vec!["x".into(), "y".into(), "t".into()];
        }
        let mut names = Vec::with_capacity(d);
        for a in 0..d / 2 {
            names.push(format!("x{}", a + 1));
            names.push(format!("y{}", a + 1));
        }
        names.push("t".into());
        names
    }

    pub fn axis_of(&self, name: &str) -> Option<usize> {
        self.axis_names().iter().position(|n| n == name)
    }
}

/// Grids at least this large run their derivative lanes on the rayon pool
/// (bounded by `CRLAB_THREADS` when the CLI sets one). Lane writes are
/// disjoint, so results are bit-identical at any thread count.
const PAR_THRESHOLD: usize = 1 << 15;

thread_local! {
    static FFT_CACHE: RefCell<HashMap<(usize, bool), Arc<dyn Fft<f64>>>> =
        RefCell::new(HashMap::new());
}

fn plan_fft(n: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    FFT_CACHE.with(|c| {
        c.borrow_mut()
            .entry((n, inverse))
            .or_insert_with(|| {
                let mut planner = FftPlanner::new();
                if inverse {
                    planner.plan_fft_inverse(n)
                } else {
                    planner.plan_fft_forward(n)
                }
            })
            .clone()
    })
}

/// Run a lane kernel along `axis`: the axis is rotated to the contiguous
/// position, lanes are processed (in parallel above [`PAR_THRESHOLD`]; lane
/// writes are disjoint so any thread count gives identical bits), and the
/// layout is restored.
fn apply_along_axis<F>(
    values: &ArrayD<Complex64>,
    axis: usize,
    n: usize,
    kernel: F,
) -> ArrayD<Complex64>
where
    F: Fn(&mut [Complex64]) + Sync,
{
    let d = values.ndim();
    let mut perm: Vec<usize> = (0..d).filter(|&a| a != axis).collect();
    perm.push(axis);
    let transposed = values.view().permuted_axes(IxDyn(&perm));
    let mut work: Vec<Complex64> = transposed.iter().cloned().collect();
    if work.len() >= PAR_THRESHOLD {
        use rayon::prelude::*;
        work.par_chunks_mut(n).for_each(|lane| kernel(lane));
    } else {
        for lane in work.chunks_mut(n) {
            kernel(lane);
        }
    }
    let shape: Vec<usize> = perm.iter().map(|&a| values.shape()[a]).collect();
    let arr = ArrayD::from_shape_vec(IxDyn(&shape), work).expect("shape preserved");
    let mut inv = vec![0usize; d];
    for (i, &p) in perm.iter().enumerate() {
        inv[p] = i;
    }
    let mut out = ArrayD::zeros(values.raw_dim());
    out.assign(&arr.view().permuted_axes(IxDyn(&inv)));
    out
}

/// Angular wavenumbers `2 pi k / L` in FFT bin order; Nyquist bin zeroed.
fn wavenumbers(n: usize, period: f64) -> Vec<f64> {
    let mut k = vec![0.0; n];
    for (j, kj) in k.iter_mut().enumerate() {
        let idx = if j <= n / 2 { j as isize } else { j as isize - n as isize };
        *kj = 2.0 * std::f64::consts::PI * idx as f64 / period;
    }
    if n % 2 == 0 {
        k[n / 2] = 0.0;
    }
    k
}

/// Complex sampled function on a periodic grid, with optional exact linear part.
#[derive(Debug, Clone)]
pub struct GridScalar {
    spec: GridSpec,
    values: ArrayD<Complex64>,
    /// When present, the represented function is `values + sum_j linear[j] * x_j`.
    linear: Option<Vec<Complex64>>,
}

impl GridScalar {
    pub fn zeros(spec: &GridSpec) -> GridScalar {
        GridScalar {
            spec: spec.clone(),
            values: ArrayD::zeros(IxDyn(spec.dims())),
            linear: None,
        }
    }

    pub fn constant(spec: &GridSpec, c: Complex64) -> GridScalar {
        GridScalar {
            spec: spec.clone(),
            values: ArrayD::from_elem(IxDyn(spec.dims()), c),
            linear: None,
        }
    }

    /// The coordinate function `x_axis` itself, stored exactly.
    pub fn coordinate(spec: &GridSpec, axis: usize) -> GridScalar {
        let mut linear = vec![Complex64::ZERO; spec.ndim()];
        linear[axis] = Complex64::ONE;
        GridScalar {
            spec: spec.clone(),
            values: ArrayD::zeros(IxDyn(spec.dims())),
            linear: Some(linear),
        }
    }

    /// Sample a function of the coordinate vector.
    pub fn from_fn<F: Fn(&[f64]) -> Complex64>(spec: &GridSpec, f: F) -> GridScalar {
        let mut values = ArrayD::zeros(IxDyn(spec.dims()));
        let mut coords = vec![0.0; spec.ndim()];
        for (idx, v) in values.indexed_iter_mut() {
            for a in 0..spec.ndim() {
                coords[a] = idx[a] as f64 * spec.spacing(a);
            }
            *v = f(&coords);
        }
        let out = GridScalar {
            spec: spec.clone(),
            values,
            linear: None,
        };
        debug_assert!(out.is_finite());
        out
    }

    pub fn from_real_fn<F: Fn(&[f64]) -> f64>(spec: &GridSpec, f: F) -> GridScalar {
        GridScalar::from_fn(spec, |c| Complex64::new(f(c), 0.0))
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn linear_part(&self) -> Option<&[Complex64]> {
        self.linear.as_deref()
    }

    /// Raw periodic samples; excludes any linear part.
    pub fn periodic_values(&self) -> &ArrayD<Complex64> {
        &self.values
    }

    /// Mutable access to the samples for pointwise kernels. The caller must
    /// have folded in (or never introduced) a linear part.
    pub fn periodic_values_mut(&mut self) -> &mut ArrayD<Complex64> {
        debug_assert!(self.linear.is_none());
        &mut self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.re.is_finite() && v.im.is_finite())
            && self
                .linear
                .iter()
                .flatten()
                .all(|v| v.re.is_finite() && v.im.is_finite())
    }

    fn check_same_spec(&self, other: &GridScalar) -> Result<()> {
        if self.spec != other.spec {
            return Err(Error::DimensionMismatch(
                "grid scalars live on different grids".into(),
            ));
        }
        Ok(())
    }

    /// Fold the linear part into the samples.
    pub fn materialize(&self) -> GridScalar {
        match &self.linear {
            None => self.clone(),
            Some(lin) => {
                let mut values = self.values.clone();
                for (idx, v) in values.indexed_iter_mut() {
                    for (a, &c) in lin.iter().enumerate() {
                        if c != Complex64::ZERO {
                            *v += c * (idx[a] as f64 * self.spec.spacing(a));
                        }
                    }
                }
                GridScalar {
                    spec: self.spec.clone(),
                    values,
                    linear: None,
                }
            }
        }
    }

    /// Pointwise value including the linear part.
    pub fn value_at(&self, idx: &[usize]) -> Complex64 {
        let mut v = self.values[IxDyn(idx)];
        if let Some(lin) = &self.linear {
            for (a, &c) in lin.iter().enumerate() {
                v += c * (idx[a] as f64 * self.spec.spacing(a));
            }
        }
        v
    }

    pub fn add(&self, other: &GridScalar) -> GridScalar {
        self.check_same_spec(other).expect("grid mismatch in add");
        let linear = merge_linear(self.spec.ndim(), &self.linear, &other.linear, 1.0);
        GridScalar {
            spec: self.spec.clone(),
            values: &self.values + &other.values,
            linear,
        }
    }

    pub fn sub(&self, other: &GridScalar) -> GridScalar {
        self.check_same_spec(other).expect("grid mismatch in sub");
        let linear = merge_linear(self.spec.ndim(), &self.linear, &other.linear, -1.0);
        GridScalar {
            spec: self.spec.clone(),
            values: &self.values - &other.values,
            linear,
        }
    }

    pub fn scale(&self, c: Complex64) -> GridScalar {
        GridScalar {
            spec: self.spec.clone(),
            values: self.values.mapv(|v| v * c),
            linear: self
                .linear
                .as_ref()
                .map(|l| l.iter().map(|&v| v * c).collect()),
        }
    }

    pub fn conj(&self) -> GridScalar {
        GridScalar {
            spec: self.spec.clone(),
            values: self.values.mapv(|v| v.conj()),
            linear: self.linear.as_ref().map(|l| l.iter().map(|v| v.conj()).collect()),
        }
    }

    pub fn neg(&self) -> GridScalar {
        self.scale(Complex64::new(-1.0, 0.0))
    }

    /// Exact uniform constant detection (used to keep linear parts alive
    /// through multiplications by constant fields).
    pub fn as_uniform_const(&self) -> Option<Complex64> {
        if self.linear.iter().flatten().any(|&c| c != Complex64::ZERO) {
            return None;
        }
        let first = *self.values.first()?;
        if self.values.iter().all(|&v| v == first) {
            Some(first)
        } else {
            None
        }
    }

    /// Pointwise product. A uniform-constant factor preserves the other
    /// factor's linear part; otherwise both sides are materialized.
    pub fn mul(&self, other: &GridScalar) -> GridScalar {
        self.check_same_spec(other).expect("grid mismatch in mul");
        if let Some(c) = self.as_uniform_const() {
            return other.scale(c);
        }
        if let Some(c) = other.as_uniform_const() {
            return self.scale(c);
        }
        let a = self.materialize();
        let b = other.materialize();
        GridScalar {
            spec: self.spec.clone(),
            values: &a.values * &b.values,
            linear: None,
        }
    }

    /// Multiply by the coordinate function `x_axis`. A uniform-constant input
    /// stays exact (the result is purely linear); anything else materializes.
    pub fn mul_coord(&self, axis: usize) -> GridScalar {
        if let Some(c) = self.as_uniform_const() {
            if c == Complex64::ZERO {
                return GridScalar::zeros(&self.spec);
            }
            return GridScalar::coordinate(&self.spec, axis).scale(c);
        }
        let coord = GridScalar::coordinate(&self.spec, axis).materialize();
        let a = self.materialize();
        GridScalar {
            spec: self.spec.clone(),
            values: &a.values * &coord.values,
            linear: None,
        }
    }

    /// Pointwise division; errors on any zero denominator sample.
    pub fn div(&self, other: &GridScalar) -> Result<GridScalar> {
        self.check_same_spec(other)?;
        let a = self.materialize();
        let b = other.materialize();
        if b.values.iter().any(|v| v.norm_sqr() == 0.0) {
            return Err(Error::DivisionByZero);
        }
        Ok(GridScalar {
            spec: self.spec.clone(),
            values: &a.values / &b.values,
            linear: None,
        })
    }

    pub fn map<F: Fn(Complex64) -> Complex64>(&self, f: F) -> GridScalar {
        let a = self.materialize();
        GridScalar {
            spec: self.spec.clone(),
            values: a.values.mapv(f),
            linear: None,
        }
    }

    pub fn real(&self) -> GridScalar {
        self.map(|v| Complex64::new(v.re, 0.0))
    }

    pub fn imag(&self) -> GridScalar {
        self.map(|v| Complex64::new(v.im, 0.0))
    }

    /// Coordinate derivative along `axis`. The linear part differentiates
    /// exactly to a constant; the periodic part uses the grid scheme.
    pub fn derivative(&self, axis: usize) -> GridScalar {
        assert!(axis < self.spec.ndim(), "derivative axis out of range");
        let mut out = match self.spec.scheme() {
            Scheme::Spectral => self.derivative_spectral(axis),
            Scheme::Fd4 => self.derivative_fd4(axis),
        };
        if let Some(lin) = &self.linear {
            if lin[axis] != Complex64::ZERO {
                out.values += lin[axis];
            }
        }
        debug_assert!(out.is_finite());
        out
    }

    fn derivative_spectral(&self, axis: usize) -> GridScalar {
        let n = self.spec.dims()[axis];
        let ks = wavenumbers(n, self.spec.periods()[axis]);
        let scale = 1.0 / n as f64;
        let values = apply_along_axis(&self.values, axis, n, |lane| {
            let fwd = plan_fft(n, false);
            let inv = plan_fft(n, true);
            fwd.process(lane);
            for (b, &k) in lane.iter_mut().zip(&ks) {
                *b *= Complex64::new(0.0, k);
            }
            inv.process(lane);
            for v in lane.iter_mut() {
                *v *= scale;
            }
        });
        GridScalar {
            spec: self.spec.clone(),
            values,
            linear: None,
        }
    }

    fn derivative_fd4(&self, axis: usize) -> GridScalar {
        let n = self.spec.dims()[axis];
        let h = self.spec.spacing(axis);
        let c = 1.0 / (12.0 * h);
        let values = apply_along_axis(&self.values, axis, n, |lane| {
            let buf = lane.to_vec();
            for (i, v) in lane.iter_mut().enumerate() {
                let m2 = buf[(i + n - 2) % n];
                let m1 = buf[(i + n - 1) % n];
                let p1 = buf[(i + 1) % n];
                let p2 = buf[(i + 2) % n];
                *v = (m2 - p2 + (p1 - m1) * 8.0) * c;
            }
        });
        GridScalar {
            spec: self.spec.clone(),
            values,
            linear: None,
        }
    }

    /// Sup norm over samples (linear part included).
    pub fn norm_inf(&self) -> f64 {
        let a = self.materialize();
        a.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Plain lattice L2 norm: sqrt(mean |f|^2 * total volume).
    pub fn norm_l2(&self) -> f64 {
        let a = self.materialize();
        let mean: f64 =
            a.values.iter().map(|v| v.norm_sqr()).sum::<f64>() / a.values.len() as f64;
        (mean * self.spec.volume()).sqrt()
    }

    /// Periodic quadrature of `self` alone (density 1).
    pub fn integral(&self) -> Complex64 {
        let n = self.values.len() as f64;
        let mut mean = self.values.sum() / n;
        if let Some(lin) = &self.linear {
            for (a, &c) in lin.iter().enumerate() {
                if c != Complex64::ZERO {
                    let na = self.spec.dims()[a] as f64;
                    // lattice mean of the sawtooth x_a
                    mean += c * (self.spec.periods()[a] * (na - 1.0) / (2.0 * na));
                }
            }
        }
        mean * self.spec.volume()
    }
}

fn merge_linear(
    d: usize,
    a: &Option<Vec<Complex64>>,
    b: &Option<Vec<Complex64>>,
    sign: f64,
) -> Option<Vec<Complex64>> {
    if a.is_none() && b.is_none() {
        return None;
    }
    let mut out = vec![Complex64::ZERO; d];
    if let Some(av) = a {
        for (o, &v) in out.iter_mut().zip(av) {
            *o += v;
        }
    }
    if let Some(bv) = b {
        for (o, &v) in out.iter_mut().zip(bv) {
            *o += v * sign;
        }
    }
    if out.iter().all(|&c| c == Complex64::ZERO) {
        None
    } else {
        Some(out)
    }
}

/// Periodic quadrature of `f` against a volume density (the coefficient of
/// `dx_1 ^ .. ^ dx_d`); exact for band-limited integrands.
pub fn integrate(f: &GridScalar, density: &GridScalar) -> Complex64 {
    f.mul(density).integral()
}

/// One-form in the coordinate cobasis `dx_1, .., dx_d`.
#[derive(Debug, Clone)]
pub struct CoordOneForm {
    pub comps: Vec<GridScalar>,
}

impl CoordOneForm {
    pub fn new(comps: Vec<GridScalar>) -> Result<CoordOneForm> {
        let d = comps
            .first()
            .ok_or_else(|| Error::DimensionMismatch("empty one-form".into()))?
            .spec()
            .ndim();
        if comps.len() != d {
            return Err(Error::DimensionMismatch(format!(
                "one-form with {} components on a {d}-axis grid",
                comps.len()
            )));
        }
        Ok(CoordOneForm { comps })
    }

    pub fn spec(&self) -> &GridSpec {
        self.comps[0].spec()
    }

    /// Differential of a scalar.
    pub fn from_differential(f: &GridScalar) -> CoordOneForm {
        let comps = (0..f.spec().ndim()).map(|a| f.derivative(a)).collect();
        CoordOneForm { comps }
    }
}

/// Index pairs `(i, j)`, `i < j`, in lexicographic order.
pub fn form_pairs(d: usize) -> Vec<(usize, usize)> {
    let mut pairs = Vec::with_capacity(d * (d - 1) / 2);
    for i in 0..d {
        for j in (i + 1)..d {
            pairs.push((i, j));
        }
    }
    pairs
}

/// Position of `(i, j)` (`i < j`) in [`form_pairs`] order.
pub fn pair_index(i: usize, j: usize, d: usize) -> usize {
    debug_assert!(i < j && j < d);
    // pairs with first index < i come first
    i * d - i * (i + 1) / 2 + (j - i - 1)
}

/// Two-form stored on the independent component pairs of [`form_pairs`].
#[derive(Debug, Clone)]
pub struct CoordTwoForm {
    pub comps: Vec<GridScalar>,
}

impl CoordTwoForm {
    pub fn spec(&self) -> &GridSpec {
        self.comps[0].spec()
    }

    pub fn norm_inf(&self) -> f64 {
        self.comps.iter().map(|c| c.norm_inf()).fold(0.0, f64::max)
    }
}

/// Exterior derivative `(d omega)_{ij} = D_i omega_j - D_j omega_i`.
pub fn exterior_derivative(omega: &CoordOneForm) -> CoordTwoForm {
    let d = omega.spec().ndim();
    let comps = form_pairs(d)
        .into_iter()
        .map(|(i, j)| omega.comps[j].derivative(i).sub(&omega.comps[i].derivative(j)))
        .collect();
    CoordTwoForm { comps }
}

/// Solve the dense complex system `a x = b` in place. `a` is `m x m`
/// row-major and is destroyed. Returns a pivot-ratio condition estimate.
pub fn solve_dense(a: &mut [Complex64], b: &mut [Complex64], m: usize) -> Option<f64> {
    debug_assert_eq!(a.len(), m * m);
    debug_assert_eq!(b.len(), m);
    let mut max_piv: f64 = 0.0;
    let mut min_piv = f64::INFINITY;
    for col in 0..m {
        // partial pivot
        let mut best = col;
        let mut best_mag = a[col * m + col].norm();
        for row in (col + 1)..m {
            let mag = a[row * m + col].norm();
            if mag > best_mag {
                best = row;
                best_mag = mag;
            }
        }
        if best_mag == 0.0 {
            return None;
        }
        if best != col {
            for k in 0..m {
                a.swap(col * m + k, best * m + k);
            }
            b.swap(col, best);
        }
        max_piv = max_piv.max(best_mag);
        min_piv = min_piv.min(best_mag);
        let piv = a[col * m + col];
        for row in (col + 1)..m {
            let factor = a[row * m + col] / piv;
            if factor != Complex64::ZERO {
                for k in col..m {
                    let v = a[col * m + k];
                    a[row * m + k] -= factor * v;
                }
                let bv = b[col];
                b[row] -= factor * bv;
            }
        }
    }
    for col in (0..m).rev() {
        let mut s = b[col];
        for k in (col + 1)..m {
            s -= a[col * m + k] * b[k];
        }
        b[col] = s / a[col * m + col];
    }
    Some(max_piv / min_piv)
}

/// Condition-number ceiling for pointwise frame solves.
pub const POINTWISE_COND_LIMIT: f64 = 1e12;

/// Solve an `m x m` complex system at every grid point. `a` is row-major
/// (`m*m` fields), `b` has `m` fields. Errors with [`Error::SingularFrame`]
/// when the pivot-ratio condition estimate exceeds [`POINTWISE_COND_LIMIT`].
pub fn pointwise_solve(a: &[GridScalar], b: &[GridScalar]) -> Result<Vec<GridScalar>> {
    let m = b.len();
    if a.len() != m * m {
        return Err(Error::DimensionMismatch(format!(
            "pointwise solve: {} matrix fields for {} unknowns",
            a.len(),
            m
        )));
    }
    let spec = b[0].spec().clone();
    let a: Vec<GridScalar> = a.iter().map(|f| f.materialize()).collect();
    let b: Vec<GridScalar> = b.iter().map(|f| f.materialize()).collect();
    let npts = spec.len();
    let mut out = vec![GridScalar::zeros(&spec); m];
    let mut amat = vec![Complex64::ZERO; m * m];
    let mut bvec = vec![Complex64::ZERO; m];
    // flat views are safe: all arrays share the spec's standard layout
    let aslices: Vec<&[Complex64]> = a.iter().map(|f| f.values.as_slice().unwrap()).collect();
    let bslices: Vec<&[Complex64]> = b.iter().map(|f| f.values.as_slice().unwrap()).collect();
    let mut oslices: Vec<&mut [Complex64]> = out
        .iter_mut()
        .map(|f| f.values.as_slice_mut().unwrap())
        .collect();
    for p in 0..npts {
        for (k, s) in aslices.iter().enumerate() {
            amat[k] = s[p];
        }
        for (k, s) in bslices.iter().enumerate() {
            bvec[k] = s[p];
        }
        match solve_dense(&mut amat, &mut bvec, m) {
            Some(cond) if cond <= POINTWISE_COND_LIMIT => {}
            Some(cond) => return Err(Error::SingularFrame { index: p, cond }),
            None => {
                return Err(Error::SingularFrame {
                    index: p,
                    cond: f64::INFINITY,
                })
            }
        }
        for (k, s) in oslices.iter_mut().enumerate() {
            s[p] = bvec[k];
        }
    }
    Ok(out)
}
