//! Descent flows toward critical maps: retraction-based gradient descent on
//! the renormalized energy, and a tension-driven (subharmonic) flow.
//!
//! The certified gradient of `f1` is `-p1` (see [`crate::paneitz::GRADIENT_FACTOR`]),
//! so the descent direction is `+p1(phi)`; stationary points are exactly the
//! maps with vanishing obstruction either way.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::mapcalc::{frame_apply, h_pair, tension_b, MapField, PullbackSection};
use crate::paneitz::{f1, p1, pairing_integral, reeb_second_norm, section_l2};
use crate::structure::PseudohermitianData;

/// Armijo slope fraction.
const ARMIJO_C1: f64 = 1e-4;
/// Backtracking shrink factor.
const BACKTRACK_FACTOR: f64 = 0.5;
/// Smallest admissible step before the search reports collapse.
const MIN_STEP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct FlowConfig {
    /// Initial trial step per iteration.
    pub step: f64,
    pub max_steps: usize,
    /// Armijo backtracking on the objective; without it the raw step is taken.
    pub backtracking: bool,
    /// Stop when `0.5 * |p1|_2 <= stop_tol` (gradient flow) or
    /// `|tension|_2 <= stop_tol` (subharmonic flow).
    pub stop_tol: f64,
    /// Divide gradient modes by `1 + |symbol|` of the fourth-order operator
    /// (a documented accelerator; off by default).
    pub precondition: bool,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig {
            step: 1e-4,
            max_steps: 500,
            backtracking: true,
            stop_tol: 1e-8,
            precondition: false,
        }
    }
}

impl FlowConfig {
    fn validate(&self) -> Result<()> {
        if !(self.step > 0.0) || !(self.stop_tol > 0.0) {
            return Err(Error::Config(
                "flow step and stop_tol must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// One accepted iterate of a flow.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct FlowRecord {
    pub iter: usize,
    pub f1: f64,
    pub p1_norm: f64,
    pub tension_norm: f64,
    /// Step accepted from this iterate (0 on the final record).
    pub step: f64,
    /// `|nabla_R R phi|_2`, tracked so the subharmonic limit can be certified.
    pub reeb_second_norm: f64,
}

/// Append-only record of a flow run.
#[derive(Debug, Clone, Default)]
pub struct FlowTrace {
    pub records: Vec<FlowRecord>,
}

impl FlowTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&FlowRecord> {
        self.records.last()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowKind {
    Gradient,
    Subharmonic,
}

/// Spectral preconditioner: divide each Fourier mode by `1 + |symbol|` with
/// `symbol = (4 pi^2 (kx^2 + ky^2))^2 + (2 pi kt)^4` (the t-independent
/// symbol of the fourth-order operator), taming its stiffness.
fn precondition(sec: &PullbackSection, spec: &GridSpec) -> PullbackSection {
    use rustfft::FftPlanner;
    let dims = spec.dims();
    let comps = sec
        .comps
        .iter()
        .map(|c| {
            let mut arr = c.materialize().periodic_values().clone();
            let mut planner = FftPlanner::new();
            // forward FFT over all axes
            for axis in 0..dims.len() {
                let fft = planner.plan_fft_forward(dims[axis]);
                let mut buf = vec![Complex64::ZERO; dims[axis]];
                for mut lane in arr.lanes_mut(ndarray::Axis(axis)) {
                    for (b, v) in buf.iter_mut().zip(lane.iter()) {
                        *b = *v;
                    }
                    fft.process(&mut buf);
                    for (v, b) in lane.iter_mut().zip(buf.iter()) {
                        *v = *b;
                    }
                }
            }
            {
                let two_pi = 2.0 * std::f64::consts::PI;
                let d = dims.len();
                for (idx, v) in arr.indexed_iter_mut() {
                    let mut horiz = 0.0;
                    for a in 0..d - 1 {
                        let n = dims[a];
                        let k = if idx[a] <= n / 2 {
                            idx[a] as f64
                        } else {
                            idx[a] as f64 - n as f64
                        };
                        horiz += (two_pi * k / spec.periods()[a]).powi(2);
                    }
                    let nt = dims[d - 1];
                    let kt = if idx[d - 1] <= nt / 2 {
                        idx[d - 1] as f64
                    } else {
                        idx[d - 1] as f64 - nt as f64
                    };
                    let kt = two_pi * kt / spec.periods()[d - 1];
                    let symbol = horiz * horiz + kt.powi(4);
                    *v /= 1.0 + symbol;
                }
            }
            for axis in 0..dims.len() {
                let fft = planner.plan_fft_inverse(dims[axis]);
                let scale = 1.0 / dims[axis] as f64;
                let mut buf = vec![Complex64::ZERO; dims[axis]];
                for mut lane in arr.lanes_mut(ndarray::Axis(axis)) {
                    for (b, v) in buf.iter_mut().zip(lane.iter()) {
                        *b = *v;
                    }
                    fft.process(&mut buf);
                    for (v, b) in lane.iter_mut().zip(buf.iter()) {
                        *v = *b * scale;
                    }
                }
            }
            let mut out = crate::grid::GridScalar::zeros(spec);
            *out.periodic_values_mut() = arr;
            out
        })
        .collect();
    PullbackSection {
        target: sec.target.clone(),
        comps,
    }
}

fn run_flow(
    phi0: &MapField,
    s: &PseudohermitianData,
    cfg: &FlowConfig,
    kind: FlowKind,
) -> Result<(MapField, FlowTrace)> {
    cfg.validate()?;
    let mut phi = phi0.clone();
    let mut trace = FlowTrace::default();
    let mut iter = 0usize;
    loop {
        let p = p1(&phi, s)?;
        let tension = tension_b(&phi, s)?;
        let p1_norm = section_l2(&phi, &p, s);
        let tension_norm = section_l2(&phi, &tension, s);
        let reeb2 = reeb_second_norm(&phi, s)?;
        let objective = match kind {
            FlowKind::Gradient => f1(&phi, s)?,
            FlowKind::Subharmonic => sub_dirichlet(&phi, s)?,
        };
        let f1_val = match kind {
            FlowKind::Gradient => objective,
            FlowKind::Subharmonic => f1(&phi, s)?,
        };
        let stop_norm = match kind {
            FlowKind::Gradient => 0.5 * p1_norm,
            FlowKind::Subharmonic => tension_norm,
        };
        let stopping = stop_norm <= cfg.stop_tol || iter >= cfg.max_steps;
        if stopping {
            trace.records.push(FlowRecord {
                iter,
                f1: f1_val,
                p1_norm,
                tension_norm,
                step: 0.0,
                reeb_second_norm: reeb2,
            });
            return Ok((phi, trace));
        }
        // descent direction: minus the certified gradient of the objective
        let dir = match kind {
            FlowKind::Gradient => p.clone(), // gradient of f1 is -p1
            FlowKind::Subharmonic => tension.neg(),
        };
        let dir = if cfg.precondition {
            precondition(&dir, phi.comps[0].spec())
        } else {
            dir
        };
        // directional slope of the objective along dir
        let slope = match kind {
            FlowKind::Gradient => -pairing_integral(&phi, &dir, &p, s),
            FlowKind::Subharmonic => pairing_integral(&phi, &dir, &tension, s),
        };
        let mut eta = cfg.step;
        let next = loop {
            let candidate = phi.retract(&dir, eta)?;
            if !cfg.backtracking {
                break candidate;
            }
            let cand_obj = match kind {
                FlowKind::Gradient => f1(&candidate, s)?,
                FlowKind::Subharmonic => sub_dirichlet(&candidate, s)?,
            };
            if cand_obj <= objective + ARMIJO_C1 * eta * slope {
                break candidate;
            }
            eta *= BACKTRACK_FACTOR;
            if eta < MIN_STEP {
                return Err(Error::StepCollapse { min_step: MIN_STEP });
            }
        };
        trace.records.push(FlowRecord {
            iter,
            f1: f1_val,
            p1_norm,
            tension_norm,
            step: eta,
            reeb_second_norm: reeb2,
        });
        phi = next;
        iter += 1;
    }
}

/// Horizontal Dirichlet energy `Int h(T_1 phi, T_1b phi) theta ^ d theta`,
/// the objective whose gradient is the tension field.
pub fn sub_dirichlet(map: &MapField, s: &PseudohermitianData) -> Result<f64> {
    let t1phi = frame_apply(map, s.t1(), s.model());
    let t1bphi = frame_apply(map, s.t1b(), s.model());
    Ok(crate::grid::integrate(&h_pair(map, &t1phi, &t1bphi), s.vol_density()).re)
}

/// Gradient descent on the renormalized energy along `+p1` (the negative of
/// the certified gradient), with optional Armijo backtracking.
pub fn gradient_flow(
    phi0: &MapField,
    s: &PseudohermitianData,
    cfg: &FlowConfig,
) -> Result<(MapField, FlowTrace)> {
    run_flow(phi0, s, cfg, FlowKind::Gradient)
}

/// Descent on the horizontal Dirichlet energy along `-tension`, reporting
/// `|nabla_R R phi|` so the subharmonic-limit hypothesis can be certified.
pub fn subharmonic_flow(
    phi0: &MapField,
    s: &PseudohermitianData,
    cfg: &FlowConfig,
) -> Result<(MapField, FlowTrace)> {
    run_flow(phi0, s, cfg, FlowKind::Subharmonic)
}
