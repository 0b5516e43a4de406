//! Riemannian target manifolds: metric, connection coefficients, curvature
//! tensor, and exponential map / retraction, evaluated pointwise.
//!
//! Complexified tangent data is handled by extending the metric and the
//! curvature tensor complex-bilinearly in every slot; Hermitian quantities
//! are formed by pairing a section against its conjugate at call sites.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Pointwise metric callback: coordinates -> row-major `m x m` matrix.
pub type MetricFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
/// Pointwise Christoffel callback: coordinates -> `Gamma^k_{ij}` at
/// `k*m*m + i*m + j`.
pub type ChristoffelFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// Step used for finite-difference Christoffels/curvature of chart targets.
const CHART_FD_STEP: f64 = 1e-4;

#[derive(Clone)]
pub enum TargetMetric {
    /// Flat torus `R^m / (periods)`; identity metric, values wrap in `exp`.
    FlatTorus { periods: Vec<f64> },
    /// Unit two-sphere embedded in `R^3`; three ambient components.
    Sphere2,
    /// The Heisenberg group chart with metric
    /// `(dt - y dx)^2 + dx^2 + dy^2` and analytic Christoffels.
    Webster,
    /// User-supplied chart metric; Christoffels analytic when given,
    /// otherwise central differences of the metric callback.
    Chart {
        dim: usize,
        metric: MetricFn,
        christoffel: Option<ChristoffelFn>,
    },
}

impl fmt::Debug for TargetMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TargetMetric::FlatTorus { periods } => {
                write!(f, "FlatTorus(dim={})", periods.len())
            }
            TargetMetric::Sphere2 => write!(f, "Sphere2"),
            TargetMetric::Webster => write!(f, "Webster"),
            TargetMetric::Chart { dim, .. } => write!(f, "Chart(dim={dim})"),
        }
    }
}

impl TargetMetric {
    pub fn flat_torus(m: usize) -> TargetMetric {
        TargetMetric::FlatTorus {
            periods: vec![1.0; m],
        }
    }

    /// Number of stored components (ambient dimension for the sphere).
    pub fn dim(&self) -> usize {
        match self {
            TargetMetric::FlatTorus { periods } => periods.len(),
            TargetMetric::Sphere2 => 3,
            TargetMetric::Webster => 3,
            TargetMetric::Chart { dim, .. } => *dim,
        }
    }

    pub fn is_flat(&self) -> bool {
        matches!(self, TargetMetric::FlatTorus { .. })
    }

    pub fn is_sphere(&self) -> bool {
        matches!(self, TargetMetric::Sphere2)
    }

    /// Structural compatibility (same variant and dimension).
    pub fn compatible(&self, other: &TargetMetric) -> bool {
        match (self, other) {
            (TargetMetric::FlatTorus { periods: a }, TargetMetric::FlatTorus { periods: b }) => {
                a == b
            }
            (TargetMetric::Sphere2, TargetMetric::Sphere2) => true,
            (TargetMetric::Webster, TargetMetric::Webster) => true,
            (TargetMetric::Chart { dim: a, .. }, TargetMetric::Chart { dim: b, .. }) => a == b,
            _ => false,
        }
    }

    /// Metric matrix at a point, row-major.
    pub fn metric_at(&self, p: &[f64]) -> Vec<f64> {
        let m = self.dim();
        match self {
            TargetMetric::FlatTorus { .. } | TargetMetric::Sphere2 => {
                let mut g = vec![0.0; m * m];
                for k in 0..m {
                    g[k * m + k] = 1.0;
                }
                g
            }
            TargetMetric::Webster => {
                let y = p[1];
                vec![
                    1.0 + y * y, 0.0, -y,
                    0.0,         1.0, 0.0,
                    -y,          0.0, 1.0,
                ]
            }
            TargetMetric::Chart { metric, .. } => metric(p),
        }
    }

    /// Complex-bilinear metric pairing of two (complexified) tangent vectors.
    pub fn pair_at(&self, p: &[f64], s1: &[Complex64], s2: &[Complex64]) -> Complex64 {
        match self {
            TargetMetric::FlatTorus { .. } | TargetMetric::Sphere2 => s1
                .iter()
                .zip(s2)
                .map(|(a, b)| a * b)
                .sum(),
            _ => {
                let m = self.dim();
                let g = self.metric_at(p);
                let mut acc = Complex64::ZERO;
                for i in 0..m {
                    for j in 0..m {
                        acc += g[i * m + j] * s1[i] * s2[j];
                    }
                }
                acc
            }
        }
    }

    /// `Gamma^k_{ij}` at a point (`k*m*m + i*m + j`); zero for the flat
    /// torus, unused for the embedded sphere (projection route).
    pub fn christoffel_at(&self, p: &[f64]) -> Vec<f64> {
        let m = self.dim();
        match self {
            TargetMetric::FlatTorus { .. } | TargetMetric::Sphere2 => vec![0.0; m * m * m],
            TargetMetric::Webster => {
                let y = p[1];
                let mut g = vec![0.0; 27];
                let idx = |k: usize, i: usize, j: usize| k * 9 + i * 3 + j;
                // x, y, t = 0, 1, 2
                g[idx(0, 0, 1)] = 0.5 * y;
                g[idx(0, 1, 0)] = 0.5 * y;
                g[idx(0, 1, 2)] = -0.5;
                g[idx(0, 2, 1)] = -0.5;
                g[idx(1, 0, 0)] = -y;
                g[idx(1, 0, 2)] = 0.5;
                g[idx(1, 2, 0)] = 0.5;
                g[idx(2, 0, 1)] = 0.5 * (y * y - 1.0);
                g[idx(2, 1, 0)] = 0.5 * (y * y - 1.0);
                g[idx(2, 1, 2)] = -0.5 * y;
                g[idx(2, 2, 1)] = -0.5 * y;
                g
            }
            TargetMetric::Chart {
                christoffel: Some(cb),
                ..
            } => cb(p),
            TargetMetric::Chart { metric, .. } => {
                fd_christoffel(metric.as_ref(), p, m)
            }
        }
    }

    /// `d_l Gamma^k_{ij}` at a point: analytic for the Webster chart,
    /// central differences otherwise.
    pub fn dchristoffel_at(&self, p: &[f64], l: usize) -> Vec<f64> {
        let m = self.dim();
        match self {
            TargetMetric::FlatTorus { .. } | TargetMetric::Sphere2 => vec![0.0; m * m * m],
            TargetMetric::Webster => {
                let mut g = vec![0.0; 27];
                if l == 1 {
                    let y = p[1];
                    let idx = |k: usize, i: usize, j: usize| k * 9 + i * 3 + j;
                    g[idx(0, 0, 1)] = 0.5;
                    g[idx(0, 1, 0)] = 0.5;
                    g[idx(1, 0, 0)] = -1.0;
                    g[idx(2, 0, 1)] = y;
                    g[idx(2, 1, 0)] = y;
                    g[idx(2, 1, 2)] = -0.5;
                    g[idx(2, 2, 1)] = -0.5;
                }
                g
            }
            _ => {
                let mut pp = p.to_vec();
                pp[l] += CHART_FD_STEP;
                let plus = self.christoffel_at(&pp);
                pp[l] = p[l] - CHART_FD_STEP;
                let minus = self.christoffel_at(&pp);
                plus.iter()
                    .zip(&minus)
                    .map(|(a, b)| (a - b) / (2.0 * CHART_FD_STEP))
                    .collect()
            }
        }
    }

    /// Riemann tensor `R(X, Y) Z` at a point, extended complex-bilinearly.
    pub fn curvature_at(
        &self,
        p: &[f64],
        x: &[Complex64],
        y: &[Complex64],
        z: &[Complex64],
    ) -> Vec<Complex64> {
        let m = self.dim();
        match self {
            TargetMetric::FlatTorus { .. } => vec![Complex64::ZERO; m],
            TargetMetric::Sphere2 => {
                // constant curvature +1: R(X,Y)Z = <Y,Z> X - <X,Z> Y
                let yz: Complex64 = y.iter().zip(z).map(|(a, b)| a * b).sum();
                let xz: Complex64 = x.iter().zip(z).map(|(a, b)| a * b).sum();
                (0..m).map(|k| yz * x[k] - xz * y[k]).collect()
            }
            _ => {
                // R(X,Y)Z^l = (d_i G^l_{jk} - d_j G^l_{ik}
                //              + G^l_{im} G^m_{jk} - G^l_{jm} G^m_{ik}) X^i Y^j Z^k
                let gam = self.christoffel_at(p);
                let dgam: Vec<Vec<f64>> =
                    (0..m).map(|l| self.dchristoffel_at(p, l)).collect();
                let idx = |k: usize, i: usize, j: usize| k * m * m + i * m + j;
                let mut out = vec![Complex64::ZERO; m];
                for l in 0..m {
                    let mut acc = Complex64::ZERO;
                    for i in 0..m {
                        for j in 0..m {
                            for k in 0..m {
                                let mut r = dgam[i][idx(l, j, k)] - dgam[j][idx(l, i, k)];
                                for mm in 0..m {
                                    r += gam[idx(l, i, mm)] * gam[idx(mm, j, k)]
                                        - gam[idx(l, j, mm)] * gam[idx(mm, i, k)];
                                }
                                acc += r * x[i] * y[j] * z[k];
                            }
                        }
                    }
                    out[l] = acc;
                }
                out
            }
        }
    }

    /// Exponential map / retraction at a point with a *real* tangent vector.
    /// Flat and sphere targets use the exact formulas; chart targets
    /// integrate the geodesic equation with RK4 substeps of parameter size
    /// at most 1e-2 (a retraction, agreeing with exp to the integrator's
    /// order).
    pub fn exp_at(&self, p: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        match self {
            TargetMetric::FlatTorus { periods } => Ok(p
                .iter()
                .zip(v)
                .zip(periods)
                .map(|((&pi, &vi), &per)| (pi + vi).rem_euclid(per))
                .collect()),
            TargetMetric::Sphere2 => {
                let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
                if norm >= std::f64::consts::PI {
                    return Err(Error::StepTooLarge {
                        norm,
                        guard: std::f64::consts::PI,
                    });
                }
                if norm == 0.0 {
                    return Ok(p.to_vec());
                }
                let (s, c) = norm.sin_cos();
                Ok(p.iter()
                    .zip(v)
                    .map(|(&pi, &vi)| c * pi + s * vi / norm)
                    .collect())
            }
            TargetMetric::Webster | TargetMetric::Chart { .. } => {
                let m = self.dim();
                let steps = 100usize;
                let h = 1.0 / steps as f64;
                let mut pos = p.to_vec();
                let vel = v.to_vec();
                let accel = |pos: &[f64], vel: &[f64]| -> Vec<f64> {
                    let gam = self.christoffel_at(pos);
                    let mut a = vec![0.0; m];
                    for k in 0..m {
                        let mut s = 0.0;
                        for i in 0..m {
                            for j in 0..m {
                                s += gam[k * m * m + i * m + j] * vel[i] * vel[j];
                            }
                        }
                        a[k] = -s;
                    }
                    a
                };
                let mut st = vec![0.0; 2 * m];
                st[..m].copy_from_slice(&pos);
                st[m..].copy_from_slice(&vel);
                let deriv = |st: &[f64]| -> Vec<f64> {
                    let (q, dq) = st.split_at(m);
                    let mut out = vec![0.0; 2 * m];
                    out[..m].copy_from_slice(dq);
                    let a = accel(q, dq);
                    out[m..].copy_from_slice(&a);
                    out
                };
                for _ in 0..steps {
                    let k1 = deriv(&st);
                    let s2: Vec<f64> =
                        st.iter().zip(&k1).map(|(a, b)| a + 0.5 * h * b).collect();
                    let k2 = deriv(&s2);
                    let s3: Vec<f64> =
                        st.iter().zip(&k2).map(|(a, b)| a + 0.5 * h * b).collect();
                    let k3 = deriv(&s3);
                    let s4: Vec<f64> = st.iter().zip(&k3).map(|(a, b)| a + h * b).collect();
                    let k4 = deriv(&s4);
                    for i in 0..2 * m {
                        st[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
                    }
                }
                pos.copy_from_slice(&st[..m]);
                let _ = vel;
                Ok(pos)
            }
        }
    }
}

/// Christoffels from central differences of a metric callback.
fn fd_christoffel(metric: &(dyn Fn(&[f64]) -> Vec<f64> + Send + Sync), p: &[f64], m: usize) -> Vec<f64> {
    let h = CHART_FD_STEP;
    // dg[l][i*m+j] = d_l g_{ij}
    let mut dg = Vec::with_capacity(m);
    let mut pp = p.to_vec();
    for l in 0..m {
        pp[l] = p[l] + h;
        let plus = metric(&pp);
        pp[l] = p[l] - h;
        let minus = metric(&pp);
        pp[l] = p[l];
        dg.push(
            plus.iter()
                .zip(&minus)
                .map(|(a, b)| (a - b) / (2.0 * h))
                .collect::<Vec<f64>>(),
        );
    }
    let g = metric(p);
    let ginv = invert_spd(&g, m);
    let mut gam = vec![0.0; m * m * m];
    for k in 0..m {
        for i in 0..m {
            for j in 0..m {
                let mut s = 0.0;
                for l in 0..m {
                    s += ginv[k * m + l] * (dg[i][j * m + l] + dg[j][i * m + l] - dg[l][i * m + j]);
                }
                gam[k * m * m + i * m + j] = 0.5 * s;
            }
        }
    }
    gam
}

/// Dense inverse via Gauss-Jordan; metric matrices are small and SPD.
fn invert_spd(g: &[f64], m: usize) -> Vec<f64> {
    let mut a = g.to_vec();
    let mut inv = vec![0.0; m * m];
    for k in 0..m {
        inv[k * m + k] = 1.0;
    }
    for col in 0..m {
        let mut best = col;
        for row in col + 1..m {
            if a[row * m + col].abs() > a[best * m + col].abs() {
                best = row;
            }
        }
        for k in 0..m {
            a.swap(col * m + k, best * m + k);
            inv.swap(col * m + k, best * m + k);
        }
        let piv = a[col * m + col];
        for k in 0..m {
            a[col * m + k] /= piv;
            inv[col * m + k] /= piv;
        }
        for row in 0..m {
            if row == col {
                continue;
            }
            let f = a[row * m + col];
            if f != 0.0 {
                for k in 0..m {
                    a[row * m + k] -= f * a[col * m + k];
                    inv[row * m + k] -= f * inv[col * m + k];
                }
            }
        }
    }
    inv
}

/// A (complexified) tangent vector anchored at a target point.
#[derive(Debug, Clone)]
pub struct TangentVectorAt {
    pub base: Vec<f64>,
    pub vector: Vec<Complex64>,
}

impl TangentVectorAt {
    pub fn new(target: &TargetMetric, base: Vec<f64>, vector: Vec<Complex64>) -> Result<Self> {
        if base.len() != target.dim() || vector.len() != target.dim() {
            return Err(Error::DimensionMismatch(format!(
                "tangent vector with {} / {} components on a dim-{} target",
                base.len(),
                vector.len(),
                target.dim()
            )));
        }
        if target.is_sphere() {
            let norm2: f64 = base.iter().map(|a| a * a).sum();
            if (norm2 - 1.0).abs() > 1e-10 {
                return Err(Error::FrameMismatch(
                    "sphere base point must have unit norm".into(),
                ));
            }
            let re: f64 = base.iter().zip(&vector).map(|(b, v)| b * v.re).sum();
            let im: f64 = base.iter().zip(&vector).map(|(b, v)| b * v.im).sum();
            if re.abs().max(im.abs()) > 1e-10 {
                return Err(Error::FrameMismatch(
                    "sphere tangent vector must be orthogonal to the base point".into(),
                ));
            }
        }
        Ok(TangentVectorAt { base, vector })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cv(v: &[f64]) -> Vec<Complex64> {
        v.iter().map(|&x| Complex64::new(x, 0.0)).collect()
    }

    #[test]
    fn flat_curvature_vanishes() {
        let t = TargetMetric::flat_torus(2);
        let r = t.curvature_at(&[0.3, 0.4], &cv(&[1.0, 0.0]), &cv(&[0.0, 1.0]), &cv(&[1.0, 1.0]));
        assert!(r.iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn sphere_curvature_constant_plus_one() {
        let t = TargetMetric::Sphere2;
        let e1 = [1.0, 0.0, 0.0];
        let e2 = [0.0, 1.0, 0.0];
        let r = t.curvature_at(&[0.0, 0.0, 1.0], &cv(&e1), &cv(&e2), &cv(&e2));
        assert!((r[0] - Complex64::ONE).norm() < 1e-14);
        assert!(r[1].norm() < 1e-14 && r[2].norm() < 1e-14);
    }

    #[test]
    fn curvature_antisymmetric_and_bianchi() {
        let t = TargetMetric::Webster;
        let p = [0.2, 0.37, 0.81];
        let x = cv(&[0.3, -0.2, 0.9]);
        let y = cv(&[-1.1, 0.4, 0.2]);
        let z = cv(&[0.5, 0.8, -0.3]);
        let rxy = t.curvature_at(&p, &x, &y, &z);
        let ryx = t.curvature_at(&p, &y, &x, &z);
        for k in 0..3 {
            assert!((rxy[k] + ryx[k]).norm() < 1e-10);
        }
        // first Bianchi: R(X,Y)Z + R(Y,Z)X + R(Z,X)Y = 0
        let ryz = t.curvature_at(&p, &y, &z, &x);
        let rzx = t.curvature_at(&p, &z, &x, &y);
        for k in 0..3 {
            assert!((rxy[k] + ryz[k] + rzx[k]).norm() < 1e-10, "bianchi {k}");
        }
    }

    #[test]
    fn webster_curvature_matches_fd_chart() {
        // same metric through the generic chart path with FD Christoffels
        let metric: MetricFn = Arc::new(|p: &[f64]| {
            let y = p[1];
            vec![1.0 + y * y, 0.0, -y, 0.0, 1.0, 0.0, -y, 0.0, 1.0]
        });
        let chart = TargetMetric::Chart {
            dim: 3,
            metric,
            christoffel: None,
        };
        let web = TargetMetric::Webster;
        let p = [0.15, 0.42, 0.6];
        // christoffels agree
        let ga = web.christoffel_at(&p);
        let gb = chart.christoffel_at(&p);
        for (a, b) in ga.iter().zip(&gb) {
            assert!((a - b).abs() < 1e-7, "{a} vs {b}");
        }
        let x = cv(&[0.3, -0.2, 0.9]);
        let y = cv(&[-1.1, 0.4, 0.2]);
        let z = cv(&[0.5, 0.8, -0.3]);
        let ra = web.curvature_at(&p, &x, &y, &z);
        let rb = chart.curvature_at(&p, &x, &y, &z);
        for k in 0..3 {
            assert!((ra[k] - rb[k]).norm() < 1e-5, "{} vs {}", ra[k], rb[k]);
        }
    }

    #[test]
    fn exp_zero_vector_fixes_point() {
        for t in [
            TargetMetric::flat_torus(2),
            TargetMetric::Sphere2,
            TargetMetric::Webster,
        ] {
            let p = if t.is_sphere() {
                vec![0.0, 0.0, 1.0]
            } else {
                vec![0.25; t.dim()]
            };
            let q = t.exp_at(&p, &vec![0.0; t.dim()]).unwrap();
            for (a, b) in p.iter().zip(&q) {
                assert!((a - b).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn exp_flat_torus_wraps() {
        let t = TargetMetric::flat_torus(1);
        let q = t.exp_at(&[0.25], &[1.5]).unwrap();
        assert!((q[0] - 0.75).abs() < 1e-14);
    }

    #[test]
    fn exp_sphere_quarter_turn() {
        let t = TargetMetric::Sphere2;
        let q = t
            .exp_at(&[1.0, 0.0, 0.0], &[0.0, std::f64::consts::FRAC_PI_2, 0.0])
            .unwrap();
        assert!((q[0]).abs() < 1e-14);
        assert!((q[1] - 1.0).abs() < 1e-14);
        assert!((q[2]).abs() < 1e-14);
    }

    #[test]
    fn exp_sphere_guard() {
        let t = TargetMetric::Sphere2;
        match t.exp_at(&[1.0, 0.0, 0.0], &[0.0, 4.0, 0.0]) {
            Err(Error::StepTooLarge { .. }) => {}
            other => panic!("expected StepTooLarge, got {other:?}"),
        }
    }

    #[test]
    fn webster_geodesic_preserves_speed() {
        // the RK4 retraction should conserve |v|_g along the path
        let t = TargetMetric::Webster;
        let p = [0.1, 0.3, 0.7];
        let v = [0.2, -0.15, 0.1];
        let q = t.exp_at(&p, &v).unwrap();
        assert!(q.iter().all(|x| x.is_finite()));
        // energy conservation proxy: retracting along -v from q lands near p
        // only for exact exp; instead verify small-step consistency:
        // exp_p(eps v) = p + eps v + O(eps^2)
        let eps = 1e-3;
        let vs: Vec<f64> = v.iter().map(|x| x * eps).collect();
        let q1 = t.exp_at(&p, &vs).unwrap();
        for k in 0..3 {
            assert!((q1[k] - p[k] - eps * v[k]).abs() < 1e-5);
        }
    }

    #[test]
    fn tangent_vector_sphere_invariants() {
        let t = TargetMetric::Sphere2;
        assert!(TangentVectorAt::new(&t, vec![0.0, 0.0, 1.0], cv(&[1.0, 0.0, 0.0])).is_ok());
        assert!(TangentVectorAt::new(&t, vec![0.0, 0.0, 2.0], cv(&[1.0, 0.0, 0.0])).is_err());
        assert!(TangentVectorAt::new(&t, vec![0.0, 0.0, 1.0], cv(&[0.0, 0.0, 0.5])).is_err());
    }
}
