//! Numerical counterparts of the stability arguments.
//!
//! * [`LyapunovFunction`]: `V(q, p) = int_0^q f~(s) ds + p^2/2` for the
//!   first-order loop in the log chart, with
//!   `f~(q) = -f(exp(q) x*) + g(mu0)`. Along solutions `V' = -p g~(p) <= 0`.
//! * [`positive_real_margin`] and [`kyp_storage`]: the linear block
//!   `q' = -u, p' = -a q - b p` with output `p` has transfer function
//!   `H(s) = a / (s (s + b))`; `H + 1` is positive real iff `a <= b^2`, and
//!   then a quadratic storage `V = z'Pz/2` with `V' <= u p + u^2` exists.
//! * [`sector_identity`]: the feedback `u = -sin^2(phi) p` satisfies
//!   `u p + u^2 = -(sin phi cos phi p)^2`.
//! * [`linearize_equilibrium`]: Jacobian of the first-order loop at its
//!   equilibrium in `(q, p)` coordinates.
//! * [`floquet_multipliers`]: monodromy of the periodic linear system
//!   `q' = sin^2(omega t) p, p' = -a_eff q - b_eff p` obtained by dropping the
//!   higher-order terms along the tuned orbit. Local exponential stability of
//!   the orbit is certified by spectral radius < 1.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::adaptation::{
    effective_coefficients, equilibrium_point, validate_oscillator_hypotheses, AdaptationLaw,
    EffectiveCoefficients,
};
use crate::dynamics::{ChartTag, ClosedLoop};
use crate::error::{Error, Result};
use crate::ode::{
    finite_difference_jacobian, integrate, integrate_with_variational, FnField, IntegratorConfig,
    Trajectory, VectorField,
};

// ---------------------------------------------------------------------------
// Quadrature and small linear algebra
// ---------------------------------------------------------------------------

pub const QUADRATURE_TOL: f64 = 1e-11;
pub const QUADRATURE_MAX_DEPTH: u32 = 40;

/// Adaptive Simpson quadrature of `f` over `[a, b]`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, max_depth: u32) -> f64 {
    if a == b {
        return 0.0;
    }
    let (fa, fb) = (f(a), f(b));
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_step(f, a, b, fa, fm, fb, whole, tol, max_depth)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// Eigenvalues of a real 2x2 matrix from its trace and determinant, sorted by
/// decreasing real part (then decreasing imaginary part).
pub fn eig2(m: [[f64; 2]; 2]) -> [Complex64; 2] {
    let tr = m[0][0] + m[1][1];
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let half = 0.5 * tr;
    let disc = half * half - det;
    if disc >= 0.0 {
        let s = disc.sqrt();
        // Avoid cancellation in the smaller root.
        let big = if half >= 0.0 { half + s } else { half - s };
        let small = if big != 0.0 { det / big } else { 0.0 };
        let (l1, l2) = if big >= small {
            (big, small)
        } else {
            (small, big)
        };
        [Complex64::new(l1, 0.0), Complex64::new(l2, 0.0)]
    } else {
        let w = (-disc).sqrt();
        [Complex64::new(half, w), Complex64::new(half, -w)]
    }
}

fn det2(m: [[f64; 2]; 2]) -> f64 {
    m[0][0] * m[1][1] - m[0][1] * m[1][0]
}

/// Eigenvalues of a symmetric 3x3 matrix by cyclic Jacobi rotations, ascending.
#[allow(clippy::needless_range_loop)]
pub fn sym3_eigenvalues(m: [[f64; 3]; 3]) -> [f64; 3] {
    let mut a = m;
    for _sweep in 0..64 {
        let off = a[0][1] * a[0][1] + a[0][2] * a[0][2] + a[1][2] * a[1][2];
        if off == 0.0 {
            break;
        }
        for (p, q) in [(0usize, 1usize), (0, 2), (1, 2)] {
            if a[p][q] == 0.0 {
                continue;
            }
            let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
            let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
            let t = if theta == 0.0 { 1.0 } else { t };
            let c = 1.0 / (t * t + 1.0).sqrt();
            let s = t * c;
            // A <- J^T A J with J the (p, q) rotation.
            for k in 0..3 {
                let (akp, akq) = (a[k][p], a[k][q]);
                a[k][p] = c * akp - s * akq;
                a[k][q] = s * akp + c * akq;
            }
            for k in 0..3 {
                let (apk, aqk) = (a[p][k], a[q][k]);
                a[p][k] = c * apk - s * aqk;
                a[q][k] = s * apk + c * aqk;
            }
        }
    }
    let mut ev = [a[0][0], a[1][1], a[2][2]];
    ev.sort_by(f64::total_cmp);
    ev
}

// ---------------------------------------------------------------------------
// Lyapunov function of the first-order loop
// ---------------------------------------------------------------------------

/// `V(q, p) = int_0^q f~ + p^2/2` for a fixed law and `mu0`.
#[derive(Debug, Clone)]
pub struct LyapunovFunction {
    law: AdaptationLaw,
    mu0: f64,
    x_star: f64,
}

impl LyapunovFunction {
    pub fn new(law: &AdaptationLaw, mu0: f64) -> Result<Self> {
        Ok(Self {
            law: law.clone(),
            mu0,
            x_star: equilibrium_point(law, mu0)?,
        })
    }

    pub fn x_star(&self) -> f64 {
        self.x_star
    }

    /// `f~(q) = -f(exp(q) x*) + g(mu0)`.
    pub fn f_tilde(&self, q: f64) -> f64 {
        -self.law.f(q.exp() * self.x_star) + self.law.g(self.mu0)
    }

    pub fn value(&self, q: f64, p: f64) -> f64 {
        let integral = adaptive_simpson(
            &|s| self.f_tilde(s),
            0.0,
            q,
            QUADRATURE_TOL,
            QUADRATURE_MAX_DEPTH,
        );
        integral + 0.5 * p * p
    }

    /// Largest increase of `V` between consecutive samples of a `(q, p)`
    /// trajectory.
    pub fn max_increase(&self, traj: &Trajectory) -> Result<f64> {
        if traj.dim() != 2 {
            return Err(Error::ChartMismatch {
                chart: format!("{}-dimensional trajectory", traj.dim()),
                system: "(q, p) Lyapunov check".into(),
            });
        }
        let values: Vec<f64> = traj.states.iter().map(|z| self.value(z[0], z[1])).collect();
        Ok(values.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max))
    }
}

pub fn lyapunov_value(q: f64, p: f64, law: &AdaptationLaw, mu0: f64) -> Result<f64> {
    Ok(LyapunovFunction::new(law, mu0)?.value(q, p))
}

/// Max increase of `V` along a trajectory already expressed in `(q, p)`.
pub fn lyapunov_monotonicity(traj: &Trajectory, law: &AdaptationLaw, mu0: f64) -> Result<f64> {
    LyapunovFunction::new(law, mu0)?.max_increase(traj)
}

/// Convert an original-coordinate trajectory of a closed loop into `chart`.
pub fn trajectory_in_chart(
    system: &ClosedLoop,
    traj: &Trajectory,
    chart: ChartTag,
) -> Result<Trajectory> {
    let states = traj
        .states
        .iter()
        .map(|y| system.to_chart(y, chart).map(|c| c.coords()))
        .collect::<Result<Vec<_>>>()?;
    Ok(Trajectory {
        times: traj.times.clone(),
        states,
        stats: traj.stats,
    })
}

// ---------------------------------------------------------------------------
// Positive realness and KYP storage
// ---------------------------------------------------------------------------

/// `inf_w Re[H(jw) + 1] = 1 - a/b^2` for `H(s) = a/(s(s+b))`.
pub fn positive_real_margin(a: f64, b: f64) -> f64 {
    1.0 - a / (b * b)
}

/// Symmetric 2x2 matrix `P` of a quadratic form `z'Pz/2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadraticForm {
    pub p: [[f64; 2]; 2],
}

impl QuadraticForm {
    pub fn new(p11: f64, p12: f64, p22: f64) -> Self {
        Self {
            p: [[p11, p12], [p12, p22]],
        }
    }

    pub fn is_positive_definite(&self) -> bool {
        self.p[0][0] > 0.0 && det2(self.p) > 0.0
    }

    pub fn min_eigenvalue(&self) -> f64 {
        eig2(self.p)[1].re
    }

    /// `V(q, p) = z'Pz / 2`.
    pub fn value(&self, q: f64, p: f64) -> f64 {
        0.5 * (self.p[0][0] * q * q + 2.0 * self.p[0][1] * q * p + self.p[1][1] * p * p)
    }

    /// `V' - u p - u^2` along `q' = -u, p' = -a q - b p`.
    pub fn kyp_residual(&self, a: f64, b: f64, q: f64, p: f64, u: f64) -> f64 {
        let (dq, dp) = (-u, -a * q - b * p);
        let grad = [
            self.p[0][0] * q + self.p[0][1] * p,
            self.p[0][1] * q + self.p[1][1] * p,
        ];
        grad[0] * dq + grad[1] * dp - u * p - u * u
    }
}

/// Block matrix `M` with `[q p u] M [q p u]' = V' - u p - u^2`.
pub fn kyp_block(a: f64, b: f64, form: &QuadraticForm) -> [[f64; 3]; 3] {
    let [[p1, p2], [_, p3]] = form.p;
    let qp = -0.5 * (b * p2 + a * p3);
    [
        [-a * p2, qp, -0.5 * p1],
        [qp, -b * p3, -0.5 * (p2 + 1.0)],
        [-0.5 * p1, -0.5 * (p2 + 1.0), -1.0],
    ]
}

pub const KYP_TOL: f64 = 1e-9;
const KYP_STARTS: usize = 12;
const KYP_RESTARTS: usize = 12;
const PD_FLOOR: f64 = 1e-8;

fn kyp_objective(a: f64, b: f64, v: &[f64; 3]) -> f64 {
    let form = QuadraticForm::new(v[0], v[1], v[2]);
    let lmax = sym3_eigenvalues(kyp_block(a, b, &form))[2];
    let pd_deficit = (PD_FLOOR - form.min_eigenvalue()).max(0.0);
    lmax + 10.0 * pd_deficit
}

/// Outcome of the storage search, including the best value reached.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KypCertificate {
    pub storage: QuadraticForm,
    /// Largest eigenvalue of the KYP block at `storage` (<= `KYP_TOL`).
    pub max_eigenvalue: f64,
}

/// Search for `P > 0` with `V' - u p - u^2 <= 0` by minimising the largest
/// eigenvalue of the KYP block over the three entries of `P` (multi-start
/// Nelder–Mead). Starts are drawn from `seed`.
pub fn kyp_storage(a: f64, b: f64, seed: u64) -> Result<KypCertificate> {
    if !(a > 0.0 && b > 0.0) {
        return Err(Error::Validation(format!(
            "kyp_storage needs a, b > 0 (got {a}, {b})"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let obj = |v: &[f64; 3]| kyp_objective(a, b, v);
    let mut best = ([1.0, 0.0, 1.0], f64::INFINITY);
    for start in 0..KYP_STARTS {
        let x0 = if start == 0 {
            [1.0, 0.0, 1.0]
        } else {
            [
                rng.random_range(0.0..10.0),
                rng.random_range(-5.0..5.0),
                rng.random_range(0.0..10.0),
            ]
        };
        let mut x = x0;
        let mut fx = obj(&x);
        let mut scale = 1.0;
        for _ in 0..KYP_RESTARTS {
            let (nx, nf) = nelder_mead(&obj, x, scale, 2000);
            let improved = fx - nf;
            if nf < fx {
                x = nx;
                fx = nf;
            }
            if improved < 1e-13 * (1.0 + fx.abs()) {
                break;
            }
            scale *= 0.1;
        }
        if fx < best.1 {
            best = (x, fx);
        }
        if best.1 <= KYP_TOL {
            break;
        }
    }
    let storage = QuadraticForm::new(best.0[0], best.0[1], best.0[2]);
    let max_eigenvalue = sym3_eigenvalues(kyp_block(a, b, &storage))[2];
    if storage.is_positive_definite() && max_eigenvalue <= KYP_TOL {
        Ok(KypCertificate {
            storage,
            max_eigenvalue,
        })
    } else {
        Err(Error::Infeasible {
            best_eigenvalue: max_eigenvalue,
        })
    }
}

/// Plain Nelder–Mead on R^3 with standard coefficients.
fn nelder_mead<F: Fn(&[f64; 3]) -> f64>(
    f: &F,
    x0: [f64; 3],
    scale: f64,
    max_iter: usize,
) -> ([f64; 3], f64) {
    let mut simplex: Vec<([f64; 3], f64)> = (0..4)
        .map(|i| {
            let mut x = x0;
            if i > 0 {
                x[i - 1] += scale * (1.0 + x0[i - 1].abs());
            }
            (x, f(&x))
        })
        .collect();
    let lerp = |a: &[f64; 3], b: &[f64; 3], t: f64| -> [f64; 3] {
        [
            a[0] + t * (b[0] - a[0]),
            a[1] + t * (b[1] - a[1]),
            a[2] + t * (b[2] - a[2]),
        ]
    };
    for _ in 0..max_iter {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let spread = simplex[3].1 - simplex[0].1;
        let diam = simplex[1..]
            .iter()
            .map(|(x, _)| {
                (0..3)
                    .map(|k| (x[k] - simplex[0].0[k]).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        if spread.abs() < 1e-17 && diam < 1e-14 {
            break;
        }
        let mut centroid = [0.0; 3];
        for (x, _) in &simplex[..3] {
            for k in 0..3 {
                centroid[k] += x[k] / 3.0;
            }
        }
        let worst = simplex[3];
        let reflected = lerp(&centroid, &worst.0, -1.0);
        let fr = f(&reflected);
        if fr < simplex[0].1 {
            let expanded = lerp(&centroid, &worst.0, -2.0);
            let fe = f(&expanded);
            simplex[3] = if fe < fr {
                (expanded, fe)
            } else {
                (reflected, fr)
            };
        } else if fr < simplex[2].1 {
            simplex[3] = (reflected, fr);
        } else {
            let contracted = if fr < worst.1 {
                lerp(&centroid, &reflected, 0.5)
            } else {
                lerp(&centroid, &worst.0, 0.5)
            };
            let fc = f(&contracted);
            if fc < worst.1.min(fr) {
                simplex[3] = (contracted, fc);
            } else {
                let best = simplex[0].0;
                for entry in simplex.iter_mut().skip(1) {
                    let x = lerp(&best, &entry.0, 0.5);
                    *entry = (x, f(&x));
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    simplex[0]
}

/// `(u p + u^2, -(sin phi cos phi p)^2)` with `u = -sin^2(phi) p`.
pub fn sector_identity(phi: f64, p: f64) -> (f64, f64) {
    let (s, c) = phi.sin_cos();
    let u = -s * s * p;
    let lhs = u * p + u * u;
    let scp = s * c * p;
    (lhs, -(scp * scp))
}

/// Largest increase of the storage `V(q, p)` along an oscillator trajectory
/// (original coordinates) of a log-law loop.
pub fn storage_max_increase(
    system: &ClosedLoop,
    traj: &Trajectory,
    form: &QuadraticForm,
) -> Result<f64> {
    let chart = trajectory_in_chart(system, traj, ChartTag::QphiP)?;
    let values: Vec<f64> = chart
        .states
        .iter()
        .map(|z| form.value(z[0], z[2]))
        .collect();
    Ok(values.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max))
}

// ---------------------------------------------------------------------------
// Linearisation of the first-order loop
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Linearization {
    pub matrix: [[f64; 2]; 2],
    /// `[re, im]` pairs, slowest (largest real part) first.
    pub eigenvalues: [[f64; 2]; 2],
    pub stable: bool,
    pub x_star: f64,
}

impl Linearization {
    pub fn slow_rate(&self) -> f64 {
        self.eigenvalues[0][0]
    }
}

/// `[[0, 1], [f'(x*) x*, -g'(mu0)]]` with its eigenvalues.
pub fn linearize_equilibrium(law: &AdaptationLaw, mu0: f64) -> Result<Linearization> {
    let x_star = equilibrium_point(law, mu0)?;
    let matrix = [[0.0, 1.0], [law.df(x_star) * x_star, -law.dg(mu0)]];
    let ev = eig2(matrix);
    Ok(Linearization {
        matrix,
        eigenvalues: [[ev[0].re, ev[0].im], [ev[1].re, ev[1].im]],
        stable: ev.iter().all(|l| l.re < 0.0),
        x_star,
    })
}

/// Decay rate of a small perturbation of the equilibrium, fitted from a
/// simulation of the nonlinear loop: least squares on `ln |z|` at the local
/// maxima of `|z(t)|` in the `(q, p)` chart (the last half of the samples when
/// the response does not oscillate).
pub fn empirical_decay_rate(
    law: &AdaptationLaw,
    mu0: f64,
    offset: f64,
    horizon: f64,
) -> Result<f64> {
    let system = ClosedLoop::first_order(mu0, law.clone())?;
    let x_star = system.anchor()?;
    let cfg = IntegratorConfig::fixed(0.01);
    let traj = integrate(&system, &[x_star * offset.exp(), mu0], 0.0, horizon, &cfg)?;
    let chart = trajectory_in_chart(&system, &traj, ChartTag::Log)?;
    let log_norm: Vec<f64> = chart.states.iter().map(|z| z[0].hypot(z[1]).ln()).collect();
    let mut pts: Vec<(f64, f64)> = (1..log_norm.len() - 1)
        .filter(|&i| log_norm[i] > log_norm[i - 1] && log_norm[i] >= log_norm[i + 1])
        .map(|i| (chart.times[i], log_norm[i]))
        .collect();
    if pts.len() < 3 {
        let half = log_norm.len() / 2;
        pts = (half..log_norm.len())
            .map(|i| (chart.times[i], log_norm[i]))
            .collect();
    }
    Ok(regression_slope(&pts))
}

fn regression_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    sxy / sxx
}

// ---------------------------------------------------------------------------
// Floquet analysis of the tuned orbit
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FloquetMode {
    /// Linear periodic system built from `a_eff`, `b_eff`.
    Reduced,
    /// Finite-difference linearisation of the nonlinear `(q, p)` dynamics along
    /// the orbit with `phi(t) = omega t`.
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FloquetResult {
    pub period: f64,
    pub monodromy: [[f64; 2]; 2],
    /// `[re, im]` pairs, largest modulus first.
    pub multipliers: [[f64; 2]; 2],
    pub spectral_radius: f64,
    /// `exp(int_0^T trace J dt)`, the determinant predicted by Liouville's formula.
    pub liouville_det: f64,
    pub a_eff: f64,
    pub b_eff: f64,
    pub omega: f64,
}

impl FloquetResult {
    pub fn det(&self) -> f64 {
        det2(self.monodromy)
    }

    pub fn multiplier(&self, i: usize) -> Complex64 {
        Complex64::new(self.multipliers[i][0], self.multipliers[i][1])
    }

    pub fn is_stable(&self) -> bool {
        self.spectral_radius < 1.0
    }
}

const FLOQUET_TOL: f64 = 1e-12;

fn floquet_result(
    monodromy: [[f64; 2]; 2],
    period: f64,
    liouville_det: f64,
    coeffs: (f64, f64, f64),
) -> FloquetResult {
    let mut ev = eig2(monodromy);
    ev.sort_by(|a, b| b.norm().total_cmp(&a.norm()));
    FloquetResult {
        period,
        monodromy,
        multipliers: [[ev[0].re, ev[0].im], [ev[1].re, ev[1].im]],
        spectral_radius: ev[0].norm(),
        liouville_det,
        a_eff: coeffs.0,
        b_eff: coeffs.1,
        omega: coeffs.2,
    }
}

/// Monodromy of `q' = sin^2(omega t) p, p' = -a_eff q - b_eff p` over one
/// period `2 pi / omega`. No hypothesis check: any real coefficients.
pub fn floquet_from_coefficients(a_eff: f64, b_eff: f64, omega: f64) -> Result<FloquetResult> {
    if !(omega.is_finite() && omega > 0.0) {
        return Err(Error::Validation(format!("omega must be > 0, got {omega}")));
    }
    let period = std::f64::consts::TAU / omega;
    let field = FnField::new(2, move |t: f64, z: &[f64], dz: &mut [f64]| {
        let s = (omega * t).sin();
        dz[0] = s * s * z[1];
        dz[1] = -a_eff * z[0] - b_eff * z[1];
    });
    let jac = move |t: f64, _z: &[f64], j: &mut [f64]| {
        let s = (omega * t).sin();
        j.copy_from_slice(&[0.0, s * s, -a_eff, -b_eff]);
    };
    let cfg = IntegratorConfig::adaptive(FLOQUET_TOL, FLOQUET_TOL).with_domain_guard(false);
    let (_, phi) = integrate_with_variational(&field, jac, &[0.0, 0.0], 0.0, period, &cfg)?;
    let m = phi.as_2x2().expect("2x2 fundamental matrix");
    Ok(floquet_result(
        m,
        period,
        (-b_eff * period).exp(),
        (a_eff, b_eff, omega),
    ))
}

/// Floquet multipliers of the tuned oscillator orbit. The oscillator
/// hypotheses are validated first.
pub fn floquet_multipliers(
    law: &AdaptationLaw,
    mu0: f64,
    omega: f64,
    mode: FloquetMode,
) -> Result<FloquetResult> {
    let report = validate_oscillator_hypotheses(law, mu0, omega)?;
    if !report.passed() {
        let failed: Vec<String> = report
            .failures()
            .map(|c| format!("{} (margin {:e})", c.name, c.margin))
            .collect();
        return Err(Error::HypothesisViolation(failed.join("; ")));
    }
    let EffectiveCoefficients { a_eff, b_eff, .. } = report
        .coefficients
        .unwrap_or(effective_coefficients(law, mu0)?);
    match mode {
        FloquetMode::Reduced => floquet_from_coefficients(a_eff, b_eff, omega),
        FloquetMode::Full => floquet_full(law, mu0, omega, (a_eff, b_eff)),
    }
}

struct OrbitSlice<'a, V> {
    chart_field: &'a V,
    omega: f64,
}

impl<V: VectorField> VectorField for OrbitSlice<'_, V> {
    fn dim(&self) -> usize {
        2
    }
    fn eval(&self, t: f64, z: &[f64], dz: &mut [f64]) {
        let mut full = [0.0; 3];
        self.chart_field
            .eval(t, &[z[0], self.omega * t, z[1]], &mut full);
        dz[0] = full[0];
        dz[1] = full[2];
    }
}

fn floquet_full(
    law: &AdaptationLaw,
    mu0: f64,
    omega: f64,
    coeffs: (f64, f64),
) -> Result<FloquetResult> {
    let system = ClosedLoop::oscillator(mu0, omega, law.clone())?;
    let chart = system.transformed(ChartTag::QphiP)?;
    let slice = OrbitSlice {
        chart_field: &chart,
        omega,
    };
    let period = std::f64::consts::TAU / omega;
    let jac = |t: f64, z: &[f64], j: &mut [f64]| {
        j.copy_from_slice(&finite_difference_jacobian(&slice, t, z));
    };
    let cfg = IntegratorConfig::adaptive(FLOQUET_TOL, FLOQUET_TOL).with_domain_guard(false);
    let (_, phi) = integrate_with_variational(&slice, jac, &[0.0, 0.0], 0.0, period, &cfg)?;
    let trace = |t: f64| {
        let j = finite_difference_jacobian(&slice, t, &[0.0, 0.0]);
        j[0] + j[3]
    };
    let trace_integral = adaptive_simpson(&trace, 0.0, period, 1e-12, 30);
    let m = phi.as_2x2().expect("2x2 fundamental matrix");
    Ok(floquet_result(
        m,
        period,
        trace_integral.exp(),
        (coeffs.0, coeffs.1, omega),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::{FRAC_PI_4, PI};

    #[test]
    fn simpson_polynomials() {
        let v = adaptive_simpson(&|x: f64| x * x, 0.0, 3.0, 1e-12, 40);
        assert_abs_diff_eq!(v, 9.0, epsilon = 1e-12);
        let v = adaptive_simpson(&|x: f64| x.sin(), 0.0, PI, 1e-12, 40);
        assert_abs_diff_eq!(v, 2.0, epsilon = 1e-11);
        assert_eq!(adaptive_simpson(&|x: f64| x, 1.0, 1.0, 1e-12, 40), 0.0);
        let v = adaptive_simpson(&|x: f64| x, 2.0, 0.0, 1e-12, 40);
        assert_abs_diff_eq!(v, -2.0, epsilon = 1e-14);
    }

    #[test]
    fn eig2_cases() {
        let ev = eig2([[0.0, 1.0], [-1.0, -2.0]]);
        assert_abs_diff_eq!(ev[0].re, -1.0, epsilon = 1e-7);
        assert_abs_diff_eq!(ev[1].re, -1.0, epsilon = 1e-7);
        let ev = eig2([[0.0, 1.0], [-1.0, 0.0]]);
        assert_eq!(ev[0], Complex64::new(0.0, 1.0));
        let ev = eig2([[2.0, 0.0], [0.0, -3.0]]);
        assert_eq!((ev[0].re, ev[1].re), (2.0, -3.0));
    }

    #[test]
    fn jacobi_eigenvalues() {
        let ev = sym3_eigenvalues([[2.0, 1.0, 0.0], [1.0, 2.0, 0.0], [0.0, 0.0, -1.0]]);
        assert_abs_diff_eq!(ev[0], -1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(ev[1], 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(ev[2], 3.0, epsilon = 1e-14);
        // Rank-one negative semidefinite: -v v'.
        let v = [1.0, 2.0, -0.5];
        let m = std::array::from_fn(|i| std::array::from_fn(|j| -v[i] * v[j]));
        let ev = sym3_eigenvalues(m);
        assert!(ev[2].abs() < 1e-15 && ev[1].abs() < 1e-15);
        assert_abs_diff_eq!(ev[0], -5.25, epsilon = 1e-14);
    }

    #[test]
    fn lyapunov_examples() {
        let law = AdaptationLaw::log(2.0, 1.0).unwrap();
        assert_eq!(lyapunov_value(0.0, 0.0, &law, 0.3).unwrap(), 0.0);
        assert_eq!(lyapunov_value(0.0, 1.0, &law, 0.3).unwrap(), 0.5);
        assert_eq!(lyapunov_value(0.0, -2.0, &law, 0.3).unwrap(), 2.0);
        assert_abs_diff_eq!(
            lyapunov_value(1.0, 0.0, &law, 0.3).unwrap(),
            1.0,
            epsilon = 1e-11
        );
        // positive away from the origin
        let v = LyapunovFunction::new(&AdaptationLaw::Sigmoid, 0.5).unwrap();
        for (q, p) in [(-3.0, 0.0), (2.0, 0.1), (0.01, 0.0), (0.0, 1e-3)] {
            assert!(v.value(q, p) > 0.0);
        }
    }

    #[test]
    fn lyapunov_rejects_wrong_dimension() {
        let traj = Trajectory {
            times: vec![0.0],
            states: vec![vec![1.0, 0.0, 0.0]],
            stats: Default::default(),
        };
        let err = lyapunov_monotonicity(&traj, &AdaptationLaw::Sigmoid, 0.0).unwrap_err();
        assert!(matches!(err, Error::ChartMismatch { .. }));
    }

    #[test]
    fn positive_real_examples() {
        assert_eq!(positive_real_margin(1.0, 1.0), 0.0);
        assert_eq!(positive_real_margin(1.0, 2.0), 0.75);
        assert_abs_diff_eq!(positive_real_margin(4.1, 2.0), -0.025, epsilon = 1e-15);
    }

    #[test]
    fn sector_examples() {
        let (l, r) = sector_identity(FRAC_PI_4, 2.0);
        assert_abs_diff_eq!(l, -1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(r, -1.0, epsilon = 1e-15);
        assert_eq!(sector_identity(0.0, 3.7), (0.0, -0.0));
    }

    #[test]
    fn kyp_interior_and_infeasible() {
        let cert = kyp_storage(1.0, 2.0, 7).unwrap();
        assert!(cert.storage.is_positive_definite());
        assert!(cert.max_eigenvalue <= KYP_TOL);
        assert!(matches!(
            kyp_storage(8.0, 2.0, 7),
            Err(Error::Infeasible { .. })
        ));
    }

    #[test]
    fn kyp_boundary_feasible() {
        let cert = kyp_storage(4.0, 2.0, 3).unwrap();
        assert!(cert.storage.is_positive_definite());
        assert!(cert.max_eigenvalue <= KYP_TOL, "{cert:?}");
    }

    #[test]
    fn linearization_examples() {
        let lin = linearize_equilibrium(&AdaptationLaw::log(1.5, 0.5).unwrap(), 0.2).unwrap();
        assert_abs_diff_eq!(lin.matrix[1][0], -1.5, epsilon = 1e-12);
        assert_eq!(lin.matrix[1][1], -0.5);
        let lin = linearize_equilibrium(&AdaptationLaw::Sigmoid, 0.0).unwrap();
        assert_eq!(lin.matrix, [[0.0, 1.0], [-0.5, -0.25]]);
        assert!(lin.stable);
        let lin = linearize_equilibrium(&AdaptationLaw::log(1.0, 2.0).unwrap(), 0.0).unwrap();
        assert_abs_diff_eq!(lin.eigenvalues[0][0], -1.0, epsilon = 1e-7);
        assert_abs_diff_eq!(lin.eigenvalues[1][0], -1.0, epsilon = 1e-7);
    }

    #[test]
    fn floquet_basic() {
        let res = floquet_from_coefficients(1.0, 1.0, 1.0).unwrap();
        assert!(res.spectral_radius < 1.0);
        assert!((res.det() - res.liouville_det).abs() < 1e-8);
        let flipped = floquet_from_coefficients(-1.0, 1.0, 1.0).unwrap();
        assert!(flipped.spectral_radius > 1.0);
    }

    #[test]
    fn floquet_validates_hypotheses() {
        let bad = AdaptationLaw::log(4.5, 2.0).unwrap();
        let err = floquet_multipliers(&bad, 0.1, 1.0, FloquetMode::Reduced).unwrap_err();
        assert!(matches!(err, Error::HypothesisViolation(_)));
    }

    #[test]
    fn floquet_full_matches_reduced() {
        for law in [
            AdaptationLaw::log(1.0, 1.0).unwrap(),
            AdaptationLaw::bounded_osc(1.0, 1.0).unwrap(),
        ] {
            let r = floquet_multipliers(&law, 0.5, 1.0, FloquetMode::Reduced).unwrap();
            let f = floquet_multipliers(&law, 0.5, 1.0, FloquetMode::Full).unwrap();
            for i in 0..2 {
                assert!(
                    (r.multiplier(i) - f.multiplier(i)).norm() < 1e-6,
                    "{r:?} {f:?}"
                );
            }
            assert!((f.det() - f.liouville_det).abs() < 1e-8);
        }
    }
}
