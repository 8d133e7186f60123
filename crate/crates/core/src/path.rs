//! Discrete actions, time-sliced propagators and phasor resultants in one dimension.
//!
//! The sliced propagator composes short-time kernels
//! `K(x′, x) = √(m / 2πiℏΔt) · exp(i S_slice(x, x′) / ℏ)` by trapezoid integration over
//! a truncated position grid. Two smooth windows keep the truncated oscillatory sums
//! honest:
//!
//! * the integration weights roll off to zero over the outer half of the grid, so the
//!   hard cutoff contributes no endpoint terms;
//! * kernel entries roll off once `|x′ − x|` approaches `πℏΔt / (m h)`, the separation at
//!   which the kernel's local wavenumber reaches the grid's Nyquist limit. Beyond it the
//!   sampled kernel aliases.
//!
//! Both windows leave the exact continuum kernel untouched wherever the stationary
//! points of the composed integrand lie.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::hv::normalize_angle;
use crate::rng::trial_rng;

/// Below this modulus a resultant's angle is reported as 0 and flagged degenerate.
pub const DEGENERATE_RADIUS: f64 = 1e-12;

/// Truncation sensitivity above which `support_warning` is raised.
pub const SUPPORT_WARNING_THRESHOLD: f64 = 1e-3;

/// Fraction of the grid half-width left unwindowed.
const EDGE_FLAT: f64 = 0.5;

/// Narrower flat fraction used by the truncation sensitivity check.
const SENSITIVITY_FLAT: f64 = 0.4;

/// Fraction of the aliasing separation left unwindowed.
const RANGE_FLAT: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Potential {
    Free,
    /// `V(x) = ½ m ω² x²`.
    Harmonic {
        omega: f64,
    },
}

impl Potential {
    pub fn energy(&self, mass: f64, x: f64) -> f64 {
        match *self {
            Potential::Free => 0.0,
            Potential::Harmonic { omega } => 0.5 * mass * omega * omega * x * x,
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            Potential::Harmonic { omega } if !(omega.is_finite() && omega > 0.0) => Err(
                Error::usage(format!("harmonic frequency must be positive, got {omega}")),
            ),
            _ => Ok(()),
        }
    }
}

/// A discretized path with both endpoints fixed.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSample {
    positions: Vec<f64>,
    t_total: f64,
}

impl PathSample {
    pub fn new(positions: Vec<f64>, t_total: f64) -> Result<Self> {
        if positions.len() < 2 {
            return Err(Error::usage("a path needs at least one slice"));
        }
        if !(t_total.is_finite() && t_total > 0.0) {
            return Err(Error::usage(format!(
                "path duration must be positive, got {t_total}"
            )));
        }
        if positions.iter().any(|x| !x.is_finite()) {
            return Err(Error::usage("path positions must be finite"));
        }
        Ok(PathSample { positions, t_total })
    }

    /// Constant-velocity path from `u` to `v`.
    pub fn straight(u: f64, v: f64, t_total: f64, n_slices: usize) -> Result<Self> {
        if n_slices == 0 {
            return Err(Error::usage("n_slices must be at least 1"));
        }
        Self::new(straight_line(u, v, n_slices), t_total)
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn t_total(&self) -> f64 {
        self.t_total
    }

    pub fn n_slices(&self) -> usize {
        self.positions.len() - 1
    }
}

fn straight_line(u: f64, v: f64, n: usize) -> Vec<f64> {
    let mut xs: Vec<f64> = (0..=n)
        .map(|k| u + (v - u) * (k as f64 / n as f64))
        .collect();
    xs[0] = u;
    xs[n] = v;
    xs
}

/// An action in action units (not yet divided by ℏ).
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize)]
pub struct ActionValue(pub f64);

impl ActionValue {
    pub fn phase(&self, hbar: f64) -> f64 {
        self.0 / hbar
    }
}

/// `S = Σ [½ m ((x_{k+1} − x_k)/Δt)² − V((x_k + x_{k+1})/2)] Δt`.
pub fn discrete_action(path: &PathSample, potential: &Potential, mass: f64) -> ActionValue {
    let dt = path.t_total / path.n_slices() as f64;
    let s = path
        .positions
        .windows(2)
        .map(|w| {
            let vel = (w[1] - w[0]) / dt;
            (0.5 * mass * vel * vel - potential.energy(mass, 0.5 * (w[0] + w[1]))) * dt
        })
        .sum();
    ActionValue(s)
}

/// A complex amplitude.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Amplitude(pub Complex64);

impl Amplitude {
    pub fn re(&self) -> f64 {
        self.0.re
    }

    pub fn im(&self) -> f64 {
        self.0.im
    }

    pub fn modulus(&self) -> f64 {
        self.0.norm()
    }

    /// Argument in `(−π, π]`.
    pub fn phase(&self) -> f64 {
        self.0.arg()
    }

    /// `||self| − |reference|| / |reference|`.
    pub fn rel_err_modulus(&self, reference: &Amplitude) -> f64 {
        (self.modulus() - reference.modulus()).abs() / reference.modulus()
    }

    /// Phase difference to `reference`, wrapped into `(−π, π]`.
    pub fn phase_err(&self, reference: &Amplitude) -> f64 {
        (self.0 / reference.0).arg()
    }
}

/// Polar form of a phasor sum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Resultant {
    pub r: f64,
    /// In `[0, 2π)`; 0 when `degenerate`.
    pub theta: f64,
    pub degenerate: bool,
}

/// `r·e^{iθ} = Σ e^{iφ_k}`.
pub fn resultant(phases: &[f64]) -> Result<Resultant> {
    match phases {
        [] => Err(Error::usage("resultant of an empty phase list")),
        [phi] => Ok(Resultant {
            r: 1.0,
            theta: normalize_angle(*phi),
            degenerate: false,
        }),
        _ => {
            let (mut re, mut im) = (Neumaier::default(), Neumaier::default());
            for phi in phases {
                let (s, c) = phi.sin_cos();
                re.add(c);
                im.add(s);
            }
            let (x, y) = (re.total(), im.total());
            let r = x.hypot(y);
            if r < DEGENERATE_RADIUS {
                Ok(Resultant {
                    r,
                    theta: 0.0,
                    degenerate: true,
                })
            } else {
                Ok(Resultant {
                    r,
                    theta: normalize_angle(y.atan2(x)),
                    degenerate: false,
                })
            }
        }
    }
}

#[derive(Default)]
struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn total(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Spatial truncation of the propagator grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Grid {
    pub x_min: f64,
    pub x_max: f64,
    pub n_points: usize,
}

impl Grid {
    pub fn new(x_min: f64, x_max: f64, n_points: usize) -> Self {
        Grid {
            x_min,
            x_max,
            n_points,
        }
    }

    pub fn spacing(&self) -> f64 {
        (self.x_max - self.x_min) / (self.n_points - 1) as f64
    }

    pub fn points(&self) -> Vec<f64> {
        let h = self.spacing();
        (0..self.n_points)
            .map(|j| self.x_min + j as f64 * h)
            .collect()
    }

    /// Position scaled so the grid spans `[−1, 1]`.
    fn unit(&self, x: f64) -> f64 {
        let c = 0.5 * (self.x_min + self.x_max);
        let half = 0.5 * (self.x_max - self.x_min);
        (x - c) / half
    }
}

/// Raised-cosine roll-off: 1 for `|z| ≤ flat`, 0 for `|z| ≥ 1`.
fn rolloff(z: f64, flat: f64) -> f64 {
    let r = ((z.abs() - flat) / (1.0 - flat)).clamp(0.0, 1.0);
    0.5 * (1.0 + (PI * r).cos())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PropagatorSpec {
    pub mass: f64,
    pub hbar: f64,
    pub potential: Potential,
    pub u: f64,
    pub v: f64,
    pub t: f64,
    pub n_slices: usize,
    pub grid: Grid,
}

impl PropagatorSpec {
    /// Free particle with `m = ℏ = 1`.
    pub fn free(u: f64, v: f64, t: f64, n_slices: usize, grid: Grid) -> Self {
        PropagatorSpec {
            mass: 1.0,
            hbar: 1.0,
            potential: Potential::Free,
            u,
            v,
            t,
            n_slices,
            grid,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, x: f64| {
            if x.is_finite() && x > 0.0 {
                Ok(())
            } else {
                Err(Error::usage(format!("{name} must be positive, got {x}")))
            }
        };
        positive("mass", self.mass)?;
        positive("hbar", self.hbar)?;
        positive("t", self.t)?;
        self.potential.validate()?;
        if self.n_slices == 0 {
            return Err(Error::usage("n_slices must be at least 1"));
        }
        let g = &self.grid;
        if g.n_points < 16 {
            return Err(Error::usage(format!(
                "grid needs at least 16 points, got {}",
                g.n_points
            )));
        }
        if !(g.x_min < self.u && self.u < g.x_max && g.x_min < self.v && self.v < g.x_max) {
            return Err(Error::usage(format!(
                "endpoints {} and {} must lie strictly inside ({}, {})",
                self.u, self.v, g.x_min, g.x_max
            )));
        }
        Ok(())
    }

    fn dt(&self) -> f64 {
        self.t / self.n_slices as f64
    }

    /// Short-time kernel without any window.
    fn kernel(&self, x_to: f64, x_from: f64, dt: f64) -> Complex64 {
        let d = x_to - x_from;
        let s = 0.5 * self.mass * d * d / dt
            - self.potential.energy(self.mass, 0.5 * (x_to + x_from)) * dt;
        slice_normalization(self.mass, self.hbar, dt) * Complex64::from_polar(1.0, s / self.hbar)
    }
}

/// `√(m / 2πiℏΔt)` on the principal branch, i.e. `√(m / 2πℏΔt)·e^{−iπ/4}`.
fn slice_normalization(mass: f64, hbar: f64, dt: f64) -> Complex64 {
    Complex64::from_polar((mass / (TAU * hbar * dt)).sqrt(), -PI / 4.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropagatorResult {
    pub amplitude: Amplitude,
    /// Relative change of the final readout when the edge window's flat region is
    /// narrowed. Large values mean the result still feels the grid truncation.
    pub boundary_sensitivity: f64,
    pub support_warning: bool,
}

/// `⟨v|u⟩` by composing `n_slices` short-time kernels on the grid.
pub fn sliced_propagator(spec: &PropagatorSpec) -> Result<PropagatorResult> {
    spec.validate()?;
    let dt = spec.dt();
    if spec.n_slices == 1 {
        return Ok(PropagatorResult {
            amplitude: Amplitude(spec.kernel(spec.v, spec.u, dt)),
            boundary_sensitivity: 0.0,
            support_warning: false,
        });
    }

    let grid = spec.grid;
    let xs = grid.points();
    let h = grid.spacing();
    let weights: Vec<f64> = xs
        .iter()
        .enumerate()
        .map(|(j, &x)| {
            let trap = if j == 0 || j + 1 == xs.len() {
                0.5 * h
            } else {
                h
            };
            trap * rolloff(grid.unit(x), EDGE_FLAT)
        })
        .collect();
    let alias_sep = PI * spec.hbar * dt / (spec.mass * h);
    let windowed = |x_to: f64, x_from: f64| {
        spec.kernel(x_to, x_from, dt) * rolloff((x_to - x_from) / alias_sep, RANGE_FLAT)
    };

    let mut f: Vec<Complex64> = xs.iter().map(|&x| windowed(x, spec.u)).collect();
    if spec.n_slices > 2 {
        let n = xs.len();
        let matrix: Vec<Complex64> = (0..n * n)
            .into_par_iter()
            .map(|idx| {
                let (i, j) = (idx / n, idx % n);
                windowed(xs[i], xs[j]) * weights[j]
            })
            .collect();
        for _ in 0..spec.n_slices - 2 {
            f = matrix
                .par_chunks(n)
                .map(|row| row.iter().zip(&f).map(|(k, fj)| k * fj).sum())
                .collect();
        }
    }

    let readout: Vec<Complex64> = xs
        .iter()
        .zip(&f)
        .map(|(&x, fx)| windowed(spec.v, x) * fx)
        .collect();
    let total: Complex64 = readout.iter().zip(&weights).map(|(t, w)| t * w).sum();
    // same readout with a narrower flat region: a stand-in for "did truncation matter"
    let narrowed: Complex64 = xs
        .iter()
        .zip(&weights)
        .zip(&readout)
        .map(|((&x, &w), t)| {
            let shrink = rolloff(grid.unit(x), SENSITIVITY_FLAT)
                / rolloff(grid.unit(x), EDGE_FLAT).max(f64::MIN_POSITIVE);
            t * w * shrink.min(1.0)
        })
        .sum();
    let endpoints_inside =
        grid.unit(spec.u).abs() <= EDGE_FLAT && grid.unit(spec.v).abs() <= EDGE_FLAT;
    let boundary_sensitivity = if total.norm() > 0.0 {
        (narrowed - total).norm() / total.norm()
    } else {
        f64::INFINITY
    };
    Ok(PropagatorResult {
        amplitude: Amplitude(total),
        boundary_sensitivity,
        support_warning: !endpoints_inside || boundary_sensitivity > SUPPORT_WARNING_THRESHOLD,
    })
}

/// Closed-form propagator.
///
/// The harmonic case carries the Maslov phase `e^{−iπn/2}`, `n = ⌊ωt/π⌋`, and is
/// undefined at caustics where `sin ωt = 0`.
pub fn analytic_propagator(
    potential: &Potential,
    mass: f64,
    hbar: f64,
    u: f64,
    v: f64,
    t: f64,
) -> Result<Amplitude> {
    potential.validate()?;
    match *potential {
        Potential::Free => {
            let phase = mass * (v - u).powi(2) / (2.0 * hbar * t);
            Ok(Amplitude(
                slice_normalization(mass, hbar, t) * Complex64::from_polar(1.0, phase),
            ))
        }
        Potential::Harmonic { omega } => {
            let wt = omega * t;
            let s = wt.sin();
            if s.abs() < 1e-12 {
                return Err(Error::Domain(format!("caustic: sin(ωt) = 0 at ωt = {wt}")));
            }
            let maslov = (wt / PI).floor();
            let modulus = (mass * omega / (TAU * hbar * s.abs())).sqrt();
            let phase =
                mass * omega / (2.0 * hbar * s) * ((u * u + v * v) * wt.cos() - 2.0 * u * v);
            Ok(Amplitude(Complex64::from_polar(
                modulus,
                phase - PI / 4.0 - maslov * PI / 2.0,
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub n_slices: usize,
    pub n_points: usize,
    pub re: f64,
    pub im: f64,
    pub rel_err_modulus: f64,
    pub phase_err: f64,
    pub support_warning: bool,
}

/// Sliced propagator against the closed form for each `(slices, points)` combination.
pub fn convergence_table(
    base: &PropagatorSpec,
    slices: &[usize],
    points: &[usize],
) -> Result<Vec<ConvergenceRow>> {
    let exact = analytic_propagator(
        &base.potential,
        base.mass,
        base.hbar,
        base.u,
        base.v,
        base.t,
    )?;
    let mut rows = Vec::new();
    for &n_slices in slices {
        for &n_points in points {
            let spec = PropagatorSpec {
                n_slices,
                grid: Grid {
                    n_points,
                    ..base.grid
                },
                ..*base
            };
            let res = sliced_propagator(&spec)?;
            rows.push(ConvergenceRow {
                n_slices,
                n_points,
                re: res.amplitude.re(),
                im: res.amplitude.im(),
                rel_err_modulus: res.amplitude.rel_err_modulus(&exact),
                phase_err: res.amplitude.phase_err(&exact),
                support_warning: res.support_warning,
            });
        }
    }
    Ok(rows)
}

/// Brownian-bridge perturbations of the straight line from `u` to `v`.
///
/// Path `i` is drawn from stream `(seed, i)`; increments have variance
/// `jitter_scale² · Δt` and both endpoints are pinned exactly.
pub fn sample_paths(
    u: f64,
    v: f64,
    t: f64,
    n_slices: usize,
    n_paths: usize,
    jitter_scale: f64,
    seed: u64,
) -> Result<Vec<PathSample>> {
    if n_paths == 0 {
        return Err(Error::usage("n_paths must be at least 1"));
    }
    if n_slices == 0 {
        return Err(Error::usage("n_slices must be at least 1"));
    }
    if !(jitter_scale.is_finite() && jitter_scale >= 0.0) {
        return Err(Error::usage("jitter_scale must be non-negative"));
    }
    let line = straight_line(u, v, n_slices);
    let step = jitter_scale * (t / n_slices as f64).sqrt();
    (0..n_paths)
        .map(|i| {
            let mut rng = trial_rng(seed, i as u64);
            let mut walk = Vec::with_capacity(n_slices + 1);
            walk.push(0.0);
            for _ in 0..n_slices {
                let z: f64 = StandardNormal.sample(&mut rng);
                walk.push(walk.last().copied().unwrap_or(0.0) + step * z);
            }
            let end = walk[n_slices];
            let mut xs: Vec<f64> = line
                .iter()
                .zip(&walk)
                .enumerate()
                .map(|(k, (x, w))| x + (w - end * (k as f64 / n_slices as f64)))
                .collect();
            xs[0] = u;
            xs[n_slices] = v;
            PathSample::new(xs, t)
        })
        .collect()
}
