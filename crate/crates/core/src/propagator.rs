//! Free damped evolution `u_tt − Δu + αu_t = 0` through the multiplier
//! L(t, ξ), applied in the eigenbasis of the discrete radial Laplacian.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{FieldPair, RadialGrid};
use crate::spectral::least_squares_slope;
use crate::virial::smoothstep5;

/// Spectral tail fraction above which data is considered aliased.
pub const ALIAS_TOLERANCE: f64 = 1e-6;

/// sinh(√y)/√y, continued to sin(√−y)/√−y for y < 0.
fn sinhc(y: f64) -> f64 {
    if y.abs() < 1e-3 {
        1.0 + y / 6.0 * (1.0 + y / 20.0 * (1.0 + y / 42.0))
    } else if y > 0.0 {
        let s = y.sqrt();
        s.sinh() / s
    } else {
        let s = (-y).sqrt();
        s.sin() / s
    }
}

/// cosh(√y), continued to cos(√−y).
fn cosh_c(y: f64) -> f64 {
    if y >= 0.0 {
        y.sqrt().cosh()
    } else {
        (-y).sqrt().cos()
    }
}

/// L(t, ξ) including the e^{−αt/2} factor.
pub fn multiplier_l(alpha: f64, t: f64, xi: f64) -> f64 {
    let y = (0.25 * alpha * alpha - xi * xi) * t * t;
    (-0.5 * alpha * t).exp() * t * sinhc(y)
}

/// ∂_t L(t, ξ)
pub fn multiplier_dt(alpha: f64, t: f64, xi: f64) -> f64 {
    let y = (0.25 * alpha * alpha - xi * xi) * t * t;
    (-0.5 * alpha * t).exp() * (cosh_c(y) - 0.5 * alpha * t * sinhc(y))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MultiplierEval {
    pub alpha: f64,
    pub t: f64,
    pub xi: f64,
    pub value: f64,
    pub dt_value: f64,
}

impl MultiplierEval {
    pub fn new(alpha: f64, t: f64, xi: f64) -> Self {
        MultiplierEval {
            alpha,
            t,
            xi,
            value: multiplier_l(alpha, t, xi),
            dt_value: multiplier_dt(alpha, t, xi),
        }
    }
}

/// Low-frequency cutoff χ_{≤1}(ξ): 1 for ξ ≤ 1, 0 for ξ ≥ 2.
pub fn low_cutoff(xi: f64) -> f64 {
    1.0 - smoothstep5(xi - 1.0)
}

/// Eigenbasis of the discrete −Δ with respect to the quadrature weights.
#[derive(Debug, Clone)]
pub struct FreePropagator {
    grid: RadialGrid,
    xi: Vec<f64>,
    basis: DMatrix<f64>,
    sqrt_w: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub u: Vec<f64>,
    pub udot: Vec<f64>,
}

impl FreePropagator {
    pub fn new(grid: &RadialGrid) -> Self {
        let n = grid.len();
        let (kd, ko) = grid.stiffness();
        let w = grid.weights();
        let mut a = DMatrix::zeros(n, n);
        for i in 0..n {
            a[(i, i)] = kd[i] / w[i];
            if i + 1 < n {
                let v = ko[i] / (w[i] * w[i + 1]).sqrt();
                a[(i, i + 1)] = v;
                a[(i + 1, i)] = v;
            }
        }
        let eig = SymmetricEigen::new(a);
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
        let mut basis = DMatrix::zeros(n, n);
        let mut xi = Vec::with_capacity(n);
        for (k, &i) in order.iter().enumerate() {
            let mut col = eig.eigenvectors.column(i).clone_owned();
            // fix the sign so the transform is reproducible
            let pivot = col
                .iter()
                .fold(0.0f64, |m, v| if v.abs() > m.abs() { *v } else { m });
            if pivot < 0.0 {
                col.neg_mut();
            }
            basis.set_column(k, &col);
            xi.push(eig.eigenvalues[i].max(0.0).sqrt());
        }
        FreePropagator {
            grid: grid.clone(),
            xi,
            basis,
            sqrt_w: w.iter().map(|v| v.sqrt()).collect(),
        }
    }

    pub fn grid(&self) -> &RadialGrid {
        &self.grid
    }

    /// Radial frequencies ξ_k, increasing.
    pub fn frequencies(&self) -> &[f64] {
        &self.xi
    }

    pub fn forward(&self, u: &[f64]) -> Vec<f64> {
        let v = DVector::from_iterator(u.len(), u.iter().zip(&self.sqrt_w).map(|(a, s)| a * s));
        (self.basis.transpose() * v).iter().copied().collect()
    }

    pub fn inverse(&self, c: &[f64]) -> Vec<f64> {
        let v = &self.basis * DVector::from_column_slice(c);
        v.iter().zip(&self.sqrt_w).map(|(a, s)| a / s).collect()
    }

    pub fn transform(&self, f: &FieldPair) -> Spectrum {
        Spectrum {
            u: self.forward(&f.u),
            udot: self.forward(&f.udot),
        }
    }

    /// Fraction of the energy carried by the top tenth of the frequencies.
    pub fn tail_fraction(&self, f: &FieldPair) -> f64 {
        let s = self.transform(f);
        let n = self.xi.len();
        let cut = n - n / 10;
        let mut total = 0.0;
        let mut tail = 0.0;
        for k in 0..n {
            let e = self.xi[k].powi(2) * s.u[k].powi(2) + s.udot[k].powi(2);
            total += e;
            if k >= cut {
                tail += e;
            }
        }
        if total == 0.0 {
            0.0
        } else {
            tail / total
        }
    }

    pub fn check_resolution(&self, f: &FieldPair) -> Result<()> {
        let fraction = self.tail_fraction(f);
        if fraction > ALIAS_TOLERANCE {
            return Err(Error::Aliasing {
                fraction,
                tolerance: ALIAS_TOLERANCE,
            });
        }
        Ok(())
    }

    /// Evolve spectral coefficients: u = L(u₁ + αu₀) + ∂_tL·u₀.
    pub fn evolve_spectrum(&self, s: &Spectrum, alpha: f64, t: f64) -> Spectrum {
        let mut u = Vec::with_capacity(s.u.len());
        let mut udot = Vec::with_capacity(s.u.len());
        for k in 0..s.u.len() {
            let xi = self.xi[k];
            let l = multiplier_l(alpha, t, xi);
            let dl = multiplier_dt(alpha, t, xi);
            // ∂_t²L = −α∂_tL − ξ²L
            let ddl = -alpha * dl - xi * xi * l;
            let a = s.udot[k] + alpha * s.u[k];
            u.push(l * a + dl * s.u[k]);
            udot.push(dl * a + ddl * s.u[k]);
        }
        Spectrum { u, udot }
    }

    pub fn evolve(&self, f: &FieldPair, alpha: f64, t: f64) -> Result<FieldPair> {
        self.grid.check_len(&f.u)?;
        self.check_resolution(f)?;
        Ok(self.evolve_unchecked(f, alpha, t))
    }

    pub fn evolve_unchecked(&self, f: &FieldPair, alpha: f64, t: f64) -> FieldPair {
        let s = self.evolve_spectrum(&self.transform(f), alpha, t);
        FieldPair {
            u: self.inverse(&s.u),
            udot: self.inverse(&s.udot),
        }
    }

    /// Multiply the spectrum by `filter(ξ)`.
    pub fn filter(&self, u: &[f64], filter: impl Fn(f64) -> f64) -> Vec<f64> {
        let mut c = self.forward(u);
        for (ck, xi) in c.iter_mut().zip(&self.xi) {
            *ck *= filter(*xi);
        }
        self.inverse(&c)
    }

    pub fn low_pass(&self, u: &[f64]) -> Vec<f64> {
        self.filter(u, low_cutoff)
    }

    pub fn high_pass(&self, u: &[f64]) -> Vec<f64> {
        self.filter(u, |xi| 1.0 - low_cutoff(xi))
    }

    /// ∫_{t0}^{t1} ‖u_t‖² dt by composite Simpson with `panels` (even) panels.
    pub fn kinetic_integral(&self, f: &FieldPair, alpha: f64, t0: f64, t1: f64, panels: usize) -> f64 {
        let panels = panels + panels % 2;
        let s0 = self.transform(f);
        let dt = (t1 - t0) / panels as f64;
        let mut acc = 0.0;
        for k in 0..=panels {
            let s = self.evolve_spectrum(&s0, alpha, t0 + k as f64 * dt);
            let e: f64 = s.udot.iter().map(|v| v * v).sum();
            let wgt = if k == 0 || k == panels {
                1.0
            } else if k % 2 == 1 {
                4.0
            } else {
                2.0
            };
            acc += wgt * e;
        }
        acc * dt / 3.0
    }
}

/// Weighted L^p norm; `p = ∞` gives the sup norm.
pub fn lp_norm(grid: &RadialGrid, u: &[f64], p: f64) -> f64 {
    if p.is_infinite() {
        return u.iter().fold(0.0, |m, v| m.max(v.abs()));
    }
    let s: f64 = u
        .iter()
        .zip(grid.weights())
        .map(|(v, w)| w * v.abs().powf(p))
        .sum();
    s.powf(1.0 / p)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayFit {
    pub slope: f64,
    pub residual: f64,
    /// Predicted low-frequency exponent −(D/2)(1/q − 1/p).
    pub predicted: f64,
    pub reliable: bool,
}

pub const FIT_RESIDUAL_LIMIT: f64 = 0.1;

/// Slope of log‖𝒟(t)g‖_{L^p} against log t over t ∈ [10, 100] for
/// low-frequency data `g` (the cutoff χ_{≤1} is applied here).
pub fn measure_decay(prop: &FreePropagator, alpha: f64, q: f64, p: f64, g: &[f64]) -> DecayFit {
    let grid = prop.grid();
    let data = prop.low_pass(g);
    let f = FieldPair::new(vec![0.0; data.len()], data).expect("equal lengths");
    let s0 = prop.transform(&f);
    let pts: Vec<(f64, f64)> = (0..=40)
        .map(|k| {
            let t = 10.0 * 10f64.powf(k as f64 / 40.0);
            let s = prop.evolve_spectrum(&s0, alpha, t);
            let u = prop.inverse(&s.u);
            (t.ln(), lp_norm(grid, &u, p).ln())
        })
        .collect();
    let (slope, residual) = least_squares_slope(&pts);
    let inv = |x: f64| if x.is_infinite() { 0.0 } else { 1.0 / x };
    DecayFit {
        slope,
        residual,
        predicted: -(grid.dim() as f64) / 2.0 * (inv(q) - inv(p)),
        reliable: residual <= FIT_RESIDUAL_LIMIT,
    }
}

/// Slope of log sup|𝒟(t)g| against t for high-frequency data over [t0, t1].
pub fn envelope_decay(prop: &FreePropagator, alpha: f64, g: &[f64], t0: f64, t1: f64) -> DecayFit {
    let data = prop.high_pass(g);
    let f = FieldPair::new(vec![0.0; data.len()], data).expect("equal lengths");
    let s0 = prop.transform(&f);
    // running maximum over short windows removes the oscillation
    let window = 2.0 * std::f64::consts::PI;
    let n = 200;
    let times: Vec<f64> = (0..=n).map(|k| t0 + (t1 - t0) * k as f64 / n as f64).collect();
    let sup: Vec<f64> = times
        .iter()
        .map(|&t| {
            let u = prop.inverse(&prop.evolve_spectrum(&s0, alpha, t).u);
            lp_norm(prop.grid(), &u, f64::INFINITY)
        })
        .collect();
    let mut pts = vec![];
    let mut start = 0;
    while start < times.len() {
        let end = times[start..]
            .iter()
            .position(|&t| t >= times[start] + window)
            .map(|p| start + p)
            .unwrap_or(times.len());
        let (k, m) = (start..end)
            .map(|k| (k, sup[k]))
            .fold((start, 0.0), |a, b| if b.1 > a.1 { b } else { a });
        if m > 0.0 {
            pts.push((times[k], m.ln()));
        }
        start = end;
    }
    let (slope, residual) = least_squares_slope(&pts);
    DecayFit {
        slope,
        residual,
        predicted: -alpha / 2.0,
        reliable: residual <= FIT_RESIDUAL_LIMIT,
    }
}

/// Largest deviation from the Duhamel formula
/// u(t) = S(t)u⃗(t₀) + ∫ L(t−s) f(u(s)) ds over equally spaced samples.
pub fn duhamel_defect(
    prop: &FreePropagator,
    alpha: f64,
    times: &[f64],
    states: &[FieldPair],
    forcing: impl Fn(&[f64]) -> Vec<f64>,
) -> f64 {
    let n = times.len() - 1;
    assert!(n >= 2 && n.is_multiple_of(2), "need an even number of panels");
    let s0 = prop.transform(&states[0]);
    let t_end = times[n];
    let free = prop.evolve_spectrum(&s0, alpha, t_end - times[0]);
    let mut acc = free.u.clone();
    let dt = (t_end - times[0]) / n as f64;
    for (k, (t, state)) in times.iter().zip(states).enumerate() {
        let c = prop.forward(&forcing(&state.u));
        let wgt = if k == 0 || k == n {
            1.0
        } else if k % 2 == 1 {
            4.0
        } else {
            2.0
        } * dt
            / 3.0;
        for (j, a) in acc.iter_mut().enumerate() {
            *a += wgt * multiplier_l(alpha, t_end - t, prop.frequencies()[j]) * c[j];
        }
    }
    let u = prop.inverse(&acc);
    let diff: Vec<f64> = u.iter().zip(&states[n].u).map(|(a, b)| a - b).collect();
    lp_norm(prop.grid(), &diff, f64::INFINITY)
}
