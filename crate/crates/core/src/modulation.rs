//! Static modulation: scale detection, the Z-orthogonality fit, the
//! proximity value d, spectral components a_j± and the refined parameters.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::bubbles::{lambda_w_l2_scaled, lambda_w_l2sq_exact, lambda_w_scaled, multibubble, BubbleFamily};
use crate::error::{Error, Result};
use crate::evolve::{Observer, Sample};
use crate::grid::{e_norm, FieldPair, RadialGrid};
use crate::spectral::SpectralPack;
use crate::virial::{virial_ops, Cutoff, TruncatedQ};

pub const MAX_ITERATIONS: usize = 50;
/// Largest relative change of any λ_j within one fit.
pub const TRUST_RATIO: f64 = 1.1;
/// Normalized orthogonality defect at which a fit is accepted.
pub const FIT_TOLERANCE: f64 = 1e-11;
/// Peaks lower than this fraction of the highest one are ignored.
pub const PEAK_FLOOR: f64 = 0.2;

/// Local maxima of |u|·r^{(D−2)/2}; λ = peak radius/√(D(D−2)).
pub fn detect_scales(grid: &RadialGrid, state: &FieldPair, max_bubbles: usize) -> (Vec<i8>, Vec<f64>) {
    let d = grid.dim() as f64;
    let r = grid.nodes();
    let prof: Vec<f64> = r
        .iter()
        .zip(&state.u)
        .map(|(r, u)| u.abs() * r.powf((d - 2.0) / 2.0))
        .collect();
    let top = prof.iter().cloned().fold(0.0, f64::max);
    if top == 0.0 || max_bubbles == 0 {
        return (vec![], vec![]);
    }
    let n = prof.len();
    let mut peaks: Vec<usize> = (1..n - 1)
        .filter(|&i| prof[i] > prof[i - 1] && prof[i] >= prof[i + 1] && prof[i] >= PEAK_FLOOR * top)
        .collect();
    peaks.sort_by(|a, b| prof[*b].total_cmp(&prof[*a]));
    peaks.truncate(max_bubbles);
    peaks.sort_unstable();
    let norm = (d * (d - 2.0)).sqrt();
    let iotas = peaks
        .iter()
        .map(|&i| if state.u[i] >= 0.0 { 1 } else { -1 })
        .collect();
    let lambdas = peaks.iter().map(|&i| peak_radius(r, &prof, i) / norm).collect();
    (iotas, lambdas)
}

/// Vertex of the parabola through the three samples around a peak.
fn peak_radius(r: &[f64], p: &[f64], i: usize) -> f64 {
    let (x0, x1, x2) = (r[i - 1], r[i], r[i + 1]);
    let (y0, y1, y2) = (p[i - 1], p[i], p[i + 1]);
    let den = (x0 - x1) * (x0 - x2) * (x1 - x2);
    let a = (x2 * (y1 - y0) + x1 * (y0 - y2) + x0 * (y2 - y1)) / den;
    let b = (x2 * x2 * (y0 - y1) + x1 * x1 * (y2 - y0) + x0 * x0 * (y1 - y2)) / den;
    if a < 0.0 {
        (-b / (2.0 * a)).clamp(x0, x2)
    } else {
        x1
    }
}

/// Gauss-Newton on ‖∇(u − 𝒲)‖² in log λ.
pub fn refine_scales(grid: &RadialGrid, state: &FieldPair, iotas: &[i8], lambdas: &[f64]) -> Vec<f64> {
    let dim = grid.dim();
    let m = lambdas.len();
    let dot = |a: &[f64], b: &[f64]| {
        let s: Vec<f64> = a.iter().zip(b).map(|(x, y)| x + y).collect();
        let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
        (grid.dirichlet(&s) - grid.dirichlet(&d)) / 4.0
    };
    let misfit = |l: &[f64]| -> Option<(Vec<f64>, f64)> {
        let fam = BubbleFamily::new(dim, iotas.to_vec(), l.to_vec()).ok()?;
        let g = state.sub(&multibubble(grid, &fam)).u;
        let e = grid.dirichlet(&g);
        Some((g, e))
    };
    let mut cur = lambdas.to_vec();
    let Some((mut g, mut e)) = misfit(&cur) else {
        return cur;
    };
    for _ in 0..30 {
        let modes: Vec<Vec<f64>> = cur
            .iter()
            .zip(iotas)
            .map(|(&l, &s)| grid.sample(|r| s as f64 * lambda_w_scaled(dim, l, r)))
            .collect();
        let gram = DMatrix::from_fn(m, m, |j, k| dot(&modes[j], &modes[k]));
        let rhs = DVector::from_iterator(m, modes.iter().map(|v| -dot(v, &g)));
        let Some(step) = gram.lu().solve(&rhs) else {
            break;
        };
        let mut t = 1.0;
        let mut accepted = false;
        while t > 1e-4 {
            let trial: Vec<f64> = cur
                .iter()
                .zip(step.iter())
                .map(|(l, d)| l * (t * d).exp())
                .collect();
            if let Some((gt, et)) = misfit(&trial) {
                if et < e {
                    cur = trial;
                    g = gt;
                    e = et;
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !accepted || step.amax() * t < 1e-12 {
            break;
        }
    }
    cur
}

#[derive(Debug, Clone, Serialize)]
pub struct ModulationState {
    pub iotas: Vec<i8>,
    pub lambdas: Vec<f64>,
    #[serde(skip)]
    pub g: FieldPair,
    pub a_minus: Vec<f64>,
    pub a_plus: Vec<f64>,
    pub beta: Option<Vec<f64>>,
    pub xi: Option<Vec<f64>>,
    pub g_norm: f64,
    pub d_value: f64,
    pub iterations: usize,
    /// max_j |⟨Z_λ̲_j, g⟩| / ⟨|Z_λ̲_j|, |ΛW_λ_j|⟩
    pub orthogonality: f64,
}

impl ModulationState {
    pub fn family(&self, dim: usize) -> BubbleFamily {
        BubbleFamily {
            dim,
            iotas: self.iotas.clone(),
            lambdas: self.lambdas.clone(),
        }
    }

    /// (‖g‖_E + Σ(λ_j/λ_{j+1})^{(D−2)/4}) / d, which stays in a fixed band.
    pub fn d_equivalence_ratio(&self, dim: usize) -> f64 {
        let e = (dim as f64 - 2.0) / 4.0;
        let sep: f64 = self.lambdas.windows(2).map(|p| (p[0] / p[1]).powf(e)).sum();
        if self.d_value == 0.0 {
            1.0
        } else {
            (self.g_norm + sep) / self.d_value
        }
    }
}

struct Pairings {
    z: Vec<Vec<f64>>,
    scale: Vec<f64>,
}

fn pairings(grid: &RadialGrid, pack: &SpectralPack, lambdas: &[f64]) -> Pairings {
    let dim = grid.dim();
    let mut z = Vec::with_capacity(lambdas.len());
    let mut scale = Vec::with_capacity(lambdas.len());
    for &l in lambdas {
        let zl = pack.z_l2(grid, l);
        let lw = grid.sample(|r| lambda_w_scaled(dim, l, r).abs());
        let za: Vec<f64> = zl.iter().map(|v| v.abs()).collect();
        scale.push(grid.inner(&za, &lw));
        z.push(zl);
    }
    Pairings { z, scale }
}

/// d² = ‖g‖²_E + Σ(λ_j/λ_{j+1})^{(D−2)/2}
pub fn proximity(grid: &RadialGrid, state: &FieldPair, fam: &BubbleFamily) -> f64 {
    let g = state.sub(&multibubble(grid, fam));
    e_norm(grid, &g).powi(2) + fam.separation()
}

/// Solve ⟨Z_λ̲_j, g⟩ = 0 for λ⃗ by Newton iteration in log λ with a trust region.
pub fn fit_modulation(
    grid: &RadialGrid,
    state: &FieldPair,
    iotas: &[i8],
    lambda_init: &[f64],
    pack: &SpectralPack,
) -> Result<ModulationState> {
    let dim = grid.dim();
    let m = lambda_init.len();
    BubbleFamily::new(dim, iotas.to_vec(), lambda_init.to_vec())?;
    if pack.dim != dim {
        return Err(Error::Config(format!(
            "spectral pack is for D = {}, state is D = {dim}",
            pack.dim
        )));
    }
    let trust = TRUST_RATIO.ln();
    let start: Vec<f64> = lambda_init.iter().map(|l| l.ln()).collect();
    // the orthogonality system has spurious roots close to the true one when
    // scales are far apart, so Newton starts from the energy-norm best fit
    let mut x: Vec<f64> = refine_scales(grid, state, iotas, lambda_init)
        .iter()
        .zip(&start)
        .map(|(l, s)| l.ln().clamp(s - trust, s + trust))
        .collect();
    // F_j(x) = ⟨Z_λ̲_j, u − 𝒲⟩ / ⟨|Z_λ̲_j|, |ΛW_λ_j|⟩ with λ = e^x
    let eval = |x: &[f64]| -> Result<(BubbleFamily, FieldPair, Vec<f64>)> {
        let lambdas: Vec<f64> = x.iter().map(|v| v.exp()).collect();
        let fam = BubbleFamily::new(dim, iotas.to_vec(), lambdas.clone())
            .map_err(|_| Error::DegenerateFit("scales crossed during the fit".into()))?;
        let g = state.sub(&multibubble(grid, &fam));
        let p = pairings(grid, pack, &lambdas);
        let f =
            p.z.iter()
                .zip(&p.scale)
                .map(|(z, s)| grid.inner(z, &g.u) / s)
                .collect();
        Ok((fam, g, f))
    };
    let mut iterations = 0;
    let mut worst;
    loop {
        let (fam, g, f) = eval(&x)?;
        worst = f.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if worst <= FIT_TOLERANCE {
            return Ok(finish(grid, pack, fam, g, iterations, worst));
        }
        if iterations == MAX_ITERATIONS {
            break;
        }
        iterations += 1;
        let h = 1e-6;
        let mut jac = DMatrix::zeros(m, m);
        for k in 0..m {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[k] += h;
            xm[k] -= h;
            let (_, _, fp) = eval(&xp)?;
            let (_, _, fm) = eval(&xm)?;
            for j in 0..m {
                jac[(j, k)] = (fp[j] - fm[j]) / (2.0 * h);
            }
        }
        let scale = jac.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let lu = jac.lu();
        if scale == 0.0 || lu.determinant().abs() < 1e-10 * scale.powi(m as i32) {
            return Err(Error::DegenerateFit(format!(
                "singular Jacobian at λ = {:?}",
                fam.lambdas
            )));
        }
        let rhs = DVector::from_iterator(m, f.iter().map(|v| -v));
        let step = lu
            .solve(&rhs)
            .ok_or_else(|| Error::DegenerateFit("singular Jacobian".into()))?;
        let longest = step.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let shrink = if longest > trust { trust / longest } else { 1.0 };
        for k in 0..m {
            x[k] = (x[k] + shrink * step[k]).clamp(start[k] - trust, start[k] + trust);
        }
    }
    Err(Error::FitFailure {
        iterations,
        residual: worst,
    })
}

fn finish(
    grid: &RadialGrid,
    pack: &SpectralPack,
    fam: BubbleFamily,
    g: FieldPair,
    iterations: usize,
    orthogonality: f64,
) -> ModulationState {
    let (a_minus, a_plus) = components(grid, &g, &fam.lambdas, pack);
    let g_norm = e_norm(grid, &g);
    let d_value = (g_norm * g_norm + fam.separation()).sqrt();
    ModulationState {
        iotas: fam.iotas,
        lambdas: fam.lambdas,
        g,
        a_minus,
        a_plus,
        beta: None,
        xi: None,
        g_norm,
        d_value,
        iterations,
        orthogonality,
    }
}

/// (a_j⁻, a_j⁺) = (⟨α⁻_{λ_j}, g⟩, ⟨α⁺_{λ_j}, g⟩)
pub fn components(
    grid: &RadialGrid,
    g: &FieldPair,
    lambdas: &[f64],
    pack: &SpectralPack,
) -> (Vec<f64>, Vec<f64>) {
    lambdas
        .iter()
        .map(|&l| {
            let forms = pack.alpha_forms(grid, l);
            (forms.minus(grid, g), forms.plus(grid, g))
        })
        .unzip()
}

/// Refined parameters (ξ⃗, β⃗), defined for D ≥ 6. The residual's second
/// slot is used as ġ.
pub fn refined_params(
    grid: &RadialGrid,
    g: &FieldPair,
    fam: &BubbleFamily,
    q: &TruncatedQ,
    big_l: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let dim = grid.dim();
    if dim < 6 {
        return Err(Error::UnsupportedDimension {
            dim,
            reason: "refined parameters are defined for D ≥ 6 only",
        });
    }
    let norm = lambda_w_l2sq_exact(dim)?;
    let mut xi = Vec::with_capacity(fam.len());
    let mut beta = Vec::with_capacity(fam.len());
    for (&iota, &l) in fam.iotas.iter().zip(&fam.lambdas) {
        let s = iota as f64;
        let lw = grid.sample(|r| lambda_w_l2_scaled(dim, l, r));
        let (_, ua) = virial_ops(q, l, grid, &g.u);
        beta.push(-s / norm * grid.inner(&lw, &g.udot) - grid.inner(&ua, &g.udot) / norm);
        if dim >= 7 {
            xi.push(l);
        } else {
            let cut = Cutoff::new(big_l * l);
            let masked: Vec<f64> = grid
                .nodes()
                .iter()
                .zip(&lw)
                .map(|(&r, v)| cut.chi(r) * v)
                .collect();
            xi.push(l - s / norm * grid.inner(&masked, &g.u));
        }
    }
    Ok((xi, beta))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackSettings {
    pub max_bubbles: usize,
    /// Consecutive failures after which the segment closes.
    pub failure_limit: usize,
    pub refine: Option<(TruncatedQ, f64)>,
}

impl Default for TrackSettings {
    fn default() -> Self {
        TrackSettings {
            max_bubbles: 4,
            failure_limit: 10,
            refine: None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TrackRow {
    pub t: f64,
    pub segment: usize,
    pub fit: Option<ModulationState>,
    pub status: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrackEvent {
    pub t: f64,
    pub bubbles: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct ModulationTrack {
    pub rows: Vec<TrackRow>,
    pub events: Vec<TrackEvent>,
}

impl ModulationTrack {
    pub fn max_bubbles(&self) -> usize {
        self.rows
            .iter()
            .filter_map(|r| r.fit.as_ref().map(|f| f.lambdas.len()))
            .max()
            .unwrap_or(0)
    }

    /// Successful fits as (t, state).
    pub fn fits(&self) -> impl Iterator<Item = (f64, &ModulationState)> {
        self.rows.iter().filter_map(|r| r.fit.as_ref().map(|f| (r.t, f)))
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let m = self.max_bubbles();
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["t".to_string(), "segment".to_string()];
        for name in ["lambda", "a_minus", "a_plus", "beta", "xi"] {
            header.extend((1..=m).map(|j| format!("{name}_{j}")));
        }
        header.extend(["g_norm", "d", "orthogonality", "iterations", "status"].map(String::from));
        w.write_record(&header)?;
        let num = |v: f64| format!("{v:.16e}");
        for row in &self.rows {
            let mut rec = vec![num(row.t), row.segment.to_string()];
            let cols = |v: Option<&Vec<f64>>| -> Vec<String> {
                (0..m)
                    .map(|j| v.and_then(|v| v.get(j)).map(|x| num(*x)).unwrap_or_default())
                    .collect()
            };
            let f = row.fit.as_ref();
            rec.extend(cols(f.map(|f| &f.lambdas)));
            rec.extend(cols(f.map(|f| &f.a_minus)));
            rec.extend(cols(f.map(|f| &f.a_plus)));
            rec.extend(cols(f.and_then(|f| f.beta.as_ref())));
            rec.extend(cols(f.and_then(|f| f.xi.as_ref())));
            match f {
                Some(f) => rec.extend([
                    num(f.g_norm),
                    num(f.d_value),
                    num(f.orthogonality),
                    f.iterations.to_string(),
                ]),
                None => rec.extend(std::iter::repeat_n(String::new(), 4)),
            }
            rec.push(row.status.clone());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Applies the fit at every observed sample, warm-starting from the last
/// accepted scales.
pub struct Tracker<'a> {
    pub pack: &'a SpectralPack,
    pub settings: TrackSettings,
    pub track: ModulationTrack,
    current: Option<(Vec<i8>, Vec<f64>)>,
    failures: usize,
    segment: usize,
}

impl<'a> Tracker<'a> {
    pub fn new(pack: &'a SpectralPack, settings: TrackSettings) -> Self {
        Tracker {
            pack,
            settings,
            track: ModulationTrack::default(),
            current: None,
            failures: 0,
            segment: 0,
        }
    }

    fn detect(&mut self, grid: &RadialGrid, t: f64, state: &FieldPair, reason: &str) {
        let (iotas, lambdas) = detect_scales(grid, state, self.settings.max_bubbles);
        self.track.events.push(TrackEvent {
            t,
            bubbles: lambdas.len(),
            reason: reason.to_string(),
        });
        self.current = Some((iotas, lambdas));
        self.failures = 0;
    }

    pub fn process(&mut self, grid: &RadialGrid, t: f64, state: &FieldPair) {
        if self.current.is_none() {
            self.detect(grid, t, state, "initial detection");
        }
        let (iotas, lambdas) = self.current.clone().unwrap_or_default();
        if lambdas.is_empty() {
            self.track.rows.push(TrackRow {
                t,
                segment: self.segment,
                fit: None,
                status: "no-bubbles".into(),
            });
            return;
        }
        match fit_modulation(grid, state, &iotas, &lambdas, self.pack) {
            Ok(mut fit) => {
                if let Some((q, big_l)) = self.settings.refine {
                    if let Ok((xi, beta)) = refined_params(grid, &fit.g, &fit.family(grid.dim()), &q, big_l) {
                        fit.xi = Some(xi);
                        fit.beta = Some(beta);
                    }
                }
                self.current = Some((fit.iotas.clone(), fit.lambdas.clone()));
                self.failures = 0;
                self.track.rows.push(TrackRow {
                    t,
                    segment: self.segment,
                    fit: Some(fit),
                    status: "ok".into(),
                });
            }
            Err(e) => {
                self.failures += 1;
                self.track.rows.push(TrackRow {
                    t,
                    segment: self.segment,
                    fit: None,
                    status: format!("failed: {e}"),
                });
                if self.failures > self.settings.failure_limit {
                    self.segment += 1;
                    self.detect(grid, t, state, "persistent fit failure");
                }
            }
        }
    }
}

impl Observer for Tracker<'_> {
    fn observe(&mut self, grid: &RadialGrid, sample: &Sample, state: &FieldPair) {
        self.process(grid, sample.t, state);
    }
}

/// Fit every state of a stored trajectory.
pub fn track(
    grid: &RadialGrid,
    times: &[f64],
    states: &[FieldPair],
    pack: &SpectralPack,
    settings: TrackSettings,
) -> ModulationTrack {
    let mut tr = Tracker::new(pack, settings);
    for (t, s) in times.iter().zip(states) {
        tr.process(grid, *t, s);
    }
    tr.track
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;
    use crate::spectral::default_spectral_grid;
    use std::sync::OnceLock;

    fn pack() -> &'static SpectralPack {
        static PACK: OnceLock<SpectralPack> = OnceLock::new();
        PACK.get_or_init(|| SpectralPack::compute(default_spectral_grid(6, 1024)).unwrap())
    }

    fn grid() -> RadialGrid {
        GridSpec::stretched(6, 2048, 2000.0, 1.0).build().unwrap()
    }

    #[test]
    fn detects_one_and_two_bubbles() {
        let g = grid();
        let one = multibubble(&g, &BubbleFamily::single(6, 1.0));
        let (s, l) = detect_scales(&g, &one, 3);
        assert_eq!(s, vec![1]);
        assert!((l[0] - 1.0).abs() < 0.2);
        let two = multibubble(&g, &BubbleFamily::new(6, vec![1, -1], vec![1.0, 32.0]).unwrap());
        let (s, l) = detect_scales(&g, &two, 3);
        assert_eq!(s, vec![1, -1]);
        assert!(
            (l[0] - 1.0).abs() < 0.2 && (l[1] / 32.0 - 1.0).abs() < 0.2,
            "{l:?}"
        );
        let zero = FieldPair::zeros(g.len());
        assert!(detect_scales(&g, &zero, 3).1.is_empty());
    }

    #[test]
    fn exact_family_round_trip() {
        let g = grid();
        let fam = BubbleFamily::new(6, vec![1, 1], vec![1.3, 40.0]).unwrap();
        let state = multibubble(&g, &fam);
        let fit = fit_modulation(&g, &state, &fam.iotas, &[1.2, 42.0], pack()).unwrap();
        for (a, b) in fit.lambdas.iter().zip(&fam.lambdas) {
            assert!((a / b - 1.0).abs() < 1e-8, "{a} {b}");
        }
        assert!(fit.g_norm < 1e-6);
        assert!((fit.d_value - fam.separation().sqrt()).abs() < 1e-6);
        let other = fit_modulation(&g, &state, &fam.iotas, &[1.4, 38.0], pack()).unwrap();
        for (a, b) in fit.lambdas.iter().zip(&other.lambdas) {
            assert!((a - b).abs() < 1e-6 * b);
        }
    }

    #[test]
    fn components_of_the_modes() {
        let g = grid();
        let forms = pack().alpha_forms(&g, 2.0);
        let ym = forms.y_minus();
        let (am, ap) = components(&g, &ym, &[2.0], pack());
        assert!((am[0] - 1.0).abs() < 1e-10 && ap[0].abs() < 1e-10);
        let (am2, _) = components(&g, &ym.scaled(2.0), &[2.0], pack());
        assert!((am2[0] - 2.0 * am[0]).abs() < 1e-12);
        let zero = FieldPair::zeros(g.len());
        assert_eq!(components(&g, &zero, &[2.0], pack()), (vec![0.0], vec![0.0]));
    }

    #[test]
    fn refined_parameters() {
        let g = grid();
        let q = crate::virial::truncated_q(7, 1.0, 4.0);
        let g7 = GridSpec::stretched(7, 1024, 500.0, 1.0).build().unwrap();
        let fam = BubbleFamily::single(7, 1.5);
        let pert = FieldPair::static_field(g7.sample(|r| 1e-3 * (-(r - 2.0).powi(2)).exp()));
        let (xi, beta) = refined_params(&g7, &pert, &fam, &q, 32.0).unwrap();
        assert_eq!(xi, vec![1.5]);
        assert_eq!(beta, vec![0.0]);
        let g5 = GridSpec::stretched(5, 256, 100.0, 1.0).build().unwrap();
        assert!(refined_params(
            &g5,
            &FieldPair::zeros(256),
            &BubbleFamily::single(5, 1.0),
            &q,
            32.0
        )
        .is_err());
        let q6 = crate::virial::truncated_q(6, 1.0, 4.0);
        let fam6 = BubbleFamily::single(6, 1.0);
        let bump = g.sample(|r| (-(r - 2.0).powi(2)).exp());
        let unit = e_norm(&g, &FieldPair::static_field(bump.clone()));
        let mut devs = vec![];
        for size in [1e-3, 1e-2] {
            let pert = FieldPair::static_field(bump.iter().map(|v| v * size / unit).collect());
            let (xi, _) = refined_params(&g, &pert, &fam6, &q6, 32.0).unwrap();
            devs.push((xi[0] - 1.0).abs() / size);
        }
        assert!((devs[1] / devs[0] - 1.0).abs() < 1e-6);
    }
}
