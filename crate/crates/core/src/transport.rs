//! Energies, gradients and the two optimization drivers.
//!
//! The transport energy of a weighted site set is
//! `E = sum_i ∫_{P_i} rho (|x - y_i|^2 - w_i) + sum_i nu_i w_i`.
//! It is minimized over the site positions for quantization and maximized
//! over the weights for semi-discrete transport.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::density::DensityField;
use crate::diagram::{DiagramOptions, DomainMesh, PowerDiagram, SiteSet};
use crate::sampling::white_noise;
use crate::Error;

/// A site set together with the density and the target masses.
#[derive(Debug, Clone)]
pub struct TransportProblem {
    pub sites: SiteSet,
    pub density: DensityField,
    pub mesh: DomainMesh,
    /// Prescribed cell masses `nu_i`.
    pub targets: Vec<f64>,
    pub options: DiagramOptions,
}

impl TransportProblem {
    /// Equal targets sharing the domain mass on the unit cube.
    pub fn new(sites: SiteSet, density: DensityField, order: usize) -> Result<Self, Error> {
        let mesh = DomainMesh::unit_cube(sites.dim())?;
        let total = mesh.mass(&density, order)?;
        let targets = vec![total / sites.len() as f64; sites.len()];
        Self::with_targets(sites, density, mesh, targets, order)
    }

    pub fn with_targets(
        sites: SiteSet,
        density: DensityField,
        mesh: DomainMesh,
        targets: Vec<f64>,
        order: usize,
    ) -> Result<Self, Error> {
        if targets.len() != sites.len() {
            return Err(Error::InvalidInput(format!(
                "{} targets for {} sites",
                targets.len(),
                sites.len()
            )));
        }
        if targets.iter().any(|&t| !(t > 0.0 && t.is_finite())) {
            return Err(Error::InvalidInput("target masses must be positive".into()));
        }
        Ok(Self {
            sites,
            density,
            mesh,
            targets,
            options: DiagramOptions {
                order,
                keep_cells: false,
                ..DiagramOptions::default()
            },
        })
    }

    pub fn diagram(&self) -> Result<PowerDiagram, Error> {
        PowerDiagram::compute(&self.sites, &self.mesh, &self.density, &self.options)
    }
}

/// `E` for the problem's sites, weights and targets.
pub fn energy(problem: &TransportProblem, diagram: &PowerDiagram) -> f64 {
    let sites = &problem.sites;
    let mut e = 0.0;
    for (i, c) in diagram.cells().iter().enumerate() {
        let w = sites.weight(i);
        e += c.integrals.second - w * c.mass() + problem.targets[i] * w;
    }
    e
}

/// Quantization energy `sum_i ∫_{P_i} rho |x - y_i|^2`.
pub fn quantization_energy(diagram: &PowerDiagram) -> f64 {
    diagram.cells().iter().map(|c| c.integrals.second).sum()
}

/// `dE/dy_i = 2 m_i (y_i - c_i)`, flat with stride `dim`.
pub fn grad_sites(sites: &SiteSet, diagram: &PowerDiagram) -> Vec<f64> {
    let d = sites.dim();
    let mut g = vec![0.0; sites.len() * d];
    for (i, c) in diagram.cells().iter().enumerate() {
        let m = c.mass();
        if m <= 0.0 {
            continue;
        }
        let y = sites.point(i);
        for k in 0..d {
            // m (y - moment / m) without dividing
            g[i * d + k] = 2.0 * (m * y[k] - c.integrals.moment[k]);
        }
    }
    g
}

/// `dE/dw_i = nu_i - m_i`.
pub fn grad_weights(targets: &[f64], diagram: &PowerDiagram) -> Vec<f64> {
    targets.iter().zip(diagram.cells()).map(|(t, c)| t - c.mass()).collect()
}

/// Moves every site of a nonempty cell to the cell centroid.
pub fn lloyd_step(sites: &SiteSet, diagram: &PowerDiagram) -> Vec<f64> {
    let d = sites.dim();
    let mut out = sites.points().to_vec();
    for (i, c) in diagram.cells().iter().enumerate() {
        if let Some(cen) = c.centroid() {
            out[i * d..(i + 1) * d].copy_from_slice(&cen);
        }
    }
    out
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LbfgsParams {
    /// Number of stored correction pairs.
    pub memory: usize,
    /// Budget of evaluator calls, including the one at the start point.
    pub max_calls: usize,
    /// Stop once the gradient norm falls to this value.
    pub grad_tol: f64,
    /// Sufficient-decrease constant.
    pub c1: f64,
    /// Step shrink factor during backtracking.
    pub backtrack: f64,
    /// Give up once a trial step is shorter than this.
    pub min_step: f64,
}

impl Default for LbfgsParams {
    fn default() -> Self {
        Self {
            memory: 7,
            max_calls: 100,
            grad_tol: 1e-10,
            c1: 1e-4,
            backtrack: 0.5,
            min_step: 1e-16,
        }
    }
}

/// Why the optimizer returned.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    GradientTolerance,
    MaxCalls,
    /// Backtracking shrank the step below `min_step`, or below what `f`
    /// can resolve, without decrease.
    StepCollapse,
}

/// What an evaluator reports at one point.
#[derive(Debug, Clone)]
pub struct Evaluation<T> {
    pub value: f64,
    pub gradient: Vec<f64>,
    /// Extra data recorded in the log for accepted iterates.
    pub info: T,
}

#[derive(Debug, Clone)]
pub struct IterationRecord<T> {
    pub iteration: usize,
    /// Evaluator calls spent so far.
    pub calls: usize,
    pub value: f64,
    pub grad_norm: f64,
    pub info: T,
}

#[derive(Debug, Clone)]
pub struct OptimizerState<T> {
    pub x: Vec<f64>,
    pub value: f64,
    pub gradient: Vec<f64>,
    pub iterations: usize,
    pub calls: usize,
    pub stop: StopReason,
    /// Set when the last line search could not find a decrease.
    pub line_search_failed: bool,
    /// One record per accepted iterate, starting with `x0`.
    pub log: Vec<IterationRecord<T>>,
    history: Vec<(Vec<f64>, Vec<f64>)>,
}

impl<T> OptimizerState<T> {
    pub fn history_len(&self) -> usize {
        self.history.len()
    }
}

/// Minimizes with limited-memory BFGS and an Armijo backtracking search.
///
/// The evaluator returns `Ok(None)` for points outside the feasible region;
/// the search treats them like a failed decrease and backtracks. The start
/// point must be feasible.
pub fn lbfgs_minimize<T, E, F>(mut eval: F, x0: &[f64], params: &LbfgsParams) -> Result<OptimizerState<T>, E>
where
    F: FnMut(&[f64]) -> Result<Option<Evaluation<T>>, E>,
    E: From<Error>,
{
    let first = eval(x0)?
        .ok_or_else(|| Error::InvalidInput("optimizer start point is infeasible".into()))?;
    let gnorm = norm(&first.gradient);
    let mut state = OptimizerState {
        x: x0.to_vec(),
        value: first.value,
        gradient: first.gradient,
        iterations: 0,
        calls: 1,
        stop: StopReason::MaxCalls,
        line_search_failed: false,
        log: vec![IterationRecord {
            iteration: 0,
            calls: 1,
            value: first.value,
            grad_norm: gnorm,
            info: first.info,
        }],
        history: Vec::new(),
    };
    if gnorm <= params.grad_tol {
        state.stop = StopReason::GradientTolerance;
        return Ok(state);
    }

    loop {
        let mut dir = two_loop(&state.gradient, &state.history);
        let mut slope = dot(&state.gradient, &dir);
        if !(slope < 0.0) {
            state.history.clear();
            dir = two_loop(&state.gradient, &state.history);
            slope = dot(&state.gradient, &dir);
        }
        let dir_norm = norm(&dir);
        let mut alpha = 1.0;
        let accepted = loop {
            if state.calls >= params.max_calls {
                state.stop = StopReason::MaxCalls;
                return Ok(state);
            }
            let trial: Vec<f64> = state.x.iter().zip(&dir).map(|(x, d)| x + alpha * d).collect();
            state.calls += 1;
            if let Some(ev) = eval(&trial)? {
                if ev.value.is_finite() && ev.value <= state.value + params.c1 * alpha * slope {
                    break Some((trial, ev));
                }
            }
            alpha *= params.backtrack;
            // a decrease this small cannot be resolved in f
            let unresolvable = params.c1 * alpha * slope.abs() <= f64::EPSILON * state.value.abs();
            if alpha * dir_norm < params.min_step || unresolvable {
                break None;
            }
        };
        let Some((x, ev)) = accepted else {
            state.line_search_failed = true;
            state.stop = StopReason::StepCollapse;
            return Ok(state);
        };
        let s: Vec<f64> = x.iter().zip(&state.x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = ev.gradient.iter().zip(&state.gradient).map(|(a, b)| a - b).collect();
        if dot(&s, &y) > f64::EPSILON * norm(&s) * norm(&y) {
            if state.history.len() == params.memory {
                state.history.remove(0);
            }
            state.history.push((s, y));
        }
        state.x = x;
        state.value = ev.value;
        state.gradient = ev.gradient;
        state.iterations += 1;
        let gnorm = norm(&state.gradient);
        state.log.push(IterationRecord {
            iteration: state.iterations,
            calls: state.calls,
            value: ev.value,
            grad_norm: gnorm,
            info: ev.info,
        });
        if gnorm <= params.grad_tol {
            state.stop = StopReason::GradientTolerance;
            return Ok(state);
        }
    }
}

/// `-H g` from the stored pairs. Without history the step is the unit
/// steepest-descent direction.
fn two_loop(g: &[f64], history: &[(Vec<f64>, Vec<f64>)]) -> Vec<f64> {
    let Some((s_last, y_last)) = history.last() else {
        let n = norm(g);
        return g.iter().map(|v| -v / n).collect();
    };
    let mut q = g.to_vec();
    let mut alphas = vec![0.0; history.len()];
    for (k, (s, y)) in history.iter().enumerate().rev() {
        let rho = 1.0 / dot(y, s);
        let a = rho * dot(s, &q);
        alphas[k] = a;
        q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
    }
    let gamma = dot(s_last, y_last) / dot(y_last, y_last);
    q.iter_mut().for_each(|v| *v *= gamma);
    for (k, (s, y)) in history.iter().enumerate() {
        let rho = 1.0 / dot(y, s);
        let b = rho * dot(y, &q);
        q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (alphas[k] - b) * si);
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuantizeMode {
    Lloyd,
    Lbfgs,
}

impl FromStr for QuantizeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s.to_ascii_lowercase().as_str() {
            "lloyd" => Ok(Self::Lloyd),
            "lbfgs" | "l-bfgs" => Ok(Self::Lbfgs),
            other => Err(Error::InvalidInput(format!("unknown optimizer mode '{other}'"))),
        }
    }
}

impl fmt::Display for QuantizeMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Lloyd => "lloyd",
            Self::Lbfgs => "lbfgs",
        })
    }
}

/// One line of a quantization log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantizeRecord {
    pub iteration: usize,
    pub calls: usize,
    pub energy: f64,
    pub grad_norm: f64,
    /// Energy divided by its value at the start.
    pub normalized_energy: f64,
    /// Gradient norm divided by its value at the start.
    pub normalized_grad: f64,
}

#[derive(Debug, Clone)]
pub struct QuantizeResult {
    pub sites: SiteSet,
    pub log: Vec<QuantizeRecord>,
    /// Set for L-BFGS runs only.
    pub stop: Option<StopReason>,
}

#[derive(Debug, Clone)]
pub struct QuantizeConfig {
    pub num_sites: usize,
    pub dim: usize,
    pub density: DensityField,
    pub mode: QuantizeMode,
    /// Lloyd steps, or the L-BFGS budget of evaluator calls.
    pub iters: usize,
    pub order: usize,
    pub seed: u64,
}

/// Places `num_sites` random sites and optimizes them for the density.
pub fn optimize_points(config: &QuantizeConfig) -> Result<QuantizeResult, Error> {
    if config.num_sites == 0 {
        return Err(Error::InvalidInput("at least one site is required".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let sites = SiteSet::new(config.dim, white_noise(&mut rng, config.num_sites, config.dim))?;
    optimize_sites(sites, &config.density, config.mode, config.iters, config.order)
}

/// Optimizes the positions of given sites (weights are reset to zero).
pub fn optimize_sites(
    sites: SiteSet,
    density: &DensityField,
    mode: QuantizeMode,
    iters: usize,
    order: usize,
) -> Result<QuantizeResult, Error> {
    let dim = sites.dim();
    let mut sites = SiteSet::new(dim, sites.points().to_vec())?;
    let mesh = DomainMesh::unit_cube(dim)?;
    let opts = DiagramOptions {
        order,
        keep_cells: false,
        ..DiagramOptions::default()
    };
    let mut log: Vec<QuantizeRecord> = Vec::new();
    let mut push = |iteration: usize, calls: usize, energy: f64, grad_norm: f64| {
        let (e0, g0) = log.first().map_or((energy, grad_norm), |r| (r.energy, r.grad_norm));
        log.push(QuantizeRecord {
            iteration,
            calls,
            energy,
            grad_norm,
            normalized_energy: if e0 > 0.0 { energy / e0 } else { 1.0 },
            normalized_grad: if g0 > 0.0 { grad_norm / g0 } else { 0.0 },
        });
    };
    match mode {
        QuantizeMode::Lloyd => {
            for it in 0..=iters {
                let diagram = PowerDiagram::compute(&sites, &mesh, density, &opts)?;
                let g = grad_sites(&sites, &diagram);
                push(it, it + 1, quantization_energy(&diagram), norm(&g));
                if it < iters {
                    let next = lloyd_step(&sites, &diagram);
                    sites.set_points(&next);
                }
            }
            Ok(QuantizeResult { sites, log, stop: None })
        }
        QuantizeMode::Lbfgs => {
            let x0 = sites.points().to_vec();
            let mut probe = sites.clone();
            let params = LbfgsParams {
                max_calls: iters.max(1),
                ..LbfgsParams::default()
            };
            let state = lbfgs_minimize::<(), Error, _>(
                |x| {
                    probe.set_points(x);
                    let diagram = PowerDiagram::compute(&probe, &mesh, density, &opts)?;
                    Ok(Some(Evaluation {
                        value: quantization_energy(&diagram),
                        gradient: grad_sites(&probe, &diagram),
                        info: (),
                    }))
                },
                &x0,
                &params,
            )?;
            for r in &state.log {
                push(r.iteration, r.calls, r.value, r.grad_norm);
            }
            sites.set_points(&state.x);
            Ok(QuantizeResult {
                sites,
                log,
                stop: Some(state.stop),
            })
        }
    }
}

/// One line of a transport log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransportRecord {
    pub iteration: usize,
    pub calls: usize,
    pub energy: f64,
    pub grad_norm: f64,
    /// Cell masses divided by the mean target.
    pub min_mass: f64,
    pub median_mass: f64,
    pub max_mass: f64,
}

#[derive(Debug, Clone)]
pub struct TransportResult {
    pub sites: SiteSet,
    pub log: Vec<TransportRecord>,
    pub stop: StopReason,
    pub line_search_failed: bool,
    /// Final cell masses.
    pub masses: Vec<f64>,
}

impl TransportResult {
    /// `max_i |m_i - nu_i| / nu_i` at the final weights.
    pub fn max_relative_error(&self, targets: &[f64]) -> f64 {
        self.masses
            .iter()
            .zip(targets)
            .map(|(m, t)| (m - t).abs() / t)
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct MassStats {
    min: f64,
    median: f64,
    max: f64,
}

fn mass_stats(masses: &[f64], nu: f64) -> MassStats {
    let mut sorted: Vec<f64> = masses.iter().map(|m| m / nu).collect();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    };
    MassStats {
        min: sorted[0],
        median,
        max: sorted[n - 1],
    }
}

/// Maximizes the transport energy over the weights of `problem.sites`.
///
/// Trial weights that make any cell vanish are rejected, which halves the
/// step in the line search.
pub fn optimize_weights(problem: &TransportProblem, params: &LbfgsParams) -> Result<TransportResult, Error> {
    let nu = problem.targets.iter().sum::<f64>() / problem.targets.len() as f64;
    let mut probe = problem.clone();
    let w0 = problem.sites.weights().to_vec();
    let state = lbfgs_minimize::<MassStats, Error, _>(
        |w| {
            probe.sites.set_weights(w);
            let diagram = probe.diagram()?;
            if diagram.num_empty() > 0 {
                return Ok(None);
            }
            let masses = diagram.masses();
            let stats = mass_stats(&masses, nu);
            Ok(Some(Evaluation {
                value: -energy(&probe, &diagram),
                gradient: grad_weights(&probe.targets, &diagram).into_iter().map(|g| -g).collect(),
                info: stats,
            }))
        },
        &w0,
        params,
    )?;
    let mut sites = problem.sites.clone();
    sites.set_weights(&state.x);
    let masses = {
        let mut p = problem.clone();
        p.sites = sites.clone();
        p.diagram()?.masses()
    };
    let log = state
        .log
        .iter()
        .map(|r| TransportRecord {
            iteration: r.iteration,
            calls: r.calls,
            energy: -r.value,
            grad_norm: r.grad_norm,
            min_mass: r.info.min,
            median_mass: r.info.median,
            max_mass: r.info.max,
        })
        .collect();
    Ok(TransportResult {
        sites,
        log,
        stop: state.stop,
        line_search_failed: state.line_search_failed,
        masses,
    })
}

#[derive(Debug, Clone)]
pub struct SdotConfig {
    pub quantize: QuantizeConfig,
    /// Evaluator budget of the weight solve.
    pub weight_iters: usize,
}

/// Quantizes random sites with L-BFGS, then solves for weights that give
/// every cell an equal share of the domain mass.
pub fn optimize_weights_from_scratch(config: &SdotConfig) -> Result<(QuantizeResult, TransportResult, TransportProblem), Error> {
    let q = QuantizeConfig {
        mode: QuantizeMode::Lbfgs,
        ..config.quantize.clone()
    };
    let quant = optimize_points(&q)?;
    let mut problem = TransportProblem::new(quant.sites.clone(), q.density.clone(), q.order)?;
    // nu_t = m_t / N with m_t the total mass of the initial diagram
    let m_t = problem.diagram()?.total_mass();
    let n = problem.sites.len() as f64;
    problem.targets.iter_mut().for_each(|t| *t = m_t / n);
    let params = LbfgsParams {
        max_calls: config.weight_iters.max(1),
        ..LbfgsParams::default()
    };
    let result = optimize_weights(&problem, &params)?;
    Ok((quant, result, problem))
}
