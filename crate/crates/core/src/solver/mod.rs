//! Windowed Picard iteration for the key equation
//!
//! `X(t) = Z̄(0)(C_t) + Q(0)G^c(t) + ∫₀ᵗ H_{t−s}(q(t−s)) G^c(s) ds + ∫₀ᵗ q(t−s) dG(s)`
//!
//! with `q = (X − 1)⁺`. Both convolutions are discretized with CDF-difference
//! weights and the trapezoid rule on the integrand. `X` is piecewise linear
//! between nodes, so in a cell where it crosses 1 the kink of `q` (and of
//! `η = H(q)`, which equals `λ` while `q = 0`) is integrated exactly; without
//! this the error constant depends on where the crossing falls in its cell. The horizon is split into windows on which the Picard map is
//! a contraction; each window starts from the converged prefix.

mod model;
mod renewal;
mod shift;

use serde::{Deserialize, Serialize};

pub use model::{InitialCondition, Model, ResidualProfile};
pub use renewal::{overloaded_prefix_check, renewal_function};
pub use shift::time_shift;

use crate::error::{Error, Result};
use crate::kernel::{constant_rate_h, Grid, Kernel, NodeKernel};

/// Starting trajectory for the Picard iteration on each window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", content = "value", rename_all = "kebab-case")]
pub enum InitialGuess {
    /// Constant extension of the last converged value.
    #[default]
    PreviousTerminal,
    Zero,
    Constant(f64),
}

/// How `H_t` is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum KernelMode {
    #[default]
    TimeVarying,
    /// `λ₀F^c(F_d^{-1}(y/λ₀))`; requires a constant arrival rate.
    ConstantRate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub grid: Grid,
    #[serde(default = "default_tol")]
    pub picard_tol: f64,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    /// Upper bound on the window length.
    #[serde(default = "default_window_cap")]
    pub window_cap: f64,
    /// Target contraction constant per window.
    #[serde(default = "default_kappa")]
    pub kappa_target: f64,
    /// Lifetime truncation used to bound windows; defaults to the horizon.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncation: Option<f64>,
    #[serde(default)]
    pub initial_guess: InitialGuess,
    #[serde(default)]
    pub kernel_mode: KernelMode,
}

fn default_tol() -> f64 {
    1e-10
}
fn default_max_iters() -> usize {
    200
}
fn default_window_cap() -> f64 {
    2.0
}
fn default_kappa() -> f64 {
    0.5
}

impl SolverConfig {
    pub fn new(grid: Grid) -> Self {
        SolverConfig {
            grid,
            picard_tol: default_tol(),
            max_iters: default_max_iters(),
            window_cap: default_window_cap(),
            kappa_target: default_kappa(),
            truncation: None,
            initial_guess: InitialGuess::default(),
            kernel_mode: KernelMode::default(),
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.picard_tol > 0.0) {
            return Err(Error::Config(format!("picard_tol must be positive, got {}", self.picard_tol)));
        }
        if self.max_iters == 0 {
            return Err(Error::Config("max_iters must be positive".into()));
        }
        if !(self.kappa_target > 0.0 && self.kappa_target < 1.0) {
            return Err(Error::Config(format!(
                "kappa_target must lie in (0, 1), got {}",
                self.kappa_target
            )));
        }
        if !(self.window_cap > 0.0) {
            return Err(Error::Config(format!("window_cap must be positive, got {}", self.window_cap)));
        }
        if let Some(m) = self.truncation {
            if !(m > 0.0) {
                return Err(Error::Config(format!("truncation must be positive, got {m}")));
            }
        }
        Ok(())
    }
}

/// Per-window convergence record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowDiagnostic {
    pub start: f64,
    pub end: f64,
    pub length: f64,
    pub kappa: f64,
    pub iterations: usize,
    pub last_step: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveDiagnostics {
    pub windows: Vec<WindowDiagnostic>,
    pub total_iterations: usize,
    /// `max_i |X_i − Ψ(X)_i|` over the whole grid.
    pub residual: f64,
}

/// Result of a named invariant check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvariantCheck {
    pub name: String,
    /// Measured violation (≤ `bound` passes).
    pub value: f64,
    pub bound: f64,
    pub passed: bool,
}

impl InvariantCheck {
    pub fn new(name: impl Into<String>, value: f64, bound: f64) -> Self {
        InvariantCheck {
            name: name.into(),
            value,
            bound,
            passed: value <= bound,
        }
    }
}

/// Discretized key-equation operator shared by every window.
pub struct Solver {
    model: Model,
    config: SolverConfig,
    kernel: Kernel,
    lambda0: f64,
    base: Vec<f64>,
    /// `H_{t_i}(0) = λ(t_i)`.
    lam: Vec<f64>,
    w_e: Vec<f64>,
    w_g: Vec<f64>,
}

struct State {
    x: Vec<f64>,
    q: Vec<f64>,
    eta: Vec<f64>,
    omega: Vec<f64>,
    abandonment: Vec<f64>,
    n_f: Vec<f64>,
}

#[inline]
fn weight(w: &[f64], i: usize, j: usize) -> f64 {
    let mut c = 0.0;
    if j >= 1 {
        c += w[i - j];
    }
    if j < i {
        c += w[i - j - 1];
    }
    0.5 * c
}

/// Correction to the trapezoid averages `((η_a + η_b)/2, (q_a + q_b)/2)` of a
/// cell in which the linear interpolant of `X` crosses 1, or `None`.
#[inline]
fn crossing(xa: f64, xb: f64, ea: f64, eb: f64, la: f64, lb: f64) -> Option<(f64, f64)> {
    let up = xa < 1.0 && xb > 1.0;
    if !(up || (xa > 1.0 && xb < 1.0)) {
        return None;
    }
    let p = (1.0 - xa) / (xb - xa);
    let (qa, qb) = ((xa - 1.0).max(0.0), (xb - 1.0).max(0.0));
    let exact_q = if up { 0.5 * (1.0 - p) * qb } else { 0.5 * p * qa };
    let at_kink = la + p * (lb - la);
    let ce = 0.5 * (at_kink - (ea + p * (eb - ea)));
    Some((ce, exact_q - 0.5 * (qa + qb)))
}

/// Kink corrections of the cells `c` (between nodes `c` and `c + 1`).
type Corrections = Vec<(usize, f64, f64)>;

impl Solver {
    fn corrections(&self, x: &[f64], eta: &[f64], from: usize, to: usize) -> Corrections {
        (from..to)
            .filter_map(|c| {
                crossing(x[c], x[c + 1], eta[c], eta[c + 1], self.lam[c], self.lam[c + 1])
                    .map(|(ce, cg)| (c, ce, cg))
            })
            .collect()
    }

    /// Contribution of corrected cells left of node `i`.
    #[inline]
    fn corrected(&self, cells: &[(usize, f64, f64)], i: usize) -> f64 {
        cells
            .iter()
            .take_while(|(c, _, _)| *c < i)
            .map(|&(c, ce, cg)| self.w_e[i - 1 - c] * ce + self.w_g[i - 1 - c] * cg)
            .sum()
    }
}

impl Solver {
    pub fn new(model: Model, config: SolverConfig) -> Result<Self> {
        Self::with_idle_tolerance(model, config, 1e-9)
    }

    /// As [`Solver::new`], with the time-0 non-idling condition checked to
    /// within `idle_tol`.
    pub fn with_idle_tolerance(model: Model, config: SolverConfig, idle_tol: f64) -> Result<Self> {
        config.validate()?;
        let grid = config.grid;
        model.validate_initial(&grid, idle_tol)?;
        let kernel = Kernel::new(
            model.extended_rate().clone(),
            model.patience().clone(),
            model.omega0(),
            &grid,
        )?;
        let lambda0 = match config.kernel_mode {
            KernelMode::TimeVarying => f64::NAN,
            KernelMode::ConstantRate => match model.extended_rate().constant_value() {
                Some(v) if v > 0.0 => v,
                _ => {
                    return Err(Error::Config(
                        "constant-rate kernel mode requires a positive constant arrival rate".into(),
                    ))
                }
            },
        };
        let n = grid.len();
        let g = model.service();
        let q0 = model.q0();
        let base = (0..n)
            .map(|i| {
                let t = grid.time(i);
                model.z0(t) + q0 * g.complement(t)
            })
            .collect();
        let lam = (0..n)
            .map(|i| match config.kernel_mode {
                KernelMode::TimeVarying => model.extended_rate().rate(i as f64 * grid.step()),
                KernelMode::ConstantRate => lambda0,
            })
            .collect();
        let mom: Vec<_> = (0..n).map(|i| g.moments(grid.time(i))).collect();
        let w_e = mom
            .windows(2)
            .map(|m| m[1].integrated_ccdf - m[0].integrated_ccdf)
            .collect();
        let w_g = mom.windows(2).map(|m| m[1].cdf - m[0].cdf).collect();
        Ok(Solver {
            model,
            config,
            kernel,
            lambda0,
            base,
            lam,
            w_e,
            w_g,
        })
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    /// `Z̄(0)(C_{t_i}) + Q(0)G^c(t_i)`.
    pub fn forcing(&self) -> &[f64] {
        &self.base
    }

    fn eta(&self, node: &NodeKernel<'_>, q: f64) -> Result<f64> {
        match self.config.kernel_mode {
            KernelMode::TimeVarying => node.h(q),
            KernelMode::ConstantRate => constant_rate_h(q, self.lambda0, self.model.patience()),
        }
    }

    /// Lipschitz bound for `H_t` when inverses stay below `x`.
    fn kernel_lipschitz(&self, x: f64) -> f64 {
        let f = self.model.patience();
        let x = x.min(f.support_end());
        let tail = f.complement(x);
        let crude = if tail > 0.0 { f.lipschitz() / tail } else { f64::INFINITY };
        // Hazard rates of the supported families are monotone or bounded by
        // their value at the ends; sample as a safeguard.
        let mut hz: f64 = 0.0;
        for k in 0..=32 {
            let s = x * k as f64 / 32.0;
            hz = hz.max(f.hazard(s));
        }
        crude.min(hz * 1.05)
    }

    /// Window length `b` and contraction estimate for a window starting at
    /// node `i0` where `ω = omega`.
    pub fn window_length(&self, i0: usize, omega: f64) -> Result<(f64, f64)> {
        let grid = &self.config.grid;
        let h = grid.step();
        let g = self.model.service();
        let s_f = self.model.patience().support_end();
        let m = self.config.truncation.unwrap_or(grid.last_time());
        let remaining = grid.last_time() - grid.time(i0);
        let b_max = self.config.window_cap.min(0.5 * s_f.min(m)).min(remaining);
        let kappa = |b: f64| {
            let lip = self.kernel_lipschitz(omega + b);
            let mm = g.moments(b);
            lip * mm.integrated_ccdf + mm.cdf
        };
        let target = self.config.kappa_target;
        let b = if kappa(b_max) <= target {
            b_max
        } else {
            let (mut lo, mut hi) = (0.0, b_max);
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                if kappa(mid) <= target {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            lo
        };
        if b < h * (1.0 - 1e-9) {
            let lip = self.kernel_lipschitz(omega + h);
            return Err(Error::Config(format!(
                "contraction window {b:.3e} is shorter than the grid step {h}: \
                 L_H = {lip:.4e} (density bound {}, F^c({:.4}) = {:.4e}), μ = {}, κ target {}",
                self.model.patience().lipschitz(),
                omega + h,
                self.model.patience().complement(omega + h),
                g.rate(),
                target
            )));
        }
        Ok((b, kappa(b)))
    }

    /// Picard map on the window of nodes `i0 + 1 ..= i0 + m`.
    fn window<'a>(&'a self, state: &State, i0: usize, m: usize) -> PicardWindow<'a> {
        let nodes: Vec<_> = (i0 + 1..=i0 + m).map(|i| self.kernel.node(i)).collect();
        let cells = self.corrections(&state.x, &state.eta, 0, i0);
        let hist = (i0 + 1..=i0 + m)
            .map(|i| {
                let mut acc = self.base[i] + self.corrected(&cells, i);
                for j in 0..=i0 {
                    acc += weight(&self.w_e, i, j) * state.eta[j] + weight(&self.w_g, i, j) * state.q[j];
                }
                acc
            })
            .collect();
        PicardWindow {
            solver: self,
            start: i0,
            nodes,
            hist,
            x_start: state.x[i0],
            eta_start: state.eta[i0],
        }
    }

    /// Solve on the whole grid.
    pub fn run(&self) -> Result<FluidSolution> {
        let grid = self.config.grid;
        let n = grid.len();
        let h = grid.step();
        let mut st = State {
            x: vec![0.0; n],
            q: vec![0.0; n],
            eta: vec![0.0; n],
            omega: vec![0.0; n],
            abandonment: vec![0.0; n],
            n_f: vec![0.0; n],
        };
        let node0 = self.kernel.node(0);
        st.x[0] = self.base[0];
        st.q[0] = (st.x[0] - 1.0).max(0.0);
        st.eta[0] = self.eta(&node0, st.q[0])?;
        let p0 = node0.inverse_point(st.q[0])?;
        st.omega[0] = p0.x;
        st.abandonment[0] = p0.f_t;
        st.n_f[0] = node0.n_f();
        drop(node0);

        let stop = 0.25 * self.config.picard_tol;
        let mut windows = Vec::new();
        let mut total = 0;
        let mut i0 = 0;
        while i0 + 1 < n {
            let (b, kappa) = self.window_length(i0, st.omega[i0])?;
            let m = (((b / h) * (1.0 + 1e-9)).floor() as usize).clamp(1, n - 1 - i0);
            let win = self.window(&st, i0, m);
            let mut x = match self.config.initial_guess {
                InitialGuess::PreviousTerminal => vec![st.x[i0]; m],
                InitialGuess::Zero => vec![0.0; m],
                InitialGuess::Constant(c) => vec![c; m],
            };
            let mut iters = 0;
            let mut step = f64::INFINITY;
            while step > stop {
                if iters >= self.config.max_iters {
                    return Err(Error::Divergence {
                        message: format!(
                            "Picard iteration on [{}, {}] did not reach {} within {} iterations",
                            grid.time(i0),
                            grid.time(i0 + m),
                            stop,
                            self.config.max_iters
                        ),
                        residual: step,
                    });
                }
                let next = win.step(&x)?;
                step = x
                    .iter()
                    .zip(&next)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
                if !step.is_finite() {
                    return Err(Error::Divergence {
                        message: format!("Picard iterate is not finite at t = {}", grid.time(i0)),
                        residual: step,
                    });
                }
                x = next;
                iters += 1;
            }
            for (k, node) in win.nodes.iter().enumerate() {
                let i = i0 + 1 + k;
                st.x[i] = x[k];
                st.q[i] = (x[k] - 1.0).max(0.0);
                st.eta[i] = self.eta(node, st.q[i])?;
                let p = node.inverse_point(st.q[i])?;
                st.omega[i] = p.x;
                st.abandonment[i] = p.f_t;
                st.n_f[i] = node.n_f();
            }
            drop(win);
            windows.push(WindowDiagnostic {
                start: grid.time(i0),
                end: grid.time(i0 + m),
                length: m as f64 * h,
                kappa,
                iterations: iters,
                last_step: step,
            });
            total += iters;
            i0 += m;
        }

        let residual = self.residual(&st.x, &st.q, &st.eta);
        if residual > self.config.picard_tol {
            return Err(Error::Divergence {
                message: format!(
                    "key-equation residual {residual:.3e} exceeds tolerance {:.3e}",
                    self.config.picard_tol
                ),
                residual,
            });
        }
        let z = st.x.iter().map(|v| v.min(1.0)).collect();
        Ok(FluidSolution {
            model: self.model.clone(),
            config: self.config.clone(),
            x: st.x,
            q: st.q,
            z,
            omega: st.omega,
            eta: st.eta,
            abandonment: st.abandonment,
            n_f: st.n_f,
            diagnostics: SolveDiagnostics {
                windows,
                total_iterations: total,
                residual,
            },
        })
    }

    fn residual(&self, x: &[f64], q: &[f64], eta: &[f64]) -> f64 {
        let cells = self.corrections(x, eta, 0, x.len().saturating_sub(1));
        (0..x.len())
            .map(|i| {
                let mut acc = self.base[i] + self.corrected(&cells, i);
                for j in 0..=i {
                    acc += weight(&self.w_e, i, j) * eta[j] + weight(&self.w_g, i, j) * q[j];
                }
                (x[i] - acc).abs()
            })
            .fold(0.0, f64::max)
    }

    /// Residual of an arbitrary trajectory with `H` recomputed from scratch.
    pub fn key_equation_residual(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.config.grid.len() {
            return Err(Error::Config(format!(
                "trajectory has {} nodes, grid has {}",
                x.len(),
                self.config.grid.len()
            )));
        }
        let q: Vec<f64> = x.iter().map(|v| (v - 1.0).max(0.0)).collect();
        let eta = q
            .iter()
            .enumerate()
            .map(|(i, &qi)| self.eta(&self.kernel.node(i), qi))
            .collect::<Result<Vec<_>>>()?;
        Ok(self.residual(x, &q, &eta))
    }

    /// The Picard map for the window starting after node `i0` with `m` nodes,
    /// given a converged prefix `x[..=i0]`.
    pub fn picard_window(&self, prefix: &[f64], m: usize) -> Result<PicardWindow<'_>> {
        let n = self.config.grid.len();
        if prefix.is_empty() || prefix.len() + m > n {
            return Err(Error::Config(format!(
                "window of {m} nodes after {} prefix nodes exceeds the grid ({n})",
                prefix.len()
            )));
        }
        let i0 = prefix.len() - 1;
        let q: Vec<f64> = prefix.iter().map(|v| (v - 1.0).max(0.0)).collect();
        let eta = q
            .iter()
            .enumerate()
            .map(|(i, &qi)| self.eta(&self.kernel.node(i), qi))
            .collect::<Result<Vec<_>>>()?;
        let st = State {
            x: prefix.to_vec(),
            q,
            eta,
            omega: Vec::new(),
            abandonment: Vec::new(),
            n_f: Vec::new(),
        };
        Ok(self.window(&st, i0, m))
    }
}

/// Picard map restricted to one window, history precomputed.
pub struct PicardWindow<'a> {
    solver: &'a Solver,
    start: usize,
    nodes: Vec<NodeKernel<'a>>,
    hist: Vec<f64>,
    x_start: f64,
    eta_start: f64,
}

impl PicardWindow<'_> {
    /// Index of the last node before the window.
    pub fn start(&self) -> usize {
        self.start
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// One application of the map to the window values `x`.
    pub fn step(&self, x: &[f64]) -> Result<Vec<f64>> {
        let s = self.solver;
        let q: Vec<f64> = x.iter().map(|v| (v - 1.0).max(0.0)).collect();
        let eta = self
            .nodes
            .iter()
            .zip(&q)
            .map(|(node, &qi)| s.eta(node, qi))
            .collect::<Result<Vec<_>>>()?;
        let i0 = self.start;
        // Window cells, the first one starting at the last prefix node.
        let cells: Corrections = (0..x.len())
            .filter_map(|k| {
                let (xa, ea) = if k == 0 { (self.x_start, self.eta_start) } else { (x[k - 1], eta[k - 1]) };
                let c = i0 + k;
                crossing(xa, x[k], ea, eta[k], s.lam[c], s.lam[c + 1]).map(|(ce, cg)| (c, ce, cg))
            })
            .collect();
        Ok((0..x.len())
            .map(|k| {
                let i = i0 + 1 + k;
                let mut acc = self.hist[k] + s.corrected(&cells, i);
                for (l, (e, qq)) in eta.iter().zip(&q).enumerate().take(k + 1) {
                    let j = i0 + 1 + l;
                    acc += weight(&s.w_e, i, j) * e + weight(&s.w_g, i, j) * qq;
                }
                acc
            })
            .collect())
    }
}

/// Solve the key equation for `model` on `config.grid`.
pub fn solve(model: &Model, config: &SolverConfig) -> Result<FluidSolution> {
    Solver::new(model.clone(), config.clone())?.run()
}

/// Solution of the key equation with derived quantities on the grid.
#[derive(Debug, Clone)]
pub struct FluidSolution {
    model: Model,
    config: SolverConfig,
    x: Vec<f64>,
    q: Vec<f64>,
    z: Vec<f64>,
    omega: Vec<f64>,
    eta: Vec<f64>,
    abandonment: Vec<f64>,
    n_f: Vec<f64>,
    diagnostics: SolveDiagnostics,
}

impl FluidSolution {
    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    pub fn grid(&self) -> &Grid {
        &self.config.grid
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.x.len()).map(|i| self.config.grid.time(i)).collect()
    }

    /// Total fluid `X`.
    pub fn x(&self) -> &[f64] {
        &self.x
    }

    /// Queue content `Q = (X − 1)⁺`.
    pub fn q(&self) -> &[f64] {
        &self.q
    }

    /// Service content `Z = X ∧ 1`.
    pub fn z(&self) -> &[f64] {
        &self.z
    }

    /// Potential waiting time `ω(t) = F_{d,t}^{-1}(Q(t))`.
    pub fn omega(&self) -> &[f64] {
        &self.omega
    }

    /// Entry rate into service `η(t) = H_t(Q(t))`.
    pub fn eta(&self) -> &[f64] {
        &self.eta
    }

    /// Abandonment rate `F_t(ω(t))`.
    pub fn abandonment_rate(&self) -> &[f64] {
        &self.abandonment
    }

    /// `N_{F,t}`.
    pub fn n_f(&self) -> &[f64] {
        &self.n_f
    }

    /// `Q(0)`.
    pub fn q0(&self) -> f64 {
        self.q[0]
    }

    pub fn diagnostics(&self) -> &SolveDiagnostics {
        &self.diagnostics
    }

    /// Cumulative entry into service `a(t) = ∫₀ᵗ η − Q(t) + Q(0)`.
    pub fn a(&self) -> Vec<f64> {
        let h = self.config.grid.step();
        let mut out = Vec::with_capacity(self.x.len());
        let mut integral = 0.0;
        for i in 0..self.x.len() {
            if i > 0 {
                integral += 0.5 * h * (self.eta[i - 1] + self.eta[i]);
            }
            out.push(integral - self.q[i] + self.q[0]);
        }
        out
    }

    /// Cumulative abandonment `L(t) = ∫₀ᵗ F_s(ω(s)) ds`.
    pub fn abandoned(&self) -> Vec<f64> {
        let h = self.config.grid.step();
        let mut acc = 0.0;
        let mut out = Vec::with_capacity(self.x.len());
        for i in 0..self.x.len() {
            if i > 0 {
                acc += 0.5 * h * (self.abandonment[i - 1] + self.abandonment[i]);
            }
            out.push(acc);
        }
        out
    }

    /// Linear interpolation of a grid series at `t`.
    pub fn interpolate(&self, values: &[f64], t: f64) -> f64 {
        let h = self.config.grid.step();
        let pos = (t / h).max(0.0);
        let k = pos.floor() as usize;
        if k + 1 >= values.len() {
            return *values.last().unwrap_or(&f64::NAN);
        }
        let frac = pos - k as f64;
        values[k] + frac * (values[k + 1] - values[k])
    }

    /// Recompute `max_i |X_i − Ψ(X)_i|` with fresh kernels.
    pub fn key_equation_residual(&self) -> Result<f64> {
        Solver::new(self.model.clone(), self.config.clone())?.key_equation_residual(&self.x)
    }

    /// Grid-scale checks of the structural properties of a solution:
    /// `a` nondecreasing, `Q ≤ N_F`, `t − ω(t)` nondecreasing and the
    /// increment bound on `X`.
    pub fn structural_checks(&self) -> Vec<InvariantCheck> {
        let h = self.config.grid.step();
        let lam = self.model.extended_rate().sup();
        let mu = self.model.service().rate();
        let a = self.a();
        let drop_a = max_drop(&a);
        let queue = self
            .q
            .iter()
            .zip(&self.n_f)
            .map(|(q, n)| q - n)
            .fold(0.0, f64::max);
        let entry: Vec<f64> = self
            .omega
            .iter()
            .enumerate()
            .map(|(i, w)| self.config.grid.time(i) - w)
            .collect();
        let drop_entry = max_drop(&entry);
        let incr = self
            .x
            .windows(2)
            .map(|w| (w[1] - w[0]).abs())
            .fold(0.0, f64::max);
        vec![
            InvariantCheck::new("entry-process-monotone", drop_a, 10.0 * h * lam.max(1.0)),
            InvariantCheck::new("queue-below-kernel-mass", queue, 10.0 * h * lam.max(1.0)),
            InvariantCheck::new("entry-time-monotone", drop_entry, 10.0 * h),
            InvariantCheck::new("increment-bound", incr, (lam + 2.0 * mu + 1.0) * h),
        ]
    }
}

/// Largest decrease `max_{i<j} (v_i − v_j)⁺`.
pub(crate) fn max_drop(v: &[f64]) -> f64 {
    let mut peak = f64::NEG_INFINITY;
    let mut worst: f64 = 0.0;
    for &x in v {
        peak = peak.max(x);
        worst = worst.max(peak - x);
    }
    worst
}
