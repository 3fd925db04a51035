//! Elapsed-time (age) formulation: queue-age and service-age measures, the
//! hazard-rate abandonment integral, and the translation of an age-based
//! initial state into the residual-time form the solver consumes.
//!
//! Both formulations are driven by the same solution of the key equation;
//! [`equivalence_report`] measures how closely their queue, service and
//! abandonment quantities agree.

use gauss_quad::GaussLegendre;
use serde::{Deserialize, Serialize};

use crate::dist::{Distribution, RateFunction};
use crate::error::{Error, Result};
use crate::kernel::{Grid, Kernel};
use crate::processes::{flow_ledger, in_service_measure};
use crate::solver::{
    solve, FluidSolution, InitialCondition, KernelMode, Model, ResidualProfile, SolverConfig,
};

const GL_POINTS: usize = 16;

fn rule() -> GaussLegendre {
    GaussLegendre::new(GL_POINTS.try_into().expect("nonzero degree"))
}

/// Piecewise-linear density on `[0, step·(len − 1)]`, zero beyond.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct AgeDensity {
    pub step: f64,
    pub values: Vec<f64>,
}

impl AgeDensity {
    pub fn zero() -> Self {
        AgeDensity::default()
    }

    /// Sample `f` at `k·step` for `k = 0..=⌊end/step⌋`.
    pub fn tabulate(step: f64, end: f64, f: impl Fn(f64) -> f64) -> Self {
        let count = (end / step + 1e-9).floor() as usize;
        AgeDensity {
            step,
            values: (0..=count).map(|k| f(k as f64 * step)).collect(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| *v == 0.0)
    }

    pub fn support_end(&self) -> f64 {
        if self.values.len() < 2 {
            0.0
        } else {
            self.step * (self.values.len() - 1) as f64
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        if x < 0.0 || x > self.support_end() || self.values.len() < 2 {
            return 0.0;
        }
        let pos = x / self.step;
        let k = (pos.floor() as usize).min(self.values.len() - 2);
        let frac = pos - k as f64;
        self.values[k] + frac * (self.values[k + 1] - self.values[k])
    }

    pub fn total(&self) -> f64 {
        self.values
            .windows(2)
            .map(|w| 0.5 * self.step * (w[0] + w[1]))
            .sum()
    }

    /// `∫₀^{upper} weight(s)·density(s) ds`, Gauss–Legendre on each cell.
    fn weighted(&self, upper: f64, weight: impl Fn(f64) -> f64) -> f64 {
        let end = self.support_end().min(upper);
        if end <= 0.0 {
            return 0.0;
        }
        let gl = rule();
        let cells = (end / self.step).ceil() as usize;
        (0..cells)
            .map(|k| {
                let a = k as f64 * self.step;
                let b = ((k + 1) as f64 * self.step).min(end);
                if b <= a {
                    0.0
                } else {
                    gl.integrate(a, b, |s| weight(s) * self.eval(s))
                }
            })
            .sum()
    }

    fn validate(&self, name: &str) -> Result<()> {
        if self.values.is_empty() {
            return Ok(());
        }
        if !(self.step > 0.0) {
            return Err(Error::Config(format!("{name}: step must be positive")));
        }
        if self.values.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::Config(format!("{name}: density values must be finite and >= 0")));
        }
        Ok(())
    }
}

/// Age densities at time 0: `r0` of the fluid in the queue, `z0` of the fluid
/// in service.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct ElapsedInitialCondition {
    #[serde(default)]
    pub r0: AgeDensity,
    #[serde(default)]
    pub z0: AgeDensity,
}

impl ElapsedInitialCondition {
    pub fn validate(&self) -> Result<()> {
        self.r0.validate("r0")?;
        self.z0.validate("z0")?;
        let mass = self.z0.total();
        if mass > 1.0 + 1e-12 {
            return Err(Error::Config(format!("in-service age mass {mass} exceeds capacity 1")));
        }
        Ok(())
    }
}

/// Residual-time initial condition equivalent to `eic`: pre-zero arrival rate
/// `λ(s) = r0(−s)/F^c(−s)` and `Z̄(0)(C_x) = ∫ G^c(s + x)/G^c(s) z0(s) ds`,
/// tabulated on the step of `grid` out to twice its horizon.
pub fn to_residual_ic(
    eic: &ElapsedInitialCondition,
    patience: &Distribution,
    service: &Distribution,
    grid: &Grid,
) -> Result<InitialCondition> {
    eic.validate()?;
    let (omega0, pre_rate) = if eic.r0.is_zero() {
        (0.0, None)
    } else {
        let step = eic.r0.step;
        let mut points = Vec::with_capacity(eic.r0.values.len());
        for (k, r) in eic.r0.values.iter().enumerate().rev() {
            let age = k as f64 * step;
            let tail = patience.complement(age);
            if tail <= 0.0 {
                if *r > 0.0 {
                    return Err(Error::Correspondence(format!(
                        "queue-age density is positive at age {age} where F^c vanishes"
                    )));
                }
                points.push((-age, 0.0));
            } else {
                points.push((-age, r / tail));
            }
        }
        (eic.r0.support_end(), Some(RateFunction::piecewise_linear(points)?))
    };
    let z0 = if eic.z0.is_zero() {
        ResidualProfile::Empty
    } else {
        for (k, z) in eic.z0.values.iter().enumerate() {
            let age = k as f64 * eic.z0.step;
            if *z > 0.0 && service.complement(age) <= 0.0 {
                return Err(Error::Correspondence(format!(
                    "service-age density is positive at age {age} where G^c vanishes"
                )));
            }
        }
        let h = grid.step();
        let count = 2 * grid.len() + 2;
        let values = (0..count)
            .map(|k| residual_from_ages(&eic.z0, service, k as f64 * h))
            .collect();
        ResidualProfile::Tabulated { step: h, values }
    };
    Ok(InitialCondition {
        omega0,
        pre_rate,
        z0,
    })
}

fn survival_ratio(service: &Distribution, age: f64, more: f64) -> f64 {
    let base = service.complement(age);
    if base <= 0.0 {
        0.0
    } else {
        service.complement(age + more) / base
    }
}

fn residual_from_ages(z0: &AgeDensity, service: &Distribution, x: f64) -> f64 {
    z0.weighted(f64::INFINITY, |s| survival_ratio(service, s, x))
}

fn node_index(sol: &FluidSolution, t: f64) -> Result<usize> {
    sol.grid()
        .index_of(t)
        .ok_or_else(|| Error::Domain(format!("t = {t} is not a grid node")))
}

fn kernel_of(sol: &FluidSolution) -> Result<Kernel> {
    let m = sol.model();
    Kernel::new(m.extended_rate().clone(), m.patience().clone(), m.omega0(), sol.grid())
}

/// `R̄_a(t)([0, x]) = ∫₀ˣ F^c(u) λ(t − u) du`: queued fluid of age at most `x`.
pub fn elapsed_queue_measure(sol: &FluidSolution, t: f64, x: f64) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(Error::Domain(format!("age must be >= 0, got {x}")));
    }
    let i = node_index(sol, t)?;
    Ok(kernel_of(sol)?.segment(sol.grid().time(i), 0.0, x).0)
}

/// `Z̄_a(t)([0, x])`: in-service fluid of age at most `x`, from the initial
/// ages carried forward and the entry process `A`.
pub fn elapsed_service_measure(
    sol: &FluidSolution,
    eic: &ElapsedInitialCondition,
    t: f64,
    x: f64,
) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(Error::Domain(format!("age must be >= 0, got {x}")));
    }
    let i = node_index(sol, t)?;
    Ok(ServiceAges::new(sol, eic)?.mass(i, x))
}

struct ServiceAges<'a> {
    sol: &'a FluidSolution,
    eic: &'a ElapsedInitialCondition,
    a: Vec<f64>,
}

impl<'a> ServiceAges<'a> {
    fn new(sol: &'a FluidSolution, eic: &'a ElapsedInitialCondition) -> Result<Self> {
        let g = sol.model().service();
        for (k, z) in eic.z0.values.iter().enumerate() {
            if *z > 0.0 && g.complement(k as f64 * eic.z0.step) <= 0.0 {
                return Err(Error::Correspondence(format!(
                    "service-age density is positive at age {} where G^c vanishes",
                    k as f64 * eic.z0.step
                )));
            }
        }
        Ok(ServiceAges { sol, eic, a: sol.a() })
    }

    fn mass(&self, i: usize, x: f64) -> f64 {
        let grid = self.sol.grid();
        let g = self.sol.model().service();
        let h = grid.step();
        let t = grid.time(i);
        // Initial fluid of age s now has age s + t.
        let mut mass = if x > t {
            self.eic.z0.weighted(x - t, |s| survival_ratio(g, s, t))
        } else {
            0.0
        };
        // Entries during [t − x, t].
        let from = (t - x).max(0.0);
        for k in 0..i {
            let (lo, hi) = (grid.time(k), grid.time(k + 1));
            if hi <= from {
                continue;
            }
            let da = self.a[k + 1] - self.a[k];
            let cell = 0.5 * da * (g.complement(t - lo) + g.complement(t - hi));
            mass += if lo >= from { cell } else { cell * (hi - from) / h };
        }
        mass
    }
}

/// Age snapshot at one node time on `x = k·h ∈ [0, t + ages]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElapsedSnapshot {
    pub t: f64,
    pub xs: Vec<f64>,
    pub queue_ages: Vec<f64>,
    pub service_ages: Vec<f64>,
}

pub fn elapsed_snapshot(sol: &FluidSolution, eic: &ElapsedInitialCondition, t: f64) -> Result<ElapsedSnapshot> {
    let i = node_index(sol, t)?;
    let t = sol.grid().time(i);
    let h = sol.grid().step();
    let kernel = kernel_of(sol)?;
    let ages = ServiceAges::new(sol, eic)?;
    let reach = t + sol.model().omega0().max(eic.z0.support_end());
    let count = (reach / h + 1e-9).ceil() as usize;
    let xs: Vec<f64> = (0..=count).map(|k| k as f64 * h).collect();
    let queue_ages = xs.iter().map(|&x| kernel.segment(t, 0.0, x).0).collect();
    let service_ages = xs.iter().map(|&x| ages.mass(i, x)).collect();
    Ok(ElapsedSnapshot {
        t,
        xs,
        queue_ages,
        service_ages,
    })
}

/// Hazard-weighted abandonment `∫₀^{ω(s)} h_F(x) F^c(x) λ(s − x) dx` at node `i`.
fn abandonment_rate(sol: &FluidSolution, i: usize, gl: &GaussLegendre) -> f64 {
    let w = sol.omega()[i];
    if w <= 0.0 {
        return 0.0;
    }
    let s = sol.grid().time(i);
    let f = sol.model().patience();
    let rate = sol.model().extended_rate();
    // Split at the reflected rate breakpoints so each piece is smooth.
    let mut cuts = vec![0.0];
    for p in rate.pieces() {
        let c = s - p.start;
        if c > 0.0 && c < w {
            cuts.push(c);
        }
    }
    cuts.push(w);
    cuts.sort_by(f64::total_cmp);
    cuts.windows(2)
        .filter(|c| c[1] > c[0])
        .map(|c| {
            gl.integrate(c[0], c[1], |x| {
                let tail = f.complement(x);
                if tail <= 0.0 {
                    0.0
                } else {
                    f.hazard(x) * tail * rate.rate(s - x)
                }
            })
        })
        .sum()
}

/// `L̄(t_i)` for every node from the hazard-rate form.
pub fn elapsed_abandonment_path(sol: &FluidSolution) -> Vec<f64> {
    let gl = rule();
    let h = sol.grid().step();
    let rates: Vec<f64> = (0..sol.x().len()).map(|i| abandonment_rate(sol, i, &gl)).collect();
    let mut acc = 0.0;
    let mut out = Vec::with_capacity(rates.len());
    for i in 0..rates.len() {
        if i > 0 {
            acc += 0.5 * h * (rates[i - 1] + rates[i]);
        }
        out.push(acc);
    }
    out
}

pub fn elapsed_abandonment(sol: &FluidSolution, t: f64) -> Result<f64> {
    let i = node_index(sol, t)?;
    Ok(elapsed_abandonment_path(sol)[i])
}

/// `max |h_F(x)F^c(x)λ(s − x) − f(x)λ(s − x)|` over the tabulated points
/// `x = k·h ≤ ω(s)` with `F^c(x) > 0`.
pub fn hazard_identity_gap(sol: &FluidSolution) -> f64 {
    let f = sol.model().patience();
    let rate = sol.model().extended_rate();
    let h = sol.grid().step();
    let mut worst: f64 = 0.0;
    for (i, &w) in sol.omega().iter().enumerate() {
        let s = sol.grid().time(i);
        let mut k = 0;
        while k as f64 * h <= w {
            let x = k as f64 * h;
            let tail = f.complement(x);
            if tail > 0.0 {
                let lam = rate.rate(s - x);
                let dens = f.density(x).unwrap_or(0.0);
                worst = worst.max((f.hazard(x) * tail * lam - dens * lam).abs());
            }
            k += 1;
        }
    }
    worst
}

/// A scenario whose initial state is given by age densities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElapsedScenario {
    pub rate: RateFunction,
    pub patience: Distribution,
    pub service: Distribution,
    pub initial: ElapsedInitialCondition,
    pub solver: SolverConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub step: f64,
    /// `max |Q(t) − R̄_a(t)([0, ω(t)])|`.
    pub queue_gap: f64,
    /// `max |Z̄(t)(C_0) − Z̄_a(t)([0, ∞))|`.
    pub service_gap: f64,
    /// `max |L̄(t) − L̄_a(t)|`.
    pub abandonment_gap: f64,
    /// `|Q(0) − ∫ r0|`.
    pub initial_queue_gap: f64,
    pub hazard_identity_gap: f64,
    /// Gap to the constant-rate specialization, when the rate is constant.
    pub constant_rate_gap: Option<f64>,
    /// `10h·(1 + sup λ)`.
    pub bound: f64,
}

impl EquivalenceReport {
    pub fn passed(&self) -> bool {
        let gaps_ok = [self.queue_gap, self.service_gap, self.abandonment_gap]
            .iter()
            .all(|g| *g <= self.bound);
        gaps_ok && self.constant_rate_gap.is_none_or(|g| g <= 1e-10)
    }
}

/// Solve once and compare both formulations at every node.
pub fn equivalence_report(scenario: &ElapsedScenario) -> Result<EquivalenceReport> {
    let grid = scenario.solver.grid;
    let ic = to_residual_ic(&scenario.initial, &scenario.patience, &scenario.service, &grid)?;
    let model = Model::new(
        scenario.rate.clone(),
        scenario.patience.clone(),
        scenario.service.clone(),
        ic,
    )?;
    let sol = solve(&model, &scenario.solver)?;
    let h = grid.step();
    let kernel = kernel_of(&sol)?;
    let ages = ServiceAges::new(&sol, &scenario.initial)?;
    let ledger = flow_ledger(&sol)?;
    let elapsed_l = elapsed_abandonment_path(&sol);
    let far = f64::INFINITY;
    let mut queue_gap: f64 = 0.0;
    let mut service_gap: f64 = 0.0;
    let mut abandonment_gap: f64 = 0.0;
    for (i, l) in elapsed_l.iter().enumerate() {
        let t = grid.time(i);
        let qa = kernel.segment(t, 0.0, sol.omega()[i]).0;
        queue_gap = queue_gap.max((sol.q()[i] - qa).abs());
        let zr = in_service_measure(&sol, t, 0.0)?;
        service_gap = service_gap.max((zr - ages.mass(i, far)).abs());
        abandonment_gap = abandonment_gap.max((ledger.l[i] - l).abs());
    }
    let constant = model.extended_rate().constant_value().is_some_and(|v| v > 0.0);
    let constant_rate_gap = if constant {
        let cfg = SolverConfig {
            kernel_mode: KernelMode::ConstantRate,
            ..scenario.solver.clone()
        };
        let special = solve(&model, &cfg)?;
        Some(
            sol.x()
                .iter()
                .zip(special.x())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max),
        )
    } else {
        None
    };
    Ok(EquivalenceReport {
        step: h,
        queue_gap,
        service_gap,
        abandonment_gap,
        initial_queue_gap: (sol.q0() - scenario.initial.r0.total()).abs(),
        hazard_identity_gap: hazard_identity_gap(&sol),
        constant_rate_gap,
        bound: 10.0 * h * (1.0 + model.extended_rate().sup()),
    })
}
