//! State descriptors reconstructed from a solved trajectory: waiting time,
//! residual-time measures of the virtual buffer and of service, and the flow
//! ledger `E, B, A, L, S` with its balance residuals.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::Kernel;
use crate::solver::{max_drop, FluidSolution, InvariantCheck};

/// `ω(t_i) = F_{d,t_i}^{-1}(Q_i)` recomputed from the kernel tables.
pub fn waiting_time(sol: &FluidSolution) -> Result<Vec<f64>> {
    let kernel = kernel_of(sol)?;
    sol.q()
        .iter()
        .enumerate()
        .map(|(i, &q)| kernel.node(i).f_dt_inverse(q))
        .collect()
}

fn kernel_of(sol: &FluidSolution) -> Result<Kernel> {
    let m = sol.model();
    Kernel::new(m.extended_rate().clone(), m.patience().clone(), m.omega0(), sol.grid())
}

fn node_index(sol: &FluidSolution, t: f64) -> Result<usize> {
    sol.grid()
        .index_of(t)
        .ok_or_else(|| Error::Domain(format!("t = {t} is not a grid node")))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasureKind {
    VirtualBufferResidual,
    InServiceResidual,
}

/// `x ↦ measure(C_x)` at one node time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureSnapshot {
    pub t: f64,
    pub kind: MeasureKind,
    pub xs: Vec<f64>,
    pub values: Vec<f64>,
}

/// `R̄(t)(C_x) = ∫_{t−ω(t)}^t F^c(x + t − s) dĒ(s)`: fluid in the virtual
/// buffer whose residual patience exceeds `x` (negative `x` allowed).
pub fn virtual_buffer_measure(sol: &FluidSolution, t: f64, x: f64) -> Result<f64> {
    let i = node_index(sol, t)?;
    let kernel = kernel_of(sol)?;
    Ok(buffer_mass(sol, &kernel, i, x))
}

fn buffer_mass(sol: &FluidSolution, kernel: &Kernel, i: usize, x: f64) -> f64 {
    let t = sol.grid().time(i);
    let w = sol.omega()[i];
    if w <= 0.0 {
        return 0.0;
    }
    let rate = sol.model().extended_rate();
    let mut mass = 0.0;
    // Residual patience x + u < 0 still counts fully.
    let full = if x < 0.0 { w.min(-x) } else { 0.0 };
    if full > 0.0 {
        mass += rate.cumulative(t) - rate.cumulative(t - full);
    }
    if x + w > 0.0 {
        mass += kernel.segment(t + x, x.max(0.0), x + w).0;
    }
    mass
}

/// Snapshot of the virtual buffer on `x ∈ [−(t + ω(0)), T − t]`.
pub fn virtual_buffer_snapshot(sol: &FluidSolution, t: f64) -> Result<MeasureSnapshot> {
    let i = node_index(sol, t)?;
    let kernel = kernel_of(sol)?;
    let h = sol.grid().step();
    let t = sol.grid().time(i);
    let lo = -(t + sol.model().omega0());
    let hi = sol.grid().last_time() - t;
    let count = ((hi - lo) / h + 1e-9).floor() as usize;
    let xs: Vec<f64> = (0..=count).map(|k| lo + k as f64 * h).collect();
    let values = xs.iter().map(|&x| buffer_mass(sol, &kernel, i, x)).collect();
    Ok(MeasureSnapshot {
        t,
        kind: MeasureKind::VirtualBufferResidual,
        xs,
        values,
    })
}

/// Cumulative departures from the front of the virtual buffer,
/// `B̄(t_i) = Ē(t_i − ω(t_i)) − Ē(−ω(0))`.
fn buffer_exits(sol: &FluidSolution) -> Vec<f64> {
    let rate = sol.model().extended_rate();
    let origin = rate.cumulative(-sol.model().omega0());
    sol.omega()
        .iter()
        .enumerate()
        .map(|(i, w)| rate.cumulative(sol.grid().time(i) - w) - origin)
        .collect()
}

fn check_exits(sol: &FluidSolution, b: &[f64]) -> Result<()> {
    let slack = 10.0 * sol.grid().step() * sol.model().extended_rate().sup().max(1.0);
    for (k, w) in b.windows(2).enumerate() {
        if w[1] - w[0] < -slack {
            return Err(Error::Consistency(format!(
                "buffer exit increment {} below −{slack} on [{}, {}]",
                w[1] - w[0],
                sol.grid().time(k),
                sol.grid().time(k + 1)
            )));
        }
    }
    Ok(())
}

struct ServiceEntry {
    b: Vec<f64>,
    admitted: Vec<f64>,
}

impl ServiceEntry {
    fn new(sol: &FluidSolution) -> Result<Self> {
        let b = buffer_exits(sol);
        check_exits(sol, &b)?;
        let f = sol.model().patience();
        let admitted = sol.omega().iter().map(|&w| f.complement(w)).collect();
        Ok(ServiceEntry { b, admitted })
    }

    fn mass(&self, sol: &FluidSolution, i: usize, x: f64) -> f64 {
        let grid = sol.grid();
        let g = sol.model().service();
        let t = grid.time(i);
        let mut mass = sol.model().z0(x + t);
        for k in 0..i {
            let d = self.b[k + 1] - self.b[k];
            let left = self.admitted[k] * g.complement(x + t - grid.time(k));
            let right = self.admitted[k + 1] * g.complement(x + t - grid.time(k + 1));
            mass += 0.5 * d * (left + right);
        }
        mass
    }
}

/// `Z̄(t)(C_x) = Z̄(0)(C_{x+t}) + ∫₀ᵗ F^c(ω(s)) G^c(x + t − s) dB̄(s)`.
pub fn in_service_measure(sol: &FluidSolution, t: f64, x: f64) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(Error::Domain(format!("in-service measure needs x >= 0, got {x}")));
    }
    let i = node_index(sol, t)?;
    Ok(ServiceEntry::new(sol)?.mass(sol, i, x))
}

/// Snapshot of the in-service measure on `x ∈ [0, T]`.
pub fn in_service_snapshot(sol: &FluidSolution, t: f64) -> Result<MeasureSnapshot> {
    let i = node_index(sol, t)?;
    in_service_profile(sol, i, sol.grid().len())
}

/// In-service measure at node `i` on `x = k·h`, `k < count`.
pub(crate) fn in_service_profile(sol: &FluidSolution, i: usize, count: usize) -> Result<MeasureSnapshot> {
    let entry = ServiceEntry::new(sol)?;
    let h = sol.grid().step();
    let xs: Vec<f64> = (0..count).map(|k| k as f64 * h).collect();
    let values = xs.iter().map(|&x| entry.mass(sol, i, x)).collect();
    Ok(MeasureSnapshot {
        t: sol.grid().time(i),
        kind: MeasureKind::InServiceResidual,
        xs,
        values,
    })
}

/// Cumulative flows on the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowLedger {
    pub t: Vec<f64>,
    /// Arrivals `Ē(t) − Ē(0)`.
    pub e: Vec<f64>,
    /// Fluid that left the virtual buffer (served or abandoned at the front).
    pub b: Vec<f64>,
    /// Entered service.
    pub a: Vec<f64>,
    /// Abandoned.
    pub l: Vec<f64>,
    /// Completed service.
    pub s: Vec<f64>,
}

pub fn flow_ledger(sol: &FluidSolution) -> Result<FlowLedger> {
    let grid = sol.grid();
    let n = grid.len();
    let model = sol.model();
    let rate = model.extended_rate();
    let g = model.service();
    let t: Vec<f64> = sol.times();
    let e: Vec<f64> = t.iter().map(|&s| rate.cumulative(s) - rate.cumulative(0.0)).collect();
    let b = buffer_exits(sol);
    let a = sol.a();
    let l = sol.abandoned();
    let z_start = model.z0(0.0);
    let s: Vec<f64> = (0..n)
        .map(|i| {
            let mut acc = z_start - model.z0(t[i]);
            for k in 0..i {
                let left = g.cdf(t[i] - t[k]).unwrap_or(0.0);
                let right = g.cdf(t[i] - t[k + 1]).unwrap_or(0.0);
                acc += 0.5 * (a[k + 1] - a[k]) * (left + right);
            }
            acc
        })
        .collect();
    let slack = 10.0 * grid.step() * rate.sup().max(1.0);
    for (name, v) in [("E", &e), ("B", &b), ("A", &a), ("L", &l), ("S", &s)] {
        let d = max_drop(v);
        if d > slack {
            return Err(Error::Consistency(format!(
                "ledger entry {name} decreases by {d:.3e} (allowed {slack:.3e})"
            )));
        }
    }
    Ok(FlowLedger { t, e, b, a, l, s })
}

/// `(max |Q − (Q(0) + E − L − A)|, max |X − (X(0) + E − L − S)|)`.
pub fn balance_residuals(sol: &FluidSolution, ledger: &FlowLedger) -> (f64, f64) {
    let q0 = sol.q()[0];
    let x0 = sol.x()[0];
    let mut queue: f64 = 0.0;
    let mut system: f64 = 0.0;
    for i in 0..sol.x().len() {
        let flow = ledger.e[i] - ledger.l[i];
        queue = queue.max((sol.q()[i] - (q0 + flow - ledger.a[i])).abs());
        system = system.max((sol.x()[i] - (x0 + flow - ledger.s[i])).abs());
    }
    (queue, system)
}

/// Non-idling, monotone buffer exits, measure monotonicity and snapshot
/// conservation at a handful of node times.
pub fn process_checks(sol: &FluidSolution) -> Result<Vec<InvariantCheck>> {
    let grid = sol.grid();
    let h = grid.step();
    let n = grid.len();
    let lam = sol.model().extended_rate().sup().max(1.0);
    let idle = sol
        .q()
        .iter()
        .zip(sol.z())
        .map(|(q, z)| q * (1.0 - z))
        .fold(0.0, f64::max);
    let b = buffer_exits(sol);
    let mut out = vec![
        InvariantCheck::new("non-idling", idle, 10.0 * h),
        InvariantCheck::new("buffer-exits-monotone", max_drop(&b), 10.0 * h * lam),
    ];
    let probes: Vec<usize> = (0..=4).map(|k| k * (n - 1) / 4).collect();
    let entry = ServiceEntry::new(sol)?;
    let kernel = kernel_of(sol)?;
    let (mut mono, mut cons_q, mut cons_z): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for &i in &probes {
        let t = grid.time(i);
        let vb = virtual_buffer_snapshot(sol, t)?;
        for w in vb.values.windows(2) {
            mono = mono.max(w[1] - w[0]);
        }
        cons_q = cons_q.max((buffer_mass(sol, &kernel, i, 0.0) - sol.q()[i]).abs());
        let mut prev = f64::INFINITY;
        for k in 0..n {
            let v = entry.mass(sol, i, k as f64 * h);
            mono = mono.max(v - prev);
            prev = v;
        }
        cons_z = cons_z.max((entry.mass(sol, i, 0.0) - sol.z()[i]).abs());
    }
    out.push(InvariantCheck::new("measures-monotone", mono, 1e-12));
    out.push(InvariantCheck::new("buffer-conservation", cons_q, 10.0 * h));
    out.push(InvariantCheck::new("service-conservation", cons_z, 10.0 * h));
    Ok(out)
}
