//! Time-varying kernels of the key equation.
//!
//! For a node time `t` and `x ∈ [0, t + ω(0)]`:
//!
//! ```text
//! F_{d,t}(x) = ∫₀ˣ F^c(s) λ(t−s) ds        F_t(x) = ∫₀ˣ f(s) λ(t−s) ds
//! N_{F,t}    = F_{d,t}(min(t + ω(0), S_F))
//! H_t(y)     = λ(t) − F_t(F_{d,t}^{-1}(y ∧ N_{F,t}))
//! ```
//!
//! Because `λ` is piecewise linear, both integrals are evaluated exactly on
//! every sub-interval where `λ(t−·)` is linear, using the closed-form partial
//! moments of `F`. Tables at the grid nodes `x_j = j·h` serve to bracket the
//! generalized inverse, which is then refined on the exact cell integral.

use serde::{Deserialize, Serialize};

use crate::dist::{Distribution, PartialMoments, RateFunction};
use crate::error::{Error, Result};

/// Uniform time grid `t_i = i·h`, `i = 0..=⌊T/h⌋`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    step: f64,
    horizon: f64,
}

impl Grid {
    pub fn new(step: f64, horizon: f64) -> Result<Self> {
        if !(step > 0.0) || !(horizon > 0.0) || !step.is_finite() || !horizon.is_finite() {
            return Err(Error::Config(format!(
                "grid needs step > 0 and horizon > 0, got h={step}, T={horizon}"
            )));
        }
        if step > horizon {
            return Err(Error::Config(format!("grid step {step} exceeds horizon {horizon}")));
        }
        Ok(Grid { step, horizon })
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Number of nodes, `⌊T/h⌋ + 1`.
    pub fn len(&self) -> usize {
        (self.horizon / self.step + 1e-9).floor() as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn time(&self, i: usize) -> f64 {
        i as f64 * self.step
    }

    pub fn last_time(&self) -> f64 {
        self.time(self.len() - 1)
    }

    /// Node index of `t` if it lies on the grid.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let k = (t / self.step).round();
        if k < 0.0 || (t - k * self.step).abs() > 1e-9 * self.step || k as usize >= self.len() {
            None
        } else {
            Some(k as usize)
        }
    }
}

/// Kernel inputs shared by all node times: the arrival rate extended to
/// negative times, the patience law and `ω(0)`.
#[derive(Debug, Clone)]
pub struct Kernel {
    rate: RateFunction,
    patience: Distribution,
    omega0: f64,
    step: f64,
    // Partial moments of F at x_j = j·h.
    cached: Vec<PartialMoments>,
}

/// A value computed at an argument that may have been clamped to the
/// kernel domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Clamped {
    pub value: f64,
    pub clamped: bool,
}

impl Kernel {
    /// `rate` must cover `[−ω(0), T]`.
    pub fn new(rate: RateFunction, patience: Distribution, omega0: f64, grid: &Grid) -> Result<Self> {
        if !(omega0 >= 0.0) || !omega0.is_finite() {
            return Err(Error::Config(format!("ω(0) must be finite and nonnegative, got {omega0}")));
        }
        let tol = 1e-9 * grid.step();
        if rate.start() > -omega0 + tol || rate.end() < grid.last_time() - tol {
            return Err(Error::Config(format!(
                "rate profile covers [{}, {}] but the kernel needs [{}, {}]",
                rate.start(),
                rate.end(),
                -omega0,
                grid.last_time()
            )));
        }
        let reach = (grid.last_time() + omega0).min(patience.support_end());
        let count = (reach / grid.step()).floor() as usize + 2;
        let cached = (0..count)
            .map(|j| patience.moments(j as f64 * grid.step()))
            .collect();
        Ok(Kernel {
            rate,
            patience,
            omega0,
            step: grid.step(),
            cached,
        })
    }

    pub fn rate(&self) -> &RateFunction {
        &self.rate
    }

    pub fn patience(&self) -> &Distribution {
        &self.patience
    }

    pub fn omega0(&self) -> f64 {
        self.omega0
    }

    fn moments_at(&self, x: f64) -> PartialMoments {
        let k = (x / self.step).round();
        if k >= 0.0 && (x - k * self.step).abs() <= 1e-12 * self.step {
            if let Some(m) = self.cached.get(k as usize) {
                return *m;
            }
        }
        self.patience.moments(x)
    }

    /// `(∫_u^v F^c(s)λ(t−s)ds, ∫_u^v λ(t−s)dF(s))` for `0 ≤ u ≤ v`, with `λ`
    /// taken as zero outside its domain.
    pub fn segment(&self, t: f64, u: f64, v: f64) -> (f64, f64) {
        self.cell(t, u.max(0.0), v)
    }

    fn cell(&self, t: f64, u: f64, v: f64) -> (f64, f64) {
        self.cell_with(t, u, v, self.moments_at(u), self.moments_at(v))
    }

    fn cell_with(
        &self,
        t: f64,
        u: f64,
        v: f64,
        mu: PartialMoments,
        mv: PartialMoments,
    ) -> (f64, f64) {
        if v <= u {
            return (0.0, 0.0);
        }
        // λ(t−s) is linear for s between reflected breakpoints.
        let lo_time = (t - v).max(self.rate.start());
        let hi_time = (t - u).min(self.rate.end());
        if hi_time <= lo_time {
            return (0.0, 0.0);
        }
        let first = self.rate.piece_index(lo_time);
        let last = self.rate.piece_index(hi_time);
        let pieces = self.rate.pieces();
        let mut fd = 0.0;
        let mut ft = 0.0;
        for (i, p) in pieces.iter().enumerate().take(last + 1).skip(first) {
            let a_time = p.start.max(lo_time);
            let b_time = p.end.min(hi_time);
            if b_time <= a_time && !(i == first && i == last) {
                continue;
            }
            let s_lo = t - b_time;
            let s_hi = t - a_time;
            if s_hi <= s_lo {
                continue;
            }
            let m_lo = if s_lo == u { mu } else { self.moments_at(s_lo) };
            let m_hi = if s_hi == v { mv } else { self.moments_at(s_hi) };
            // λ(t−s) = λ_lo + β (s − s_lo) on this sub-interval.
            let lam_lo = p.value(b_time);
            let beta = -p.slope();
            let d_int = m_hi.integrated_ccdf - m_lo.integrated_ccdf;
            let d_first = m_hi.first_moment_ccdf - m_lo.first_moment_ccdf;
            let d_cdf = m_hi.cdf - m_lo.cdf;
            let d_mom = m_hi.first_moment - m_lo.first_moment;
            fd += lam_lo * d_int + beta * (d_first - s_lo * d_int);
            ft += lam_lo * d_cdf + beta * (d_mom - s_lo * d_cdf);
        }
        (fd.max(0.0), ft.max(0.0))
    }

    /// Upper end of the kernel domain at time `t`: `min(t + ω(0), S_F)`.
    pub fn cap(&self, t: f64) -> f64 {
        (t + self.omega0).min(self.patience.support_end())
    }

    /// Tabulate `F_{d,t}` and `F_t` at `t = i·h`.
    pub fn node(&self, i: usize) -> NodeKernel<'_> {
        self.node_at(i as f64 * self.step)
    }

    pub fn node_at(&self, t: f64) -> NodeKernel<'_> {
        let cap = self.cap(t);
        let h = self.step;
        let full = ((cap / h) * (1.0 + 1e-12)).floor() as usize;
        let mut xs: Vec<f64> = (0..=full).map(|j| (j as f64 * h).min(cap)).collect();
        if cap - xs[full] > 1e-12 * h {
            xs.push(cap);
        } else {
            xs[full] = cap;
        }
        let mut fd = Vec::with_capacity(xs.len());
        let mut ft = Vec::with_capacity(xs.len());
        let (mut acc_d, mut acc_t) = (0.0, 0.0);
        fd.push(0.0);
        ft.push(0.0);
        for w in xs.windows(2) {
            let (d, f) = self.cell(t, w[0], w[1]);
            acc_d += d;
            acc_t += f;
            fd.push(acc_d);
            ft.push(acc_t);
        }
        NodeKernel {
            kernel: self,
            t,
            cap,
            lambda: self.rate.rate(t),
            xs,
            fd,
            ft,
        }
    }
}

/// Tabulated kernels at one node time.
#[derive(Debug, Clone)]
pub struct NodeKernel<'a> {
    kernel: &'a Kernel,
    t: f64,
    cap: f64,
    lambda: f64,
    xs: Vec<f64>,
    fd: Vec<f64>,
    ft: Vec<f64>,
}

/// Result of the generalized inverse, with `F_t` at the same point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InversePoint {
    pub x: f64,
    pub f_t: f64,
}

impl NodeKernel<'_> {
    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn cap(&self) -> f64 {
        self.cap
    }

    /// `λ(t)`.
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// `N_{F,t}`.
    pub fn n_f(&self) -> f64 {
        *self.fd.last().unwrap()
    }

    /// Tabulated `(x_j, F_{d,t}(x_j), F_t(x_j))`.
    pub fn table(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.xs
            .iter()
            .zip(&self.fd)
            .zip(&self.ft)
            .map(|((x, d), f)| (*x, *d, *f))
    }

    fn locate(&self, x: f64) -> usize {
        // Cell j covers [xs[j], xs[j+1]].
        let j = self.xs.partition_point(|v| *v <= x);
        j.saturating_sub(1).min(self.xs.len().saturating_sub(2))
    }

    fn eval(&self, x: f64) -> (f64, f64) {
        if self.xs.len() < 2 || x <= 0.0 {
            return (0.0, 0.0);
        }
        let j = self.locate(x);
        let (d, f) = self.kernel.cell(self.t, self.xs[j], x);
        (self.fd[j] + d, self.ft[j] + f)
    }

    /// `F_{d,t}(x)`, with `x` clamped into `[0, cap]`.
    pub fn f_dt(&self, x: f64) -> Clamped {
        let clamped = x > self.cap || x < 0.0;
        Clamped {
            value: self.eval(x.clamp(0.0, self.cap)).0,
            clamped,
        }
    }

    /// `F_t(x)`, with `x` clamped into `[0, cap]`.
    pub fn f_t(&self, x: f64) -> Clamped {
        let clamped = x > self.cap || x < 0.0;
        Clamped {
            value: self.eval(x.clamp(0.0, self.cap)).1,
            clamped,
        }
    }

    /// `F_{d,t}^{-1}(y) = inf{x ≥ 0 : F_{d,t}(x) ≥ y}`, capped at `cap`.
    pub fn f_dt_inverse(&self, y: f64) -> Result<f64> {
        Ok(self.inverse_point(y)?.x)
    }

    /// Generalized inverse together with `F_t` at the inverse.
    pub fn inverse_point(&self, y: f64) -> Result<InversePoint> {
        if !(y >= 0.0) {
            return Err(Error::Domain(format!("kernel inverse needs y >= 0, got {y}")));
        }
        if y == 0.0 || self.xs.len() < 2 {
            return Ok(InversePoint { x: 0.0, f_t: 0.0 });
        }
        let n = self.n_f();
        if y >= n {
            return Ok(InversePoint {
                x: self.cap,
                f_t: *self.ft.last().unwrap(),
            });
        }
        // First table index with F_{d,t} ≥ y; it is ≥ 1 since fd[0] = 0 < y.
        let k = self.fd.partition_point(|v| *v < y);
        let j = k - 1;
        let (x_lo, x_hi) = (self.xs[j], self.xs[k]);
        let base_d = self.fd[j];
        let m_lo = self.kernel.moments_at(x_lo);
        let target = y - base_d;
        let mut lo = x_lo;
        let mut hi = x_hi;
        let span = self.fd[k] - base_d;
        let mut x = if span > 0.0 {
            x_lo + (x_hi - x_lo) * (target / span)
        } else {
            x_hi
        };
        // Upper bracket, and the iterate closest to the root: Newton from
        // below can stall at rounding level without ever moving the bracket.
        let mut best = (x_hi, self.ft[k]);
        let mut closest = (f64::INFINITY, x_hi, self.ft[k]);
        let tol = 1e-15 * y.max(1e-300);
        let mut converged = false;
        for _ in 0..100 {
            let mx = self.kernel.patience.moments(x);
            let (d, f) = self.kernel.cell_with(self.t, x_lo, x, m_lo, mx);
            let resid = d - target;
            if resid.abs() < closest.0 {
                closest = (resid.abs(), x, self.ft[j] + f);
            }
            if resid >= 0.0 {
                hi = x;
                best = (x, self.ft[j] + f);
            } else {
                lo = x;
            }
            if resid.abs() <= tol {
                best = (x, self.ft[j] + f);
                converged = true;
                break;
            }
            if hi - lo <= 2.0 * f64::EPSILON * hi.max(1.0) {
                converged = true;
                break;
            }
            let slope = mx.ccdf * self.kernel.rate.rate(self.t - x);
            let newton = if slope > 0.0 { x - resid / slope } else { f64::NAN };
            x = if newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
        }
        if !converged && closest.0 <= 1e-12 * y.max(1e-300) {
            best = (closest.1, closest.2);
        }
        Ok(InversePoint {
            x: best.0,
            f_t: best.1,
        })
    }

    /// `H_t(y)`.
    pub fn h(&self, y: f64) -> Result<f64> {
        let p = self.inverse_point(y)?;
        Ok(self.lambda - p.f_t)
    }
}

/// Constant-rate specialization `λ₀·F^c(F_d^{-1}(y/λ₀))`, zero for
/// `y ≥ λ₀·N_F` where `F_d(x) = ∫₀ˣ F^c` and `N_F` is the mean of `F`.
pub fn constant_rate_h(y: f64, lambda0: f64, patience: &Distribution) -> Result<f64> {
    if !(lambda0 > 0.0) {
        return Err(Error::Domain(format!("constant rate must be positive, got {lambda0}")));
    }
    if !(y >= 0.0) {
        return Err(Error::Domain(format!("constant-rate H needs y >= 0, got {y}")));
    }
    let u = y / lambda0;
    if u >= patience.mean() {
        return Ok(0.0);
    }
    Ok(lambda0 * patience.complement(integrated_ccdf_inverse(patience, u)))
}

/// Inverse of `x ↦ ∫₀ˣ F^c` on `[0, N_F)`.
pub fn integrated_ccdf_inverse(patience: &Distribution, u: f64) -> f64 {
    if u <= 0.0 {
        return 0.0;
    }
    let mut lo = 0.0;
    let mut hi = if patience.support_end().is_finite() {
        patience.support_end()
    } else {
        let mut hi = patience.mean().max(1e-12);
        while patience.moments(hi).integrated_ccdf < u {
            hi *= 2.0;
        }
        hi
    };
    let mut x = u.min(hi);
    let mut best = hi;
    for _ in 0..200 {
        let m = patience.moments(x);
        let resid = m.integrated_ccdf - u;
        if resid >= 0.0 {
            hi = x;
            best = x;
        } else {
            lo = x;
        }
        if resid.abs() <= 1e-15 * u || hi - lo <= 2.0 * f64::EPSILON * hi.max(1.0) {
            if resid.abs() <= 1e-15 * u {
                best = x;
            }
            break;
        }
        let newton = if m.ccdf > 0.0 { x - resid / m.ccdf } else { f64::NAN };
        x = if newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    best
}
