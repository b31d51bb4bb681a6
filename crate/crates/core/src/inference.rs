//! EM fitting: E-step for responsibilities and anomaly posteriors, closed-form
//! M-steps, bisection for the two disappearance rates, and restarts.
//!
//! All pair sums are evaluated row by row (in parallel) and then reduced in
//! row order, so results do not depend on the number of worker threads.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AnomalyPosterior, ModelParams, PairData, RATE_EPS};
use crate::network::{hat_transform, HatView, TemporalNetwork};
use crate::numeric::bisect_decreasing;
use crate::rng;

/// Denominators below this leave the corresponding entry unchanged.
const DENOM_EPS: f64 = 1e-12;
const MU_CLAMP: f64 = 1e-10;
/// Floor for the anomaly rates `π` and `ℓ`, which must stay strictly positive.
const RATE_FLOOR: f64 = 1e-12;
const RATE_LO: f64 = 1e-6;
const RATE_HI: f64 = 1.0 - 1e-6;
// The equation is closed form, so bisect down to floating-point resolution.
const RATE_FTOL: f64 = 0.0;
const RATE_XTOL: f64 = 0.0;
const OFF_DIAGONAL_INIT: f64 = 0.01;

/// Parameters held at given values during a fit.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FixedParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pi: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ell: Option<f64>,
}

impl FixedParams {
    /// The community-only baseline: no anomalies, vanishing anomalous rate.
    pub fn baseline() -> Self {
        Self {
            mu: Some(0.0),
            ell: Some(1e-12),
            ..Self::default()
        }
    }

    fn apply(&self, p: &mut ModelParams) {
        if let Some(x) = self.beta {
            p.beta = x;
        }
        if let Some(x) = self.phi {
            p.phi = x;
        }
        if let Some(x) = self.mu {
            p.mu = x;
        }
        if let Some(x) = self.pi {
            p.pi = x;
        }
        if let Some(x) = self.ell {
            p.ell = x;
        }
    }

    fn validate(&self) -> Result<()> {
        for (name, v) in [("beta", self.beta), ("phi", self.phi)] {
            if let Some(x) = v {
                if !(x > 0.0 && x < 1.0) {
                    return Err(Error::Config(format!(
                        "fixed {name} must lie in (0, 1), got {x}"
                    )));
                }
            }
        }
        if let Some(x) = self.mu {
            if !(0.0..=1.0).contains(&x) {
                return Err(Error::Config(format!(
                    "fixed mu must lie in [0, 1], got {x}"
                )));
            }
        }
        for (name, v) in [("pi", self.pi), ("ell", self.ell)] {
            if let Some(x) = v {
                if !(x > 0.0 && x.is_finite()) {
                    return Err(Error::Config(format!(
                        "fixed {name} must be positive, got {x}"
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmConfig {
    pub n_communities: usize,
    pub max_iter: usize,
    pub check_every: usize,
    /// Absolute objective improvement counted as "no progress".
    pub tol: f64,
    /// Consecutive sub-`tol` checks before stopping.
    pub patience: usize,
    pub n_restarts: usize,
    pub seed: u64,
    #[serde(default)]
    pub fixed: FixedParams,
    /// Ordered pairs `(i, j)` excluded from every sum.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<Vec<(usize, usize)>>,
}

impl EmConfig {
    pub fn new(n_communities: usize) -> Self {
        Self {
            n_communities,
            max_iter: 500,
            check_every: 1,
            tol: 1e-3,
            patience: 3,
            n_restarts: 5,
            seed: 42,
            fixed: FixedParams::default(),
            mask: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_communities == 0 {
            return Err(Error::Config("K must be at least 1".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Config(format!(
                "tol must be positive, got {}",
                self.tol
            )));
        }
        if self.max_iter == 0 || self.check_every == 0 || self.n_restarts == 0 || self.patience == 0
        {
            return Err(Error::Config(
                "max_iter, check_every, patience and n_restarts must all be at least 1".into(),
            ));
        }
        self.fixed.validate()
    }

    fn dense_mask(&self, n: usize) -> Result<Option<Vec<bool>>> {
        let Some(pairs) = &self.mask else {
            return Ok(None);
        };
        let mut m = vec![false; n * n];
        for &(i, j) in pairs {
            if i >= n || j >= n {
                return Err(Error::Index {
                    what: "mask pair",
                    index: i.max(j),
                    limit: n,
                });
            }
            m[i * n + j] = true;
        }
        Ok(Some(m))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: ModelParams,
    pub q: AnomalyPosterior,
    /// Objective after every checked iteration of the selected restart, ending
    /// with the value at the returned `(params, q)`.
    pub objective_trace: Vec<f64>,
    pub converged: bool,
    pub best_restart: usize,
    pub seed_used: u64,
    /// Final objective of every restart, in restart order.
    pub restart_objectives: Vec<f64>,
    pub iterations: usize,
}

impl FitResult {
    pub fn final_objective(&self) -> f64 {
        *self.objective_trace.last().expect("trace is never empty")
    }
}

/// Which disappearance rate [`solve_rate`] targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RateKind {
    Beta,
    Phi,
}

/// Updated `(μ, π, ℓ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scalars {
    pub mu: f64,
    pub pi: f64,
    pub ell: f64,
}

/// The stationarity condition for a disappearance rate:
/// `f(x) = -x (rate_mass + persist / (1 - x)) + events`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateEquation {
    /// `Σ W r(t)` over `t ≥ 1`.
    pub rate_mass: f64,
    /// `Σ W A(t-1) A(t)`.
    pub persist: f64,
    /// `Σ W [Â(t) + A(t-1)(1 - A(t))]`.
    pub events: f64,
    pub total_weight: f64,
}

impl RateEquation {
    pub fn eval(&self, x: f64) -> f64 {
        -x * (self.rate_mass + self.persist / (1.0 - x)) + self.events
    }

    pub fn solve(&self) -> Result<f64> {
        if !(self.total_weight > 0.0) {
            return Err(Error::DegenerateRate("all weights are zero".into()));
        }
        let out = bisect_decreasing(|x| self.eval(x), RATE_LO, RATE_HI, RATE_FTOL, RATE_XTOL);
        Ok(out.root)
    }
}

// ---------------------------------------------------------------------------
// Public single-step operations
// ---------------------------------------------------------------------------

/// Responsibilities `ρ_ijkq(t) = u_ik v_jq w_kq(t) / λ_ij(t)`, `K x K` row-major.
pub fn e_step_rho(params: &ModelParams, i: usize, j: usize, t: usize) -> Result<Vec<f64>> {
    let lambda = crate::model::lambda_rate(params, i, j, t)?;
    if !(lambda > 0.0) {
        return Err(Error::DegenerateRate(format!("lambda_{i}{j}({t}) is zero")));
    }
    let k = params.k();
    let (u, v, w) = (params.u_row(i), params.v_row(j), params.w_at(t));
    let mut rho = vec![0.0; k * k];
    for a in 0..k {
        for b in 0..k {
            rho[a * k + b] = u[a] * v[b] * w[a * k + b];
        }
    }
    let total: f64 = rho.iter().sum();
    rho.iter_mut().for_each(|x| *x /= total);
    Ok(rho)
}

/// Anomaly posterior for every unordered pair under `params`.
pub fn e_step_q(params: &ModelParams, net: &TemporalNetwork) -> Result<AnomalyPosterior> {
    params.validate()?;
    params.check_matches(net)?;
    let data = PairData::new(net, &hat_transform(net), None)?;
    data.e_step(params)
}

/// Updated `(u, v)`: `u` first, then `v` using the new `u`.
pub fn m_step_memberships(
    params: &ModelParams,
    net: &TemporalNetwork,
    hat: &HatView,
    q: &AnomalyPosterior,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let (data, weights) = prepare(params, net, hat, q)?;
    let mut p = params.clone();
    update_u(&data, &weights, &mut p);
    update_v(&data, &weights, &mut p);
    Ok((p.u, p.v))
}

/// Updated `w(t)` for every `t`.
pub fn m_step_affinity(
    params: &ModelParams,
    net: &TemporalNetwork,
    hat: &HatView,
    q: &AnomalyPosterior,
) -> Result<Vec<f64>> {
    let (data, weights) = prepare(params, net, hat, q)?;
    let mut p = params.clone();
    update_w(&data, &weights, &mut p);
    Ok(p.w)
}

/// Updated `(μ, π, ℓ)`; `ℓ` uses `params.phi`.
pub fn m_step_scalars(
    params: &ModelParams,
    net: &TemporalNetwork,
    hat: &HatView,
    q: &AnomalyPosterior,
) -> Result<Scalars> {
    let (data, weights) = prepare(params, net, hat, q)?;
    let mut p = params.clone();
    update_mu_pi(&data, &weights, q, &mut p);
    update_ell(&data, &weights, &mut p);
    Ok(Scalars {
        mu: p.mu,
        pi: p.pi,
        ell: p.ell,
    })
}

/// The stationarity equation [`solve_rate`] bisects.
pub fn rate_equation(
    kind: RateKind,
    params: &ModelParams,
    net: &TemporalNetwork,
    hat: &HatView,
    q: &AnomalyPosterior,
) -> Result<RateEquation> {
    if net.n_steps() == 0 {
        return Err(Error::Config(
            "rate equations need at least one transition".into(),
        ));
    }
    let (data, weights) = prepare(params, net, hat, q)?;
    Ok(build_rate_equation(kind, &data, &weights, params))
}

/// Root of the stationarity equation for `β` or `φ` on `[1e-6, 1 - 1e-6]`.
pub fn solve_rate(
    kind: RateKind,
    params: &ModelParams,
    net: &TemporalNetwork,
    hat: &HatView,
    q: &AnomalyPosterior,
) -> Result<f64> {
    rate_equation(kind, params, net, hat, q)?.solve()
}

fn prepare(
    params: &ModelParams,
    net: &TemporalNetwork,
    hat: &HatView,
    q: &AnomalyPosterior,
) -> Result<(PairData, Weights)> {
    params.validate()?;
    params.check_matches(net)?;
    q.validate()?;
    if q.n_nodes != net.n_nodes() {
        return Err(Error::Shape("Q and network disagree on N".into()));
    }
    let data = PairData::new(net, hat, None)?;
    let weights = Weights::new(&data, q);
    Ok((data, weights))
}

// ---------------------------------------------------------------------------
// Update kernels
// ---------------------------------------------------------------------------

/// `G = keep (1 - Q)` and `H = keep Q` per ordered pair.
struct Weights {
    g: Vec<f64>,
    h: Vec<f64>,
}

impl Weights {
    fn new(data: &PairData, q: &AnomalyPosterior) -> Self {
        let g = data
            .keep
            .iter()
            .zip(&q.q)
            .map(|(k, q)| k * (1.0 - q))
            .collect();
        let h = data.keep.iter().zip(&q.q).map(|(k, q)| k * q).collect();
        Self { g, h }
    }
}

/// `Σ_t β̂(t) w(t)`.
fn w_tilde(p: &ModelParams) -> Vec<f64> {
    let kk = p.k() * p.k();
    let mut s = p.w_at(0).to_vec();
    for t in 1..=p.n_steps {
        for (a, b) in s.iter_mut().zip(p.w_at(t)) {
            *a += p.beta * b;
        }
    }
    debug_assert_eq!(s.len(), kk);
    s
}

/// Row `i` of `M X` where `M` is `N x N` and `X` is `N x K`.
fn mat_rows_times(m: &[f64], x: &[f64], n: usize, k: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * k];
    out.par_chunks_mut(k).enumerate().for_each(|(i, row)| {
        for (j, &mij) in m[i * n..(i + 1) * n].iter().enumerate() {
            if mij != 0.0 {
                for (slot, xv) in row.iter_mut().zip(&x[j * k..(j + 1) * k]) {
                    *slot += mij * xv;
                }
            }
        }
    });
    out
}

/// Row `i` of `Mᵀ X`.
fn mat_cols_times(m: &[f64], x: &[f64], n: usize, k: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * k];
    out.par_chunks_mut(k).enumerate().for_each(|(i, row)| {
        for j in 0..n {
            let mji = m[j * n + i];
            if mji != 0.0 {
                for (slot, xv) in row.iter_mut().zip(&x[j * k..(j + 1) * k]) {
                    *slot += mji * xv;
                }
            }
        }
    });
    out
}

fn update_u(data: &PairData, wts: &Weights, p: &mut ModelParams) {
    let (n, k) = (data.n, p.k());
    let wt = w_tilde(p);
    let gv = mat_rows_times(&wts.g, &p.v, n, k);
    let pr: &ModelParams = p;
    let new_u: Vec<f64> = (0..n)
        .into_par_iter()
        .flat_map_iter(|i| {
            let u = pr.u_row(i);
            let mut num = vec![0.0; k];
            let mut x = vec![0.0; k];
            for ev in data.row_events(i) {
                let j = ev.j as usize;
                let g = wts.g[i * n + j];
                if g == 0.0 {
                    continue;
                }
                let w = pr.w_at(ev.t as usize);
                let v = pr.v_row(j);
                for a in 0..k {
                    x[a] = w[a * k..(a + 1) * k]
                        .iter()
                        .zip(v)
                        .map(|(y, z)| y * z)
                        .sum();
                }
                let lambda: f64 = u.iter().zip(&x).map(|(a, b)| a * b).sum();
                if lambda > 0.0 {
                    for a in 0..k {
                        num[a] += g * x[a] / lambda;
                    }
                }
            }
            let gvi = &gv[i * k..(i + 1) * k];
            (0..k)
                .map(|a| {
                    let den: f64 = gvi
                        .iter()
                        .zip(&wt[a * k..(a + 1) * k])
                        .map(|(g, w)| g * w)
                        .sum();
                    if den >= DENOM_EPS {
                        u[a] * num[a] / den
                    } else {
                        u[a]
                    }
                })
                .collect::<Vec<_>>()
        })
        .collect();
    p.u = new_u;
}

fn update_v(data: &PairData, wts: &Weights, p: &mut ModelParams) {
    let (n, k) = (data.n, p.k());
    let wt = w_tilde(p);
    let gu = mat_cols_times(&wts.g, &p.u, n, k);
    let pr: &ModelParams = p;
    let new_v: Vec<f64> = (0..n)
        .into_par_iter()
        .flat_map_iter(|i| {
            let v = pr.v_row(i);
            let mut num = vec![0.0; k];
            let mut y = vec![0.0; k];
            for ev in data.col_events(i) {
                let j = ev.j as usize; // source node
                let g = wts.g[j * n + i];
                if g == 0.0 {
                    continue;
                }
                let w = pr.w_at(ev.t as usize);
                let u = pr.u_row(j);
                y.iter_mut().for_each(|s| *s = 0.0);
                for (a, &ua) in u.iter().enumerate() {
                    if ua != 0.0 {
                        for (b, slot) in y.iter_mut().enumerate() {
                            *slot += ua * w[a * k + b];
                        }
                    }
                }
                let lambda: f64 = v.iter().zip(&y).map(|(a, b)| a * b).sum();
                if lambda > 0.0 {
                    for b in 0..k {
                        num[b] += g * y[b] / lambda;
                    }
                }
            }
            let gui = &gu[i * k..(i + 1) * k];
            (0..k)
                .map(|b| {
                    let den: f64 = (0..k).map(|a| gui[a] * wt[a * k + b]).sum();
                    if den >= DENOM_EPS {
                        v[b] * num[b] / den
                    } else {
                        v[b]
                    }
                })
                .collect::<Vec<_>>()
        })
        .collect();
    p.v = new_v;
}

/// `Uᵀ G V`, `K x K`.
fn ugv(data: &PairData, g: &[f64], p: &ModelParams) -> Vec<f64> {
    let (n, k) = (data.n, p.k());
    let gv = mat_rows_times(g, &p.v, n, k);
    let mut out = vec![0.0; k * k];
    for i in 0..n {
        let u = p.u_row(i);
        let r = &gv[i * k..(i + 1) * k];
        for a in 0..k {
            if u[a] != 0.0 {
                for b in 0..k {
                    out[a * k + b] += u[a] * r[b];
                }
            }
        }
    }
    out
}

fn update_w(data: &PairData, wts: &Weights, p: &mut ModelParams) {
    let (n, k, t_steps) = (data.n, p.k(), p.n_steps);
    let kk = k * k;
    let den_base = ugv(data, &wts.g, p);
    let pr: &ModelParams = p;
    // Per-row partial numerators, reduced below in row order.
    let partial: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut acc = vec![0.0; (t_steps + 1) * kk];
            let u = pr.u_row(i);
            for ev in data.row_events(i) {
                let j = ev.j as usize;
                let g = wts.g[i * n + j];
                if g == 0.0 {
                    continue;
                }
                let t = ev.t as usize;
                let v = pr.v_row(j);
                let lambda = pr.lambda_fast(i, j, t);
                if lambda > 0.0 {
                    let s = g / lambda;
                    let cell = &mut acc[t * kk..(t + 1) * kk];
                    for a in 0..k {
                        if u[a] != 0.0 {
                            for b in 0..k {
                                cell[a * k + b] += s * u[a] * v[b];
                            }
                        }
                    }
                }
            }
            acc
        })
        .collect();
    let mut num = vec![0.0; (t_steps + 1) * kk];
    for row in &partial {
        for (a, b) in num.iter_mut().zip(row) {
            *a += b;
        }
    }
    for t in 0..=t_steps {
        let bh = HatView::beta_hat(t, p.beta);
        for (c, &base) in den_base.iter().enumerate() {
            let idx = t * kk + c;
            let den = bh * base;
            if den >= DENOM_EPS {
                p.w[idx] *= num[idx] / den;
            }
        }
    }
}

fn update_mu_pi(data: &PairData, wts: &Weights, q: &AnomalyPosterior, p: &mut ModelParams) {
    if data.n_active_pairs > 0 {
        let n = data.n;
        let mut s = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                if data.pair_active[i * n + j] {
                    s += q.q[i * n + j];
                }
            }
        }
        p.mu = (s / data.n_active_pairs as f64).clamp(MU_CLAMP, 1.0 - MU_CLAMP);
    }
    let total: f64 = wts.h.iter().sum();
    if total >= DENOM_EPS {
        let hits: f64 = wts.h.iter().zip(&data.a0).map(|(h, &a)| h * a as f64).sum();
        p.pi = (hits / total).max(RATE_FLOOR);
    }
}

fn update_ell(data: &PairData, wts: &Weights, p: &mut ModelParams) {
    let total: f64 = wts.h.iter().sum();
    if total >= DENOM_EPS && data.t_steps > 0 {
        let hits: f64 = wts
            .h
            .iter()
            .zip(&data.n01)
            .map(|(h, &c)| h * c as f64)
            .sum();
        p.ell = (hits / (data.t_steps as f64 * p.phi * total)).max(RATE_FLOOR);
    }
}

fn build_rate_equation(
    kind: RateKind,
    data: &PairData,
    wts: &Weights,
    p: &ModelParams,
) -> RateEquation {
    let w = match kind {
        RateKind::Beta => &wts.g,
        RateKind::Phi => &wts.h,
    };
    let total_weight: f64 = w.iter().sum();
    let wsum = |c: &[u32]| -> f64 { w.iter().zip(c).map(|(a, &b)| a * b as f64).sum() };
    let (c01, c10, c11) = (wsum(&data.n01), wsum(&data.n10), wsum(&data.n11));
    let rate_mass = match kind {
        RateKind::Beta => {
            let wbar = PairData::w_sum_transitions(p);
            ugv(data, w, p).iter().zip(&wbar).map(|(a, b)| a * b).sum()
        }
        RateKind::Phi => data.t_steps as f64 * p.ell * total_weight,
    };
    RateEquation {
        rate_mass,
        persist: c11,
        events: c01 + c10,
        total_weight,
    }
}

// ---------------------------------------------------------------------------
// Driver
// ---------------------------------------------------------------------------

struct RestartOutcome {
    params: ModelParams,
    q: AnomalyPosterior,
    trace: Vec<f64>,
    converged: bool,
    iterations: usize,
}

/// Random starting point for restart `r`.
pub fn initial_params(net: &TemporalNetwork, config: &EmConfig, restart: usize) -> ModelParams {
    let (n, k, t) = (net.n_nodes(), config.n_communities, net.n_steps());
    let mut rng = rng::stream(config.seed, &[rng::tag::INIT, restart as u64]);
    let mut p = ModelParams::zeros(n, k, t);
    p.u.iter_mut().for_each(|x| *x = rng.random::<f64>());
    p.v.iter_mut().for_each(|x| *x = rng.random::<f64>());
    // Diagonal-heavy start: off-diagonal blocks begin small but free.
    for t in 0..=t {
        for a in 0..k {
            for b in 0..k {
                let scale = if a == b { 1.0 } else { OFF_DIAGONAL_INIT };
                p.w[(t * k + a) * k + b] = scale * rng.random::<f64>();
            }
        }
    }
    p.beta = rng.random_range(0.05..0.95);
    p.phi = rng.random_range(0.05..0.95);
    p.mu = rng.random_range(0.01..0.5);
    p.pi = rng.random_range(0.1..1.0);
    p.ell = rng.random_range(0.1..1.0);
    scale_affinity_to_density(net, &mut p);
    config.fixed.apply(&mut p);
    p
}

/// Rescale `w` by one constant so the mean rate over ordered pairs matches
/// the mean snapshot density. Uniform draws alone put `λ` near `K²/8` per
/// pair, which makes every empty pair look anomalous at the first E-step.
fn scale_affinity_to_density(net: &TemporalNetwork, p: &mut ModelParams) {
    let n = net.n_nodes();
    if n < 2 {
        return;
    }
    let pairs = (n * (n - 1)) as f64;
    let density = net.total_edges() as f64 / (net.n_snapshots() as f64 * pairs);
    let su: Vec<f64> = (0..p.k())
        .map(|a| (0..n).map(|i| p.u_row(i)[a]).sum())
        .collect();
    let sv: Vec<f64> = (0..p.k())
        .map(|b| (0..n).map(|i| p.v_row(i)[b]).sum())
        .collect();
    let mut mean_rate = 0.0;
    for t in 0..=p.n_steps {
        mean_rate += crate::model::bilinear(&su, p.w_at(t), &sv);
    }
    mean_rate /= (p.n_steps + 1) as f64 * n as f64 * n as f64;
    if density > 0.0 && mean_rate > 0.0 {
        let c = density / mean_rate;
        p.w.iter_mut().for_each(|x| *x *= c);
    }
}

/// Fit the model, keeping the restart with the highest final objective.
pub fn fit(net: &TemporalNetwork, config: &EmConfig) -> Result<FitResult> {
    let data = fit_data(net, config)?;
    let mut best: Option<(usize, RestartOutcome)> = None;
    let mut restart_objectives = Vec::with_capacity(config.n_restarts);
    for r in 0..config.n_restarts {
        let init = initial_params(net, config, r);
        let out = run_restart(&data, config, init, r)?;
        let obj = *out.trace.last().expect("non-empty trace");
        restart_objectives.push(obj);
        let better = match &best {
            None => true,
            Some((_, b)) => obj > *b.trace.last().expect("non-empty trace"),
        };
        if better {
            best = Some((r, out));
        }
    }
    let (best_restart, out) = best.expect("at least one restart");
    Ok(FitResult {
        params: out.params,
        q: out.q,
        objective_trace: out.trace,
        converged: out.converged,
        best_restart,
        seed_used: config.seed,
        restart_objectives,
        iterations: out.iterations,
    })
}

/// A single EM run started from `init` instead of a random point.
pub fn fit_from(net: &TemporalNetwork, config: &EmConfig, init: &ModelParams) -> Result<FitResult> {
    let data = fit_data(net, config)?;
    init.check_matches(net)?;
    if init.n_communities != config.n_communities {
        return Err(Error::Config(format!(
            "starting point has K = {}, config asks for K = {}",
            init.n_communities, config.n_communities
        )));
    }
    let mut p = init.clone();
    config.fixed.apply(&mut p);
    p.validate()?;
    let out = run_restart(&data, config, p, 0)?;
    let obj = *out.trace.last().expect("non-empty trace");
    Ok(FitResult {
        params: out.params,
        q: out.q,
        objective_trace: out.trace,
        converged: out.converged,
        best_restart: 0,
        seed_used: config.seed,
        restart_objectives: vec![obj],
        iterations: out.iterations,
    })
}

fn fit_data(net: &TemporalNetwork, config: &EmConfig) -> Result<PairData> {
    config.validate()?;
    let n = net.n_nodes();
    if config.n_communities > n {
        return Err(Error::Config(format!(
            "K = {} exceeds N = {n}",
            config.n_communities
        )));
    }
    let mask = config.dense_mask(n)?;
    PairData::new(net, &hat_transform(net), mask.as_deref())
}

fn run_restart(
    data: &PairData,
    config: &EmConfig,
    mut p: ModelParams,
    restart: usize,
) -> Result<RestartOutcome> {
    let fixed = &config.fixed;
    let mut trace = Vec::new();
    let mut stalls = 0;
    let mut converged = false;
    let mut iterations = 0;
    let numerical = |what: &str| Error::Numerical(format!("restart {restart}: {what}"));

    // The objective after sweep `s` and the E-step of sweep `s + 1` share the
    // same per-pair logs, so each sweep computes them once.
    let mut pending: Option<AnomalyPosterior> = None;
    let record = |obj: f64, trace: &mut Vec<f64>, stalls: &mut usize| -> Result<bool> {
        if !obj.is_finite() {
            return Err(numerical(&format!(
                "objective became {obj} at iteration {}",
                trace.len() + 1
            )));
        }
        if let Some(&prev) = trace.last() {
            if obj - prev < config.tol {
                *stalls += 1;
            } else {
                *stalls = 0;
            }
        }
        trace.push(obj);
        Ok(*stalls >= config.patience)
    };

    for iter in 0..config.max_iter {
        let (log_a, log_r) = data.pair_logs(&p);
        if let Some(q_prev) = pending.take() {
            let obj = data.objective_from_logs(p.mu, &q_prev, &log_a, &log_r);
            if record(obj, &mut trace, &mut stalls)? {
                converged = true;
                break;
            }
        }
        iterations = iter + 1;
        let q = data.e_step_from_logs(p.mu, &log_a, &log_r)?;
        let wts = Weights::new(data, &q);

        update_u(data, &wts, &mut p);
        update_v(data, &wts, &mut p);
        update_w(data, &wts, &mut p);
        let (mu0, pi0) = (p.mu, p.pi);
        update_mu_pi(data, &wts, &q, &mut p);
        if fixed.mu.is_some() {
            p.mu = mu0;
        }
        if fixed.pi.is_some() {
            p.pi = pi0;
        }
        if fixed.phi.is_none() && data.t_steps > 0 {
            if let Ok(x) = build_rate_equation(RateKind::Phi, data, &wts, &p).solve() {
                p.phi = x.clamp(RATE_EPS, 1.0 - RATE_EPS);
            }
        }
        if fixed.ell.is_none() {
            update_ell(data, &wts, &mut p);
        }
        if fixed.beta.is_none() && data.t_steps > 0 {
            if let Ok(x) = build_rate_equation(RateKind::Beta, data, &wts, &p).solve() {
                p.beta = x.clamp(RATE_EPS, 1.0 - RATE_EPS);
            }
        }

        if iterations % config.check_every == 0 {
            pending = Some(q);
        }
    }

    let (log_a, log_r) = data.pair_logs(&p);
    if let Some(q_prev) = pending.take() {
        let obj = data.objective_from_logs(p.mu, &q_prev, &log_a, &log_r);
        converged |= record(obj, &mut trace, &mut stalls)?;
    }
    let q = data.e_step_from_logs(p.mu, &log_a, &log_r)?;
    let obj = data.objective_from_logs(p.mu, &q, &log_a, &log_r);
    if !obj.is_finite() {
        return Err(numerical(&format!("final objective is {obj}")));
    }
    trace.push(obj);
    Ok(RestartOutcome {
        params: p,
        q,
        trace,
        converged,
        iterations,
    })
}
