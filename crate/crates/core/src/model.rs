//! Closed-form model quantities: rates, transition probabilities, trajectory
//! likelihoods and the variational objective.
//!
//! Every likelihood is accumulated in log space. Transition probabilities are
//! the unnormalised ones the M-step equations are derived from: each row sums
//! to `e^{-dr}(1 + dr)` (from 0) or `e^{-dr}` (from 1), not to one.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{hat_transform, HatView, TemporalNetwork};
use crate::numeric::{bernoulli_entropy, log_poisson_binary, xlogy};

/// Rates `beta` and `phi` are kept inside `(RATE_EPS, 1 - RATE_EPS)`.
pub const RATE_EPS: f64 = 1e-8;

/// Model parameters. Arrays are flat and row-major:
/// `u[i * K + k]`, `v[i * K + k]`, `w[(t * K + k) * K + q]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub n_nodes: usize,
    pub n_communities: usize,
    pub n_steps: usize,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub w: Vec<f64>,
    pub beta: f64,
    pub phi: f64,
    pub mu: f64,
    pub pi: f64,
    pub ell: f64,
}

impl ModelParams {
    /// All-zero memberships and affinity with the given scalars.
    pub fn zeros(n_nodes: usize, n_communities: usize, n_steps: usize) -> Self {
        Self {
            n_nodes,
            n_communities,
            n_steps,
            u: vec![0.0; n_nodes * n_communities],
            v: vec![0.0; n_nodes * n_communities],
            w: vec![0.0; (n_steps + 1) * n_communities * n_communities],
            beta: 0.5,
            phi: 0.5,
            mu: 0.0,
            pi: 1.0,
            ell: 1.0,
        }
    }

    #[inline]
    pub fn k(&self) -> usize {
        self.n_communities
    }

    #[inline]
    pub fn u_row(&self, i: usize) -> &[f64] {
        let k = self.n_communities;
        &self.u[i * k..(i + 1) * k]
    }

    #[inline]
    pub fn v_row(&self, i: usize) -> &[f64] {
        let k = self.n_communities;
        &self.v[i * k..(i + 1) * k]
    }

    /// Affinity matrix `w(t)`, `K x K` row-major.
    #[inline]
    pub fn w_at(&self, t: usize) -> &[f64] {
        let kk = self.n_communities * self.n_communities;
        &self.w[t * kk..(t + 1) * kk]
    }

    /// `γ = -ln(1 - β)`.
    pub fn gamma(&self) -> f64 {
        -(1.0 - self.beta).ln()
    }

    /// `ζ = -ln(1 - φ)`.
    pub fn zeta(&self) -> f64 {
        -(1.0 - self.phi).ln()
    }

    /// `λ_ij(t)` without bounds checks.
    #[inline]
    pub(crate) fn lambda_fast(&self, i: usize, j: usize, t: usize) -> f64 {
        bilinear(self.u_row(i), self.w_at(t), self.v_row(j))
    }

    pub fn validate(&self) -> Result<()> {
        let (n, k, t) = (self.n_nodes, self.n_communities, self.n_steps);
        if k == 0 {
            return Err(Error::Config(
                "number of communities must be at least 1".into(),
            ));
        }
        if self.u.len() != n * k || self.v.len() != n * k || self.w.len() != (t + 1) * k * k {
            return Err(Error::Shape(format!(
                "parameter arrays do not match (N={n}, K={k}, T={t}): |u|={}, |v|={}, |w|={}",
                self.u.len(),
                self.v.len(),
                self.w.len()
            )));
        }
        let arrays = self.u.iter().chain(&self.v).chain(&self.w);
        if arrays.clone().any(|x| !x.is_finite()) {
            return Err(Error::Numerical(
                "non-finite membership or affinity entry".into(),
            ));
        }
        if arrays.clone().any(|&x| x < 0.0) {
            return Err(Error::Config(
                "membership and affinity entries must be non-negative".into(),
            ));
        }
        for (name, x) in [("beta", self.beta), ("phi", self.phi)] {
            if !x.is_finite() {
                return Err(Error::Numerical(format!("{name} is not finite")));
            }
            if !(x > 0.0 && x < 1.0) {
                return Err(Error::Config(format!("{name} must lie in (0, 1), got {x}")));
            }
        }
        if !(0.0..=1.0).contains(&self.mu) {
            return Err(Error::Config(format!(
                "mu must lie in [0, 1], got {}",
                self.mu
            )));
        }
        for (name, x) in [("pi", self.pi), ("ell", self.ell)] {
            if !x.is_finite() {
                return Err(Error::Numerical(format!("{name} is not finite")));
            }
            if !(x > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {x}")));
            }
        }
        Ok(())
    }

    pub(crate) fn check_matches(&self, net: &TemporalNetwork) -> Result<()> {
        if self.n_nodes != net.n_nodes() || self.n_steps != net.n_steps() {
            return Err(Error::Shape(format!(
                "parameters are for N={}, T={} but the network has N={}, T={}",
                self.n_nodes,
                self.n_steps,
                net.n_nodes(),
                net.n_steps()
            )));
        }
        Ok(())
    }
}

/// `Σ_kq a_k m_kq b_q`.
#[inline]
pub(crate) fn bilinear(a: &[f64], m: &[f64], b: &[f64]) -> f64 {
    let k = a.len();
    let mut s = 0.0;
    for (x, row) in a.iter().zip(m.chunks_exact(k)) {
        if *x == 0.0 {
            continue;
        }
        let mut r = 0.0;
        for (y, z) in row.iter().zip(b) {
            r += y * z;
        }
        s += x * r;
    }
    s
}

/// Posterior anomaly scores `Q_ij = E[Z_ij]`: symmetric, zero diagonal, in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnomalyPosterior {
    pub n_nodes: usize,
    /// Dense `N x N`, row-major.
    pub q: Vec<f64>,
}

impl AnomalyPosterior {
    pub fn zeros(n_nodes: usize) -> Self {
        Self {
            n_nodes,
            q: vec![0.0; n_nodes * n_nodes],
        }
    }

    /// Same value on every off-diagonal entry.
    pub fn constant(n_nodes: usize, value: f64) -> Self {
        let mut out = Self::zeros(n_nodes);
        for i in 0..n_nodes {
            for j in 0..n_nodes {
                if i != j {
                    out.q[i * n_nodes + j] = value;
                }
            }
        }
        out
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.q[i * self.n_nodes + j]
    }

    /// Set `Q_ij = Q_ji = value`.
    pub fn set_pair(&mut self, i: usize, j: usize, value: f64) {
        let n = self.n_nodes;
        self.q[i * n + j] = value;
        self.q[j * n + i] = value;
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_nodes;
        if self.q.len() != n * n {
            return Err(Error::Shape(format!(
                "Q has {} entries, expected {}",
                self.q.len(),
                n * n
            )));
        }
        for i in 0..n {
            if self.q[i * n + i] != 0.0 {
                return Err(Error::Input(format!("Q has non-zero diagonal at {i}")));
            }
            for j in (i + 1)..n {
                let (a, b) = (self.q[i * n + j], self.q[j * n + i]);
                if a != b {
                    return Err(Error::Input(format!("Q is not symmetric at ({i}, {j})")));
                }
                if !(0.0..=1.0).contains(&a) {
                    return Err(Error::Input(format!("Q[{i}][{j}] = {a} outside [0, 1]")));
                }
            }
        }
        Ok(())
    }
}

/// Edge type selecting which rate pair drives the transitions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeKind {
    Regular,
    Anomalous,
}

/// `λ_ij(t) = Σ_kq u_ik v_jq w_kq(t)`.
pub fn lambda_rate(params: &ModelParams, i: usize, j: usize, t: usize) -> Result<f64> {
    for (what, idx, limit) in [
        ("i", i, params.n_nodes),
        ("j", j, params.n_nodes),
        ("t", t, params.n_steps + 1),
    ] {
        if idx >= limit {
            return Err(Error::Index {
                what,
                index: idx,
                limit,
            });
        }
    }
    Ok(params.lambda_fast(i, j, t))
}

/// Log transition probability between consecutive states of one directed pair.
///
/// `rate` is `λ_ij(t)` (regular) or `ℓ` (anomalous); `disappear` is `β` or `φ`.
/// A `0 -> 1` transition at zero rate yields `-inf`.
pub fn log_transition(kind: EdgeKind, a_prev: u8, a_curr: u8, rate: f64, disappear: f64) -> f64 {
    let _ = kind; // both kinds share the functional form
    let dr = disappear * rate;
    match (a_prev, a_curr) {
        (0, 0) => -dr,
        (0, _) => {
            if dr > 0.0 {
                dr.ln() - dr
            } else {
                f64::NEG_INFINITY
            }
        }
        (_, 0) => disappear.ln() - dr,
        _ => (1.0 - disappear).ln() - dr,
    }
}

/// `ln F_r` or `ln F_a` for the directed pair `(i, j)`: the summed log
/// transition probabilities over `t = 1..=T`.
pub fn log_f(
    kind: EdgeKind,
    params: &ModelParams,
    net: &TemporalNetwork,
    i: usize,
    j: usize,
) -> Result<f64> {
    params.check_matches(net)?;
    for (what, idx) in [("i", i), ("j", j)] {
        if idx >= net.n_nodes() {
            return Err(Error::Index {
                what,
                index: idx,
                limit: net.n_nodes(),
            });
        }
    }
    let mut total = 0.0;
    for t in 1..=net.n_steps() {
        let (prev, curr) = (net.get(t - 1, i, j), net.get(t, i, j));
        total += match kind {
            EdgeKind::Regular => {
                log_transition(kind, prev, curr, params.lambda_fast(i, j, t), params.beta)
            }
            EdgeKind::Anomalous => log_transition(kind, prev, curr, params.ell, params.phi),
        };
    }
    Ok(total)
}

/// The variational objective evaluated at `(params, q)`.
///
/// Prior and entropy terms run over unordered pairs (one Bernoulli label per
/// pair); the likelihood terms run over ordered pairs.
pub fn log_posterior(
    params: &ModelParams,
    q: &AnomalyPosterior,
    net: &TemporalNetwork,
) -> Result<f64> {
    params.validate()?;
    params.check_matches(net)?;
    q.validate()?;
    if q.n_nodes != net.n_nodes() {
        return Err(Error::Shape("Q and network disagree on N".into()));
    }
    let hat = hat_transform(net);
    let data = PairData::new(net, &hat, None)?;
    Ok(data.objective(params, q))
}

// ---------------------------------------------------------------------------
// Sufficient statistics
// ---------------------------------------------------------------------------

/// A newly appeared edge `Â_ij(t) = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct HatEvent {
    pub j: u32,
    pub t: u32,
}

/// Per-pair summaries of a network that the objective and EM updates need.
///
/// Transition counts over `t = 1..=T` and the list of `Â = 1` events are
/// enough to evaluate every likelihood term; dense `N x N` work only enters
/// through rate matrices of the form `U M Vᵀ`.
#[derive(Debug, Clone)]
pub(crate) struct PairData {
    pub n: usize,
    pub t_steps: usize,
    pub a0: Vec<u8>,
    pub n01: Vec<u32>,
    pub n10: Vec<u32>,
    pub n11: Vec<u32>,
    /// Events grouped by source row: `events[row_start[i]..row_start[i+1]]`, sorted by `(j, t)`.
    pub events: Vec<HatEvent>,
    pub row_start: Vec<usize>,
    /// The same events grouped by target column; here `j` holds the source node.
    pub events_in: Vec<HatEvent>,
    pub col_start: Vec<usize>,
    /// 1.0 for ordered pairs that enter the sums, 0.0 for the diagonal and masked pairs.
    pub keep: Vec<f64>,
    /// Unordered pair `i < j` has at least one kept direction.
    pub pair_active: Vec<bool>,
    pub n_active_pairs: usize,
}

impl PairData {
    pub fn new(net: &TemporalNetwork, hat: &HatView, mask: Option<&[bool]>) -> Result<Self> {
        let n = net.n_nodes();
        let t_steps = net.n_steps();
        if hat.n_nodes() != n || hat.n_steps() != t_steps {
            return Err(Error::Shape("hat view does not match the network".into()));
        }
        if let Some(m) = mask {
            if m.len() != n * n {
                return Err(Error::Shape(format!(
                    "mask has {} entries, expected {}",
                    m.len(),
                    n * n
                )));
            }
        }
        let nn = n * n;
        let a0 = net.snapshot(0).to_vec();
        let (mut n01, mut n10, mut n11) = (vec![0u32; nn], vec![0u32; nn], vec![0u32; nn]);
        for t in 1..=t_steps {
            let prev = net.snapshot(t - 1);
            let cur = net.snapshot(t);
            for o in 0..nn {
                match (prev[o], cur[o]) {
                    (0, 1) => n01[o] += 1,
                    (1, 0) => n10[o] += 1,
                    (1, 1) => n11[o] += 1,
                    _ => {}
                }
            }
        }
        let mut events = Vec::new();
        let mut row_start = Vec::with_capacity(n + 1);
        for i in 0..n {
            row_start.push(events.len());
            for j in 0..n {
                for t in 0..=t_steps {
                    if hat.get(t, i, j) == 1 {
                        events.push(HatEvent {
                            j: j as u32,
                            t: t as u32,
                        });
                    }
                }
            }
        }
        row_start.push(events.len());
        let mut events_in = Vec::with_capacity(events.len());
        let mut col_start = Vec::with_capacity(n + 1);
        for j in 0..n {
            col_start.push(events_in.len());
            for i in 0..n {
                for t in 0..=t_steps {
                    if hat.get(t, i, j) == 1 {
                        events_in.push(HatEvent {
                            j: i as u32,
                            t: t as u32,
                        });
                    }
                }
            }
        }
        col_start.push(events_in.len());
        let mut keep = vec![1.0; nn];
        for i in 0..n {
            keep[i * n + i] = 0.0;
        }
        if let Some(m) = mask {
            for (k, &masked) in keep.iter_mut().zip(m) {
                if masked {
                    *k = 0.0;
                }
            }
        }
        let mut pair_active = vec![false; nn];
        let mut n_active_pairs = 0;
        for i in 0..n {
            for j in (i + 1)..n {
                if keep[i * n + j] > 0.0 || keep[j * n + i] > 0.0 {
                    pair_active[i * n + j] = true;
                    n_active_pairs += 1;
                }
            }
        }
        Ok(Self {
            n,
            t_steps,
            a0,
            n01,
            n10,
            n11,
            events,
            row_start,
            events_in,
            col_start,
            keep,
            pair_active,
            n_active_pairs,
        })
    }

    #[inline]
    pub fn row_events(&self, i: usize) -> &[HatEvent] {
        &self.events[self.row_start[i]..self.row_start[i + 1]]
    }

    /// Events whose target is `j`, with the source stored in `HatEvent::j`.
    #[inline]
    pub fn col_events(&self, j: usize) -> &[HatEvent] {
        &self.events_in[self.col_start[j]..self.col_start[j + 1]]
    }

    /// Dense `U M Vᵀ` for a `K x K` matrix `m`.
    pub fn rate_matrix(&self, params: &ModelParams, m: &[f64]) -> Vec<f64> {
        let n = self.n;
        let k = params.k();
        let mut out = vec![0.0; n * n];
        out.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
            // row_i = (u_i M) Vᵀ
            let mut um = vec![0.0; k];
            for (a, &x) in params.u_row(i).iter().enumerate() {
                if x != 0.0 {
                    for (q, slot) in um.iter_mut().enumerate() {
                        *slot += x * m[a * k + q];
                    }
                }
            }
            for (j, slot) in row.iter_mut().enumerate() {
                let vj = params.v_row(j);
                let mut s = 0.0;
                for (a, b) in um.iter().zip(vj) {
                    s += a * b;
                }
                *slot = s;
            }
        });
        out
    }

    /// `Σ_{t=1..T} w(t)`.
    pub fn w_sum_transitions(params: &ModelParams) -> Vec<f64> {
        let kk = params.k() * params.k();
        let mut s = vec![0.0; kk];
        for t in 1..=params.n_steps {
            for (a, b) in s.iter_mut().zip(params.w_at(t)) {
                *a += b;
            }
        }
        s
    }

    /// Per ordered pair: `(ln[Pois(A0; π) F_a], ln[Pois(A0; λ(0)) F_r])`.
    pub fn pair_logs(&self, params: &ModelParams) -> (Vec<f64>, Vec<f64>) {
        let n = self.n;
        let t_f = self.t_steps as f64;
        let lambda0 = self.rate_matrix(params, params.w_at(0));
        let lambda_sum = self.rate_matrix(params, &Self::w_sum_transitions(params));
        let (ln_beta, ln_1mbeta) = (params.beta.ln(), (1.0 - params.beta).ln());
        let (ln_phi, ln_1mphi) = (params.phi.ln(), (1.0 - params.phi).ln());
        let ln_phiell = (params.phi * params.ell).ln();
        let phiell = params.phi * params.ell;

        let mut log_a = vec![0.0; n * n];
        let mut log_r = vec![0.0; n * n];
        log_a
            .par_chunks_mut(n)
            .zip(log_r.par_chunks_mut(n))
            .enumerate()
            .for_each(|(i, (la_row, lr_row))| {
                // Σ_{t≥1, Â=1} ln λ_ij(t), collected per target j.
                let mut ln_lambda_events = vec![0.0; n];
                for ev in self.row_events(i) {
                    if ev.t >= 1 {
                        let l = params.lambda_fast(i, ev.j as usize, ev.t as usize);
                        ln_lambda_events[ev.j as usize] +=
                            if l > 0.0 { l.ln() } else { f64::NEG_INFINITY };
                    }
                }
                for j in 0..n {
                    let o = i * n + j;
                    let (c01, c10, c11) =
                        (self.n01[o] as f64, self.n10[o] as f64, self.n11[o] as f64);
                    let a0 = self.a0[o];
                    la_row[j] = log_poisson_binary(a0, params.pi) - t_f * phiell
                        + xlogy_ln(c01, ln_phiell)
                        + xlogy_ln(c10, ln_phi)
                        + xlogy_ln(c11, ln_1mphi);
                    let mut lr = log_poisson_binary(a0, lambda0[o]) - params.beta * lambda_sum[o]
                        + xlogy_ln(c01 + c10, ln_beta)
                        + xlogy_ln(c11, ln_1mbeta);
                    if c01 > 0.0 {
                        lr += ln_lambda_events[j];
                    }
                    lr_row[j] = lr;
                }
            });
        (log_a, log_r)
    }

    /// Closed-form posterior for every active unordered pair.
    pub fn e_step(&self, params: &ModelParams) -> Result<AnomalyPosterior> {
        let (log_a, log_r) = self.pair_logs(params);
        self.e_step_from_logs(params.mu, &log_a, &log_r)
    }

    pub fn e_step_from_logs(
        &self,
        mu: f64,
        log_a: &[f64],
        log_r: &[f64],
    ) -> Result<AnomalyPosterior> {
        let n = self.n;
        let (ln_mu, ln_1mmu) = (mu.ln(), (1.0 - mu).ln());
        let mut post = AnomalyPosterior::zeros(n);
        for i in 0..n {
            for j in (i + 1)..n {
                if !self.pair_active[i * n + j] {
                    continue;
                }
                let (oij, oji) = (i * n + j, j * n + i);
                let mut la = ln_mu;
                let mut lr = ln_1mmu;
                for o in [oij, oji] {
                    if self.keep[o] > 0.0 {
                        la += log_a[o];
                        lr += log_r[o];
                    }
                }
                if la.is_nan() || lr.is_nan() {
                    return Err(Error::Numerical(format!(
                        "NaN evidence for pair ({i}, {j})"
                    )));
                }
                let q = crate::numeric::posterior_from_logs(la, lr)
                    .ok_or(Error::DegenerateEvidence { i, j })?;
                post.set_pair(i, j, q);
            }
        }
        Ok(post)
    }

    /// The variational objective; see [`log_posterior`].
    pub fn objective(&self, params: &ModelParams, q: &AnomalyPosterior) -> f64 {
        let (log_a, log_r) = self.pair_logs(params);
        self.objective_from_logs(params.mu, q, &log_a, &log_r)
    }

    pub fn objective_from_logs(
        &self,
        mu: f64,
        q: &AnomalyPosterior,
        log_a: &[f64],
        log_r: &[f64],
    ) -> f64 {
        let n = self.n;
        let rows: Vec<f64> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut s = 0.0;
                for j in 0..n {
                    let o = i * n + j;
                    let qij = q.q[o];
                    if j > i && self.pair_active[o] {
                        s += xlogy(qij, mu) + xlogy(1.0 - qij, 1.0 - mu) + bernoulli_entropy(qij);
                    }
                    if self.keep[o] > 0.0 {
                        s += weighted(qij, log_a[o]) + weighted(1.0 - qij, log_r[o]);
                    }
                }
                s
            })
            .collect();
        rows.iter().sum()
    }
}

/// `c * ln_x` with `0 * (-inf) = 0`.
#[inline]
fn xlogy_ln(c: f64, ln_x: f64) -> f64 {
    if c == 0.0 {
        0.0
    } else {
        c * ln_x
    }
}

/// `w * x` with `0 * (±inf) = 0`.
#[inline]
pub(crate) fn weighted(w: f64, x: f64) -> f64 {
    if w == 0.0 {
        0.0
    } else {
        w * x
    }
}
