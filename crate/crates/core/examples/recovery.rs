//! Generate one benchmark network, fit it, and print recovered scalars and
//! detection metrics.
//!
//! ```text
//! cargo run --release --example recovery -- <rho_a> <seed> [restarts]
//! ```

use std::time::Instant;

use dynacd::evaluation::{auc, cosine_similarity};
use dynacd::generator::{generate, GenConfig};
use dynacd::{EmConfig, ScoredPairs};

fn main() -> dynacd::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let rho_a: f64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(0.1);
    let seed: u64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(1);
    let restarts: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(1);

    let cfg = GenConfig {
        rho_a,
        seed,
        ..GenConfig::default()
    };
    let (net, truth) = generate(&cfg)?;
    println!(
        "edges(t=0) = {}, realized rho_a = {:.3}, mu = {:.4}, pi = {:.4}",
        net.edge_count(0),
        truth.realized_rho_a,
        truth.params.mu,
        truth.params.pi
    );

    let mut em = EmConfig::new(cfg.n_communities);
    em.n_restarts = restarts;
    em.seed = seed;
    if let Some(m) = std::env::var("MAX_ITER").ok().and_then(|s| s.parse().ok()) {
        em.max_iter = m;
    }
    let start = Instant::now();
    let fit = dynacd::inference::fit(&net, &em)?;
    let p = &fit.params;
    println!(
        "fit in {:.1?} ({} iterations, converged {}): beta {:.4} phi {:.4} ell {:.4} pi {:.4} mu {:.4}",
        start.elapsed(),
        fit.iterations,
        fit.converged,
        p.beta,
        p.phi,
        p.ell,
        p.pi,
        p.mu
    );
    if std::env::var_os("FROM_TRUTH").is_some() {
        let warm = dynacd::inference::fit_from(&net, &em, &truth.params)?;
        let w = &warm.params;
        println!(
            "from truth: objective {:.3} (random start {:.3}); beta {:.4} phi {:.4} ell {:.4} pi {:.4} mu {:.4}",
            warm.final_objective(),
            fit.final_objective(),
            w.beta,
            w.phi,
            w.ell,
            w.pi,
            w.mu
        );
        let n = truth.n_nodes;
        let scored = ScoredPairs::from_posterior(&warm.q, |i, j| truth.z[i * n + j] == 1)?;
        println!(
            "from truth: AUC(Z) = {:.4}, CS(u) = {:.4}",
            auc(&scored)?,
            cosine_similarity(&truth.params.u, &w.u, cfg.n_communities)?
        );
    }
    let tr = &fit.objective_trace;
    for idx in [0, 1, 2, 5, 10, 20, 50, 100, 200, 300, 400, 499] {
        if idx < tr.len() {
            print!("[{idx}] {:.1}  ", tr[idx]);
        }
    }
    println!();
    let n = truth.n_nodes;
    let scored = ScoredPairs::from_posterior(&fit.q, |i, j| truth.z[i * n + j] == 1)?;
    println!(
        "AUC(Z) = {:.4}, CS(u) = {:.4}",
        auc(&scored)?,
        cosine_similarity(&truth.params.u, &p.u, cfg.n_communities)?
    );
    Ok(())
}
