//! Small numerical helpers shared by the model, the EM engine and the generator.

/// `x * ln(y)` with the convention that the product is zero whenever `x == 0`,
/// regardless of `y` (including `y == 0`).
#[inline]
pub fn xlogy(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * y.ln()
    }
}

/// Binary entropy `-q ln q - (1-q) ln(1-q)` with `0 ln 0 = 0`.
#[inline]
pub fn bernoulli_entropy(q: f64) -> f64 {
    -xlogy(q, q) - xlogy(1.0 - q, 1.0 - q)
}

/// Log of the Poisson pmf at a binary count. `ln(a!) = 0` for `a` in {0, 1}.
#[inline]
pub fn log_poisson_binary(a: u8, mean: f64) -> f64 {
    if a == 0 {
        -mean
    } else if mean > 0.0 {
        mean.ln() - mean
    } else {
        f64::NEG_INFINITY
    }
}

/// `1 / (1 + exp(log_b - log_a))`: posterior weight of hypothesis `a` given the
/// two unnormalised log-likelihoods. Returns `None` when both are `-inf`.
pub fn posterior_from_logs(log_a: f64, log_b: f64) -> Option<f64> {
    match (log_a == f64::NEG_INFINITY, log_b == f64::NEG_INFINITY) {
        (true, true) => None,
        (true, false) => Some(0.0),
        (false, true) => Some(1.0),
        (false, false) => {
            let d = log_b - log_a;
            // stable logistic
            Some(if d >= 0.0 {
                let e = (-d).exp();
                e / (1.0 + e)
            } else {
                1.0 / (1.0 + d.exp())
            })
        }
    }
}

/// Outcome of [`bisect_decreasing`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BisectOutcome {
    pub root: f64,
    pub residual: f64,
    /// False when `f` kept one sign over the whole bracket and the better endpoint was returned.
    pub bracketed: bool,
}

/// Bisection for a function that is decreasing on `[lo, hi]`.
///
/// Stops when `|f| < ftol` or the interval is narrower than `xtol`. Without a
/// sign change the endpoint with the smaller `|f|` is returned.
pub fn bisect_decreasing<F: Fn(f64) -> f64>(
    f: F,
    mut lo: f64,
    mut hi: f64,
    ftol: f64,
    xtol: f64,
) -> BisectOutcome {
    let f_lo = f(lo);
    let f_hi = f(hi);
    if !(f_lo > 0.0 && f_hi < 0.0) {
        if f_lo == 0.0 || f_hi == 0.0 || f_lo.abs() <= f_hi.abs() {
            let bracketed = f_lo == 0.0;
            let (root, residual) = if f_hi == 0.0 { (hi, 0.0) } else { (lo, f_lo) };
            return BisectOutcome {
                root,
                residual,
                bracketed: bracketed || f_hi == 0.0,
            };
        }
        return BisectOutcome {
            root: hi,
            residual: f_hi,
            bracketed: false,
        };
    }
    let mut mid = 0.5 * (lo + hi);
    let mut f_mid = f(mid);
    for _ in 0..200 {
        if f_mid.abs() < ftol || hi - lo < xtol {
            break;
        }
        if f_mid > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        let next = 0.5 * (lo + hi);
        if next == lo || next == hi {
            break;
        }
        mid = next;
        f_mid = f(mid);
    }
    BisectOutcome {
        root: mid,
        residual: f_mid,
        bracketed: true,
    }
}

/// Root of an increasing function on `[lo, hi]`, growing `hi` by doubling until
/// the sign changes. Returns `None` if no sign change is found within `max_doublings`.
pub fn bisect_increasing_expand<F: Fn(f64) -> f64>(
    f: F,
    lo: f64,
    mut hi: f64,
    rel_tol: f64,
    max_doublings: usize,
) -> Option<f64> {
    if f(lo) > 0.0 {
        return None;
    }
    let mut n = 0;
    while f(hi) < 0.0 {
        hi *= 2.0;
        n += 1;
        if n > max_doublings {
            return None;
        }
    }
    let (mut a, mut b) = (lo, hi);
    for _ in 0..400 {
        let m = 0.5 * (a + b);
        if f(m) < 0.0 {
            a = m;
        } else {
            b = m;
        }
        if b - a <= rel_tol * b.abs() {
            break;
        }
    }
    Some(0.5 * (a + b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn xlogy_zero_convention() {
        assert_eq!(xlogy(0.0, 0.0), 0.0);
        assert_eq!(xlogy(0.0, f64::NAN.abs()), 0.0);
        assert!((xlogy(2.0, std::f64::consts::E) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn posterior_edge_cases() {
        assert_eq!(
            posterior_from_logs(f64::NEG_INFINITY, f64::NEG_INFINITY),
            None
        );
        assert_eq!(posterior_from_logs(-3.0, f64::NEG_INFINITY), Some(1.0));
        assert_eq!(posterior_from_logs(f64::NEG_INFINITY, -3.0), Some(0.0));
        let p = posterior_from_logs(-1.0, -1.0).unwrap();
        assert!((p - 0.5).abs() < 1e-15);
        let p = posterior_from_logs(-1000.0, 0.0).unwrap();
        assert!((0.0..1e-300).contains(&p));
    }

    #[test]
    fn bisection_finds_root_of_linear() {
        let out = bisect_decreasing(|x| 0.3 - x, 0.0, 1.0, 1e-12, 1e-14);
        assert!(out.bracketed);
        assert!((out.root - 0.3).abs() < 1e-11);
    }

    #[test]
    fn bisection_without_sign_change_picks_better_endpoint() {
        let out = bisect_decreasing(|x| 2.0 - x, 0.0, 1.0, 1e-12, 1e-14);
        assert!(!out.bracketed);
        assert_eq!(out.root, 1.0);
        let out = bisect_decreasing(|x| -0.5 - x, 0.0, 1.0, 1e-12, 1e-14);
        assert_eq!(out.root, 0.0);
    }

    #[test]
    fn expanding_bisection() {
        let r = bisect_increasing_expand(|x| x - 1234.5, 0.0, 1.0, 1e-12, 60).unwrap();
        assert!((r - 1234.5).abs() < 1e-8);
    }
}
