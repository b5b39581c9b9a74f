//! Splitting a fixed precision budget between items held in memory.
//!
//! Two inputs share one Gaussian prior and a budget `tau1 + tau2 = c`. The
//! total expected error `eps(w1, tau1) + eps(w2, c - tau1)` can be
//! non-monotone in either argument, and boundary optima (one item gets
//! everything) are legal, so both solvers search the whole interval instead
//! of trusting a single stationary point.
//!
//! * [`allocate_brute_force`] only evaluates the objective: a uniform grid
//!   followed by golden-section refinement of the winning cell. It is the
//!   oracle.
//! * [`allocate_optimal`] brackets sign changes of the analytic derivative on
//!   a dense grid, bisects each one, and compares the resulting local minima
//!   with both endpoints.

use serde::{Deserialize, Serialize};

use crate::format::ser_f64;
use crate::memory_model::{
    error_derivative, expected_error, monotonicity_regime, EncodingPrecision, GaussianBelief,
    MonotonicityRegime,
};
use crate::optimize::{bisect_root, golden_section};
use crate::{Error, Result};

pub const DEFAULT_GRID_POINTS: usize = 10_000;

/// Bracket width at which the brute-force refinement stops.
const REFINE_TOL: f64 = 1e-9;

const MAX_PASSES: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AllocationProblem {
    pub prior: GaussianBelief,
    pub w1: f64,
    pub w2: f64,
    pub budget_c: f64,
}

impl AllocationProblem {
    pub fn new(prior: GaussianBelief, w1: f64, w2: f64, budget_c: f64) -> Result<Self> {
        if !(budget_c > 0.0 && budget_c.is_finite()) {
            return Err(Error::invalid(
                "budget_c",
                format!("must be finite and > 0, got {budget_c}"),
            ));
        }
        if !(w1.is_finite() && w2.is_finite()) {
            return Err(Error::invalid("w", "inputs must be finite"));
        }
        Ok(Self {
            prior,
            w1,
            w2,
            budget_c,
        })
    }

    pub fn situation(&self) -> Situation {
        use MonotonicityRegime::*;
        match (
            monotonicity_regime(&self.prior, self.w1),
            monotonicity_regime(&self.prior, self.w2),
        ) {
            (MonotoneDecreasing, MonotoneDecreasing) => Situation::BothMonotone,
            (NonMonotone, NonMonotone) => Situation::BothNonMonotone,
            _ => Situation::Mixed,
        }
    }

    fn objective(&self, tau1: f64) -> f64 {
        let tau2 = (self.budget_c - tau1).max(0.0);
        expected_error(&self.prior, EncodingPrecision(tau1), self.w1)
            + expected_error(&self.prior, EncodingPrecision(tau2), self.w2)
    }

    /// d/d(tau1) of the total error along the budget line.
    fn slope(&self, tau1: f64) -> f64 {
        let tau2 = (self.budget_c - tau1).max(0.0);
        error_derivative(&self.prior, EncodingPrecision(tau1), self.w1)
            - error_derivative(&self.prior, EncodingPrecision(tau2), self.w2)
    }

    fn result(&self, tau1: f64) -> AllocationResult {
        let c = self.budget_c;
        let tau1 = tau1.clamp(0.0, c);
        let tau2 = c - tau1;
        let total_error = self.objective(tau1);
        AllocationResult {
            tau1,
            tau2,
            total_error,
            situation: self.situation(),
            at_boundary: tau1 <= REFINE_TOL * c.max(1.0) || tau2 <= REFINE_TOL * c.max(1.0),
        }
    }
}

/// Monotonicity of the two error curves, named after the cases of the
/// proof: both monotone, both non-monotone, or one of each.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Situation {
    BothMonotone,
    BothNonMonotone,
    Mixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AllocationResult {
    #[serde(serialize_with = "ser_f64")]
    pub tau1: f64,
    #[serde(serialize_with = "ser_f64")]
    pub tau2: f64,
    #[serde(serialize_with = "ser_f64")]
    pub total_error: f64,
    pub situation: Situation,
    pub at_boundary: bool,
}

pub fn total_error(problem: &AllocationProblem, tau1: f64) -> Result<f64> {
    if !(0.0..=problem.budget_c).contains(&tau1) {
        return Err(Error::invalid(
            "tau1",
            format!("must lie in [0, {}], got {tau1}", problem.budget_c),
        ));
    }
    Ok(problem.objective(tau1))
}

fn grid(c: f64, points: usize) -> impl Iterator<Item = f64> {
    let last = points - 1;
    (0..points).map(move |i| if i == last { c } else { c * i as f64 / last as f64 })
}

/// Exhaustive grid over `tau1 in [0, c]`, then golden-section refinement
/// inside the cells next to the best grid point.
pub fn allocate_brute_force(problem: &AllocationProblem, grid_points: usize) -> Result<AllocationResult> {
    if grid_points < 3 {
        return Err(Error::invalid("grid_points", "need at least 3 grid points"));
    }
    let c = problem.budget_c;
    let taus: Vec<f64> = grid(c, grid_points).collect();
    let mut best_i = 0;
    let mut best = f64::INFINITY;
    for (i, &t) in taus.iter().enumerate() {
        let e = problem.objective(t);
        // ties go to the larger tau1
        if e <= best {
            best = e;
            best_i = i;
        }
    }
    let lo = taus[best_i.saturating_sub(1)];
    let hi = taus[(best_i + 1).min(grid_points - 1)];
    let refined = golden_section(|t| problem.objective(t), lo, hi, REFINE_TOL);
    let tau1 = if refined.fx < best { refined.x } else { taus[best_i] };
    Ok(problem.result(tau1))
}

/// Minimiser of the total error on the budget line, located to `tol` in
/// precision units.
pub fn allocate_optimal(problem: &AllocationProblem, tol: f64) -> Result<AllocationResult> {
    allocate_optimal_with_grid(problem, tol, DEFAULT_GRID_POINTS)
}

pub fn allocate_optimal_with_grid(
    problem: &AllocationProblem,
    tol: f64,
    grid_points: usize,
) -> Result<AllocationResult> {
    if !(tol > 0.0) {
        return Err(Error::invalid("tol", "must be > 0"));
    }
    if grid_points < 2 {
        return Err(Error::invalid("grid_points", "need at least 2 grid points"));
    }
    let c = problem.budget_c;
    let mut candidates = vec![0.0, c];
    let taus: Vec<f64> = grid(c, grid_points).collect();
    let slopes: Vec<f64> = taus.iter().map(|&t| problem.slope(t)).collect();
    for i in 0..grid_points - 1 {
        let (g0, g1) = (slopes[i], slopes[i + 1]);
        // a local minimum: the slope crosses from negative to non-negative
        if g0 < 0.0 && g1 >= 0.0 {
            candidates.push(bisect_root(|t| problem.slope(t), taus[i], taus[i + 1], tol));
        }
    }
    candidates.sort_by(f64::total_cmp);
    let mut best_t = candidates[0];
    let mut best_e = problem.objective(best_t);
    for &t in &candidates[1..] {
        let e = problem.objective(t);
        if e <= best_e {
            best_e = e;
            best_t = t;
        }
    }
    Ok(problem.result(best_t))
}

/// Budget split across any number of items by cyclic pairwise reallocation.
/// Every pass re-solves each pair `(i, j)` over its pooled precision with
/// [`allocate_optimal`]; iteration stops when a pass lowers the total error by
/// no more than `tol`.
pub fn allocate_optimal_n(
    prior: &GaussianBelief,
    words: &[f64],
    budget_c: f64,
    tol: f64,
) -> Result<Vec<f64>> {
    if words.is_empty() {
        return Err(Error::invalid("words", "need at least one item"));
    }
    if !(budget_c > 0.0 && budget_c.is_finite()) {
        return Err(Error::invalid("budget_c", format!("must be finite and > 0, got {budget_c}")));
    }
    if !(tol > 0.0) {
        return Err(Error::invalid("tol", "must be > 0"));
    }
    let n = words.len();
    let mut taus = vec![budget_c / n as f64; n];
    let total = |taus: &[f64]| -> f64 {
        words
            .iter()
            .zip(taus)
            .map(|(&w, &t)| expected_error(prior, EncodingPrecision(t), w))
            .sum()
    };
    let pair_tol = 1e-12 * budget_c.max(1.0);
    let mut current = total(&taus);
    for _ in 0..MAX_PASSES {
        for i in 0..n {
            for j in i + 1..n {
                let pool = taus[i] + taus[j];
                if pool <= 0.0 {
                    continue;
                }
                let pair = AllocationProblem::new(*prior, words[i], words[j], pool)?;
                let before = pair.objective(taus[i]);
                let r = allocate_optimal(&pair, pair_tol)?;
                if r.total_error < before {
                    taus[i] = r.tau1;
                    taus[j] = r.tau2;
                }
            }
        }
        let next = total(&taus);
        let gain = current - next;
        current = next;
        if gain <= tol {
            break;
        }
    }
    Ok(taus)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TradeoffPoint {
    #[serde(serialize_with = "ser_f64")]
    pub tau: f64,
    #[serde(serialize_with = "ser_f64")]
    pub error: f64,
}

/// Expected error of one input at each precision in `tau_grid`.
pub fn tradeoff_curve(prior: &GaussianBelief, w: f64, tau_grid: &[f64]) -> Result<Vec<TradeoffPoint>> {
    tau_grid
        .iter()
        .map(|&t| {
            let tau = EncodingPrecision::new(t)?;
            Ok(TradeoffPoint {
                tau: t,
                error: expected_error(prior, tau, w),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::memory_model::gaussian_surprisal;

    fn prior(m: f64, p: f64) -> GaussianBelief {
        GaussianBelief::new(m, p).unwrap()
    }

    fn problem(p: GaussianBelief, w1: f64, w2: f64, c: f64) -> AllocationProblem {
        AllocationProblem::new(p, w1, w2, c).unwrap()
    }

    #[test]
    fn rejects_bad_budget() {
        assert!(AllocationProblem::new(prior(0.0, 1.0), 1.0, 2.0, 0.0).is_err());
        assert!(AllocationProblem::new(prior(0.0, 1.0), 1.0, 2.0, -1.0).is_err());
    }

    #[test]
    fn total_error_examples() {
        let pr = problem(prior(0.0, 1.0), 2.0, 1.0, 2.0);
        assert!((total_error(&pr, 1.0).unwrap() - 1.75).abs() < 1e-15);
        assert!(total_error(&pr, -0.1).is_err());
        assert!(total_error(&pr, 2.1).is_err());

        let p = prior(0.0, 1.0);
        let at_c = total_error(&pr, 2.0).unwrap();
        let composed = expected_error(&p, EncodingPrecision::ZERO, 1.0)
            + expected_error(&p, EncodingPrecision::new(2.0).unwrap(), 2.0);
        assert_eq!(at_c, composed);

        let sym = problem(prior(0.5, 2.0), 1.7, 1.7, 3.0);
        for t in [0.0, 0.4, 1.1, 1.5] {
            let a = total_error(&sym, t).unwrap();
            let b = total_error(&sym, 3.0 - t).unwrap();
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn brute_force_examples() {
        // tau0 d^2 = 4 keeps each curve convex, so the symmetric split wins
        let r = allocate_brute_force(&problem(prior(0.0, 1.0), 2.0, 2.0, 3.0), 10_001).unwrap();
        assert!((r.tau1 - 1.5).abs() < 1e-6 && (r.tau2 - 1.5).abs() < 1e-6, "{r:?}");

        let r = allocate_brute_force(&problem(prior(0.0, 1.0), 3.0, 1.0, 2.0), 100_000).unwrap();
        assert!(r.tau1 > r.tau2, "{r:?}");

        let p = prior(0.0, 1.0);
        let r = allocate_brute_force(&problem(p, 3.0, 1.0, 1e-6), 1001).unwrap();
        assert!((r.tau1 + r.tau2 - 1e-6).abs() < 1e-15);
        assert!((r.total_error - 10.0).abs() < 1e-4, "{r:?}");

        assert!(allocate_brute_force(&problem(p, 3.0, 1.0, 1.0), 2).is_err());
    }

    #[test]
    fn optimal_matches_oracle_on_examples() {
        let cases = [
            problem(prior(0.0, 1.0), 3.0, 1.0, 2.0),
            problem(prior(0.0, 0.1), 2.5, 0.3, 4.0),
            problem(prior(1.0, 0.2), 1.2, 1.1, 0.5),
            problem(prior(-2.0, 5.0), 0.0, -1.0, 50.0),
        ];
        for pr in cases {
            let a = allocate_optimal(&pr, 1e-12).unwrap();
            let b = allocate_brute_force(&pr, 100_000).unwrap();
            assert!((a.total_error - b.total_error).abs() <= 1e-9, "{a:?} {b:?}");
            assert!((a.tau1 - b.tau1).abs() <= 1e-5 * pr.budget_c, "{a:?} {b:?}");
            assert!(a.tau1 >= a.tau2);
        }
    }

    #[test]
    fn mixed_situation_still_favours_surprising_input() {
        // tau0 = 0.1: w1 = 4 is monotone (0.1 >= 1/32), w2 = 0.5 is not (0.1 < 2)
        let pr = problem(prior(0.0, 0.1), 4.0, 0.5, 1.0);
        assert_eq!(pr.situation(), Situation::Mixed);
        let r = allocate_optimal(&pr, 1e-12).unwrap();
        let oracle = allocate_brute_force(&pr, 100_000).unwrap();
        assert!(r.tau1 > r.tau2, "{r:?}");
        assert!(oracle.tau1 > oracle.tau2);
    }

    #[test]
    fn degenerate_inputs_at_prior_mean_go_to_boundary() {
        // eps(tau) = tau / (tau0 + tau)^2 is zero at tau = 0 and concave near
        // it, so the symmetric split is a local maximum, not the optimum.
        let pr = problem(prior(0.0, 1.0), 0.0, 0.0, 2.0);
        let r = allocate_optimal(&pr, 1e-12).unwrap();
        assert!(r.at_boundary);
        let mid = total_error(&pr, 1.0).unwrap();
        assert!(r.total_error < mid);
        assert_eq!(r.tau1, 2.0);
    }

    #[test]
    fn n_items() {
        let p = prior(0.0, 1.0);
        let pair = allocate_optimal_n(&p, &[3.0, 1.0], 2.0, 1e-14).unwrap();
        let r = allocate_optimal(&problem(p, 3.0, 1.0, 2.0), 1e-12).unwrap();
        assert!((pair[0] - r.tau1).abs() < 1e-9 && (pair[1] - r.tau2).abs() < 1e-9);

        let same = allocate_optimal_n(&p, &[2.0; 4], 4.0, 1e-14).unwrap();
        for t in &same {
            assert!((t - 1.0).abs() < 1e-9, "{same:?}");
        }

        assert!(allocate_optimal_n(&p, &[], 1.0, 1e-9).is_err());
        assert_eq!(allocate_optimal_n(&p, &[5.0], 2.0, 1e-9).unwrap(), vec![2.0]);
    }

    #[test]
    fn n_items_against_simplex_grid() {
        let p = prior(0.0, 1.0);
        let words = [0.0, 1.0, 3.0];
        let c = 3.0;
        let taus = allocate_optimal_n(&p, &words, c, 1e-14).unwrap();
        let eps = |t: f64, w: f64| expected_error(&p, EncodingPrecision(t), w);

        // exhaustive search over the 2-simplex at step 1e-3
        let steps = 3000usize;
        let h = c / steps as f64;
        let mut best = (f64::INFINITY, 0.0, 0.0);
        for i in 0..=steps {
            for j in 0..=steps - i {
                let (a, b) = (i as f64 * h, j as f64 * h);
                let e = eps(a, words[0]) + eps(b, words[1]) + eps(c - a - b, words[2]);
                if e < best.0 {
                    best = (e, a, b);
                }
            }
        }
        let total: f64 = words.iter().zip(&taus).map(|(&w, &t)| eps(t, w)).sum();
        assert!(total <= best.0 + 1e-9, "{total} vs {}", best.0);
        assert!((taus[0] - best.1).abs() < 2e-3 && (taus[1] - best.2).abs() < 2e-3, "{taus:?} {best:?}");
        assert!(taus[2] >= taus[1] && taus[1] >= taus[0], "{taus:?}");
        assert!((taus.iter().sum::<f64>() - c).abs() < 1e-12);
    }

    #[test]
    fn tradeoff_shapes() {
        let p = prior(0.0, 1.0);
        let grid: Vec<f64> = (0..200).map(|i| i as f64 * 0.05).collect();

        let mono = tradeoff_curve(&p, 2.0, &grid).unwrap();
        assert!(mono.windows(2).all(|w| w[1].error < w[0].error));

        // w = 0.3: turning point at 1 - 2 * 0.09 = 0.82
        let non = tradeoff_curve(&p, 0.3, &grid).unwrap();
        let peak = non
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.error.total_cmp(&b.1.error))
            .unwrap()
            .0;
        assert!(peak > 0 && peak < grid.len() - 1);
        assert!(non[..=peak].windows(2).all(|w| w[1].error > w[0].error));
        assert!(non[peak..].windows(2).all(|w| w[1].error < w[0].error));
        assert!((grid[peak] - 0.82).abs() <= 0.05);

        assert!(tradeoff_curve(&p, 1.0, &[]).unwrap().is_empty());
        assert!(tradeoff_curve(&p, 1.0, &[-1.0]).is_err());
    }

    #[test]
    fn surprisal_order_is_distance_order() {
        let p = prior(0.0, 1.0);
        assert!(gaussian_surprisal(&p, 3.0).nats() > gaussian_surprisal(&p, 1.0).nats());
    }
}
