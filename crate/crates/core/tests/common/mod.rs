#![allow(dead_code)]

use quantile_surrogate::loss::{generic_rate_loss, loss_gradient, surrogate_loss};
use quantile_surrogate::metrics::{calibrate_threshold, just_below, rate};
use quantile_surrogate::quantile::{estimate, exact_quantile, lower_mean_estimator, point_estimator};
use quantile_surrogate::{
    Dataset, Direction, LinearModel, PenalizedSide, QuantileEstimatorSpec, RateConstraint, Subset, SurrogateLossSpec,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Outcome of one randomized or exhaustive property check.
#[derive(Debug, Clone)]
pub struct Check {
    pub name: &'static str,
    pub cases: usize,
    pub violations: usize,
    pub skipped: usize,
    pub worst: f64,
}

impl Check {
    fn new(name: &'static str) -> Self {
        Check {
            name,
            cases: 0,
            violations: 0,
            skipped: 0,
            worst: 0.0,
        }
    }

    fn record(&mut self, ok: bool, err: f64) {
        self.cases += 1;
        if !ok {
            self.violations += 1;
        }
        if err.is_finite() && err > self.worst {
            self.worst = err;
        }
    }

    pub fn passed(&self) -> bool {
        self.violations == 0 && self.cases > 0
    }

    pub fn summary(&self) -> String {
        format!(
            "{}: {} cases, {} violations, {} skipped, worst {:.3e}",
            self.name, self.cases, self.violations, self.skipped, self.worst
        )
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

pub fn random_scores(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| gaussian(rng)).collect()
}

/// `n` samples in `d` dimensions with at least `min_each` of each class.
pub fn random_dataset(rng: &mut ChaCha8Rng, n: usize, d: usize, min_each: usize) -> Dataset {
    let rows: Vec<Vec<f64>> = (0..n).map(|_| random_scores(rng, d)).collect();
    let mut labels: Vec<i8> = (0..n).map(|_| if rng.random_bool(0.4) { 1 } else { -1 }).collect();
    for i in 0..min_each {
        labels[i] = 1;
        labels[n - 1 - i] = -1;
    }
    Dataset::from_rows(rows, &labels).unwrap()
}

pub fn estimators() -> [QuantileEstimatorSpec; 4] {
    [
        QuantileEstimatorSpec::Point,
        QuantileEstimatorSpec::kernel(0.1),
        QuantileEstimatorSpec::LowerMean,
        QuantileEstimatorSpec::Interval { lower: 0.2, upper: 0.8 },
    ]
}

/// Lower-mean estimate never exceeds the point estimate.
pub fn lower_mean_below_point(cases: usize, seed: u64) -> Check {
    let mut check = Check::new("lower-mean <= point");
    let mut r = rng(seed);
    for _ in 0..cases {
        let n = r.random_range(1..60);
        let scores = random_scores(&mut r, n);
        let c = r.random_range(1.0 / n as f64..=1.0);
        let m = lower_mean_estimator(&scores, c).unwrap().value;
        let p = point_estimator(&scores, c).unwrap().value;
        check.record(m <= p, (m - p).max(0.0));
    }
    check
}

/// `L((w₁+w₂)/2) ≤ (L(w₁)+L(w₂))/2 + 1e-9` for lower-mean losses.
pub fn lower_mean_midpoint_convexity(cases: usize, seed: u64) -> Check {
    let mut check = Check::new("lower-mean loss midpoint convexity");
    let mut r = rng(seed);
    for t in 0..cases {
        let n = r.random_range(6..40);
        let d = r.random_range(1..5);
        let ds = random_dataset(&mut r, n, d, 2);
        let c = r.random_range(0.05..0.95);
        let spec = if t % 2 == 0 {
            SurrogateLossSpec::precision_at_recall(c, QuantileEstimatorSpec::LowerMean).unwrap()
        } else {
            SurrogateLossSpec::precision_at_rate(c, QuantileEstimatorSpec::LowerMean).unwrap()
        };
        let scale = r.random_range(0.1..5.0);
        let w1: Vec<f64> = (0..d).map(|_| scale * gaussian(&mut r)).collect();
        let w2: Vec<f64> = (0..d).map(|_| scale * gaussian(&mut r)).collect();
        let mid: Vec<f64> = w1.iter().zip(&w2).map(|(a, b)| 0.5 * (a + b)).collect();
        let loss = |w: &[f64]| surrogate_loss(&LinearModel::new(w.to_vec()), &ds, &spec).unwrap().value;
        let gap = loss(&mid) - 0.5 * (loss(&w1) + loss(&w2));
        check.record(gap <= 1e-9, gap.max(0.0));
    }
    check
}

fn min_gap(mut values: Vec<f64>) -> f64 {
    values.sort_by(f64::total_cmp);
    values.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min)
}

/// Analytic gradient against central differences. Draws whose constraint
/// scores come within 1e-6 of a tie are skipped, since the sort order
/// (and so the subgradient) is not locally fixed there.
pub fn gradient_matches_finite_differences(estimator: QuantileEstimatorSpec, cases: usize, seed: u64) -> Check {
    let name = match estimator {
        QuantileEstimatorSpec::Point => "gradient vs finite differences: point",
        QuantileEstimatorSpec::Kernel { .. } => "gradient vs finite differences: kernel",
        QuantileEstimatorSpec::LowerMean => "gradient vs finite differences: lower-mean",
        QuantileEstimatorSpec::Interval { .. } => "gradient vs finite differences: interval",
    };
    let mut check = Check::new(name);
    let mut r = rng(seed);
    let step = 1e-7;
    while check.cases < cases {
        let n = r.random_range(10..40);
        let d = r.random_range(1..5);
        let ds = random_dataset(&mut r, n, d, 5);
        let c = r.random_range(0.1..0.9);
        let spec = match r.random_range(0..3) {
            0 => SurrogateLossSpec::precision_at_recall(c, estimator).unwrap(),
            1 => SurrogateLossSpec::precision_at_rate(c, estimator).unwrap(),
            _ => SurrogateLossSpec::precision_at_rate_tp(c, estimator).unwrap(),
        };
        let w: Vec<f64> = (0..d).map(|_| gaussian(&mut r)).collect();
        let model = LinearModel::new(w.clone());
        let scores = model.scores(&ds).unwrap();
        let subset = spec.constraint.subset.resolve(&ds).unwrap();
        if min_gap(subset.iter().map(|&i| scores[i]).collect()) < 1e-6 {
            check.skipped += 1;
            continue;
        }
        let analytic = loss_gradient(&model, &ds, &spec).unwrap();
        let mut fd = vec![0.0; d];
        for k in 0..d {
            let mut hi = w.clone();
            let mut lo = w.clone();
            hi[k] += step;
            lo[k] -= step;
            let f = |v: Vec<f64>| surrogate_loss(&LinearModel::new(v), &ds, &spec).unwrap().value;
            fd[k] = (f(hi) - f(lo)) / (2.0 * step);
        }
        let diff: f64 = fd.iter().zip(analytic.entries()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let rel = diff / analytic.norm().max(1e-6);
        check.record(rel <= 1e-4, rel);
    }
    check
}

/// All multisets of size `n` over `0..k`, as nondecreasing index vectors.
fn multisets(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn go(n: usize, k: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == n {
            out.push(cur.clone());
            return;
        }
        for v in start..k {
            cur.push(v);
            go(n, k, v, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    go(n, k, 0, &mut Vec::new(), &mut out);
    out
}

/// Exhaustive threshold-calibration check: for every multiset of up to 12
/// scores over a 5-value alphabet (the result depends only on the
/// multiset), every achievable target and a few off-grid ones, the
/// calibrated threshold is feasible and extremal among all threshold
/// positions, and coincides with the exact quantile whenever that is
/// itself feasible.
pub fn threshold_maximality_exhaustive(max_n: usize) -> Check {
    let mut check = Check::new("threshold maximality (exhaustive, 5-value alphabet)");
    let alphabet = [-2.0, -0.5, 0.0, 1.25, 3.0];
    for n in 1..=max_n {
        for ms in multisets(n, alphabet.len()) {
            let scores: Vec<f64> = ms.iter().map(|&i| alphabet[i]).collect();
            let mut candidates = vec![just_below(scores[0])];
            candidates.extend(alphabet.iter().copied().filter(|a| scores.contains(a)));
            let mut targets: Vec<f64> = (0..=n).map(|k| k as f64 / n as f64).collect();
            targets.extend([0.05, 0.33, 0.5, 0.77, 0.9]);
            for &c in &targets {
                for dir in [Direction::AtLeast, Direction::AtMost] {
                    let t = calibrate_threshold(&scores, dir, c).unwrap();
                    let feasible = |th: f64| {
                        let r = rate(&scores, th).unwrap();
                        match dir {
                            Direction::AtLeast => r * n as f64 >= c * n as f64 - 1e-9,
                            Direction::AtMost => r * n as f64 <= c * n as f64 + 1e-9,
                        }
                    };
                    let extremal = candidates.iter().filter(|&&th| feasible(th)).all(|&th| match dir {
                        Direction::AtLeast => th <= t,
                        Direction::AtMost => th >= t,
                    });
                    let mut ok = feasible(t) && extremal;
                    if dir == Direction::AtLeast && c > 0.0 {
                        let q = exact_quantile(&scores, 1.0 - c).unwrap();
                        if feasible(q) {
                            ok &= q == t;
                        }
                    }
                    check.record(ok, 0.0);
                }
            }
        }
    }
    check
}

/// `Σ_{y=-1} 1{f > θ̃} ≤ loss` with base-2 logloss and the same estimate.
pub fn surrogate_dominates_count(cases: usize, seed: u64) -> Check {
    let mut check = Check::new("surrogate dominates false-positive count");
    let mut r = rng(seed);
    let ests = estimators();
    for t in 0..cases {
        let n = r.random_range(10..50);
        let d = r.random_range(1..4);
        let ds = random_dataset(&mut r, n, d, 5);
        let c = r.random_range(0.1..0.9);
        let est = ests[t % ests.len()];
        let w: Vec<f64> = (0..d).map(|_| 3.0 * gaussian(&mut r)).collect();
        let model = LinearModel::new(w);
        let scores = model.scores(&ds).unwrap();
        let (constraint, subset) = if t % 2 == 0 {
            (RateConstraint::recall_at_least(c).unwrap(), ds.positive_indices())
        } else {
            (RateConstraint::new(Subset::All, Direction::AtLeast, c).unwrap(), (0..n).collect())
        };
        let sub: Vec<f64> = subset.iter().map(|&i| scores[i]).collect();
        let theta = estimate(&est, &sub, 1.0 - c).unwrap().value;
        let count = ds.negative_indices().iter().filter(|&&i| scores[i] > theta).count() as f64;
        let loss = generic_rate_loss(&model, &ds, &constraint, &est, PenalizedSide::Negatives).unwrap().value;
        check.record(count <= loss + 1e-12, (count - loss).max(0.0));
    }
    check
}

/// `q̂(a + λs) = a + λ q̂(s)` for every rank-normalized estimator.
pub fn estimator_equivariance(cases: usize, seed: u64) -> Check {
    let mut check = Check::new("translation/scaling equivariance");
    let mut r = rng(seed);
    let ests = [
        QuantileEstimatorSpec::Point,
        QuantileEstimatorSpec::kernel(0.05),
        QuantileEstimatorSpec::kernel(0.3),
        QuantileEstimatorSpec::LowerMean,
        QuantileEstimatorSpec::Interval { lower: 0.25, upper: 0.75 },
    ];
    for t in 0..cases {
        let n = r.random_range(4..50);
        let scores = random_scores(&mut r, n);
        let c = r.random_range(0.05..0.95);
        let est = ests[t % ests.len()];
        let a = r.random_range(-5.0..5.0);
        let lambda = r.random_range(0.1..4.0);
        let base = estimate(&est, &scores, c).unwrap().value;
        let shifted: Vec<f64> = scores.iter().map(|s| s + a).collect();
        let scaled: Vec<f64> = scores.iter().map(|s| lambda * s).collect();
        let e1 = (estimate(&est, &shifted, c).unwrap().value - (base + a)).abs();
        let e2 = (estimate(&est, &scaled, c).unwrap().value - lambda * base).abs();
        let err = e1.max(e2);
        check.record(err <= 1e-12, err);
    }
    check
}

/// Every check that makes up the property suite, at full size.
pub fn property_suite() -> Vec<Check> {
    let mut checks = vec![
        lower_mean_below_point(1000, 1),
        lower_mean_midpoint_convexity(1000, 2),
    ];
    for (i, est) in estimators().into_iter().enumerate() {
        checks.push(gradient_matches_finite_differences(est, 200, 10 + i as u64));
    }
    checks.push(threshold_maximality_exhaustive(12));
    checks.push(surrogate_dominates_count(500, 3));
    checks.push(estimator_equivariance(1000, 4));
    checks
}
