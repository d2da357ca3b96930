//! Independent reference implementations used as test oracles, plus
//! random input generators shared by the property suites and the
//! acceptance runner.
#![allow(dead_code)]

use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use continuer_core::candidate::{Action, Candidate, MetricTriple, Technique};
use continuer_core::deployment::{NodeId, Placement};
use continuer_core::predict::accuracy::split_dataset;
use continuer_core::predict::evaluate_regression;
use continuer_core::predict::gbdt::{gbdt_fit, schema, FeatureVector, GbdtParams};
use continuer_core::scheduler::{Thresholds, Weights};

pub fn data_path(file: &str) -> PathBuf {
    PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/data")).join(file)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Straight-line reference selector: filter, normalize each column with
/// explicit loops, score, then return the candidate no other candidate
/// beats under the tie-break rule.
pub fn oracle_select(candidates: &[Candidate], w: &Weights, t: &Thresholds) -> Option<usize> {
    let mut feasible = Vec::new();
    for (i, c) in candidates.iter().enumerate() {
        let m = c.metrics;
        let mut ok = true;
        if let Some(min) = t.min_accuracy {
            if m.accuracy < min {
                ok = false;
            }
        }
        if let Some(max) = t.max_latency_ms {
            if m.latency_ms > max {
                ok = false;
            }
        }
        if let Some(max) = t.max_downtime_ms {
            if m.downtime_ms > max {
                ok = false;
            }
        }
        if ok {
            feasible.push(i);
        }
    }
    if feasible.is_empty() {
        return None;
    }

    let bounds = |get: &dyn Fn(&MetricTriple) -> f64| {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &i in &feasible {
            let v = get(&candidates[i].metrics);
            if v < lo {
                lo = v;
            }
            if v > hi {
                hi = v;
            }
        }
        (lo, hi)
    };
    let scale = |v: f64, (lo, hi): (f64, f64)| if hi == lo { 0.0 } else { (v - lo) / (hi - lo) };
    let a_b = bounds(&|m| m.accuracy);
    let l_b = bounds(&|m| m.latency_ms);
    let d_b = bounds(&|m| m.downtime_ms);

    let mut scores = Vec::new();
    for &i in &feasible {
        let m = candidates[i].metrics;
        let s = w.accuracy * scale(m.accuracy, a_b)
            - w.latency * scale(m.latency_ms, l_b)
            - w.downtime * scale(m.downtime_ms, d_b);
        scores.push(s);
    }

    let rank = |t: Technique| match t {
        Technique::Repartition => 0,
        Technique::SkipConnection => 1,
        Technique::EarlyExit => 2,
    };
    let beats = |j: usize, i: usize| {
        let (cj, ci) = (&candidates[feasible[j]], &candidates[feasible[i]]);
        if scores[j] != scores[i] {
            return scores[j] > scores[i];
        }
        let kj = (rank(cj.technique()), cj.action.id());
        let ki = (rank(ci.technique()), ci.action.id());
        kj < ki
    };
    let mut winners = Vec::new();
    for i in 0..feasible.len() {
        if (0..feasible.len()).all(|j| j == i || !beats(j, i)) {
            winners.push(feasible[i]);
        }
    }
    assert_eq!(winners.len(), 1, "tie-break must leave one winner");
    Some(winners[0])
}

/// 3 to 16 candidates with distinct (technique, id) keys. Metrics are drawn
/// either continuously or from a small pool so that exact ties occur.
pub fn random_candidates(rng: &mut ChaCha8Rng) -> Vec<Candidate> {
    let pooled = rng.gen_bool(0.3);
    candidates_from(rng, pooled)
}

/// Continuous metrics only, so exact score ties are practically absent.
pub fn continuous_candidates(rng: &mut ChaCha8Rng) -> Vec<Candidate> {
    candidates_from(rng, false)
}

fn candidates_from(rng: &mut ChaCha8Rng, pooled: bool) -> Vec<Candidate> {
    let n = rng.gen_range(3..=16);
    let draw = |rng: &mut ChaCha8Rng, lo: f64, hi: f64| {
        if pooled {
            lo + (hi - lo) * f64::from(rng.gen_range(0..4u8)) / 3.0
        } else {
            rng.gen_range(lo..=hi)
        }
    };
    let mut out = Vec::with_capacity(n);
    let mut next_exit = 1;
    let mut next_skip = 0;
    let with_repartition = rng.gen_bool(0.7);
    for i in 0..n {
        let action = if i == 0 && with_repartition {
            Action::Repartition(Placement {
                assignment: vec![NodeId(1)],
            })
        } else if rng.gen_bool(0.5) {
            next_exit += rng.gen_range(1..3);
            Action::EarlyExit(next_exit)
        } else {
            next_skip += rng.gen_range(1..3);
            Action::SkipConnection(next_skip)
        };
        let metrics = MetricTriple {
            accuracy: draw(rng, 0.5, 0.9),
            latency_ms: draw(rng, 1.0, 40.0),
            downtime_ms: draw(rng, 0.5, 20.0),
        };
        out.push(Candidate { action, metrics });
    }
    // Shuffle so the repartition entry is not always first.
    for i in (1..out.len()).rev() {
        let j = rng.gen_range(0..=i);
        out.swap(i, j);
    }
    out
}

pub fn random_weights(rng: &mut ChaCha8Rng) -> Weights {
    loop {
        let mut w = || {
            if rng.gen_bool(0.15) {
                0.0
            } else {
                rng.gen_range(0.0..=1.0)
            }
        };
        if let Ok(w) = Weights::new(w(), w(), w()) {
            return w;
        }
    }
}

pub fn random_thresholds(rng: &mut ChaCha8Rng) -> Thresholds {
    let mut t = Thresholds::default();
    if rng.gen_bool(0.3) {
        t.min_accuracy = Some(rng.gen_range(0.5..0.85));
    }
    if rng.gen_bool(0.3) {
        t.max_latency_ms = Some(rng.gen_range(5.0..40.0));
    }
    if rng.gen_bool(0.3) {
        t.max_downtime_ms = Some(rng.gen_range(2.0..20.0));
    }
    t
}

/// Descriptive statistics computed from first principles: mean, population
/// variance and the 0/25/50/75/100th percentiles using the
/// `(n - 1) * q` rank with linear interpolation.
pub fn stats_oracle(values: &[f64]) -> [f64; 7] {
    let n = values.len();
    let mut sorted = values.to_vec();
    // insertion sort keeps this independent of the library's ordering
    for i in 1..n {
        let mut j = i;
        while j > 0 && sorted[j - 1] > sorted[j] {
            sorted.swap(j - 1, j);
            j -= 1;
        }
    }
    let mut total = 0.0;
    for v in &sorted {
        total += v;
    }
    let mean = total / n as f64;
    let mut sq = 0.0;
    for v in &sorted {
        sq += (v - mean) * (v - mean);
    }
    let var = sq / n as f64;
    let pct = |q: f64| {
        let rank = (n - 1) as f64 * q;
        let below = rank as usize;
        if below + 1 >= n {
            return sorted[n - 1];
        }
        let weight = rank - below as f64;
        sorted[below] * (1.0 - weight) + sorted[below + 1] * weight
    };
    [mean, var, pct(0.0), pct(0.25), pct(0.5), pct(0.75), pct(1.0)]
}

/// Best single split by exhaustive enumeration of every threshold between
/// consecutive distinct values. Returns `(sse, feature, threshold)` or
/// `None` when no split exists.
pub fn brute_force_stump(x: &[Vec<f64>], y: &[f64]) -> Option<(f64, usize, f64)> {
    let sse = |ys: &[f64]| {
        if ys.is_empty() {
            return 0.0;
        }
        let m = ys.iter().sum::<f64>() / ys.len() as f64;
        ys.iter().map(|v| (v - m) * (v - m)).sum::<f64>()
    };
    let mut best: Option<(f64, usize, f64)> = None;
    let features = x.first().map_or(0, |r| r.len());
    for f in 0..features {
        let mut values: Vec<f64> = x.iter().map(|r| r[f]).collect();
        values.sort_by(f64::total_cmp);
        values.dedup();
        for pair in values.windows(2) {
            let threshold = pair[0] + (pair[1] - pair[0]) / 2.0;
            let (mut left, mut right) = (Vec::new(), Vec::new());
            for (row, &target) in x.iter().zip(y) {
                if row[f] <= threshold {
                    left.push(target);
                } else {
                    right.push(target);
                }
            }
            let total = sse(&left) + sse(&right);
            if best.is_none_or(|(b, _, _)| total < b) {
                best = Some((total, f, threshold));
            }
        }
    }
    best
}

pub fn sse_of_split(x: &[Vec<f64>], y: &[f64], feature: usize, threshold: f64) -> f64 {
    let (mut left, mut right) = (Vec::new(), Vec::new());
    for (row, &target) in x.iter().zip(y) {
        if row[feature] <= threshold {
            left.push(target);
        } else {
            right.push(target);
        }
    }
    let sse = |ys: &[f64]| {
        if ys.is_empty() {
            return 0.0;
        }
        let m = ys.iter().sum::<f64>() / ys.len() as f64;
        ys.iter().map(|v| (v - m) * (v - m)).sum::<f64>()
    };
    sse(&left) + sse(&right)
}

/// All compositions of `n` items into `parts` non-empty runs.
pub fn compositions(n: usize, parts: usize) -> Vec<Vec<usize>> {
    if parts == 1 {
        return vec![vec![n]];
    }
    let mut out = Vec::new();
    for first in 1..=n - (parts - 1) {
        for mut rest in compositions(n - first, parts - 1) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

pub fn feature_rows(x: &[Vec<f64>]) -> Vec<FeatureVector> {
    let names: Vec<String> = (0..x[0].len()).map(|i| format!("f{i}")).collect();
    let s = schema(&names);
    x.iter()
        .map(|r| FeatureVector::new(r.clone(), s.clone()).unwrap())
        .collect()
}

pub fn random_dataset(seed: u64, n: usize, features: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut r = rng(seed);
    let coarse = r.gen_bool(0.5);
    let x: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            (0..features)
                .map(|_| {
                    if coarse {
                        f64::from(r.gen_range(0..6u8))
                    } else {
                        r.gen_range(-5.0..5.0)
                    }
                })
                .collect()
        })
        .collect();
    let y = x
        .iter()
        .map(|row| {
            row.iter()
                .enumerate()
                .map(|(i, v)| v * (i as f64 + 1.0))
                .sum::<f64>()
                .sin()
                * 3.0
                + r.gen_range(-0.5..0.5)
        })
        .collect();
    (x, y)
}

/// Held-out R² of the default model on a grid whose targets follow an
/// exact linear cost law.
pub fn linear_cost_law_r2() -> f64 {
    let mut x = Vec::new();
    let mut y = Vec::new();
    for h in 1..=12 {
        for c in 1..=12 {
            for k in 1..=12 {
                let (h, c, k) = (f64::from(h), f64::from(c), f64::from(k));
                x.push(vec![h, c, k]);
                y.push(0.2 + 0.05 * h + 0.03 * c + 0.08 * k);
            }
        }
    }
    let data = feature_rows(&x);
    let ((xt, yt), (xv, yv)) = split_dataset(&data, &y, 0.8, 42);
    let model = gbdt_fit(&xt, &yt, &GbdtParams::default()).unwrap();
    let pred: Vec<f64> = xv.iter().map(|r| model.predict(r).unwrap()).collect();
    evaluate_regression(&yv, &pred).unwrap().r2
}
