//! Weighted-additive technique selection over min-max normalized metrics.

use std::cmp::Ordering;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::candidate::{Candidate, MetricTriple};
use crate::error::{Rejection, ScheduleError};

/// Linear max-min normalization to [0, 1]. A constant column maps to zeros.
pub fn normalize_min_max(values: &[f64]) -> Result<Vec<f64>, ScheduleError> {
    if values.is_empty() {
        return Err(ScheduleError::EmptyInput);
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(ScheduleError::NonFinite);
    }
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == min {
        return Ok(vec![0.0; values.len()]);
    }
    Ok(values.iter().map(|x| (x - min) / (max - min)).collect())
}

/// Unspecified weights default to zero.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    #[serde(default)]
    pub accuracy: f64,
    #[serde(default)]
    pub latency: f64,
    #[serde(default)]
    pub downtime: f64,
}

impl Weights {
    pub fn new(accuracy: f64, latency: f64, downtime: f64) -> Result<Self, ScheduleError> {
        let w = Weights {
            accuracy,
            latency,
            downtime,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<(), ScheduleError> {
        let all = [self.accuracy, self.latency, self.downtime];
        if all.iter().any(|w| !(0.0..=1.0).contains(w)) {
            return Err(ScheduleError::InvalidWeights(format!(
                "({}, {}, {}) must each lie in [0, 1]",
                self.accuracy, self.latency, self.downtime
            )));
        }
        if all.iter().all(|&w| w == 0.0) {
            return Err(ScheduleError::InvalidWeights(
                "at least one weight must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_accuracy: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_latency_ms: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_downtime_ms: Option<f64>,
}

impl Thresholds {
    pub fn validate(&self) -> Result<(), ScheduleError> {
        if let Some(a) = self.min_accuracy {
            if !(0.0..=1.0).contains(&a) {
                return Err(ScheduleError::InvalidThreshold(format!(
                    "min accuracy {a} outside [0, 1]"
                )));
            }
        }
        for (name, v) in [
            ("max latency", self.max_latency_ms),
            ("max downtime", self.max_downtime_ms),
        ] {
            if let Some(v) = v {
                if !(v.is_finite() && v >= 0.0) {
                    return Err(ScheduleError::InvalidThreshold(format!("{name} {v} must be >= 0")));
                }
            }
        }
        Ok(())
    }

    /// Names of the thresholds `m` violates.
    pub fn violations(&self, m: &MetricTriple) -> Vec<String> {
        let mut out = Vec::new();
        if let Some(min) = self.min_accuracy {
            if m.accuracy < min {
                out.push(format!("accuracy {} < {}", m.accuracy, min));
            }
        }
        if let Some(max) = self.max_latency_ms {
            if m.latency_ms > max {
                out.push(format!("latency {} ms > {} ms", m.latency_ms, max));
            }
        }
        if let Some(max) = self.max_downtime_ms {
            if m.downtime_ms > max {
                out.push(format!("downtime {} ms > {} ms", m.downtime_ms, max));
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Normalized {
    pub accuracy: f64,
    pub latency: f64,
    pub downtime: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Scored {
    pub normalized: Normalized,
    pub score: f64,
}

/// Normalizes each metric column across `candidates` and computes
/// `w_a * A' - w_l * L' - w_d * D'`. Higher is better.
pub fn score_candidates(candidates: &[Candidate], weights: &Weights) -> Result<Vec<Scored>, ScheduleError> {
    if candidates.is_empty() {
        return Err(ScheduleError::EmptyCandidates);
    }
    let column =
        |f: fn(&MetricTriple) -> f64| normalize_min_max(&candidates.iter().map(|c| f(&c.metrics)).collect::<Vec<_>>());
    let acc = column(|m| m.accuracy)?;
    let lat = column(|m| m.latency_ms)?;
    let down = column(|m| m.downtime_ms)?;
    Ok((0..candidates.len())
        .map(|i| Scored {
            normalized: Normalized {
                accuracy: acc[i],
                latency: lat[i],
                downtime: down[i],
            },
            score: weights.accuracy * acc[i] - weights.latency * lat[i] - weights.downtime * down[i],
        })
        .collect())
}

/// Ordering used to pick a winner: higher score, then technique rank
/// (repartition, skip, early exit), then lower action id.
pub fn preference(a: (&Candidate, f64), b: (&Candidate, f64)) -> Ordering {
    b.1.total_cmp(&a.1)
        .then(a.0.technique().tie_rank().cmp(&b.0.technique().tie_rank()))
        .then(a.0.action.id().cmp(&b.0.action.id()))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Evaluation {
    /// Index into the caller's candidate list.
    pub index: usize,
    pub normalized: Normalized,
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Decision {
    pub chosen: Candidate,
    pub chosen_index: usize,
    /// One entry per candidate that passed the thresholds.
    pub evaluations: Vec<Evaluation>,
    pub rejected: Vec<(usize, Rejection)>,
    pub selection_time_ms: f64,
}

impl Decision {
    pub fn score_of(&self, index: usize) -> Option<f64> {
        self.evaluations.iter().find(|e| e.index == index).map(|e| e.score)
    }
}

/// Indices of candidates that satisfy every threshold, plus rejections.
pub fn filter_by_thresholds(
    candidates: &[Candidate],
    thresholds: &Thresholds,
) -> (Vec<usize>, Vec<(usize, Rejection)>) {
    let mut kept = Vec::new();
    let mut rejected = Vec::new();
    for (i, c) in candidates.iter().enumerate() {
        let violated = thresholds.violations(&c.metrics);
        if violated.is_empty() {
            kept.push(i);
        } else {
            rejected.push((
                i,
                Rejection {
                    candidate: c.label(),
                    violated,
                },
            ));
        }
    }
    (kept, rejected)
}

pub fn select_technique(
    candidates: &[Candidate],
    weights: &Weights,
    thresholds: &Thresholds,
) -> Result<Decision, ScheduleError> {
    let started = Instant::now();
    if candidates.is_empty() {
        return Err(ScheduleError::EmptyCandidates);
    }
    weights.validate()?;
    thresholds.validate()?;
    let (kept, rejected) = filter_by_thresholds(candidates, thresholds);
    if kept.is_empty() {
        return Err(ScheduleError::AllFilteredOut(
            rejected.into_iter().map(|(_, r)| r).collect(),
        ));
    }
    let survivors: Vec<Candidate> = kept.iter().map(|&i| candidates[i].clone()).collect();
    let scored = score_candidates(&survivors, weights)?;
    let best = (0..survivors.len())
        .min_by(|&a, &b| preference((&survivors[a], scored[a].score), (&survivors[b], scored[b].score)))
        .expect("non-empty");
    let evaluations = kept
        .iter()
        .zip(&scored)
        .map(|(&index, s)| Evaluation {
            index,
            normalized: s.normalized,
            score: s.score,
        })
        .collect();
    Ok(Decision {
        chosen: survivors[best].clone(),
        chosen_index: kept[best],
        evaluations,
        rejected,
        selection_time_ms: started.elapsed().as_secs_f64() * 1e3,
    })
}
