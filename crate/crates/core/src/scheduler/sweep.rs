//! Weight-grid sweeps that compare selections made on estimated metrics
//! against selections made on measured metrics.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::candidate::{Candidate, Technique};
use crate::error::ScheduleError;
use crate::par::Exec;
use crate::scheduler::select::{select_technique, Thresholds, Weights};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AxisSpec {
    pub min: f64,
    pub max: f64,
    pub step: f64,
}

impl AxisSpec {
    pub fn values(&self) -> Result<Vec<f64>, ScheduleError> {
        let ok = [self.min, self.max, self.step].iter().all(|v| v.is_finite())
            && self.step > 0.0
            && self.min >= 0.0
            && self.max <= 1.0
            && self.min <= self.max;
        if !ok {
            return Err(ScheduleError::InvalidWeights(format!(
                "grid axis {}:{}:{} must satisfy 0 <= min <= max <= 1 and step > 0",
                self.min, self.max, self.step
            )));
        }
        let count = ((self.max - self.min) / self.step + 1e-9).floor() as usize + 1;
        // Rounded so 0.1 + 2 * 0.1 prints as 0.3.
        Ok((0..count)
            .map(|i| ((self.min + i as f64 * self.step) * 1e12).round() / 1e12)
            .collect())
    }
}

impl Default for AxisSpec {
    fn default() -> Self {
        AxisSpec {
            min: 0.1,
            max: 0.9,
            step: 0.1,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub accuracy: AxisSpec,
    pub latency: AxisSpec,
    pub downtime: AxisSpec,
}

impl GridSpec {
    pub fn uniform(axis: AxisSpec) -> Self {
        GridSpec {
            accuracy: axis,
            latency: axis,
            downtime: axis,
        }
    }

    /// Cartesian product in accuracy-major order. The all-zero triple is
    /// left out because it ranks nothing.
    pub fn weights(&self) -> Result<Vec<Weights>, ScheduleError> {
        let (a, l, d) = (self.accuracy.values()?, self.latency.values()?, self.downtime.values()?);
        let mut out = Vec::with_capacity(a.len() * l.len() * d.len());
        for &wa in &a {
            for &wl in &l {
                for &wd in &d {
                    if let Ok(w) = Weights::new(wa, wl, wd) {
                        out.push(w);
                    }
                }
            }
        }
        Ok(out)
    }
}

/// One failure instance: the same candidate set priced twice.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepScenario {
    pub label: String,
    pub estimated: Vec<Candidate>,
    pub measured: Vec<Candidate>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScenarioSummary {
    pub label: String,
    pub instances: usize,
    pub correct: usize,
    /// Weight settings where no measured candidate met the thresholds.
    pub skipped: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepReport {
    pub weight_settings: usize,
    pub instances: usize,
    pub correct: usize,
    pub skipped: usize,
    pub classification_accuracy: f64,
    /// How often each technique is the measured-metric choice.
    pub measured_choices: BTreeMap<Technique, usize>,
    pub scenarios: Vec<ScenarioSummary>,
}

impl SweepReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_table(&self) -> String {
        let width = self.scenarios.iter().map(|s| s.label.len()).max().unwrap_or(0).max(8);
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<width$}  {:>9}  {:>7}  {:>7}  {:>8}",
            "scenario", "instances", "correct", "skipped", "accuracy"
        );
        for s in &self.scenarios {
            let _ = writeln!(
                out,
                "{:<width$}  {:>9}  {:>7}  {:>7}  {:>8.4}",
                s.label,
                s.instances,
                s.correct,
                s.skipped,
                ratio(s.correct, s.instances)
            );
        }
        let _ = writeln!(
            out,
            "{:<width$}  {:>9}  {:>7}  {:>7}  {:>8.4}",
            "total", self.instances, self.correct, self.skipped, self.classification_accuracy
        );
        for (t, n) in &self.measured_choices {
            let _ = writeln!(out, "measured choice {t}: {n}");
        }
        out
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

enum Outcome {
    Skipped,
    Judged { correct: bool, measured: Technique },
}

fn judge(scenario: &SweepScenario, weights: &Weights, thresholds: &Thresholds) -> Result<Outcome, ScheduleError> {
    let truth = match select_technique(&scenario.measured, weights, thresholds) {
        Ok(d) => d.chosen,
        Err(ScheduleError::AllFilteredOut(_)) => return Ok(Outcome::Skipped),
        Err(e) => return Err(e),
    };
    let guess = match select_technique(&scenario.estimated, weights, thresholds) {
        Ok(d) => Some(d.chosen.key()),
        Err(ScheduleError::AllFilteredOut(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(Outcome::Judged {
        correct: guess == Some(truth.key()),
        measured: truth.technique(),
    })
}

/// Runs every (scenario, weight setting) pair. The report is independent of
/// `exec`.
pub fn sweep(
    scenarios: &[SweepScenario],
    grid: &GridSpec,
    thresholds: &Thresholds,
    exec: Exec,
) -> Result<SweepReport, ScheduleError> {
    thresholds.validate()?;
    let weights = grid.weights()?;
    if weights.is_empty() {
        return Err(ScheduleError::InvalidWeights(
            "grid contains no usable weight setting".into(),
        ));
    }
    let per = weights.len();
    let outcomes = exec.map_range(scenarios.len() * per, |i| {
        let (s, w) = (i / per, i % per);
        judge(&scenarios[s], &weights[w], thresholds).map_err(|e| ScheduleError::Scenario {
            index: s,
            message: e.to_string(),
        })
    });

    let mut summaries: Vec<ScenarioSummary> = scenarios
        .iter()
        .map(|s| ScenarioSummary {
            label: s.label.clone(),
            instances: 0,
            correct: 0,
            skipped: 0,
        })
        .collect();
    let mut measured_choices: BTreeMap<Technique, usize> = Technique::ALL.iter().map(|&t| (t, 0)).collect();
    for (i, outcome) in outcomes.into_iter().enumerate() {
        let summary = &mut summaries[i / per];
        match outcome? {
            Outcome::Skipped => summary.skipped += 1,
            Outcome::Judged { correct, measured } => {
                summary.instances += 1;
                summary.correct += usize::from(correct);
                *measured_choices.entry(measured).or_default() += 1;
            }
        }
    }
    let instances = summaries.iter().map(|s| s.instances).sum();
    let correct = summaries.iter().map(|s| s.correct).sum();
    let skipped = summaries.iter().map(|s| s.skipped).sum();
    Ok(SweepReport {
        weight_settings: per,
        instances,
        correct,
        skipped,
        classification_accuracy: ratio(correct, instances),
        measured_choices,
        scenarios: summaries,
    })
}
