//! Load disruptions at activities, their resolution scopes, and the waiting
//! time robustness indicator.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aspects::{AspectEngine, AspectKind};
use crate::detection::nearest_rank;
use crate::event_log::{ActivityId, ComponentId, EventId};
use crate::framing::WindowIndex;
use crate::util::sorted_dedup;

/// Half-width of the band around 1 read as minimal impact.
pub const MINIMAL_IMPACT_BAND: f64 = 0.1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RobustnessError {
    #[error("activity {0} is never queued for")]
    NoQueueing(String),
    #[error("invalid robustness threshold: {0}")]
    Threshold(&'static str),
}

/// Thresholds of one activity; unset fields fall back to the defaults.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThresholdOverrides {
    /// `q_a`, minimum queue length.
    pub queue: Option<f64>,
    /// `p_a`, minimum share of fresh arrivals in the queue.
    pub enqueue_ratio: Option<f64>,
    /// `t_a`, minimum takeover.
    pub takeover: Option<usize>,
    /// `tr_a`, minimum takeover ratio.
    pub takeover_ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobustnessPolicy {
    /// Percentile of the queue series used for `q_a` when unset.
    pub queue_percentile: f64,
    pub defaults: ThresholdOverrides,
    pub per_activity: BTreeMap<ActivityId, ThresholdOverrides>,
}

impl Default for RobustnessPolicy {
    fn default() -> Self {
        RobustnessPolicy {
            queue_percentile: 90.0,
            defaults: ThresholdOverrides::default(),
            per_activity: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Thresholds {
    pub queue: f64,
    pub enqueue_ratio: f64,
    pub takeover: usize,
    pub takeover_ratio: f64,
}

impl RobustnessPolicy {
    pub fn resolve(
        &self,
        a: ActivityId,
        queue_values: &[f64],
    ) -> Result<Thresholds, RobustnessError> {
        let own = self.per_activity.get(&a).copied().unwrap_or_default();
        let d = self.defaults;
        let queue = match own.queue.or(d.queue) {
            Some(q) => q,
            None => {
                if !(self.queue_percentile > 0.0 && self.queue_percentile <= 100.0) {
                    return Err(RobustnessError::Threshold(
                        "queue percentile outside (0, 100]",
                    ));
                }
                let mut sorted = queue_values.to_vec();
                sorted.sort_by(f64::total_cmp);
                nearest_rank(&sorted, self.queue_percentile).unwrap_or(0.0)
            }
        };
        let enqueue_ratio = own.enqueue_ratio.or(d.enqueue_ratio).unwrap_or(0.5);
        let takeover_ratio = own.takeover_ratio.or(d.takeover_ratio).unwrap_or(0.5);
        for r in [enqueue_ratio, takeover_ratio] {
            if !(0.0..=1.0).contains(&r) {
                return Err(RobustnessError::Threshold("ratios must lie in [0, 1]"));
            }
        }
        let takeover = own
            .takeover
            .or(d.takeover)
            .unwrap_or_else(|| ((queue / 2.0).ceil() as usize).max(1));
        Ok(Thresholds {
            queue,
            enqueue_ratio,
            takeover,
            takeover_ratio,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Disruption {
    pub activity: ActivityId,
    pub window: WindowIndex,
    pub queue_value: usize,
    pub enqueue_value: usize,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResolutionScope {
    pub disruption: Disruption,
    /// Contiguous, starting at the disruption window.
    pub windows: Vec<WindowIndex>,
    pub takeover: Vec<usize>,
    pub takeover_ratio: Vec<f64>,
}

/// Queue and enqueue event sets of one activity, per window.
pub struct QueueProfile {
    pub activity: ActivityId,
    pub first: WindowIndex,
    pub queue: Vec<Vec<EventId>>,
    pub enqueue: Vec<Vec<EventId>>,
}

impl QueueProfile {
    pub fn new(engine: &AspectEngine<'_>, a: ActivityId) -> Self {
        let c = ComponentId::Activity(a);
        let sets = |k| {
            engine
                .series(k, c)
                .expect("activity of the log")
                .into_iter()
                .map(|ev| ev.event_set)
                .collect()
        };
        QueueProfile {
            activity: a,
            first: engine.windows().first(),
            queue: sets(AspectKind::Queue),
            enqueue: sets(AspectKind::Enqueue),
        }
    }

    fn pos(&self, w: WindowIndex) -> usize {
        (w - self.first) as usize
    }

    pub fn windows(&self) -> impl Iterator<Item = WindowIndex> + '_ {
        (0..self.queue.len()).map(|i| self.first + i as WindowIndex)
    }

    pub fn queue_len(&self, w: WindowIndex) -> usize {
        self.queue[self.pos(w)].len()
    }

    pub fn enqueue_len(&self, w: WindowIndex) -> usize {
        self.enqueue[self.pos(w)].len()
    }

    /// Queued events that arrived in an earlier window.
    pub fn takeover(&self, w: WindowIndex) -> usize {
        let fresh = &self.enqueue[self.pos(w)];
        self.queue[self.pos(w)]
            .iter()
            .filter(|e| fresh.binary_search(e).is_err())
            .count()
    }

    /// `None` when the queue is empty.
    pub fn takeover_ratio(&self, w: WindowIndex) -> Option<f64> {
        let q = self.queue_len(w);
        (q > 0).then(|| self.takeover(w) as f64 / q as f64)
    }
}

pub fn detect_disruptions(profile: &QueueProfile, th: &Thresholds) -> Vec<Disruption> {
    profile
        .windows()
        .filter_map(|w| {
            let q = profile.queue_len(w);
            if q == 0 || (q as f64) < th.queue {
                return None;
            }
            let en = profile.enqueue_len(w);
            let ratio = en as f64 / q as f64;
            (ratio >= th.enqueue_ratio).then_some(Disruption {
                activity: profile.activity,
                window: w,
                queue_value: q,
                enqueue_value: en,
                ratio,
            })
        })
        .collect()
}

pub fn resolution_scope(
    profile: &QueueProfile,
    d: &Disruption,
    th: &Thresholds,
) -> ResolutionScope {
    let mut scope = ResolutionScope {
        disruption: d.clone(),
        windows: Vec::new(),
        takeover: Vec::new(),
        takeover_ratio: Vec::new(),
    };
    let last = profile.first + profile.queue.len() as WindowIndex - 1;
    let mut w = d.window;
    loop {
        let t = profile.takeover(w);
        let r = profile.takeover_ratio(w).unwrap_or(0.0);
        scope.windows.push(w);
        scope.takeover.push(t);
        scope.takeover_ratio.push(r);
        w += 1;
        if w > last {
            break;
        }
        let next_r = profile.takeover_ratio(w);
        if !(profile.takeover(w) >= th.takeover && next_r.is_some_and(|r| r >= th.takeover_ratio)) {
            break;
        }
    }
    scope
}

/// How an indicator value reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Reading {
    Undefined,
    Minimal,
    Adverse,
    Improved,
}

impl Reading {
    pub fn of(r_wt: Option<f64>) -> Self {
        match r_wt {
            None => Reading::Undefined,
            Some(r) if (r - 1.0).abs() <= MINIMAL_IMPACT_BAND => Reading::Minimal,
            Some(r) if r > 1.0 => Reading::Adverse,
            Some(_) => Reading::Improved,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Reading::Undefined => "undefined",
            Reading::Minimal => "minimal",
            Reading::Adverse => "adverse",
            Reading::Improved => "improved",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RobustnessReport {
    pub activity: ActivityId,
    pub thresholds: Thresholds,
    pub disruptions: Vec<Disruption>,
    pub scopes: Vec<ResolutionScope>,
    pub affected: usize,
    pub unaffected: usize,
    /// Mean wait of affected queueing events, seconds.
    pub wt: Option<f64>,
    pub wt_unaffected: Option<f64>,
    pub r_wt: Option<f64>,
    pub reading: Reading,
}

fn mean_wait_secs(engine: &AspectEngine<'_>, events: &[EventId]) -> Option<f64> {
    if events.is_empty() {
        return None;
    }
    let log = engine.log();
    let total: i64 = events
        .iter()
        .map(|&e| log.time(log.next(e).expect("queueing event")).millis() - log.time(e).millis())
        .sum();
    Some(total as f64 / events.len() as f64 / 1000.0)
}

/// Compares waits of events queued during disruption scopes with all other
/// events queued for `a`.
pub fn waiting_time_robustness(
    engine: &AspectEngine<'_>,
    profile: &QueueProfile,
    thresholds: Thresholds,
    scopes: Vec<ResolutionScope>,
) -> Result<RobustnessReport, RobustnessError> {
    let a = profile.activity;
    let all = engine.log().predecessors_of_activity(a);
    if all.is_empty() {
        return Err(RobustnessError::NoQueueing(
            engine.log().activity_name(a).to_string(),
        ));
    }
    let affected = sorted_dedup(
        scopes
            .iter()
            .flat_map(|s| {
                s.windows
                    .iter()
                    .flat_map(|&w| profile.queue[profile.pos(w)].iter().copied())
            })
            .collect(),
    );
    let unaffected: Vec<EventId> = all
        .iter()
        .copied()
        .filter(|e| affected.binary_search(e).is_err())
        .collect();
    let wt = mean_wait_secs(engine, &affected);
    let wt_unaffected = mean_wait_secs(engine, &unaffected);
    let r_wt = match (wt, wt_unaffected) {
        (Some(x), Some(y)) if y > 0.0 => Some(x / y),
        _ => None,
    };
    Ok(RobustnessReport {
        activity: a,
        thresholds,
        disruptions: scopes.iter().map(|s| s.disruption.clone()).collect(),
        scopes,
        affected: affected.len(),
        unaffected: unaffected.len(),
        wt,
        wt_unaffected,
        r_wt,
        reading: Reading::of(r_wt),
    })
}

/// Full analysis of one activity.
pub fn analyze_activity(
    engine: &AspectEngine<'_>,
    policy: &RobustnessPolicy,
    a: ActivityId,
) -> Result<RobustnessReport, RobustnessError> {
    let profile = QueueProfile::new(engine, a);
    let queue_values: Vec<f64> = profile.queue.iter().map(|s| s.len() as f64).collect();
    let th = policy.resolve(a, &queue_values)?;
    let scopes = detect_disruptions(&profile, &th)
        .iter()
        .map(|d| resolution_scope(&profile, d, &th))
        .collect();
    waiting_time_robustness(engine, &profile, th, scopes)
}

/// Reports for every activity that is queued for, in activity order.
pub fn analyze(
    engine: &AspectEngine<'_>,
    policy: &RobustnessPolicy,
) -> Result<Vec<RobustnessReport>, RobustnessError> {
    let log = engine.log();
    let acts: Vec<ActivityId> = log
        .activities()
        .filter(|&a| !log.predecessors_of_activity(a).is_empty())
        .collect();
    acts.par_iter()
        .map(|&a| analyze_activity(engine, policy, a))
        .collect()
}
