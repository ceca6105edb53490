//! Proximity between high-level events.

use std::collections::HashMap;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aspects::AspectKind;
use crate::detection::HighLevelEvent;
use crate::event_log::{ActivityId, ComponentId, EventId, EventLog};
use crate::util::{jaccard, sorted_dedup};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProximityMethod {
    /// Component link, for high-level events in the same or the next window.
    #[default]
    Link,
    /// 1 for the same component in the same or the next window.
    StrictLink,
    /// Case overlap of segment-based events where the first ends where the second begins.
    SegmentOverlap,
    /// Share of the second event's causes that directly follow the first's.
    InstanceOverlap,
}

impl ProximityMethod {
    pub fn name(self) -> &'static str {
        match self {
            ProximityMethod::Link => "link",
            ProximityMethod::StrictLink => "strict_link",
            ProximityMethod::SegmentOverlap => "segment_overlap",
            ProximityMethod::InstanceOverlap => "instance_overlap",
        }
    }
}

impl FromStr for ProximityMethod {
    type Err = ProximityError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [
            ProximityMethod::Link,
            ProximityMethod::StrictLink,
            ProximityMethod::SegmentOverlap,
            ProximityMethod::InstanceOverlap,
        ]
        .into_iter()
        .find(|m| m.name() == s)
        .ok_or_else(|| ProximityError::UnknownMethod(s.to_string()))
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProximityError {
    #[error("component is not part of the log")]
    UnknownComponent,
    #[error("segment overlap needs segment-based high-level events, got {0}")]
    NotSegmentBased(AspectKind),
    #[error("unknown proximity method {0:?}")]
    UnknownMethod(String),
}

/// Per-log data shared by proximity evaluations: involvement sets and a lazily
/// filled link table.
pub struct ProximityContext<'a> {
    log: &'a EventLog,
    index: HashMap<ComponentId, usize>,
    involvement: Vec<Vec<EventId>>,
    links: Vec<OnceLock<f64>>,
}

impl<'a> ProximityContext<'a> {
    pub fn new(log: &'a EventLog) -> Self {
        let components = log.components();
        let index: HashMap<ComponentId, usize> = components
            .iter()
            .enumerate()
            .map(|(i, &c)| (c, i))
            .collect();
        let mut involvement: Vec<Vec<EventId>> = vec![Vec::new(); components.len()];
        for e in log.events() {
            let neighbours = [Some(e.id), log.prev(e.id), log.next(e.id)];
            for n in neighbours.into_iter().flatten() {
                involvement[index[&ComponentId::Activity(log.activity_of(n))]].push(e.id);
                if let Some(r) = log.resource_of(n) {
                    involvement[index[&ComponentId::Resource(r)]].push(e.id);
                }
            }
            if let Some(nx) = log.next(e.id) {
                let seg = index[&ComponentId::Segment(e.activity, log.activity_of(nx))];
                involvement[seg].push(e.id);
                involvement[seg].push(nx);
            }
        }
        let involvement: Vec<Vec<EventId>> = involvement.into_iter().map(sorted_dedup).collect();
        let links = (0..components.len() * components.len())
            .map(|_| OnceLock::new())
            .collect();
        ProximityContext {
            log,
            index,
            involvement,
            links,
        }
    }

    pub fn log(&self) -> &'a EventLog {
        self.log
    }

    /// Events that involve `c`.
    pub fn involvement(&self, c: ComponentId) -> Result<&[EventId], ProximityError> {
        let i = *self.index.get(&c).ok_or(ProximityError::UnknownComponent)?;
        Ok(&self.involvement[i])
    }

    /// Jaccard index of the involvement sets; symmetric, 1 on the diagonal.
    pub fn link(&self, c1: ComponentId, c2: ComponentId) -> Result<f64, ProximityError> {
        let i = *self
            .index
            .get(&c1)
            .ok_or(ProximityError::UnknownComponent)?;
        let j = *self
            .index
            .get(&c2)
            .ok_or(ProximityError::UnknownComponent)?;
        if i == j {
            return Ok(1.0);
        }
        let (lo, hi) = (i.min(j), i.max(j));
        let n = self.involvement.len();
        Ok(*self.links[lo * n + hi]
            .get_or_init(|| jaccard(&self.involvement[lo], &self.involvement[hi])))
    }

    pub fn proximity(
        &self,
        h1: &HighLevelEvent,
        h2: &HighLevelEvent,
        method: ProximityMethod,
    ) -> Result<f64, ProximityError> {
        let adjacent = h2.window == h1.window || h2.window == h1.window + 1;
        match method {
            ProximityMethod::Link => {
                let l = self.link(h1.component, h2.component)?;
                Ok(if adjacent { l } else { 0.0 })
            }
            ProximityMethod::StrictLink => {
                for c in [h1.component, h2.component] {
                    self.index.get(&c).ok_or(ProximityError::UnknownComponent)?;
                }
                Ok(if adjacent && h1.component == h2.component {
                    1.0
                } else {
                    0.0
                })
            }
            ProximityMethod::SegmentOverlap => segment_overlap(self.log, h1, h2),
            ProximityMethod::InstanceOverlap => Ok(instance_overlap(self.log, h1, h2)),
        }
    }
}

fn segment_of(h: &HighLevelEvent) -> Result<(ActivityId, ActivityId), ProximityError> {
    match h.component {
        ComponentId::Segment(a, b) => Ok((a, b)),
        _ => Err(ProximityError::NotSegmentBased(h.aspect)),
    }
}

/// `[min, max]` of event times in milliseconds.
fn span(log: &EventLog, events: impl Iterator<Item = EventId>) -> Option<(i64, i64)> {
    events
        .map(|e| log.time(e).millis())
        .fold(None, |acc, t| match acc {
            None => Some((t, t)),
            Some((lo, hi)) => Some((lo.min(t), hi.max(t))),
        })
}

/// Events of `h` projected onto the executions of its segment's second activity.
fn b_side(log: &EventLog, h: &HighLevelEvent) -> Option<(i64, i64)> {
    if h.aspect.executes_segment_target() {
        span(log, h.event_set.iter().copied())
    } else {
        span(log, h.event_set.iter().filter_map(|&e| log.next(e)))
    }
}

/// Events of `h` projected onto the executions of its segment's first activity.
fn a_side(log: &EventLog, h: &HighLevelEvent) -> Option<(i64, i64)> {
    if h.aspect.executes_segment_target() {
        span(log, h.event_set.iter().filter_map(|&e| log.prev(e)))
    } else {
        span(log, h.event_set.iter().copied())
    }
}

fn contains(outer: (i64, i64), inner: (i64, i64)) -> bool {
    outer.0 <= inner.0 && inner.1 <= outer.1
}

/// Case overlap of two segment-based high-level events, gated by location
/// (`b1 = a2`) and time (one span contains the other).
pub fn segment_overlap(
    log: &EventLog,
    h1: &HighLevelEvent,
    h2: &HighLevelEvent,
) -> Result<f64, ProximityError> {
    let (_, b1) = segment_of(h1)?;
    let (a2, _) = segment_of(h2)?;
    if b1 != a2 || h1.window > h2.window {
        return Ok(0.0);
    }
    let (Some(s1), Some(s2)) = (b_side(log, h1), a_side(log, h2)) else {
        return Ok(0.0);
    };
    if !(contains(s1, s2) || contains(s2, s1)) {
        return Ok(0.0);
    }
    Ok(case_overlap(log, h1, h2))
}

/// `|cases(h1) ∩ cases(h2)| / |cases(h1) ∪ cases(h2)|`.
pub fn case_overlap(log: &EventLog, h1: &HighLevelEvent, h2: &HighLevelEvent) -> f64 {
    jaccard(&h1.cases(log), &h2.cases(log))
}

/// `|next(F1) ∩ F2| / |next(F1) ∪ F2|`, 0 when both are empty.
pub fn instance_overlap(log: &EventLog, h1: &HighLevelEvent, h2: &HighLevelEvent) -> f64 {
    let next_f1 = sorted_dedup(h1.event_set.iter().filter_map(|&e| log.next(e)).collect());
    jaccard(&next_f1, &h2.event_set)
}

/// Link between two components of `log`.
pub fn link(c1: ComponentId, c2: ComponentId, log: &EventLog) -> Result<f64, ProximityError> {
    ProximityContext::new(log).link(c1, c2)
}

pub fn proximity(
    h1: &HighLevelEvent,
    h2: &HighLevelEvent,
    method: ProximityMethod,
    log: &EventLog,
) -> Result<f64, ProximityError> {
    ProximityContext::new(log).proximity(h1, h2, method)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event_log::fixtures::l0;

    fn hle(aspect: AspectKind, component: ComponentId, window: i64, ids: &[u32]) -> HighLevelEvent {
        HighLevelEvent {
            aspect,
            component,
            window,
            value: 1.0,
            threshold: 1.0,
            event_set: ids.iter().map(|&n| EventId(n - 1)).collect(),
        }
    }

    #[test]
    fn l0_involvement_and_link() {
        let log = l0();
        let ctx = ProximityContext::new(&log);
        let submit = ComponentId::Activity(log.activity_id("submit").unwrap());
        let jane = ComponentId::Resource(log.resource_id("Jane").unwrap());
        let want: Vec<EventId> = [1, 2, 3, 4, 5, 7].iter().map(|&n| EventId(n - 1)).collect();
        assert_eq!(ctx.involvement(submit).unwrap(), want.as_slice());
        assert_eq!(ctx.involvement(jane).unwrap(), want.as_slice());
        assert_eq!(ctx.link(submit, jane).unwrap(), 1.0);
        for c in log.components() {
            assert_eq!(ctx.link(c, c).unwrap(), 1.0);
            for d in log.components() {
                let l = ctx.link(c, d).unwrap();
                assert!((0.0..=1.0).contains(&l));
                assert_eq!(l, ctx.link(d, c).unwrap());
            }
        }
        assert_eq!(
            ctx.link(submit, ComponentId::Activity(ActivityId(42))),
            Err(ProximityError::UnknownComponent)
        );
    }

    #[test]
    fn link_gating_by_window() {
        let log = l0();
        let ctx = ProximityContext::new(&log);
        let review = ComponentId::Activity(log.activity_id("review").unwrap());
        let a = hle(AspectKind::Exec, review, 1, &[4, 5]);
        let same = hle(AspectKind::Queue, review, 1, &[1, 2, 3]);
        let next = hle(AspectKind::Exec, review, 2, &[7]);
        let far = hle(AspectKind::Exec, review, 3, &[]);
        assert_eq!(
            ctx.proximity(&a, &same, ProximityMethod::Link).unwrap(),
            1.0
        );
        assert_eq!(
            ctx.proximity(&a, &next, ProximityMethod::StrictLink)
                .unwrap(),
            1.0
        );
        assert_eq!(ctx.proximity(&a, &far, ProximityMethod::Link).unwrap(), 0.0);
        assert_eq!(
            ctx.proximity(&next, &a, ProximityMethod::Link).unwrap(),
            0.0
        );
    }

    #[test]
    fn instance_overlap_examples() {
        let log = l0();
        let submit = ComponentId::Activity(log.activity_id("submit").unwrap());
        let review = ComponentId::Activity(log.activity_id("review").unwrap());
        let h1 = hle(AspectKind::Exec, submit, 0, &[1, 2]);
        let h2 = hle(AspectKind::Exec, review, 1, &[4, 5]);
        assert_eq!(instance_overlap(&log, &h1, &h2), 1.0);
        let h3 = hle(AspectKind::Exec, review, 2, &[7]);
        assert_eq!(instance_overlap(&log, &h1, &h3), 0.0);
        let h4 = hle(AspectKind::Exec, review, 1, &[4, 5, 7]);
        assert!((instance_overlap(&log, &h1, &h4) - 2.0 / 3.0).abs() < 1e-12);
        let empty = hle(AspectKind::Exec, review, 3, &[]);
        assert_eq!(instance_overlap(&log, &empty, &empty), 0.0);
    }

    #[test]
    fn segment_overlap_gates() {
        let log = l0();
        let act = |n: &str| log.activity_id(n).unwrap();
        let sr = ComponentId::Segment(act("submit"), act("review"));
        let ra = ComponentId::Segment(act("review"), act("approve"));
        // exit on (submit, review) ends at e4, e5; enter on (review, approve) starts at e4.
        let h1 = hle(AspectKind::Exit, sr, 1, &[4, 5]);
        let h2 = hle(AspectKind::Enter, ra, 1, &[4]);
        assert_eq!(segment_overlap(&log, &h1, &h2).unwrap(), 0.5);
        // Wrong location.
        assert_eq!(segment_overlap(&log, &h2, &h1).unwrap(), 0.0);
        // Disjoint spans.
        let h3 = hle(AspectKind::Enter, ra, 2, &[7]);
        let h4 = hle(AspectKind::Exit, sr, 1, &[4]);
        assert_eq!(segment_overlap(&log, &h4, &h3).unwrap(), 0.0);
        let review = ComponentId::Activity(act("review"));
        assert_eq!(
            segment_overlap(&log, &h1, &hle(AspectKind::Exec, review, 1, &[4])),
            Err(ProximityError::NotSegmentBased(AspectKind::Exec))
        );
    }

    #[test]
    fn method_names() {
        for m in ["link", "strict_link", "segment_overlap", "instance_overlap"] {
            assert_eq!(m.parse::<ProximityMethod>().unwrap().name(), m);
        }
        assert!("cosine".parse::<ProximityMethod>().is_err());
    }
}
