//! Aspect functions: for a component `c` and window `w`, the set of events an
//! aspect is about and the real value it takes.
//!
//! Window membership uses the half-open framing: an event is "before or
//! during" `w` when its window index is `<= w`, and its successor is "during
//! or after" `w` when the successor's index is `>= w`. State aspects therefore
//! place an event into every window from its own up to its successor's.

use std::fmt;
use std::ops::RangeInclusive;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::event_log::{ActivityId, ComponentId, ComponentKind, EventId, EventLog, ResourceId};
use crate::framing::{TimeWindows, WindowIndex};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AspectKind {
    #[serde(rename = "exec")]
    Exec,
    #[serde(rename = "enqueue")]
    Enqueue,
    #[serde(rename = "queue")]
    Queue,
    #[serde(rename = "do")]
    Do,
    #[serde(rename = "todo")]
    Todo,
    #[serde(rename = "workload")]
    Workload,
    #[serde(rename = "enter")]
    Enter,
    #[serde(rename = "exit")]
    Exit,
    #[serde(rename = "cross")]
    Cross,
    #[serde(rename = "handover")]
    Handover,
    #[serde(rename = "delayStart")]
    DelayStart,
    #[serde(rename = "delayEnd")]
    DelayEnd,
    #[serde(rename = "delayIn")]
    DelayIn,
    #[serde(rename = "delayNow")]
    DelayNow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AspectCategory {
    /// Event sets confined to the evaluated window.
    Action,
    /// Event sets carried over from earlier windows.
    State,
}

impl AspectKind {
    pub const ALL: [AspectKind; 14] = [
        AspectKind::Exec,
        AspectKind::Enqueue,
        AspectKind::Queue,
        AspectKind::Do,
        AspectKind::Todo,
        AspectKind::Workload,
        AspectKind::Enter,
        AspectKind::Exit,
        AspectKind::Cross,
        AspectKind::Handover,
        AspectKind::DelayStart,
        AspectKind::DelayEnd,
        AspectKind::DelayIn,
        AspectKind::DelayNow,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AspectKind::Exec => "exec",
            AspectKind::Enqueue => "enqueue",
            AspectKind::Queue => "queue",
            AspectKind::Do => "do",
            AspectKind::Todo => "todo",
            AspectKind::Workload => "workload",
            AspectKind::Enter => "enter",
            AspectKind::Exit => "exit",
            AspectKind::Cross => "cross",
            AspectKind::Handover => "handover",
            AspectKind::DelayStart => "delayStart",
            AspectKind::DelayEnd => "delayEnd",
            AspectKind::DelayIn => "delayIn",
            AspectKind::DelayNow => "delayNow",
        }
    }

    pub fn level(self) -> ComponentKind {
        use AspectKind::*;
        match self {
            Exec | Enqueue | Queue => ComponentKind::Activity,
            Do | Todo | Workload => ComponentKind::Resource,
            _ => ComponentKind::Segment,
        }
    }

    pub fn category(self) -> AspectCategory {
        use AspectKind::*;
        match self {
            Queue | Workload | Cross | DelayIn | DelayNow => AspectCategory::State,
            _ => AspectCategory::Action,
        }
    }

    pub fn is_delay(self) -> bool {
        use AspectKind::*;
        matches!(self, DelayStart | DelayEnd | DelayIn | DelayNow)
    }

    /// Counting aspects have `value = |event_set|`.
    pub fn is_count(self) -> bool {
        !self.is_delay() && self != AspectKind::Handover
    }

    pub fn needs_resources(self) -> bool {
        self.level() == ComponentKind::Resource || self == AspectKind::Handover
    }

    /// Whether the event set of a segment aspect holds events executing the
    /// segment's second activity (otherwise they execute the first).
    pub fn executes_segment_target(self) -> bool {
        matches!(
            self,
            AspectKind::Exit | AspectKind::Handover | AspectKind::DelayEnd
        )
    }
}

impl fmt::Display for AspectKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("unknown aspect {0:?}")]
pub struct UnknownAspect(pub String);

impl FromStr for AspectKind {
    type Err = UnknownAspect;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AspectKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| UnknownAspect(s.to_string()))
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AspectError {
    #[error("component is not part of the log")]
    UnknownComponent,
    #[error("aspect {aspect} needs a resource attribute, which is absent from the log")]
    ResourceAbsent { aspect: AspectKind },
    #[error("aspect {aspect} applies to {expected} components, got a {got}")]
    LevelMismatch {
        aspect: AspectKind,
        expected: ComponentKind,
        got: ComponentKind,
    },
    #[error("aspect {aspect} is not accepted here")]
    WrongAspect { aspect: AspectKind },
}

/// `f_asp(c, w)`: the causing event set and the value. Ratios and averages
/// over an empty set have no value.
#[derive(Debug, Clone, PartialEq)]
pub struct AspectEvaluation {
    pub aspect: AspectKind,
    pub component: ComponentId,
    pub window: WindowIndex,
    pub event_set: Vec<EventId>,
    pub value: Option<f64>,
}

impl AspectEvaluation {
    pub fn is_defined(&self) -> bool {
        self.value.is_some()
    }
}

/// Evaluates aspect functions over one framed log.
#[derive(Debug, Clone, Copy)]
pub struct AspectEngine<'a> {
    log: &'a EventLog,
    windows: &'a TimeWindows,
}

impl<'a> AspectEngine<'a> {
    pub fn new(log: &'a EventLog, windows: &'a TimeWindows) -> Self {
        AspectEngine { log, windows }
    }

    pub fn log(&self) -> &'a EventLog {
        self.log
    }

    pub fn windows(&self) -> &'a TimeWindows {
        self.windows
    }

    /// Components an aspect can be evaluated on, in component order.
    pub fn components_for(&self, kind: AspectKind) -> Vec<ComponentId> {
        if kind.needs_resources() && !self.log.has_resources() {
            return Vec::new();
        }
        match kind.level() {
            ComponentKind::Activity => self.log.activities().map(ComponentId::Activity).collect(),
            ComponentKind::Resource => self.log.resources().map(ComponentId::Resource).collect(),
            ComponentKind::Segment => self
                .log
                .segments()
                .map(|(a, b)| ComponentId::Segment(a, b))
                .collect(),
        }
    }

    pub fn check(&self, kind: AspectKind, c: ComponentId) -> Result<(), AspectError> {
        if kind.level() != c.kind() {
            return Err(AspectError::LevelMismatch {
                aspect: kind,
                expected: kind.level(),
                got: c.kind(),
            });
        }
        if kind.needs_resources() && !self.log.has_resources() {
            return Err(AspectError::ResourceAbsent { aspect: kind });
        }
        if !self.log.contains_component(c) {
            return Err(AspectError::UnknownComponent);
        }
        Ok(())
    }

    /// Events that can appear (directly or via their successor) in the
    /// aspect's event sets for `c`, in id order.
    fn anchors(&self, kind: AspectKind, c: ComponentId) -> &'a [EventId] {
        use AspectKind::*;
        match (kind, c) {
            (Exec, ComponentId::Activity(a)) => self.log.events_of_activity(a),
            (Enqueue | Queue, ComponentId::Activity(a)) => self.log.predecessors_of_activity(a),
            (Do, ComponentId::Resource(r)) => self.log.events_of_resource(r),
            (Todo | Workload, ComponentId::Resource(r)) => self.log.predecessors_of_resource(r),
            (_, ComponentId::Segment(a, b)) => self.log.segment_sources(a, b),
            _ => &[],
        }
    }

    /// The event an anchor contributes to the set.
    #[inline]
    fn member(&self, kind: AspectKind, anchor: EventId) -> EventId {
        if kind.executes_segment_target() {
            self.log
                .next(anchor)
                .expect("segment anchors have a successor")
        } else {
            anchor
        }
    }

    /// Windows whose event set contains the anchor's member.
    #[inline]
    fn span(&self, kind: AspectKind, anchor: EventId) -> RangeInclusive<WindowIndex> {
        let w = self.windows.of_event(anchor);
        match kind.category() {
            AspectCategory::State => {
                let nx = self
                    .log
                    .next(anchor)
                    .expect("state anchors have a successor");
                w..=self.windows.of_event(nx)
            }
            AspectCategory::Action => {
                let w = self.windows.of_event(self.member(kind, anchor));
                w..=w
            }
        }
    }

    pub fn evaluate(
        &self,
        kind: AspectKind,
        c: ComponentId,
        w: WindowIndex,
    ) -> Result<AspectEvaluation, AspectError> {
        self.check(kind, c)?;
        let mut event_set: Vec<EventId> = self
            .anchors(kind, c)
            .iter()
            .filter(|&&e| self.span(kind, e).contains(&w))
            .map(|&e| self.member(kind, e))
            .collect();
        event_set.sort_unstable();
        let value = self.value(kind, &event_set, w);
        Ok(AspectEvaluation {
            aspect: kind,
            component: c,
            window: w,
            event_set,
            value,
        })
    }

    /// Evaluations for every window of `W`, in window order.
    pub fn series(
        &self,
        kind: AspectKind,
        c: ComponentId,
    ) -> Result<Vec<AspectEvaluation>, AspectError> {
        self.check(kind, c)?;
        let mut buckets: Vec<Vec<EventId>> = vec![Vec::new(); self.windows.len()];
        for &anchor in self.anchors(kind, c) {
            let member = self.member(kind, anchor);
            for w in self.span(kind, anchor) {
                buckets[self.windows.position(w)].push(member);
            }
        }
        Ok(self
            .windows
            .indices()
            .zip(buckets)
            .map(|(w, mut event_set)| {
                if kind.executes_segment_target() {
                    event_set.sort_unstable();
                }
                let value = self.value(kind, &event_set, w);
                AspectEvaluation {
                    aspect: kind,
                    component: c,
                    window: w,
                    event_set,
                    value,
                }
            })
            .collect())
    }

    /// Values only, in window order.
    pub fn values(
        &self,
        kind: AspectKind,
        c: ComponentId,
    ) -> Result<Vec<Option<f64>>, AspectError> {
        Ok(self
            .series(kind, c)?
            .into_iter()
            .map(|ev| ev.value)
            .collect())
    }

    fn value(&self, kind: AspectKind, set: &[EventId], w: WindowIndex) -> Option<f64> {
        use AspectKind::*;
        let log = self.log;
        let wait_to_next =
            |e: EventId| log.time(log.next(e).expect("successor")).millis() - log.time(e).millis();
        match kind {
            _ if kind.is_count() => Some(set.len() as f64),
            _ if set.is_empty() => None,
            Handover => {
                let mut before: Vec<ResourceId> = set
                    .iter()
                    .filter_map(|&e| log.prev(e).and_then(|p| log.resource_of(p)))
                    .collect();
                let mut now: Vec<ResourceId> =
                    set.iter().filter_map(|&e| log.resource_of(e)).collect();
                before.sort_unstable();
                before.dedup();
                now.sort_unstable();
                now.dedup();
                (!now.is_empty()).then(|| before.len() as f64 / now.len() as f64)
            }
            DelayStart | DelayIn => mean_secs(set.iter().map(|&e| wait_to_next(e)), set.len()),
            DelayEnd => mean_secs(
                set.iter().map(|&e| {
                    log.time(e).millis() - log.time(log.prev(e).expect("predecessor")).millis()
                }),
                set.len(),
            ),
            DelayNow => {
                let end = self.windows.window(w).end.millis();
                mean_secs(
                    set.iter().map(|&e| {
                        let t_next = log.time(log.next(e).expect("successor")).millis();
                        t_next.min(end) - log.time(e).millis()
                    }),
                    set.len(),
                )
            }
            _ => unreachable!("counting aspects handled above"),
        }
    }
}

fn mean_secs(waits_ms: impl Iterator<Item = i64>, n: usize) -> Option<f64> {
    let total: i64 = waits_ms.sum();
    Some(total as f64 / n as f64 / 1000.0)
}

fn require(kind: AspectKind, allowed: &[AspectKind]) -> Result<(), AspectError> {
    if allowed.contains(&kind) {
        Ok(())
    } else {
        Err(AspectError::WrongAspect { aspect: kind })
    }
}

/// `exec`, `enqueue` or `queue` at activity `a`.
pub fn eval_activity(
    engine: &AspectEngine<'_>,
    kind: AspectKind,
    a: ActivityId,
    w: WindowIndex,
) -> Result<AspectEvaluation, AspectError> {
    require(
        kind,
        &[AspectKind::Exec, AspectKind::Enqueue, AspectKind::Queue],
    )?;
    engine.evaluate(kind, ComponentId::Activity(a), w)
}

/// `do`, `todo` or `workload` at resource `r`.
pub fn eval_resource(
    engine: &AspectEngine<'_>,
    kind: AspectKind,
    r: ResourceId,
    w: WindowIndex,
) -> Result<AspectEvaluation, AspectError> {
    require(
        kind,
        &[AspectKind::Do, AspectKind::Todo, AspectKind::Workload],
    )?;
    engine.evaluate(kind, ComponentId::Resource(r), w)
}

/// `enter`, `exit` or `cross` at segment `(a, b)`.
pub fn eval_segment_count(
    engine: &AspectEngine<'_>,
    kind: AspectKind,
    segment: (ActivityId, ActivityId),
    w: WindowIndex,
) -> Result<AspectEvaluation, AspectError> {
    require(
        kind,
        &[AspectKind::Enter, AspectKind::Exit, AspectKind::Cross],
    )?;
    engine.evaluate(kind, ComponentId::Segment(segment.0, segment.1), w)
}

pub fn eval_handover(
    engine: &AspectEngine<'_>,
    segment: (ActivityId, ActivityId),
    w: WindowIndex,
) -> Result<AspectEvaluation, AspectError> {
    engine.evaluate(
        AspectKind::Handover,
        ComponentId::Segment(segment.0, segment.1),
        w,
    )
}

/// One of the four average waiting times at segment `(a, b)`, in seconds.
pub fn eval_delay(
    engine: &AspectEngine<'_>,
    kind: AspectKind,
    segment: (ActivityId, ActivityId),
    w: WindowIndex,
) -> Result<AspectEvaluation, AspectError> {
    require(
        kind,
        &[
            AspectKind::DelayStart,
            AspectKind::DelayEnd,
            AspectKind::DelayIn,
            AspectKind::DelayNow,
        ],
    )?;
    engine.evaluate(kind, ComponentId::Segment(segment.0, segment.1), w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event_log::fixtures::l0;
    use crate::event_log::{CaseId, RawEvent};
    use crate::framing::make_framing;
    use crate::time::{Duration, Timestamp};

    fn ids(ns: &[u32]) -> Vec<EventId> {
        ns.iter().map(|n| EventId(n - 1)).collect()
    }

    struct L0 {
        log: EventLog,
        windows: TimeWindows,
    }

    impl L0 {
        fn new() -> Self {
            let log = l0();
            let windows = make_framing(&log, Duration::from_secs(10), Some(Timestamp(0))).unwrap();
            L0 { log, windows }
        }
        fn engine(&self) -> AspectEngine<'_> {
            AspectEngine::new(&self.log, &self.windows)
        }
        fn act(&self, n: &str) -> ActivityId {
            self.log.activity_id(n).unwrap()
        }
        fn res(&self, n: &str) -> ResourceId {
            self.log.resource_id(n).unwrap()
        }
        fn seg(&self, a: &str, b: &str) -> (ActivityId, ActivityId) {
            (self.act(a), self.act(b))
        }
    }

    #[test]
    fn activity_aspects() {
        let f = L0::new();
        let en = f.engine();
        let ev = eval_activity(&en, AspectKind::Exec, f.act("review"), 1).unwrap();
        assert_eq!((ev.event_set, ev.value), (ids(&[4, 5]), Some(2.0)));
        let ev = eval_activity(&en, AspectKind::Queue, f.act("review"), 1).unwrap();
        assert_eq!((ev.event_set, ev.value), (ids(&[1, 2, 3]), Some(3.0)));
        for w in 0..4 {
            let ev = eval_activity(&en, AspectKind::Enqueue, f.act("submit"), w).unwrap();
            assert_eq!((ev.event_set.len(), ev.value), (0, Some(0.0)));
        }
    }

    #[test]
    fn resource_aspects() {
        let f = L0::new();
        let en = f.engine();
        let sarah = f.res("Sarah");
        let ev = eval_resource(&en, AspectKind::Do, sarah, 2).unwrap();
        assert_eq!((ev.event_set, ev.value), (ids(&[7, 8]), Some(2.0)));
        let ev = eval_resource(&en, AspectKind::Todo, sarah, 1).unwrap();
        assert_eq!((ev.event_set, ev.value), (ids(&[3, 5]), Some(2.0)));
        let ev = eval_resource(&en, AspectKind::Workload, sarah, 2).unwrap();
        assert_eq!((ev.event_set, ev.value), (ids(&[3, 5, 7]), Some(3.0)));
    }

    #[test]
    fn segment_counts() {
        let f = L0::new();
        let en = f.engine();
        let sr = f.seg("submit", "review");
        let ev = eval_segment_count(&en, AspectKind::Enter, sr, 0).unwrap();
        assert_eq!((ev.event_set, ev.value), (ids(&[1, 2]), Some(2.0)));
        let ev = eval_segment_count(&en, AspectKind::Cross, sr, 1).unwrap();
        assert_eq!((ev.event_set, ev.value), (ids(&[1, 2, 3]), Some(3.0)));
        let ev = eval_segment_count(&en, AspectKind::Exit, sr, 0).unwrap();
        assert_eq!((ev.event_set, ev.value), (vec![], Some(0.0)));
    }

    #[test]
    fn handover_ratios() {
        let f = L0::new();
        let en = f.engine();
        let ev = eval_handover(&en, f.seg("submit", "review"), 1).unwrap();
        assert_eq!((ev.event_set, ev.value), (ids(&[4, 5]), Some(0.5)));
        let ev = eval_handover(&en, f.seg("review", "approve"), 2).unwrap();
        assert_eq!((ev.event_set, ev.value), (ids(&[6]), Some(1.0)));
        let ev = eval_handover(&en, f.seg("review", "approve"), 0).unwrap();
        assert_eq!(ev.value, None);
    }

    #[test]
    fn delays() {
        let f = L0::new();
        let en = f.engine();
        let sr = f.seg("submit", "review");
        assert_eq!(
            eval_delay(&en, AspectKind::DelayStart, sr, 0)
                .unwrap()
                .value,
            Some(13.5)
        );
        assert_eq!(
            eval_delay(&en, AspectKind::DelayIn, sr, 1).unwrap().value,
            Some(13.0)
        );
        let now = eval_delay(&en, AspectKind::DelayNow, sr, 1)
            .unwrap()
            .value
            .unwrap();
        assert!((now - 35.0 / 3.0).abs() < 1e-9);
        assert_eq!(
            eval_delay(&en, AspectKind::DelayEnd, sr, 1).unwrap().value,
            Some(13.5)
        );
        assert_eq!(
            eval_delay(&en, AspectKind::DelayEnd, sr, 0).unwrap().value,
            None
        );
    }

    #[test]
    fn kind_validation() {
        let f = L0::new();
        let en = f.engine();
        assert!(matches!(
            eval_activity(&en, AspectKind::Do, f.act("review"), 0),
            Err(AspectError::WrongAspect { .. })
        ));
        assert!(matches!(
            en.evaluate(AspectKind::Exec, ComponentId::Resource(f.res("Jane")), 0),
            Err(AspectError::LevelMismatch { .. })
        ));
        assert_eq!(
            en.evaluate(AspectKind::Exec, ComponentId::Activity(ActivityId(99)), 0),
            Err(AspectError::UnknownComponent)
        );
        assert_eq!(
            eval_segment_count(&en, AspectKind::Enter, f.seg("approve", "submit"), 0).unwrap_err(),
            AspectError::UnknownComponent
        );
    }

    #[test]
    fn resource_aspects_refuse_without_resources() {
        let recs = vec![
            RawEvent::new("c", "a", Timestamp(0), None),
            RawEvent::new("c", "b", Timestamp(5), None),
        ];
        let log = EventLog::from_records(recs).unwrap();
        let windows = make_framing(&log, Duration(10), None).unwrap();
        let en = AspectEngine::new(&log, &windows);
        let seg = ComponentId::Segment(ActivityId(0), ActivityId(1));
        assert_eq!(
            en.evaluate(AspectKind::Handover, seg, 0),
            Err(AspectError::ResourceAbsent {
                aspect: AspectKind::Handover
            })
        );
        assert!(en.components_for(AspectKind::Do).is_empty());
        assert_eq!(
            en.evaluate(AspectKind::Enter, seg, 0).unwrap().value,
            Some(1.0)
        );
        let _ = CaseId(0);
    }

    #[test]
    fn series_matches_single_evaluations() {
        let f = L0::new();
        let en = f.engine();
        for kind in AspectKind::ALL {
            for c in en.components_for(kind) {
                let series = en.series(kind, c).unwrap();
                for ev in series {
                    assert_eq!(ev, en.evaluate(kind, c, ev.window).unwrap());
                }
            }
        }
    }

    #[test]
    fn names_roundtrip() {
        for k in AspectKind::ALL {
            assert_eq!(k.name().parse::<AspectKind>().unwrap(), k);
        }
        assert!("delay_start".parse::<AspectKind>().is_err());
        let state: Vec<_> = AspectKind::ALL
            .into_iter()
            .filter(|k| k.category() == AspectCategory::State)
            .map(AspectKind::name)
            .collect();
        assert_eq!(state, ["queue", "workload", "cross", "delayIn", "delayNow"]);
    }
}
