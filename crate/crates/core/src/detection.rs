//! Thresholding aspect values into high-level events.

use std::collections::BTreeMap;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aspects::{AspectCategory, AspectEngine, AspectError, AspectEvaluation, AspectKind};
use crate::event_log::{CaseId, ComponentId, EventId, EventLog};
use crate::framing::WindowIndex;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// Values at or above the threshold are detected.
    #[default]
    High,
    /// Values at or below the threshold are detected.
    Low,
}

impl Direction {
    #[inline]
    pub fn passes(self, value: f64, threshold: f64) -> bool {
        match self {
            Direction::High => value >= threshold,
            Direction::Low => value <= threshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdPolicy {
    /// In `(0, 100]`.
    pub percentile: f64,
    pub direction: Direction,
    /// Minimum event-set size for delay aspects to count as defined.
    pub min_case_count: usize,
    /// Per-aspect thresholds shared by all components.
    pub aspect_overrides: BTreeMap<AspectKind, f64>,
    pub overrides: BTreeMap<(AspectKind, ComponentId), f64>,
}

impl Default for ThresholdPolicy {
    fn default() -> Self {
        ThresholdPolicy {
            percentile: 90.0,
            direction: Direction::High,
            min_case_count: 3,
            aspect_overrides: BTreeMap::new(),
            overrides: BTreeMap::new(),
        }
    }
}

impl ThresholdPolicy {
    pub fn with_percentile(percentile: f64) -> Self {
        ThresholdPolicy {
            percentile,
            ..Self::default()
        }
    }

    /// Whether an evaluation takes part in thresholding.
    pub fn eligible(&self, ev: &AspectEvaluation) -> bool {
        ev.value.is_some() && (!ev.aspect.is_delay() || ev.event_set.len() >= self.min_case_count)
    }

    fn validate(&self) -> Result<(), DetectionError> {
        if !(self.percentile > 0.0 && self.percentile <= 100.0) {
            return Err(DetectionError::Percentile(self.percentile));
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DetectionError {
    #[error("no aspects selected")]
    EmptyAspects,
    #[error("percentile must lie in (0, 100], got {0}")]
    Percentile(f64),
    #[error("coverage is only defined for action aspects, {0} describes state")]
    StateAspect(AspectKind),
    #[error(transparent)]
    Aspect(#[from] AspectError),
}

/// A detected `(aspect, component, window)`.
#[derive(Debug, Clone, PartialEq)]
pub struct HighLevelEvent {
    pub aspect: AspectKind,
    pub component: ComponentId,
    pub window: WindowIndex,
    pub value: f64,
    pub threshold: f64,
    pub event_set: Vec<EventId>,
}

impl HighLevelEvent {
    pub fn activity(&self) -> HighLevelActivity {
        HighLevelActivity {
            aspect: self.aspect,
            component: self.component,
        }
    }

    pub fn cases(&self, log: &EventLog) -> Vec<CaseId> {
        log.cases_of(&self.event_set)
    }

    pub fn sort_key(&self) -> (&'static str, ComponentId, WindowIndex) {
        (self.aspect.name(), self.component, self.window)
    }
}

/// A high-level event with its time of emergence discarded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct HighLevelActivity {
    pub aspect: AspectKind,
    pub component: ComponentId,
}

impl HighLevelActivity {
    /// `aspect@component`, e.g. `delayEnd@submit->review`.
    pub fn label(&self, log: &EventLog) -> String {
        format!("{}@{}", self.aspect, log.component_label(self.component))
    }
}

/// Nearest-rank percentile: the element at 1-based rank `ceil(p/100 * n)`.
pub fn nearest_rank(sorted: &[f64], p: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let rank = (p / 100.0 * sorted.len() as f64 - 1e-9).ceil().max(1.0) as usize;
    Some(sorted[rank.min(sorted.len()) - 1])
}

/// The threshold of one `(aspect, component)` pair, or `None` when no value
/// is defined and no override applies.
pub fn resolve_threshold(
    policy: &ThresholdPolicy,
    aspect: AspectKind,
    component: ComponentId,
    values: &[Option<f64>],
) -> Option<f64> {
    if let Some(&t) = policy.overrides.get(&(aspect, component)) {
        return Some(t);
    }
    if let Some(&t) = policy.aspect_overrides.get(&aspect) {
        return Some(t);
    }
    let mut defined: Vec<f64> = values.iter().flatten().copied().collect();
    defined.sort_by(f64::total_cmp);
    nearest_rank(&defined, policy.percentile)
}

fn detect_pair(
    engine: &AspectEngine<'_>,
    aspect: AspectKind,
    component: ComponentId,
    policy: &ThresholdPolicy,
) -> Result<Vec<HighLevelEvent>, AspectError> {
    let series = engine.series(aspect, component)?;
    let values: Vec<Option<f64>> = series
        .iter()
        .map(|ev| if policy.eligible(ev) { ev.value } else { None })
        .collect();
    let Some(threshold) = resolve_threshold(policy, aspect, component, &values) else {
        return Ok(Vec::new());
    };
    Ok(series
        .into_iter()
        .zip(values)
        .filter_map(|(ev, value)| {
            let value = value?;
            policy
                .direction
                .passes(value, threshold)
                .then_some(HighLevelEvent {
                    aspect,
                    component,
                    window: ev.window,
                    value,
                    threshold,
                    event_set: ev.event_set,
                })
        })
        .collect())
}

/// All high-level events for the aspects in `aspects`, sorted by aspect name,
/// component and window.
pub fn detect(
    engine: &AspectEngine<'_>,
    aspects: &[AspectKind],
    policy: &ThresholdPolicy,
) -> Result<Vec<HighLevelEvent>, DetectionError> {
    if aspects.is_empty() {
        return Err(DetectionError::EmptyAspects);
    }
    policy.validate()?;
    let mut kinds = aspects.to_vec();
    kinds.sort_by_key(|k| k.name());
    kinds.dedup();
    for &k in &kinds {
        if k.needs_resources() && !engine.log().has_resources() {
            return Err(AspectError::ResourceAbsent { aspect: k }.into());
        }
    }
    let pairs: Vec<(AspectKind, ComponentId)> = kinds
        .iter()
        .flat_map(|&k| engine.components_for(k).into_iter().map(move |c| (k, c)))
        .collect();
    let per_pair: Vec<Vec<HighLevelEvent>> = pairs
        .par_iter()
        .map(|&(k, c)| detect_pair(engine, k, c, policy))
        .collect::<Result<_, _>>()?;
    let mut hles: Vec<HighLevelEvent> = per_pair.into_iter().flatten().collect();
    hles.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
    Ok(hles)
}

/// Share of all events that cause an action aspect at `component`, summed
/// over the windows.
pub fn coverage(
    engine: &AspectEngine<'_>,
    aspect: AspectKind,
    component: ComponentId,
) -> Result<f64, DetectionError> {
    if aspect.category() == AspectCategory::State {
        return Err(DetectionError::StateAspect(aspect));
    }
    let covered: usize = engine
        .series(aspect, component)?
        .iter()
        .map(|ev| ev.event_set.len())
        .sum();
    Ok(covered as f64 / engine.log().len() as f64)
}

impl fmt::Display for HighLevelEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "({}, {:?}, w{})",
            self.aspect, self.component, self.window
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event_log::fixtures::l0;
    use crate::framing::{make_framing, TimeWindows};
    use crate::time::{Duration, Timestamp};
    use proptest::prelude::*;

    fn framed() -> (EventLog, TimeWindows) {
        let log = l0();
        let w = make_framing(&log, Duration::from_secs(10), Some(Timestamp(0))).unwrap();
        (log, w)
    }

    #[test]
    fn nearest_rank_examples() {
        let v = [0.0, 0.0, 1.0, 2.0];
        assert_eq!(nearest_rank(&v, 100.0), Some(2.0));
        assert_eq!(nearest_rank(&v, 75.0), Some(1.0));
        assert_eq!(nearest_rank(&v, 50.0), Some(0.0));
        assert_eq!(nearest_rank(&v, 0.1), Some(0.0));
        assert_eq!(nearest_rank(&[], 50.0), None);
        let ten: Vec<f64> = (1..=10).map(f64::from).collect();
        assert_eq!(nearest_rank(&ten, 90.0), Some(9.0));
        assert_eq!(nearest_rank(&ten, 91.0), Some(10.0));
    }

    #[test]
    fn override_precedence() {
        let (log, _) = framed();
        let review = ComponentId::Activity(log.activity_id("review").unwrap());
        let mut policy = ThresholdPolicy::with_percentile(100.0);
        let vals = [Some(0.0), Some(2.0)];
        assert_eq!(
            resolve_threshold(&policy, AspectKind::Exec, review, &vals),
            Some(2.0)
        );
        policy.aspect_overrides.insert(AspectKind::Exec, 7.0);
        assert_eq!(
            resolve_threshold(&policy, AspectKind::Exec, review, &vals),
            Some(7.0)
        );
        policy.overrides.insert((AspectKind::Exec, review), 5.0);
        assert_eq!(
            resolve_threshold(&policy, AspectKind::Exec, review, &vals),
            Some(5.0)
        );
        assert_eq!(
            resolve_threshold(&policy, AspectKind::Exec, review, &[None]),
            Some(5.0)
        );
        let p = ThresholdPolicy::default();
        assert_eq!(
            resolve_threshold(&p, AspectKind::Exec, review, &[None, None]),
            None
        );
    }

    #[test]
    fn l0_exec_review() {
        let (log, w) = framed();
        let en = AspectEngine::new(&log, &w);
        let review = ComponentId::Activity(log.activity_id("review").unwrap());
        let hles = detect(
            &en,
            &[AspectKind::Exec],
            &ThresholdPolicy::with_percentile(100.0),
        )
        .unwrap();
        let mine: Vec<_> = hles.iter().filter(|h| h.component == review).collect();
        assert_eq!(mine.len(), 1);
        assert_eq!((mine[0].window, mine[0].value), (1, 2.0));
        assert_eq!(mine[0].cases(&log).len(), 2);
    }

    #[test]
    fn low_direction_takes_everything_at_max() {
        let (log, w) = framed();
        let en = AspectEngine::new(&log, &w);
        let policy = ThresholdPolicy {
            percentile: 100.0,
            direction: Direction::Low,
            min_case_count: 1,
            ..ThresholdPolicy::default()
        };
        let hles = detect(&en, &AspectKind::ALL, &policy).unwrap();
        let defined: usize = AspectKind::ALL
            .iter()
            .flat_map(|&k| en.components_for(k).into_iter().map(move |c| (k, c)))
            .map(|(k, c)| en.values(k, c).unwrap().iter().flatten().count())
            .sum();
        assert_eq!(hles.len(), defined);
    }

    #[test]
    fn min_case_count_hides_thin_delays() {
        let (log, w) = framed();
        let en = AspectEngine::new(&log, &w);
        let strict = ThresholdPolicy {
            percentile: 100.0,
            ..ThresholdPolicy::default()
        };
        let hles = detect(&en, &[AspectKind::DelayStart], &strict).unwrap();
        assert!(hles.iter().all(|h| h.event_set.len() >= 3));
        assert!(hles.is_empty());
        let loose = ThresholdPolicy {
            min_case_count: 1,
            ..strict
        };
        assert!(!detect(&en, &[AspectKind::DelayStart], &loose)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn output_order_and_errors() {
        let (log, w) = framed();
        let en = AspectEngine::new(&log, &w);
        let hles = detect(
            &en,
            &[AspectKind::Queue, AspectKind::Exec, AspectKind::Do],
            &ThresholdPolicy::with_percentile(50.0),
        )
        .unwrap();
        assert!(hles.windows(2).all(|p| p[0].sort_key() < p[1].sort_key()));
        assert_eq!(hles[0].aspect, AspectKind::Do);
        assert_eq!(
            detect(&en, &[], &ThresholdPolicy::default()),
            Err(DetectionError::EmptyAspects)
        );
        assert!(matches!(
            detect(
                &en,
                &[AspectKind::Exec],
                &ThresholdPolicy::with_percentile(0.0)
            ),
            Err(DetectionError::Percentile(_))
        ));
    }

    #[test]
    fn coverage_values() {
        let (log, w) = framed();
        let en = AspectEngine::new(&log, &w);
        let act = |n: &str| ComponentId::Activity(log.activity_id(n).unwrap());
        assert!(
            (coverage(&en, AspectKind::Exec, act("review")).unwrap() - 3.0 / 9.0).abs() < 1e-12
        );
        assert_eq!(
            coverage(&en, AspectKind::Enqueue, act("submit")).unwrap(),
            0.0
        );
        let total: f64 = log
            .activities()
            .map(|a| coverage(&en, AspectKind::Exec, ComponentId::Activity(a)).unwrap())
            .sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert_eq!(
            coverage(&en, AspectKind::Queue, act("review")),
            Err(DetectionError::StateAspect(AspectKind::Queue))
        );
    }

    proptest! {
        #[test]
        fn raising_percentile_never_adds(p1 in 1.0f64..100.0, dp in 0.0f64..50.0) {
            let (log, w) = framed();
            let en = AspectEngine::new(&log, &w);
            let p2 = (p1 + dp).min(100.0);
            let lo = detect(&en, &AspectKind::ALL, &ThresholdPolicy::with_percentile(p1)).unwrap();
            let hi = detect(&en, &AspectKind::ALL, &ThresholdPolicy::with_percentile(p2)).unwrap();
            let keys: Vec<_> = lo.iter().map(HighLevelEvent::sort_key).collect();
            for h in &hi {
                prop_assert!(keys.contains(&h.sort_key()));
            }
        }
    }
}
