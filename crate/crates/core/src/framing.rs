//! Fixed-width partition of the time axis into half-open windows.

use thiserror::Error;

use crate::event_log::{EventId, EventLog};
use crate::time::{Duration, Timestamp};

pub type WindowIndex = i64;

#[derive(Debug, Error, PartialEq)]
pub enum FramingError {
    #[error("window width must be positive, got {0}")]
    NonPositiveWidth(Duration),
    #[error("cannot frame an empty log")]
    EmptyLog,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Framing {
    pub origin: Timestamp,
    pub width: Duration,
}

/// The half-open interval `[start, end)` of one window.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TimeWindow {
    pub index: WindowIndex,
    pub start: Timestamp,
    pub end: Timestamp,
}

impl Framing {
    pub fn new(origin: Timestamp, width: Duration) -> Result<Self, FramingError> {
        if width.millis() <= 0 {
            return Err(FramingError::NonPositiveWidth(width));
        }
        Ok(Framing { origin, width })
    }

    /// `floor((t - origin) / width)`.
    #[inline]
    pub fn window_of(&self, t: Timestamp) -> WindowIndex {
        (t.millis() - self.origin.millis()).div_euclid(self.width.millis())
    }

    pub fn window(&self, index: WindowIndex) -> TimeWindow {
        let start = Timestamp(self.origin.millis() + index * self.width.millis());
        TimeWindow {
            index,
            start,
            end: start + self.width,
        }
    }
}

/// A framing together with the window range `W` covering a log.
#[derive(Debug, Clone)]
pub struct TimeWindows {
    framing: Framing,
    first: WindowIndex,
    last: WindowIndex,
    event_window: Vec<WindowIndex>,
}

impl TimeWindows {
    pub fn framing(&self) -> Framing {
        self.framing
    }

    pub fn first(&self) -> WindowIndex {
        self.first
    }

    pub fn last(&self) -> WindowIndex {
        self.last
    }

    pub fn len(&self) -> usize {
        (self.last - self.first + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, w: WindowIndex) -> bool {
        (self.first..=self.last).contains(&w)
    }

    /// Offset of `w` into per-window arrays.
    #[inline]
    pub fn position(&self, w: WindowIndex) -> usize {
        debug_assert!(self.contains(w));
        (w - self.first) as usize
    }

    pub fn indices(&self) -> impl DoubleEndedIterator<Item = WindowIndex> + Clone {
        self.first..=self.last
    }

    pub fn iter(&self) -> impl Iterator<Item = TimeWindow> + '_ {
        self.indices().map(|w| self.framing.window(w))
    }

    pub fn window(&self, w: WindowIndex) -> TimeWindow {
        self.framing.window(w)
    }

    pub fn window_of(&self, t: Timestamp) -> WindowIndex {
        self.framing.window_of(t)
    }

    /// Window of an event of the framed log.
    #[inline]
    pub fn of_event(&self, e: EventId) -> WindowIndex {
        self.event_window[e.index()]
    }

    /// `E_w`, in event id order.
    pub fn events_in(&self, w: WindowIndex) -> Vec<EventId> {
        self.event_window
            .iter()
            .enumerate()
            .filter(|(_, &ew)| ew == w)
            .map(|(i, _)| EventId(i as u32))
            .collect()
    }
}

/// Frames `log` with windows of `width`, anchored at `origin` or, by default,
/// at the earliest event.
pub fn make_framing(
    log: &EventLog,
    width: Duration,
    origin: Option<Timestamp>,
) -> Result<TimeWindows, FramingError> {
    if log.is_empty() {
        return Err(FramingError::EmptyLog);
    }
    let framing = Framing::new(origin.unwrap_or_else(|| log.first_timestamp()), width)?;
    let event_window: Vec<WindowIndex> = log
        .events()
        .iter()
        .map(|e| framing.window_of(e.timestamp))
        .collect();
    let first = *event_window.iter().min().expect("non-empty");
    let last = *event_window.iter().max().expect("non-empty");
    Ok(TimeWindows {
        framing,
        first,
        last,
        event_window,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event_log::fixtures::{l0, l0_records};
    use crate::event_log::RawEvent;
    use proptest::prelude::*;

    fn frame_l0() -> TimeWindows {
        make_framing(&l0(), Duration::from_secs(10), Some(Timestamp(0))).unwrap()
    }

    #[test]
    fn l0_windows() {
        let w = frame_l0();
        let spans: Vec<(i64, i64)> = w
            .iter()
            .map(|tw| (tw.start.millis() / 1000, tw.end.millis() / 1000))
            .collect();
        assert_eq!(spans, vec![(0, 10), (10, 20), (20, 30), (30, 40)]);
        assert_eq!(w.events_in(1).len(), 3);
        assert_eq!(w.window_of(Timestamp::from_secs(17)), 1);
    }

    #[test]
    fn boundaries() {
        let f = Framing::new(Timestamp(100), Duration(10)).unwrap();
        assert_eq!(f.window_of(Timestamp(100)), 0);
        assert_eq!(f.window_of(Timestamp(110)), 1);
        assert_eq!(f.window_of(Timestamp(109)), 0);
        assert_eq!(f.window_of(Timestamp(99)), -1);
    }

    #[test]
    fn default_origin_is_first_event() {
        let w = make_framing(&l0(), Duration::from_secs(10), None).unwrap();
        assert_eq!(w.framing().origin, Timestamp::from_secs(1));
        assert_eq!(w.first(), 0);
    }

    #[test]
    fn wide_window_holds_everything() {
        let w = make_framing(&l0(), Duration::from_secs(1000), None).unwrap();
        assert_eq!(w.len(), 1);
        assert_eq!(w.events_in(0).len(), 9);
    }

    #[test]
    fn rejects_non_positive_width() {
        assert_eq!(
            make_framing(&l0(), Duration(0), None).unwrap_err(),
            FramingError::NonPositiveWidth(Duration(0))
        );
        assert!(make_framing(&l0(), Duration(-5), None).is_err());
    }

    #[test]
    fn shift_invariance() {
        let shifted: Vec<RawEvent> = l0_records()
            .into_iter()
            .map(|mut r| {
                r.timestamp = Timestamp(r.timestamp.millis() + 123_456_789);
                r
            })
            .collect();
        let a = make_framing(&l0(), Duration::from_secs(7), None).unwrap();
        let log_b = crate::event_log::EventLog::from_records(shifted).unwrap();
        let b = make_framing(&log_b, Duration::from_secs(7), None).unwrap();
        let pops = |w: &TimeWindows| w.indices().map(|i| w.events_in(i)).collect::<Vec<_>>();
        assert_eq!(pops(&a), pops(&b));
    }

    proptest! {
        #[test]
        fn monotone(origin in -1_000i64..1_000, width in 1i64..500, t1 in -10_000i64..10_000, dt in 0i64..5_000) {
            let f = Framing::new(Timestamp(origin), Duration(width)).unwrap();
            prop_assert!(f.window_of(Timestamp(t1)) <= f.window_of(Timestamp(t1 + dt)));
            let w = f.window(f.window_of(Timestamp(t1)));
            prop_assert!(w.start <= Timestamp(t1) && Timestamp(t1) < w.end);
        }
    }
}
