//! Shared inputs for the benchmarks.

use hlevent_core::framing::TimeWindows;
use hlevent_core::simgen::{generate, ScenarioConfig};
use hlevent_core::{make_framing, EventLog};

/// A simulated citizenship log framed on the scenario's own windows.
pub fn citizenship(seed: u64, horizon_windows: usize) -> (EventLog, TimeWindows) {
    let mut cfg = ScenarioConfig::preset("citizenship").expect("preset");
    cfg.seed = seed;
    cfg.horizon_windows = horizon_windows;
    let (log, truth) = generate(&cfg).expect("valid preset");
    let windows = make_framing(&log, truth.window, Some(truth.origin)).expect("non-empty log");
    (log, windows)
}

#[cfg(test)]
mod tests {
    #[test]
    fn inputs_are_framed_from_the_origin() {
        let (log, windows) = super::citizenship(1, 10);
        assert!(!log.is_empty());
        assert_eq!(windows.first(), 0);
    }
}
