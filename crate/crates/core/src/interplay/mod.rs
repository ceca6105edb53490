//! Participating cases, control groups and independence tests between thread
//! variants and case attributes.

pub mod stats;

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detection::nearest_rank;
use crate::event_log::{ActivityId, CaseId, ComponentId, EventLog};
use crate::propagation::{thread_variant, NodeId, PropagationGraph, Thread, Variant};
use crate::util::sorted_dedup;

pub use stats::chi2_sf;

pub const SIGNIFICANCE: f64 = 0.05;
pub const MIN_EXPECTED: f64 = 5.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InterplayError {
    #[error("control groups need a thread variant of chained segments: {0}")]
    NotSegmentChain(String),
    #[error("attribute {0:?} does not occur in the log")]
    UnknownAttribute(String),
    #[error("attribute {0:?} is not constant within cases")]
    NotCaseLevel(String),
    #[error("contingency table has an empty {0}")]
    ZeroMarginal(&'static str),
    #[error("attribute {0:?} takes a single value over the compared cases")]
    SingleCategory(String),
    #[error("no variants to rank")]
    NoVariants,
    #[error("ranking weights must be non-negative and not all zero")]
    Weights,
    #[error("unknown binning {0:?}")]
    UnknownBinning(String),
}

/// What participating cases are asked for.
#[derive(Debug, Clone, Copy)]
pub enum Target<'a> {
    Event(NodeId),
    Thread(&'a Thread),
    /// A variant together with the threads it is drawn from.
    Variant(&'a Variant, &'a [Thread]),
}

/// Cases behind an event, a thread (shared by every member) or a variant
/// (behind any of its threads).
pub fn participating_cases(target: Target<'_>, graph: &PropagationGraph) -> Vec<CaseId> {
    match target {
        Target::Event(v) => graph.cases(v).to_vec(),
        Target::Thread(t) => {
            let mut acc = graph.cases(t.nodes[0]).to_vec();
            for &v in &t.nodes[1..] {
                let other = graph.cases(v);
                acc.retain(|c| other.binary_search(c).is_ok());
            }
            acc
        }
        Target::Variant(variant, threads) => sorted_dedup(
            threads
                .iter()
                .filter(|t| &thread_variant(graph, t) == variant)
                .flat_map(|t| participating_cases(Target::Thread(t), graph))
                .collect(),
        ),
    }
}

/// `⟨a1, b1, b2, …, bn⟩` for a variant of chained segments.
pub fn activity_sequence(
    variant: &Variant,
    log: &EventLog,
) -> Result<Vec<ActivityId>, InterplayError> {
    let Variant::Thread(acts) = variant else {
        return Err(InterplayError::NotSegmentChain(
            "cascade variants have no activity sequence".into(),
        ));
    };
    let mut seq: Vec<ActivityId> = Vec::with_capacity(acts.len() + 1);
    for act in acts {
        let ComponentId::Segment(a, b) = act.component else {
            return Err(InterplayError::NotSegmentChain(format!(
                "{} is not segment-based",
                act.label(log)
            )));
        };
        match seq.last() {
            None => seq.extend([a, b]),
            Some(&prev_b) if prev_b == a => seq.push(b),
            Some(&prev_b) => {
                return Err(InterplayError::NotSegmentChain(format!(
                    "{} does not start where the previous segment ends ({})",
                    act.label(log),
                    log.activity_name(prev_b)
                )))
            }
        }
    }
    if seq.is_empty() {
        return Err(InterplayError::NotSegmentChain("empty variant".into()));
    }
    Ok(seq)
}

/// Cases whose trace runs through `seq` as consecutive events.
pub fn eligible_cases(seq: &[ActivityId], log: &EventLog) -> Vec<CaseId> {
    log.traces()
        .filter(|(_, trace)| {
            trace.len() >= seq.len()
                && trace
                    .windows(seq.len())
                    .any(|w| w.iter().zip(seq).all(|(&e, &a)| log.activity_of(e) == a))
        })
        .map(|(c, _)| c)
        .collect()
}

/// Control-flow eligible cases that do not participate in the variant.
pub fn control_group(
    variant: &Variant,
    threads: &[Thread],
    graph: &PropagationGraph,
    log: &EventLog,
) -> Result<Vec<CaseId>, InterplayError> {
    let seq = activity_sequence(variant, log)?;
    let participants = participating_cases(Target::Variant(variant, threads), graph);
    Ok(eligible_cases(&seq, log)
        .into_iter()
        .filter(|c| participants.binary_search(c).is_err())
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Binning {
    /// Quartiles for numeric attributes, raw values otherwise.
    #[default]
    Auto,
    Categorical,
    /// Equal-frequency bins.
    Quantile {
        bins: usize,
    },
}

impl FromStr for Binning {
    type Err = InterplayError;

    /// `auto`, `categorical`, `quantile` (4 bins) or `quantile:<bins>`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "auto" => Ok(Binning::Auto),
            "categorical" => Ok(Binning::Categorical),
            "quantile" => Ok(Binning::Quantile { bins: 4 }),
            _ => s
                .strip_prefix("quantile:")
                .and_then(|n| n.parse().ok())
                .filter(|&bins| bins >= 2)
                .map(|bins| Binning::Quantile { bins })
                .ok_or_else(|| InterplayError::UnknownBinning(s.to_string())),
        }
    }
}

impl fmt::Display for Binning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Binning::Auto => f.write_str("auto"),
            Binning::Categorical => f.write_str("categorical"),
            Binning::Quantile { bins } => write!(f, "quantile:{bins}"),
        }
    }
}

/// Maps raw attribute values to category labels.
fn categorize(values: &[&str], binning: Binning) -> Vec<String> {
    let numeric: Option<Vec<f64>> = values.iter().map(|v| v.parse::<f64>().ok()).collect();
    let bins = match (binning, &numeric) {
        (Binning::Categorical, _) | (Binning::Auto, None) => {
            return values.iter().map(|v| v.to_string()).collect()
        }
        (Binning::Auto, Some(_)) => 4,
        (Binning::Quantile { bins }, _) => bins,
    };
    let Some(nums) = numeric else {
        return values.iter().map(|v| v.to_string()).collect();
    };
    let mut sorted = nums.clone();
    sorted.sort_by(f64::total_cmp);
    let mut cuts: Vec<f64> = (1..bins)
        .filter_map(|k| nearest_rank(&sorted, 100.0 * k as f64 / bins as f64))
        .collect();
    cuts.dedup();
    let lo = sorted[0];
    let hi = *sorted.last().expect("non-empty");
    nums.iter()
        .map(|&x| {
            let i = cuts.iter().take_while(|&&c| x > c).count();
            let from = if i == 0 { lo } else { cuts[i - 1] };
            let to = cuts.get(i).copied().unwrap_or(hi);
            if i == 0 {
                format!("q{}:[{from}, {to}]", i + 1)
            } else {
                format!("q{}:({from}, {to}]", i + 1)
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChiSquare {
    pub chi2: f64,
    pub dof: usize,
    pub p_value: f64,
    /// Some expected count falls below 5.
    pub low_expected: bool,
}

impl ChiSquare {
    pub fn significant(&self) -> bool {
        self.p_value < SIGNIFICANCE
    }
}

/// Pearson's test of independence on an `r × c` table of counts.
pub fn chi_square_table(table: &[Vec<u64>]) -> Result<ChiSquare, InterplayError> {
    let rows = table.len();
    let cols = table.first().map_or(0, Vec::len);
    if rows < 2 || cols < 2 {
        return Err(InterplayError::SingleCategory(String::new()));
    }
    let row_sums: Vec<f64> = table.iter().map(|r| r.iter().sum::<u64>() as f64).collect();
    let col_sums: Vec<f64> = (0..cols)
        .map(|j| table.iter().map(|r| r[j]).sum::<u64>() as f64)
        .collect();
    if row_sums.contains(&0.0) {
        return Err(InterplayError::ZeroMarginal("row"));
    }
    if col_sums.contains(&0.0) {
        return Err(InterplayError::ZeroMarginal("column"));
    }
    let n: f64 = row_sums.iter().sum();
    let mut chi2 = 0.0;
    let mut low_expected = false;
    for (i, row) in table.iter().enumerate() {
        for (j, &o) in row.iter().enumerate() {
            let e = row_sums[i] * col_sums[j] / n;
            low_expected |= e < MIN_EXPECTED;
            chi2 += (o as f64 - e).powi(2) / e;
        }
    }
    let dof = (rows - 1) * (cols - 1);
    Ok(ChiSquare {
        chi2,
        dof,
        p_value: chi2_sf(chi2, dof),
        low_expected,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContingencyResult {
    pub variant: Variant,
    pub attribute: String,
    /// Category labels in sorted order, one table row each.
    pub categories: Vec<String>,
    /// `[participating, non-participating]` per category.
    pub table: Vec<[u64; 2]>,
    pub test: ChiSquare,
}

impl ContingencyResult {
    pub fn significant(&self) -> bool {
        self.test.significant()
    }
}

/// Tests whether participation in `variant` is independent of a case
/// attribute, against the variant's control group. Cases without the
/// attribute are left out.
pub fn chi_square(
    variant: &Variant,
    attribute: &str,
    binning: Binning,
    threads: &[Thread],
    graph: &PropagationGraph,
    log: &EventLog,
) -> Result<ContingencyResult, InterplayError> {
    if !log.attribute_names().iter().any(|a| a == attribute) {
        return Err(InterplayError::UnknownAttribute(attribute.to_string()));
    }
    if !log.is_case_level(attribute) {
        return Err(InterplayError::NotCaseLevel(attribute.to_string()));
    }
    let participants = participating_cases(Target::Variant(variant, threads), graph);
    let control = control_group(variant, threads, graph, log)?;
    let mut cases: Vec<(usize, &str)> = Vec::new();
    for (col, group) in [&participants, &control].into_iter().enumerate() {
        for &c in group {
            if let Some(v) = log.case_attribute(c, attribute) {
                cases.push((col, v));
            }
        }
    }
    let raw: Vec<&str> = cases.iter().map(|&(_, v)| v).collect();
    let labels = categorize(&raw, binning);
    let mut counts: BTreeMap<String, [u64; 2]> = BTreeMap::new();
    for (&(col, _), label) in cases.iter().zip(labels) {
        counts.entry(label).or_default()[col] += 1;
    }
    if counts.len() < 2 {
        return Err(InterplayError::SingleCategory(attribute.to_string()));
    }
    let categories: Vec<String> = counts.keys().cloned().collect();
    let table: Vec<[u64; 2]> = counts.into_values().collect();
    let rows: Vec<Vec<u64>> = table.iter().map(|r| r.to_vec()).collect();
    let test = chi_square_table(&rows)?;
    Ok(ContingencyResult {
        variant: variant.clone(),
        attribute: attribute.to_string(),
        categories,
        table,
        test,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RankWeights {
    pub size: f64,
    pub frequency: f64,
    pub reach: f64,
}

impl Default for RankWeights {
    fn default() -> Self {
        RankWeights {
            size: 1.0,
            frequency: 1.0,
            reach: 1.0,
        }
    }
}

/// Raw ranking factors of one variant.
#[derive(Debug, Clone, PartialEq)]
pub struct VariantStats {
    pub variant: Variant,
    pub label: String,
    /// Number of high-level activities.
    pub size: usize,
    /// Number of threads realizing the variant.
    pub frequency: usize,
    pub participating: usize,
    pub non_participating: usize,
}

impl VariantStats {
    pub fn reach(&self) -> f64 {
        let total = self.participating + self.non_participating;
        if total == 0 {
            0.0
        } else {
            self.participating as f64 / total as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariantRank {
    pub variant: Variant,
    pub label: String,
    pub size: usize,
    pub frequency: usize,
    pub reach: f64,
    pub score: f64,
}

fn min_max(xs: &[f64]) -> Vec<f64> {
    let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    xs.iter()
        .map(|&x| if hi > lo { (x - lo) / (hi - lo) } else { 0.0 })
        .collect()
}

/// Orders variants by the weighted mean of their min-max normalized size,
/// frequency and reach; ties go to the smaller label.
pub fn rank_variants(
    variants: Vec<VariantStats>,
    weights: RankWeights,
) -> Result<Vec<VariantRank>, InterplayError> {
    if variants.is_empty() {
        return Err(InterplayError::NoVariants);
    }
    let w = [weights.size, weights.frequency, weights.reach];
    let total: f64 = w.iter().sum();
    if w.iter().any(|&x| !x.is_finite() || x < 0.0) || total <= 0.0 {
        return Err(InterplayError::Weights);
    }
    let size = min_max(&variants.iter().map(|v| v.size as f64).collect::<Vec<_>>());
    let freq = min_max(
        &variants
            .iter()
            .map(|v| v.frequency as f64)
            .collect::<Vec<_>>(),
    );
    let reach = min_max(&variants.iter().map(VariantStats::reach).collect::<Vec<_>>());
    let mut ranks: Vec<VariantRank> = variants
        .into_iter()
        .enumerate()
        .map(|(i, v)| VariantRank {
            reach: v.reach(),
            score: (w[0] * size[i] + w[1] * freq[i] + w[2] * reach[i]) / total,
            variant: v.variant,
            label: v.label,
            size: v.size,
            frequency: v.frequency,
        })
        .collect();
    ranks.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap_or(Ordering::Equal)
            .then_with(|| a.label.cmp(&b.label))
    });
    Ok(ranks)
}
