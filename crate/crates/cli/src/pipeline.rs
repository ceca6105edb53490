//! Subcommand orchestration: load, frame, detect, connect, analyze, export.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use hlevent_core::detection::detect;
use hlevent_core::event_log::{load_csv_reader, write_csv};
use hlevent_core::framing::TimeWindows;
use hlevent_core::hl_export::{hl_records, write_hl_log};
use hlevent_core::interplay::{
    chi_square, control_group, participating_cases, rank_variants, ContingencyResult, Target,
    VariantRank, VariantStats,
};
use hlevent_core::propagation::{cascades, thread_variant, threads};
use hlevent_core::robustness::{analyze, RobustnessReport};
use hlevent_core::simgen::generate;
use hlevent_core::{
    build_graph, make_framing, AspectEngine, Cascade, EventLog, HighLevelEvent, PropagationGraph,
    ProximityContext, Thread, ThreadSet, Variant,
};
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::Config;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    /// High-level events (hles.csv).
    Detect,
    /// Propagation graph and cascades (cascades.json).
    Cascades,
    /// Threads within cascades (threads.csv).
    Threads,
    /// Variant ranking and attribute independence tests (variants.csv, interplay.csv).
    Interplay,
    /// Disruptions and waiting-time robustness per activity (robustness.csv).
    Robustness,
    /// High-level event log (hl_log.csv).
    Export,
    /// Synthetic log and ground truth (log.csv, ground_truth.json).
    Simulate,
    /// Per-window aspect series (series.csv).
    Plotdata,
}

impl Command {
    pub const ALL: [Command; 8] = [
        Command::Detect,
        Command::Cascades,
        Command::Threads,
        Command::Interplay,
        Command::Robustness,
        Command::Export,
        Command::Simulate,
        Command::Plotdata,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Detect => "detect",
            Command::Cascades => "cascades",
            Command::Threads => "threads",
            Command::Interplay => "interplay",
            Command::Robustness => "robustness",
            Command::Export => "export",
            Command::Simulate => "simulate",
            Command::Plotdata => "plotdata",
        }
    }
}

pub const MANIFEST: &str = "manifest.json";

/// A finished run.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub command: Command,
    pub outputs: Vec<PathBuf>,
    pub counts: BTreeMap<String, u64>,
}

#[derive(Default)]
struct Timings(Vec<(String, f64)>);

impl Timings {
    fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let t0 = Instant::now();
        let out = f();
        self.0
            .push((stage.to_string(), t0.elapsed().as_secs_f64() * 1000.0));
        out
    }
}

/// Files and counts produced in memory, written only once every stage succeeded.
#[derive(Default)]
struct Produced {
    files: Vec<(&'static str, Vec<u8>)>,
    counts: BTreeMap<String, u64>,
    input: Option<(PathBuf, String)>,
}

impl Produced {
    fn count(&mut self, key: &str, n: usize) {
        self.counts.insert(key.to_string(), n as u64);
    }
}

pub struct Loaded {
    pub log: EventLog,
    pub windows: TimeWindows,
    pub path: PathBuf,
    pub sha256: String,
}

pub fn load(cfg: &Config) -> Result<Loaded> {
    let path = cfg.input.path.clone().context("input.path is not set")?;
    let bytes =
        std::fs::read(&path).with_context(|| format!("reading input {}", path.display()))?;
    let log = load_csv_reader(bytes.as_slice(), &cfg.input.schema)
        .with_context(|| format!("loading {}", path.display()))?;
    let windows = make_framing(&log, cfg.framing.width, cfg.origin()?)?;
    Ok(Loaded {
        log,
        windows,
        path,
        sha256: hex::encode(Sha256::digest(&bytes)),
    })
}

pub fn detect_hles(cfg: &Config, data: &Loaded) -> Result<Vec<HighLevelEvent>> {
    let engine = AspectEngine::new(&data.log, &data.windows);
    let policy = cfg.thresholds.policy(&data.log)?;
    Ok(detect(&engine, &cfg.aspects(&data.log), &policy)?)
}

pub fn connect(
    cfg: &Config,
    data: &Loaded,
    hles: Vec<HighLevelEvent>,
) -> Result<(PropagationGraph, Vec<Cascade>)> {
    let ctx = ProximityContext::new(&data.log);
    let graph = build_graph(hles, cfg.proximity.method, cfg.proximity.lambda, &ctx)?;
    let cs = cascades(&graph);
    Ok((graph, cs))
}

pub fn thread_set(cfg: &Config, graph: &PropagationGraph, cs: &[Cascade]) -> Result<ThreadSet> {
    Ok(threads(graph, cs, cfg.threads)?)
}

/// One attribute test of one variant; failures are kept as notes.
pub struct TestRow {
    pub variant: String,
    pub attribute: String,
    pub result: Result<ContingencyResult, String>,
}

pub struct InterplayOutcome {
    pub ranks: Vec<VariantRank>,
    /// Participating and non-participating case counts by variant label.
    pub groups: BTreeMap<String, (usize, usize)>,
    pub tests: Vec<TestRow>,
}

pub fn interplay(
    cfg: &Config,
    data: &Loaded,
    graph: &PropagationGraph,
    ts: &ThreadSet,
) -> Result<InterplayOutcome> {
    let log = &data.log;
    let mut by_variant: BTreeMap<Variant, Vec<Thread>> = BTreeMap::new();
    for t in &ts.threads {
        by_variant
            .entry(thread_variant(graph, t))
            .or_default()
            .push(t.clone());
    }
    let stats: Vec<(VariantStats, Vec<Thread>)> = by_variant
        .into_par_iter()
        .map(|(variant, own)| {
            let participating = participating_cases(Target::Variant(&variant, &own), graph).len();
            let non_participating = match control_group(&variant, &own, graph, log) {
                Ok(control) => control.len(),
                Err(_) => log.num_cases() - participating,
            };
            let s = VariantStats {
                label: variant.label(log),
                size: variant.len(),
                frequency: own.len(),
                variant,
                participating,
                non_participating,
            };
            (s, own)
        })
        .collect();
    if stats.is_empty() {
        return Ok(InterplayOutcome {
            ranks: Vec::new(),
            groups: BTreeMap::new(),
            tests: Vec::new(),
        });
    }
    let groups = stats
        .iter()
        .map(|(s, _)| (s.label.clone(), (s.participating, s.non_participating)))
        .collect();
    let threads_of: BTreeMap<String, Vec<Thread>> = stats
        .iter()
        .map(|(s, own)| (s.label.clone(), own.clone()))
        .collect();
    let ranks = rank_variants(
        stats.into_iter().map(|(s, _)| s).collect(),
        cfg.interplay.weights,
    )?;
    let attributes = if cfg.interplay.attributes.is_empty() {
        log.case_level_attributes()
    } else {
        cfg.interplay.attributes.clone()
    };
    let binning = cfg.interplay.binning()?;
    let pairs: Vec<(&VariantRank, &String)> = ranks
        .iter()
        .take(cfg.interplay.test_top)
        .flat_map(|r| attributes.iter().map(move |a| (r, a)))
        .collect();
    let tests = pairs
        .into_par_iter()
        .map(|(r, attr)| TestRow {
            variant: r.label.clone(),
            attribute: attr.clone(),
            result: chi_square(&r.variant, attr, binning, &threads_of[&r.label], graph, log)
                .map_err(|e| e.to_string()),
        })
        .collect();
    Ok(InterplayOutcome {
        ranks,
        groups,
        tests,
    })
}

pub fn robustness(cfg: &Config, data: &Loaded) -> Result<Vec<RobustnessReport>> {
    let engine = AspectEngine::new(&data.log, &data.windows);
    let policy = cfg.robustness.policy(&data.log)?;
    Ok(analyze(&engine, &policy)?)
}

fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    Ok(w.into_inner().map_err(|e| e.into_error())?)
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn joined<T: ToString>(xs: impl IntoIterator<Item = T>) -> String {
    xs.into_iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(";")
}

pub fn render_hles(data: &Loaded, hles: &[HighLevelEvent]) -> Result<Vec<u8>> {
    let log = &data.log;
    csv_bytes(
        &[
            "aspect",
            "component",
            "window_index",
            "window_start",
            "value",
            "threshold",
            "n_events",
            "case_ids",
        ],
        hles.iter().map(|h| {
            vec![
                h.aspect.name().to_string(),
                log.component_label(h.component),
                h.window.to_string(),
                data.windows.window(h.window).start.to_rfc3339(),
                h.value.to_string(),
                h.threshold.to_string(),
                h.event_set.len().to_string(),
                joined(h.cases(log).into_iter().map(|c| log.case_name(c))),
            ]
        }),
    )
}

#[derive(Serialize)]
struct HleJson {
    id: usize,
    label: String,
    aspect: &'static str,
    component: String,
    window: i64,
    value: f64,
    threshold: f64,
    n_events: usize,
}

#[derive(Serialize)]
struct WindowGroupJson {
    window: i64,
    window_start: String,
    members: Vec<usize>,
}

#[derive(Serialize)]
struct CascadeJson {
    id: usize,
    members: Vec<usize>,
    windows: Vec<WindowGroupJson>,
    variant: String,
}

#[derive(Serialize)]
struct CascadesJson {
    method: &'static str,
    lambda: f64,
    hles: Vec<HleJson>,
    edges: Vec<(usize, usize)>,
    cascades: Vec<CascadeJson>,
}

pub fn render_cascades(
    cfg: &Config,
    data: &Loaded,
    graph: &PropagationGraph,
    cs: &[Cascade],
) -> Result<Vec<u8>> {
    let log = &data.log;
    let doc = CascadesJson {
        method: cfg.proximity.method.name(),
        lambda: cfg.proximity.lambda,
        hles: graph
            .nodes()
            .iter()
            .enumerate()
            .map(|(id, h)| HleJson {
                id,
                label: h.activity().label(log),
                aspect: h.aspect.name(),
                component: log.component_label(h.component),
                window: h.window,
                value: h.value,
                threshold: h.threshold,
                n_events: h.event_set.len(),
            })
            .collect(),
        edges: graph.edges().collect(),
        cascades: cs
            .iter()
            .map(|c| CascadeJson {
                id: c.id,
                members: c.members.clone(),
                windows: c
                    .window_groups
                    .iter()
                    .map(|(w, m)| WindowGroupJson {
                        window: *w,
                        window_start: data.windows.window(*w).start.to_rfc3339(),
                        members: m.clone(),
                    })
                    .collect(),
                variant: hlevent_core::propagation::cascade_variant(graph, c).label(log),
            })
            .collect(),
    };
    let mut out = serde_json::to_vec_pretty(&doc)?;
    out.push(b'\n');
    Ok(out)
}

pub fn render_threads(data: &Loaded, graph: &PropagationGraph, ts: &ThreadSet) -> Result<Vec<u8>> {
    csv_bytes(
        &[
            "thread",
            "cascade",
            "length",
            "case_share",
            "maximal",
            "variant",
            "hles",
            "windows",
        ],
        ts.threads.iter().enumerate().map(|(i, t)| {
            vec![
                i.to_string(),
                t.cascade.to_string(),
                t.nodes.len().to_string(),
                t.case_share.to_string(),
                t.maximal.to_string(),
                thread_variant(graph, t).label(&data.log),
                joined(&t.nodes),
                joined(t.nodes.iter().map(|&v| graph.node(v).window)),
            ]
        }),
    )
}

pub fn render_variants(out: &InterplayOutcome) -> Result<Vec<u8>> {
    csv_bytes(
        &[
            "rank",
            "variant",
            "size",
            "frequency",
            "participating",
            "non_participating",
            "reach",
            "score",
        ],
        out.ranks.iter().enumerate().map(|(i, r)| {
            let (p, np) = out.groups[&r.label];
            vec![
                (i + 1).to_string(),
                r.label.clone(),
                r.size.to_string(),
                r.frequency.to_string(),
                p.to_string(),
                np.to_string(),
                r.reach.to_string(),
                r.score.to_string(),
            ]
        }),
    )
}

pub fn render_interplay(out: &InterplayOutcome) -> Result<Vec<u8>> {
    let sep = |xs: Vec<String>| xs.join("|");
    csv_bytes(
        &[
            "variant",
            "attribute",
            "categories",
            "participating",
            "control",
            "chi2",
            "dof",
            "p_value",
            "significant",
            "low_expected",
            "note",
        ],
        out.tests.iter().map(|t| {
            let mut row = vec![t.variant.clone(), t.attribute.clone()];
            match &t.result {
                Ok(c) => row.extend([
                    sep(c.categories.clone()),
                    sep(c.table.iter().map(|r| r[0].to_string()).collect()),
                    sep(c.table.iter().map(|r| r[1].to_string()).collect()),
                    c.test.chi2.to_string(),
                    c.test.dof.to_string(),
                    c.test.p_value.to_string(),
                    c.significant().to_string(),
                    c.test.low_expected.to_string(),
                    String::new(),
                ]),
                Err(e) => {
                    row.extend(std::iter::repeat_n(String::new(), 8));
                    row.push(e.clone());
                }
            }
            row
        }),
    )
}

pub fn render_robustness(data: &Loaded, reports: &[RobustnessReport]) -> Result<Vec<u8>> {
    csv_bytes(
        &[
            "activity",
            "queue_threshold",
            "enqueue_ratio_threshold",
            "takeover_threshold",
            "takeover_ratio_threshold",
            "disruptions",
            "disruption_windows",
            "scope_windows",
            "affected",
            "unaffected",
            "wt",
            "wt_unaffected",
            "r_wt",
            "reading",
        ],
        reports.iter().map(|r| {
            vec![
                data.log.activity_name(r.activity).to_string(),
                r.thresholds.queue.to_string(),
                r.thresholds.enqueue_ratio.to_string(),
                r.thresholds.takeover.to_string(),
                r.thresholds.takeover_ratio.to_string(),
                r.disruptions.len().to_string(),
                joined(r.disruptions.iter().map(|d| d.window)),
                r.scopes
                    .iter()
                    .map(|s| s.windows.len())
                    .sum::<usize>()
                    .to_string(),
                r.affected.to_string(),
                r.unaffected.to_string(),
                opt(r.wt),
                opt(r.wt_unaffected),
                opt(r.r_wt),
                r.reading.name().to_string(),
            ]
        }),
    )
}

pub fn render_hl_log(
    cfg: &Config,
    data: &Loaded,
    graph: &PropagationGraph,
    cs: &[Cascade],
) -> Result<Vec<u8>> {
    let records = hl_records(
        graph,
        cs,
        &data.windows,
        cfg.export.timestamp_mode,
        &data.log,
    );
    let mut buf = Vec::new();
    write_hl_log(&records, &mut buf)?;
    Ok(buf)
}

pub fn render_series(cfg: &Config, data: &Loaded) -> Result<Vec<u8>> {
    let log = &data.log;
    let engine = AspectEngine::new(log, &data.windows);
    let pairs: Vec<_> = cfg
        .aspects(log)
        .into_iter()
        .flat_map(|k| engine.components_for(k).into_iter().map(move |c| (k, c)))
        .collect();
    let chunks: Vec<Vec<Vec<String>>> = pairs
        .par_iter()
        .map(|&(k, c)| -> Result<Vec<Vec<String>>> {
            let label = log.component_label(c);
            Ok(engine
                .series(k, c)?
                .into_iter()
                .map(|ev| {
                    vec![
                        k.name().to_string(),
                        label.clone(),
                        ev.window.to_string(),
                        data.windows.window(ev.window).start.to_rfc3339(),
                        opt(ev.value),
                        ev.event_set.len().to_string(),
                    ]
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    csv_bytes(
        &[
            "aspect",
            "component",
            "window_index",
            "window_start",
            "value",
            "n_events",
        ],
        chunks.into_iter().flatten(),
    )
}

fn produce(cmd: Command, cfg: &Config, tm: &mut Timings) -> Result<Produced> {
    let mut out = Produced::default();
    if cmd == Command::Simulate {
        let scenario = cfg.simulate.scenario(cfg.seed)?;
        let (log, truth) = tm.time("simulate", || generate(&scenario))?;
        let mut buf = Vec::new();
        write_csv(&log, &mut buf)?;
        let mut gt = serde_json::to_vec_pretty(&truth)?;
        gt.push(b'\n');
        out.count("events", log.len());
        out.count("cases", log.num_cases());
        out.count("burst_windows", truth.bursts.values().map(Vec::len).sum());
        out.count(
            "slowdown_windows",
            truth.slowdowns.values().map(Vec::len).sum(),
        );
        out.files.push(("log.csv", buf));
        out.files.push(("ground_truth.json", gt));
        return Ok(out);
    }
    let data = tm.time("load", || load(cfg))?;
    out.input = Some((data.path.clone(), data.sha256.clone()));
    out.count("events", data.log.len());
    out.count("cases", data.log.num_cases());
    out.count("windows", data.windows.len());
    match cmd {
        Command::Robustness => {
            let reports = tm.time("robustness", || robustness(cfg, &data))?;
            out.count("activities", reports.len());
            out.count(
                "disruptions",
                reports.iter().map(|r| r.disruptions.len()).sum(),
            );
            out.files
                .push(("robustness.csv", render_robustness(&data, &reports)?));
            return Ok(out);
        }
        Command::Plotdata => {
            out.files.push((
                "series.csv",
                tm.time("series", || render_series(cfg, &data))?,
            ));
            return Ok(out);
        }
        _ => {}
    }
    let hles = tm.time("detect", || detect_hles(cfg, &data))?;
    out.count("hles", hles.len());
    if cmd == Command::Detect {
        out.files.push(("hles.csv", render_hles(&data, &hles)?));
        return Ok(out);
    }
    let (graph, cs) = tm.time("connect", || connect(cfg, &data, hles))?;
    out.count("edges", graph.edge_count());
    out.count("cascades", cs.len());
    match cmd {
        Command::Cascades => {
            out.files
                .push(("cascades.json", render_cascades(cfg, &data, &graph, &cs)?));
            return Ok(out);
        }
        Command::Export => {
            out.files
                .push(("hl_log.csv", render_hl_log(cfg, &data, &graph, &cs)?));
            return Ok(out);
        }
        _ => {}
    }
    let ts = tm.time("threads", || thread_set(cfg, &graph, &cs))?;
    out.count("threads", ts.threads.len());
    out.count("threads_truncated", usize::from(ts.truncated));
    if ts.truncated {
        eprintln!("warning: thread enumeration hit threads.max_count or threads.max_length");
    }
    if cmd == Command::Threads {
        out.files
            .push(("threads.csv", render_threads(&data, &graph, &ts)?));
        return Ok(out);
    }
    let ip = tm.time("interplay", || interplay(cfg, &data, &graph, &ts))?;
    out.count("variants", ip.ranks.len());
    out.count("tests", ip.tests.len());
    out.count(
        "significant",
        ip.tests
            .iter()
            .filter(|t| t.result.as_ref().is_ok_and(|c| c.significant()))
            .count(),
    );
    out.files.push(("variants.csv", render_variants(&ip)?));
    out.files.push(("interplay.csv", render_interplay(&ip)?));
    Ok(out)
}

fn write_all(cfg: &Config, cmd: Command, produced: Produced, tm: Timings) -> Result<RunReport> {
    let dir = &cfg.output;
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut outputs = Vec::new();
    for (name, bytes) in &produced.files {
        let path = dir.join(name);
        std::fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        outputs.push(path);
    }
    let manifest = serde_json::json!({
        "tool": "hlevent",
        "version": env!("CARGO_PKG_VERSION"),
        "command": cmd.name(),
        "config_sha256": cfg.hash(),
        "input": produced.input.as_ref().map(|(p, h)| serde_json::json!({ "path": p, "sha256": h })),
        "parallelism": cfg.parallelism(),
        "counts": produced.counts,
        "timings_ms": tm.0.iter().map(|(k, v)| (k.clone(), *v)).collect::<BTreeMap<_, _>>(),
        "outputs": produced.files.iter().map(|(n, _)| *n).collect::<Vec<_>>(),
    });
    let path = dir.join(MANIFEST);
    let mut text = serde_json::to_vec_pretty(&manifest)?;
    text.push(b'\n');
    std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    outputs.push(path);
    Ok(RunReport {
        command: cmd,
        outputs,
        counts: produced.counts,
    })
}

/// Runs one subcommand on a pool of `cfg.parallelism()` threads.
pub fn run(cmd: Command, cfg: &Config) -> Result<RunReport> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.parallelism())
        .build()?;
    let mut tm = Timings::default();
    let produced = pool.install(|| produce(cmd, cfg, &mut tm))?;
    write_all(cfg, cmd, produced, tm)
}

/// Output directory contents other than the manifest, by file name.
pub fn output_files(dir: &Path) -> Result<BTreeMap<String, Vec<u8>>> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir)? {
        let entry = entry?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if name != MANIFEST && entry.file_type()?.is_file() {
            out.insert(name, std::fs::read(entry.path())?);
        }
    }
    Ok(out)
}
