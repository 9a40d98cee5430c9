//! Dataset loaders and the canonical JSONL corpus format.
//!
//! A corpus file starts with the header line `{"schema":"traj-v1"}`. Every
//! following line is one sample:
//!
//! ```json
//! {"id":"h-1","task":{"start":[0,0],"end":[10,0],"m":2,"alpha_bar":1,"n_max":64,"screen":[1920,1080]},
//!  "points":[[0,0],[5,0],[10,0]],"t_ms":[0,8,16],"source":"human"}
//! ```
//!
//! `t_ms`, `n_max` (default 64) and `screen` (default 1920×1080) are
//! optional. Coordinates round-trip bit-exactly.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use dmtg_core::geom::DEFAULT_N_MAX;
use dmtg_core::{Point, Sample, TaskSpec, Trajectory};
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const SCHEMA: &str = "traj-v1";

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    schema: String,
}

fn default_n_max() -> usize {
    DEFAULT_N_MAX
}

fn default_screen() -> [f64; 2] {
    [1920.0, 1080.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskRecord {
    pub start: [f64; 2],
    pub end: [f64; 2],
    pub m: usize,
    pub alpha_bar: f64,
    #[serde(default = "default_n_max")]
    pub n_max: usize,
    #[serde(default = "default_screen")]
    pub screen: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Record {
    pub id: String,
    pub task: TaskRecord,
    pub points: Vec<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_ms: Option<Vec<f64>>,
    pub source: String,
}

impl Record {
    pub fn from_sample(s: &Sample) -> Self {
        let t = &s.task;
        let (w, h) = t.screen();
        Record {
            id: s.id.clone(),
            task: TaskRecord {
                start: [t.start().x, t.start().y],
                end: [t.end().x, t.end().y],
                m: t.m(),
                alpha_bar: t.alpha_bar(),
                n_max: t.n_max(),
                screen: [w, h],
            },
            points: s.traj.nodes().iter().map(|p| [p.x, p.y]).collect(),
            t_ms: s.traj.timestamps().map(<[f64]>::to_vec),
            source: s.source.clone(),
        }
    }

    pub fn into_sample(self) -> Result<Sample> {
        let tr = &self.task;
        let task = TaskSpec::new(
            Point::new(tr.start[0], tr.start[1]),
            Point::new(tr.end[0], tr.end[1]),
            tr.m,
            tr.alpha_bar,
            tr.n_max,
        )?
        .with_screen(tr.screen[0], tr.screen[1])?;
        let nodes = self.points.iter().map(|p| Point::new(p[0], p[1])).collect();
        let mut traj = Trajectory::new(nodes, tr.n_max)?;
        if let Some(ts) = self.t_ms {
            traj = traj.with_timestamps(ts)?;
        }
        if !traj.is_task_bound(&task) {
            bail!("sample {}: points do not match the task endpoints or m", self.id);
        }
        Ok(Sample { id: self.id, source: self.source, task, traj })
    }
}

pub fn write_jsonl(samples: &[Sample], path: &Path) -> Result<()> {
    let f = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    let mut w = BufWriter::new(f);
    let ctx = || format!("cannot write {}", path.display());
    serde_json::to_writer(&mut w, &Header { schema: SCHEMA.into() }).with_context(ctx)?;
    w.write_all(b"\n").with_context(ctx)?;
    for s in samples {
        serde_json::to_writer(&mut w, &Record::from_sample(s)).with_context(ctx)?;
        w.write_all(b"\n").with_context(ctx)?;
    }
    w.flush().with_context(ctx)?;
    Ok(())
}

pub fn read_jsonl(path: &Path) -> Result<Vec<Sample>> {
    let f = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    let mut lines = BufReader::new(f).lines();
    let first = match lines.next() {
        Some(l) => l.with_context(|| format!("cannot read {}", path.display()))?,
        None => bail!("{}: empty file, expected a {SCHEMA} header", path.display()),
    };
    let header: Header =
        serde_json::from_str(&first).with_context(|| format!("{}:1: bad schema header", path.display()))?;
    if header.schema != SCHEMA {
        bail!("{}:1: unsupported schema {:?}, expected {SCHEMA}", path.display(), header.schema);
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line.with_context(|| format!("cannot read {}", path.display()))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record =
            serde_json::from_str(&line).with_context(|| format!("{}:{}: bad record", path.display(), i + 2))?;
        out.push(rec.into_sample().with_context(|| format!("{}:{}", path.display(), i + 2))?);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    Move,
    Press,
    Release,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawEvent {
    pub t_ms: f64,
    pub kind: EventKind,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsvLoad {
    pub sessions: Vec<Vec<RawEvent>>,
    pub rows: usize,
    pub skipped: usize,
}

/// Largest tolerated share of malformed rows.
pub const MAX_MALFORMED: f64 = 0.10;

fn parse_row(r: &csv::StringRecord) -> Option<RawEvent> {
    if r.len() != 5 {
        return None;
    }
    let num = |i: usize| r[i].trim().parse::<f64>().ok().filter(|v| v.is_finite());
    let kind = match r[2].trim().to_ascii_lowercase().as_str() {
        "move" | "drag" => EventKind::Move,
        "pressed" | "press" | "down" => EventKind::Press,
        "released" | "release" | "up" => EventKind::Release,
        _ => return None,
    };
    Some(RawEvent { t_ms: num(0)?, kind, x: num(3)?, y: num(4)? })
}

/// SapiMouse-style CSV with columns `timestamp, button, state, x, y`
/// (header optional). States `Move`/`Drag`, `Pressed`, `Released` are
/// recognised case-insensitively. A new session starts whenever the
/// timestamp goes backwards.
pub fn load_sapimouse_csv(path: &Path) -> Result<CsvLoad> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("cannot open {}", path.display()))?;
    let mut sessions: Vec<Vec<RawEvent>> = Vec::new();
    let mut cur: Vec<RawEvent> = Vec::new();
    let (mut rows, mut skipped) = (0usize, 0usize);
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.with_context(|| format!("{}: unreadable row {}", path.display(), i + 1))?;
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        if i == 0 && rec.get(0).is_some_and(|f| f.parse::<f64>().is_err()) {
            continue;
        }
        rows += 1;
        match parse_row(&rec) {
            Some(ev) => {
                if cur.last().is_some_and(|l| ev.t_ms < l.t_ms) {
                    sessions.push(std::mem::take(&mut cur));
                }
                cur.push(ev);
            }
            None => skipped += 1,
        }
    }
    if !cur.is_empty() {
        sessions.push(cur);
    }
    if rows == 0 {
        bail!("{}: no data rows", path.display());
    }
    if skipped as f64 > MAX_MALFORMED * rows as f64 {
        bail!("{}: {skipped} of {rows} rows are malformed", path.display());
    }
    if skipped > 0 {
        log::warn!("{}: skipped {skipped} malformed rows", path.display());
    }
    Ok(CsvLoad { sessions, rows, skipped })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TracesLoad {
    pub trajs: Vec<Trajectory>,
    /// Traces with fewer than two points.
    pub skipped: usize,
}

fn point_at(v: &Value, path: &str) -> Result<Point> {
    let num = |x: Option<&Value>, p: String| -> Result<f64> {
        x.and_then(Value::as_f64).filter(|f| f.is_finite()).ok_or_else(|| anyhow!("{p}: expected a finite number"))
    };
    match v {
        Value::Array(a) if a.len() >= 2 => {
            Ok(Point::new(num(a.first(), format!("{path}[0]"))?, num(a.get(1), format!("{path}[1]"))?))
        }
        Value::Object(o) => {
            Ok(Point::new(num(o.get("x"), format!("{path}.x"))?, num(o.get("y"), format!("{path}.y"))?))
        }
        _ => bail!("{path}: expected [x, y] or {{\"x\":…, \"y\":…}}"),
    }
}

/// Traces JSON: an array of traces, an object with a `traces` array, or an
/// array of such objects. A trace is an array of points, each `[x, y]` or
/// `{"x": …, "y": …}`; other point keys (such as `t`) are ignored, so the
/// trajectories carry no timestamps.
pub fn load_traces_json(path: &Path) -> Result<TracesLoad> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot open {}", path.display()))?;
    let root: Value = serde_json::from_str(&text).with_context(|| format!("{}: invalid JSON", path.display()))?;
    let mut groups: Vec<(String, &Vec<Value>)> = Vec::new();
    match &root {
        Value::Object(_) => match root.get("traces") {
            Some(Value::Array(a)) => groups.push(("$.traces".into(), a)),
            _ => bail!("{}: $.traces: expected an array of traces", path.display()),
        },
        Value::Array(items) if items.iter().all(Value::is_object) && !items.is_empty() => {
            for (i, it) in items.iter().enumerate() {
                match it.get("traces") {
                    Some(Value::Array(a)) => groups.push((format!("$[{i}].traces"), a)),
                    _ => bail!("{}: $[{i}].traces: expected an array of traces", path.display()),
                }
            }
        }
        Value::Array(items) => groups.push(("$".into(), items)),
        _ => bail!("{}: $: expected an array or an object with `traces`", path.display()),
    }
    let mut trajs = Vec::new();
    let mut skipped = 0;
    for (base, traces) in groups {
        for (i, tr) in traces.iter().enumerate() {
            let p = format!("{base}[{i}]");
            let Value::Array(pts) = tr else {
                bail!("{}: {p}: expected an array of points", path.display());
            };
            let nodes = pts
                .iter()
                .enumerate()
                .map(|(k, v)| point_at(v, &format!("{p}[{k}]")))
                .collect::<Result<Vec<_>>>()
                .with_context(|| format!("{}", path.display()))?;
            if nodes.len() < 2 {
                skipped += 1;
                continue;
            }
            let n_max = (nodes.len() - 1).max(DEFAULT_N_MAX);
            trajs.push(Trajectory::new(nodes, n_max)?);
        }
    }
    if skipped > 0 {
        log::warn!("{}: skipped {skipped} traces with fewer than two points", path.display());
    }
    Ok(TracesLoad { trajs, skipped })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segmented {
    pub trajs: Vec<Trajectory>,
    /// Segments shorter than `min_len` nodes.
    pub dropped: usize,
}

/// Cuts sessions into movements at button presses and releases and at
/// gaps longer than `gap_ms`; the press or release position ends the
/// movement before it. Events not strictly later than the previous node are
/// merged into it. Movements with fewer than `min_len` nodes are dropped.
pub fn segment_sessions(sessions: &[Vec<RawEvent>], gap_ms: f64, min_len: usize) -> Segmented {
    let mut trajs = Vec::new();
    let mut dropped = 0;
    let min_len = min_len.max(2);
    let mut flush = |seg: &mut Vec<RawEvent>| {
        if seg.is_empty() {
            return;
        }
        if seg.len() < min_len {
            dropped += 1;
            seg.clear();
            return;
        }
        let nodes: Vec<Point> = seg.iter().map(|e| Point::new(e.x, e.y)).collect();
        let ts: Vec<f64> = seg.iter().map(|e| e.t_ms).collect();
        let n_max = (nodes.len() - 1).max(DEFAULT_N_MAX);
        match Trajectory::new(nodes, n_max).and_then(|t| t.with_timestamps(ts)) {
            Ok(t) => trajs.push(t),
            Err(_) => dropped += 1,
        }
        seg.clear();
    };
    for session in sessions {
        let mut seg: Vec<RawEvent> = Vec::new();
        for ev in session {
            if let Some(last) = seg.last() {
                if ev.t_ms - last.t_ms > gap_ms {
                    flush(&mut seg);
                }
            }
            match seg.last() {
                Some(last) if ev.t_ms <= last.t_ms => {}
                _ => seg.push(*ev),
            }
            if ev.kind != EventKind::Move {
                flush(&mut seg);
            }
        }
        flush(&mut seg);
    }
    Segmented { trajs, dropped }
}
