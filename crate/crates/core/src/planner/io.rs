use std::fmt::Write as _;
use std::path::Path;

use super::{Demonstration, PlanStep, PlanTrajectory};
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

const PLAN_KIND: &str = "pgrl-plan";
const DEMO_KIND: &str = "pgrl-demo";
const PLAN_COLUMNS: &str = "t qa0 qa1 qa2 qa3 qu_x qu_z qu_theta a0 a1 a2 a3 teleport";
const DEMO_COLUMNS: &str = "t qa0 qa1 qa2 qa3";

/// Metadata carried in the `#` header of plan and demonstration files.
#[derive(Debug, Clone, PartialEq)]
pub struct FileHeader {
    pub format_version: u32,
    pub scene_hash: String,
    pub seed: u64,
    pub dt: f64,
}

fn header_text(kind: &str, h: &FileHeader, columns: &str) -> String {
    format!("# {kind}\n# format_version {}\n# scene_hash {}\n# seed {}\n# dt {}\n# columns {columns}\n", h.format_version, h.scene_hash, h.seed, h.dt)
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn plan_to_string(plan: &PlanTrajectory, header: &FileHeader) -> String {
    let mut s = header_text(PLAN_KIND, header, PLAN_COLUMNS);
    for (i, st) in plan.steps.iter().enumerate() {
        let _ = write!(s, "{}", i as f64 * plan.dt);
        for v in st.q_a.iter().chain(&st.q_u).chain(&st.a) {
            let _ = write!(s, " {v}");
        }
        let _ = writeln!(s, " {}", u8::from(st.teleport));
    }
    s
}

pub fn demo_to_string(demo: &Demonstration) -> String {
    let header = FileHeader { format_version: FORMAT_VERSION, scene_hash: demo.scene_hash.clone(), seed: demo.seed, dt: demo.dt };
    let mut s = header_text(DEMO_KIND, &header, DEMO_COLUMNS);
    for (i, q) in demo.q_a.iter().enumerate() {
        let _ = writeln!(s, "{} {} {} {} {}", i as f64 * demo.dt, q[0], q[1], q[2], q[3]);
    }
    s
}

pub fn write_plan(path: &Path, plan: &PlanTrajectory, header: &FileHeader) -> Result<()> {
    write_file(path, &plan_to_string(plan, header))
}

pub fn write_demo(path: &Path, demo: &Demonstration) -> Result<()> {
    write_file(path, &demo_to_string(demo))
}

struct Parsed {
    header: FileHeader,
    rows: Vec<(usize, Vec<f64>)>,
}

fn parse(path: &Path, text: &str, kind: &str, columns: &str) -> Result<Parsed> {
    let err = |line: usize, message: String| Error::Parse { path: path.display().to_string(), line, message };
    let mut version = None;
    let mut scene_hash = None;
    let mut seed = None;
    let mut dt = None;
    let mut seen_kind = false;
    let width = columns.split_whitespace().count();
    let mut rows = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(meta) = trimmed.strip_prefix('#') {
            let meta = meta.trim();
            let (key, value) = meta.split_once(' ').map(|(k, v)| (k, v.trim())).unwrap_or((meta, ""));
            match key {
                k if k == kind => seen_kind = true,
                "format_version" => version = Some(value.parse::<u32>().map_err(|e| err(line, format!("bad format_version: {e}")))?),
                "scene_hash" => scene_hash = Some(value.to_string()),
                "seed" => seed = Some(value.parse::<u64>().map_err(|e| err(line, format!("bad seed: {e}")))?),
                "dt" => dt = Some(value.parse::<f64>().map_err(|e| err(line, format!("bad dt: {e}")))?),
                "columns" => {
                    if value.split_whitespace().ne(columns.split_whitespace()) {
                        return Err(err(line, format!("expected columns '{columns}', found '{value}'")));
                    }
                }
                _ => {}
            }
            continue;
        }
        if !seen_kind {
            return Err(err(line, format!("missing '# {kind}' header")));
        }
        let values =
            trimmed.split_whitespace().map(|t| t.parse::<f64>().map_err(|e| err(line, format!("bad number '{t}': {e}")))).collect::<Result<Vec<_>>>()?;
        if values.len() != width {
            return Err(err(line, format!("expected {width} fields, found {}", values.len())));
        }
        rows.push((line, values));
    }
    let last = text.lines().count();
    if !seen_kind {
        return Err(err(last.max(1), format!("missing '# {kind}' header")));
    }
    let format_version = version.ok_or_else(|| err(last, "missing format_version".into()))?;
    if format_version != FORMAT_VERSION {
        return Err(err(last, format!("unsupported format_version {format_version}")));
    }
    let header = FileHeader {
        format_version,
        scene_hash: scene_hash.ok_or_else(|| err(last, "missing scene_hash".into()))?,
        seed: seed.ok_or_else(|| err(last, "missing seed".into()))?,
        dt: dt.filter(|d| *d > 0.0).ok_or_else(|| err(last, "missing or non-positive dt".into()))?,
    };
    Ok(Parsed { header, rows })
}

pub fn plan_from_str(path: &Path, text: &str) -> Result<(PlanTrajectory, FileHeader)> {
    let parsed = parse(path, text, PLAN_KIND, PLAN_COLUMNS)?;
    let mut steps = Vec::with_capacity(parsed.rows.len());
    for (line, v) in parsed.rows {
        let teleport = match v[12] {
            0.0 => false,
            1.0 => true,
            other => return Err(Error::Parse { path: path.display().to_string(), line, message: format!("teleport flag must be 0 or 1, found {other}") }),
        };
        steps.push(PlanStep { q_a: [v[1], v[2], v[3], v[4]], q_u: [v[5], v[6], v[7]], a: [v[8], v[9], v[10], v[11]], teleport });
    }
    let dt = parsed.header.dt;
    Ok((PlanTrajectory { steps, dt }, parsed.header))
}

pub fn demo_from_str(path: &Path, text: &str) -> Result<Demonstration> {
    let parsed = parse(path, text, DEMO_KIND, DEMO_COLUMNS)?;
    let q_a = parsed.rows.into_iter().map(|(_, v)| [v[1], v[2], v[3], v[4]]).collect();
    let h = parsed.header;
    Ok(Demonstration { q_a, dt: h.dt, seed: h.seed, scene_hash: h.scene_hash })
}

pub fn read_plan(path: &Path) -> Result<(PlanTrajectory, FileHeader)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    plan_from_str(path, &text)
}

pub fn read_demo(path: &Path) -> Result<Demonstration> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    demo_from_str(path, &text)
}
