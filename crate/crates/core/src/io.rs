//! Field containers, report envelopes and atomic file output.
//!
//! The binary field container is little-endian: the magic `BSWF`, `u32 n`,
//! `f64 length`, `u32 components`, then `components * n * n` values of `f64`
//! in component-major, row-major order (`x1` fastest).

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::linear::{Trajectory, TrajectoryMeta};

pub const MAGIC: &[u8; 4] = b"BSWF";
pub const SCHEMA_VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 8 + 4;

pub fn encode_field(f: &Field) -> Vec<u8> {
    let grid = f.grid();
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * f.values().len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(grid.n() as u32).to_le_bytes());
    out.extend_from_slice(&grid.length().to_le_bytes());
    out.extend_from_slice(&(f.components() as u32).to_le_bytes());
    for v in f.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_field(bytes: &[u8]) -> Result<Field> {
    if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
        return Err(Error::Format("missing BSWF header".into()));
    }
    let n = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let length = f64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let components = u32::from_le_bytes(bytes[16..20].try_into().unwrap()) as usize;
    let grid = Grid::new(n, length)?;
    let count = components * grid.len();
    let body = &bytes[HEADER_LEN..];
    if components == 0 || body.len() != 8 * count {
        return Err(Error::Format(format!(
            "body holds {} bytes, expected {} for {components} component(s) on n = {n}",
            body.len(),
            8 * count
        )));
    }
    let values = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Field::from_values(grid, components, values)
}

pub fn read_field(path: &Path) -> Result<Field> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_field(&bytes).map_err(|e| match e {
        Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn write_field(path: &Path, f: &Field, force: bool) -> Result<()> {
    atomic_write(path, &encode_field(f), force)
}

/// CSV rendering: a `# bswf` comment line, a header, then one row per lattice point.
pub fn field_to_csv(f: &Field) -> String {
    let grid = f.grid();
    let n = grid.n();
    let mut out = format!(
        "# bswf n={} length={:?} components={}\ni1,i2",
        n,
        grid.length(),
        f.components()
    );
    for c in 0..f.components() {
        let _ = write!(out, ",v{c}");
    }
    out.push('\n');
    for i2 in 0..n {
        for i1 in 0..n {
            let _ = write!(out, "{i1},{i2}");
            for c in 0..f.components() {
                let _ = write!(out, ",{:?}", f.component_values(c)[i2 * n + i1]);
            }
            out.push('\n');
        }
    }
    out
}

pub fn field_from_csv(text: &str) -> Result<Field> {
    let mut lines = text.lines();
    let head = lines
        .next()
        .and_then(|l| l.strip_prefix("# bswf "))
        .ok_or_else(|| Error::Format("missing '# bswf' line".into()))?;
    let mut n = None;
    let mut length = None;
    let mut components = None;
    for kv in head.split_whitespace() {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Format(format!("malformed header entry {kv:?}")))?;
        let bad = |_| Error::Format(format!("malformed header entry {kv:?}"));
        match k {
            "n" => n = Some(v.parse::<usize>().map_err(|e| bad(e.to_string()))?),
            "length" => length = Some(v.parse::<f64>().map_err(|e| bad(e.to_string()))?),
            "components" => components = Some(v.parse::<usize>().map_err(|e| bad(e.to_string()))?),
            _ => return Err(Error::Format(format!("unknown header key {k:?}"))),
        }
    }
    let (n, length, components) = match (n, length, components) {
        (Some(a), Some(b), Some(c)) if c > 0 => (a, b, c),
        _ => return Err(Error::Format("header needs n, length and components".into())),
    };
    let grid = Grid::new(n, length)?;
    lines.next().ok_or_else(|| Error::Format("missing column header".into()))?;
    let len = grid.len();
    let mut values = vec![f64::NAN; components * len];
    let mut seen = vec![false; len];
    for (row, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != components + 2 {
            return Err(Error::Format(format!("row {row}: expected {} cells", components + 2)));
        }
        let parse_idx = |s: &str| {
            s.trim()
                .parse::<usize>()
                .ok()
                .filter(|&i| i < n)
                .ok_or_else(|| Error::Format(format!("row {row}: bad index {s:?}")))
        };
        let idx = parse_idx(cells[1])? * n + parse_idx(cells[0])?;
        if std::mem::replace(&mut seen[idx], true) {
            return Err(Error::Format(format!("row {row}: duplicate lattice point")));
        }
        for c in 0..components {
            values[c * len + idx] = cells[c + 2]
                .trim()
                .parse()
                .map_err(|_| Error::Format(format!("row {row}: bad value {:?}", cells[c + 2])))?;
        }
    }
    if seen.iter().any(|s| !s) {
        return Err(Error::Format("missing lattice points".into()));
    }
    Field::from_values(grid, components, values)
}

/// Writes through a temporary sibling and a rename. Refuses to replace an
/// existing file unless `force` is set.
pub fn atomic_write(path: &Path, bytes: &[u8], force: bool) -> Result<()> {
    if !force && path.exists() {
        return Err(Error::io(
            path,
            std::io::Error::new(
                std::io::ErrorKind::AlreadyExists,
                "refusing to overwrite without --force",
            ),
        ));
    }
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let name = path
        .file_name()
        .ok_or_else(|| Error::Format(format!("{} has no file name", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(format!(".tmp{}", std::process::id()));
    let tmp = path.with_file_name(tmp_name);
    let result = (|| {
        let mut file = fs::File::create(&tmp)?;
        file.write_all(bytes)?;
        file.sync_all()?;
        fs::rename(&tmp, path)
    })();
    result.map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::io(path, e)
    })
}

/// Volatile fields kept apart from the deterministic report body.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub created_unix: Option<u64>,
    pub tool_version: String,
}

impl Metadata {
    pub fn now() -> Self {
        Metadata {
            created_unix: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .ok()
                .map(|d| d.as_secs()),
            tool_version: env!("CARGO_PKG_VERSION").into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Envelope<T> {
    pub schema_version: u32,
    pub kind: String,
    pub metadata: Metadata,
    pub report: T,
}

impl<T: Serialize> Envelope<T> {
    pub fn new(kind: &str, report: T, metadata: Metadata) -> Self {
        Envelope {
            schema_version: SCHEMA_VERSION,
            kind: kind.into(),
            metadata,
            report,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))?;
        s.push('\n');
        Ok(s)
    }

    /// JSON of the report body alone, the part that must be reproducible.
    pub fn body_json(&self) -> Result<String> {
        serde_json::to_string_pretty(&self.report).map_err(|e| Error::Format(e.to_string()))
    }
}

pub fn write_report<T: Serialize>(path: &Path, kind: &str, report: T, force: bool) -> Result<()> {
    let env = Envelope::new(kind, report, Metadata::now());
    atomic_write(path, env.to_json()?.as_bytes(), force)
}

pub fn read_report<T: DeserializeOwned>(path: &Path) -> Result<Envelope<T>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let env: Envelope<T> =
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    if env.schema_version != SCHEMA_VERSION {
        return Err(Error::Format(format!(
            "{}: schema version {} is not supported (expected {SCHEMA_VERSION})",
            path.display(),
            env.schema_version
        )));
    }
    Ok(env)
}

/// Plain numeric table with a header row.
pub fn series_csv(header: &[&str], rows: &[Vec<f64>]) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryIndex {
    pub meta: TrajectoryMeta,
    pub times: Vec<f64>,
    pub steps: Vec<usize>,
    pub files: Vec<String>,
}

/// Writes every snapshot as `<stem>_NNNN.bswf` plus a `<stem>.json` index.
pub fn write_trajectory(dir: &Path, stem: &str, traj: &Trajectory, force: bool) -> Result<PathBuf> {
    let mut files = Vec::with_capacity(traj.snapshots.len());
    for (i, (_, f)) in traj.snapshots.iter().enumerate() {
        let name = format!("{stem}_{i:04}.bswf");
        write_field(&dir.join(&name), f, force)?;
        files.push(name);
    }
    let index = TrajectoryIndex {
        meta: traj.meta.clone(),
        times: traj.times(),
        steps: traj.steps.clone(),
        files,
    };
    let path = dir.join(format!("{stem}.json"));
    write_report(&path, "trajectory", index, force)?;
    Ok(path)
}

pub fn read_trajectory(index_path: &Path) -> Result<Trajectory> {
    let env: Envelope<TrajectoryIndex> = read_report(index_path)?;
    let idx = env.report;
    if idx.times.len() != idx.files.len() || idx.steps.len() != idx.files.len() {
        return Err(Error::Format("trajectory index lengths disagree".into()));
    }
    let dir = index_path.parent().unwrap_or(Path::new("."));
    let snapshots = idx
        .times
        .iter()
        .zip(&idx.files)
        .map(|(t, name)| Ok((*t, read_field(&dir.join(name))?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(Trajectory {
        snapshots,
        steps: idx.steps,
        meta: idx.meta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Field {
        let g = Grid::new(16, 3.0).unwrap();
        let a = Field::from_fn(g, |x, y| (x * 1.3).sin() + y / 7.0);
        let b = Field::from_fn(g, |x, y| x * y - 0.1);
        Field::from_components(&[a, b]).unwrap()
    }

    #[test]
    fn binary_roundtrip_is_exact() {
        let f = sample();
        let bytes = encode_field(&f);
        assert_eq!(&bytes[..4], b"BSWF");
        assert_eq!(bytes.len(), 20 + 8 * 2 * 256);
        assert_eq!(decode_field(&bytes).unwrap(), f);
        assert!(decode_field(&bytes[..bytes.len() - 1]).is_err());
        assert!(decode_field(b"XXXX").is_err());
    }

    #[test]
    fn csv_roundtrip_is_exact() {
        let f = sample();
        let text = field_to_csv(&f);
        assert_eq!(text.lines().count(), 2 + 256);
        assert_eq!(field_from_csv(&text).unwrap(), f);
    }

    #[test]
    fn atomic_write_refuses_overwrite() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sub/out.bin");
        atomic_write(&p, b"one", false).unwrap();
        assert!(atomic_write(&p, b"two", false).is_err());
        assert_eq!(fs::read(&p).unwrap(), b"one");
        atomic_write(&p, b"two", true).unwrap();
        assert_eq!(fs::read(&p).unwrap(), b"two");
        let leftovers = fs::read_dir(p.parent().unwrap()).unwrap().count();
        assert_eq!(leftovers, 1);
    }

    #[test]
    fn report_envelope_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.json");
        write_report(&p, "numbers", vec![1.5, 2.0], false).unwrap();
        let env: Envelope<Vec<f64>> = read_report(&p).unwrap();
        assert_eq!(env.schema_version, SCHEMA_VERSION);
        assert_eq!(env.report, vec![1.5, 2.0]);
    }
}
