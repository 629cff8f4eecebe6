//! Line-oriented dataset manifests.
//!
//! One record per line with five tab-separated fields:
//! `id`, `role` (`query` or `database`), `path`, `easting`, `northing`.
//!
//! Blank lines and lines starting with `#` are ignored. Relative paths are
//! resolved against the manifest's directory.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::geo::GeoPoint;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Role {
    Query,
    Database,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Query => "query",
            Role::Database => "database",
        })
    }
}

impl FromStr for Role {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "query" => Ok(Role::Query),
            "database" => Ok(Role::Database),
            other => Err(format!(
                "unknown role `{other}` (expected query or database)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageRecord {
    pub id: String,
    pub role: Role,
    /// Path as written in the manifest.
    pub path: PathBuf,
    pub geo: GeoPoint,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    /// Directory relative paths are resolved against.
    pub base_dir: PathBuf,
    pub records: Vec<ImageRecord>,
}

impl Manifest {
    pub fn resolve(&self, record: &ImageRecord) -> PathBuf {
        self.base_dir.join(&record.path)
    }

    pub fn queries(&self) -> impl Iterator<Item = &ImageRecord> {
        self.records.iter().filter(|r| r.role == Role::Query)
    }

    pub fn database(&self) -> impl Iterator<Item = &ImageRecord> {
        self.records.iter().filter(|r| r.role == Role::Database)
    }
}

pub fn parse_manifest(text: &str, source: &Path, base_dir: &Path) -> Result<Manifest> {
    let err = |line: usize, message: String| Error::Parse {
        path: source.to_path_buf(),
        line,
        message,
    };
    let mut seen: HashSet<(Role, String)> = HashSet::new();
    let mut records = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let trimmed = line.trim_end_matches('\r');
        if trimmed.trim().is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split('\t').collect();
        if fields.len() != 5 {
            return Err(err(
                lineno,
                format!("expected 5 tab-separated fields, found {}", fields.len()),
            ));
        }
        let id = fields[0];
        if id.is_empty() {
            return Err(err(lineno, "empty id".into()));
        }
        let role: Role = fields[1].parse().map_err(|m| err(lineno, m))?;
        let coord = |s: &str, name: &str| -> Result<f64> {
            let v: f64 = s
                .parse()
                .map_err(|_| err(lineno, format!("invalid {name} `{s}`")))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(err(lineno, format!("non-finite {name}")))
            }
        };
        let geo = GeoPoint::new(coord(fields[3], "easting")?, coord(fields[4], "northing")?);
        if !seen.insert((role, id.to_string())) {
            return Err(err(lineno, format!("duplicate {role} id `{id}`")));
        }
        let path = PathBuf::from(fields[2]);
        let full = base_dir.join(&path);
        if let Err(e) = image::image_dimensions(&full) {
            return Err(err(
                lineno,
                format!("unreadable image {}: {e}", full.display()),
            ));
        }
        records.push(ImageRecord {
            id: id.to_string(),
            role,
            path,
            geo,
        });
    }
    Ok(Manifest {
        base_dir: base_dir.to_path_buf(),
        records,
    })
}

pub fn load_manifest(path: &Path) -> Result<Manifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or_else(|| Path::new("")).to_path_buf();
    parse_manifest(&text, path, &base)
}

pub fn format_manifest(records: &[ImageRecord]) -> String {
    let mut out = String::from("# id\trole\tpath\teasting\tnorthing\n");
    for r in records {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\n",
            r.id,
            r.role,
            r.path.display(),
            r.geo.easting_m,
            r.geo.northing_m
        ));
    }
    out
}

pub fn write_manifest(path: &Path, records: &[ImageRecord]) -> Result<()> {
    fs::write(path, format_manifest(records)).map_err(|e| Error::io(path, e))
}
