//! On-disk index: a `PVPR` file with one normalized record per window
//! (`K` consecutive records per panorama, all carrying the panorama id) and
//! a key/value sidecar describing the layout and provenance.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use panowindow::dataset::EmbeddingFile;
use panowindow::encoder::PanoDescriptor;
use panowindow::{compute_layout, Descriptor, WindowConfig, WindowLayout};

use crate::error::{CliError, CliResult};

pub const DESCRIPTORS_FILE: &str = "descriptors.pvpr";
pub const SIDECAR_FILE: &str = "index.meta";
const SIDECAR_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct IndexArtifact {
    pub fingerprint: String,
    pub window: WindowConfig,
    pub layout: WindowLayout,
    pub pano_height_px: u32,
    pub manifest_hash: String,
    pub panos: Vec<(String, PanoDescriptor)>,
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

impl IndexArtifact {
    pub fn dim(&self) -> usize {
        self.panos.first().map_or(0, |(_, p)| p.dim())
    }

    fn sidecar(&self) -> String {
        let w = &self.window;
        let l = &self.layout;
        let rows: [(&str, String); 13] = [
            ("version", SIDECAR_VERSION.to_string()),
            ("fingerprint", self.fingerprint.clone()),
            ("stride_divisor", w.stride_divisor.to_string()),
            ("span_divisor", w.span_divisor.to_string()),
            ("cyclic", w.cyclic.to_string()),
            ("pano_width_px", l.pano_width_px.to_string()),
            ("pano_height_px", self.pano_height_px.to_string()),
            ("window_len_px", l.window_len_px.to_string()),
            ("stride_px", l.stride_px.to_string()),
            ("windows_per_pano", l.len().to_string()),
            ("descriptor_dim", self.dim().to_string()),
            ("panos", self.panos.len().to_string()),
            ("manifest_sha256", self.manifest_hash.clone()),
        ];
        let mut s = String::from("# panowindow index\n");
        for (k, v) in rows {
            s.push_str(&format!("{k}\t{v}\n"));
        }
        s
    }

    pub fn write(&self, dir: &Path) -> CliResult<()> {
        if self.panos.is_empty() {
            return Err(CliError::Data("refusing to write an empty index".into()));
        }
        let records = self
            .panos
            .iter()
            .flat_map(|(id, p)| {
                p.windows
                    .iter()
                    .map(move |w| (id.clone(), w.values().to_vec()))
            })
            .collect();
        let file = EmbeddingFile::new(self.dim(), true, records)?;
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        let p = dir.join(DESCRIPTORS_FILE);
        fs::write(&p, file.encode()).map_err(|e| io_err(&p, e))?;
        let p = dir.join(SIDECAR_FILE);
        fs::write(&p, self.sidecar()).map_err(|e| io_err(&p, e))
    }

    pub fn read(dir: &Path) -> CliResult<Self> {
        let meta_path = dir.join(SIDECAR_FILE);
        let text = fs::read_to_string(&meta_path).map_err(|e| io_err(&meta_path, e))?;
        let mut meta = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.starts_with('#') || line.trim().is_empty() {
                continue;
            }
            let (k, v) = line.split_once('\t').ok_or_else(|| {
                CliError::Data(format!(
                    "{}:{}: expected key<TAB>value",
                    meta_path.display(),
                    i + 1
                ))
            })?;
            meta.insert(k.to_string(), v.to_string());
        }
        let get = |k: &str| -> CliResult<&String> {
            meta.get(k)
                .ok_or_else(|| CliError::Data(format!("{}: missing `{k}`", meta_path.display())))
        };
        let num = |k: &str| -> CliResult<u64> {
            get(k)?.parse().map_err(|_| {
                CliError::Data(format!("{}: `{k}` is not a number", meta_path.display()))
            })
        };
        if num("version")? != u64::from(SIDECAR_VERSION) {
            return Err(CliError::Data(format!(
                "{}: unsupported version",
                meta_path.display()
            )));
        }
        let cyclic = match get("cyclic")?.as_str() {
            "true" => true,
            "false" => false,
            other => return Err(CliError::Data(format!("bad `cyclic` value `{other}`"))),
        };
        let window = WindowConfig::new(
            num("stride_divisor")? as u32,
            num("span_divisor")? as u32,
            cyclic,
        )?;
        let layout = compute_layout(num("pano_width_px")? as u32, &window)?;
        let k = layout.len();
        if num("window_len_px")? != u64::from(layout.window_len_px)
            || num("stride_px")? != u64::from(layout.stride_px)
            || num("windows_per_pano")? != k as u64
        {
            return Err(CliError::Data(format!(
                "{}: stored layout disagrees with its window configuration",
                meta_path.display()
            )));
        }

        let desc_path = dir.join(DESCRIPTORS_FILE);
        let bytes = fs::read(&desc_path).map_err(|e| io_err(&desc_path, e))?;
        let file = EmbeddingFile::decode(&bytes)?;
        let n_panos = num("panos")? as usize;
        if file.dim as u64 != num("descriptor_dim")?
            || file.records.len() != n_panos * k
            || !file.normalized
        {
            return Err(CliError::Data(format!(
                "{}: {} records of dim {} do not match {n_panos} panoramas x {k} windows",
                desc_path.display(),
                file.records.len(),
                file.dim
            )));
        }
        let mut panos = Vec::with_capacity(n_panos);
        for chunk in file.records.chunks(k) {
            let id = &chunk[0].0;
            if let Some((other, _)) = chunk.iter().find(|(i, _)| i != id) {
                return Err(CliError::Data(format!(
                    "{}: windows of `{id}` interleaved with `{other}`",
                    desc_path.display()
                )));
            }
            let windows = chunk
                .iter()
                .map(|(_, v)| Descriptor::from_values(v.clone()))
                .collect();
            panos.push((id.clone(), PanoDescriptor::new(windows, layout.clone())?));
        }
        Ok(Self {
            fingerprint: get("fingerprint")?.clone(),
            window,
            layout,
            pano_height_px: num("pano_height_px")? as u32,
            manifest_hash: get("manifest_sha256")?.clone(),
            panos,
        })
    }
}
