//! File formats shared by the library and the command line: atomic writes,
//! flat `key = value` configuration files and the cluster CSV.

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::PointKm;
use crate::inference::{Cluster, Dataset};

/// Writes `bytes` to a temporary sibling file and renames it into place.
pub fn write_atomic(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => std::path::PathBuf::from("."),
    };
    let name = path
        .file_name()
        .ok_or_else(|| Error::InvalidInput(format!("`{}` is not a file path", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    let result = (|| {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        std::fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = std::fs::remove_file(&tmp);
        return Err(Error::io(path, e));
    }
    Ok(())
}

/// Flat `key = value` text with `#` comments. Every key must be consumed;
/// leftover keys are reported by [`KeyValueConfig::finish`].
#[derive(Debug, Clone)]
pub struct KeyValueConfig {
    source: String,
    entries: BTreeMap<String, (usize, String)>,
    used: std::cell::RefCell<Vec<String>>,
}

impl KeyValueConfig {
    pub fn parse(text: &str, source: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(source, i + 1, format!("expected `key = value`, found `{line}`")))?;
            let key = key.trim().to_string();
            if key.is_empty() {
                return Err(Error::parse(source, i + 1, "empty key"));
            }
            if entries.insert(key.clone(), (i + 1, value.trim().to_string())).is_some() {
                return Err(Error::parse(source, i + 1, format!("duplicate key `{key}`")));
            }
        }
        Ok(KeyValueConfig {
            source: source.to_string(),
            entries,
            used: Default::default(),
        })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        KeyValueConfig::parse(&text, &path.display().to_string())
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        let Some((line, raw)) = self.entries.get(key) else {
            return Ok(None);
        };
        self.used.borrow_mut().push(key.to_string());
        raw.parse::<T>()
            .map(Some)
            .map_err(|e| Error::parse(&self.source, *line, format!("`{key}`: {e}")))
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn require<T: FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key)?
            .ok_or_else(|| Error::parse(&self.source, 0, format!("missing required key `{key}`")))
    }

    /// Comma-separated list of values.
    pub fn get_list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>>
    where
        T::Err: std::fmt::Display,
    {
        let Some((line, raw)) = self.entries.get(key) else {
            return Ok(None);
        };
        self.used.borrow_mut().push(key.to_string());
        raw.split(',')
            .map(|t| t.trim())
            .filter(|t| !t.is_empty())
            .map(|t| {
                t.parse::<T>()
                    .map_err(|e| Error::parse(&self.source, *line, format!("`{key}`: {e}")))
            })
            .collect::<Result<Vec<T>>>()
            .map(Some)
    }

    /// Errors on the first key that was never read.
    pub fn finish(&self) -> Result<()> {
        let used = self.used.borrow();
        for (key, (line, _)) in &self.entries {
            if !used.iter().any(|u| u == key) {
                return Err(Error::parse(&self.source, *line, format!("unknown key `{key}`")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ClusterRow {
    id: String,
    x_km: f64,
    y_km: f64,
    y: u32,
    n: u32,
    urban: u8,
    admin_id: Option<u32>,
}

pub fn parse_clusters(text: &str, source: &str) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let mut clusters = Vec::new();
    for (i, record) in reader.deserialize::<ClusterRow>().enumerate() {
        // header is line 1
        let line = i + 2;
        let row = record.map_err(|e| Error::parse(source, line, e.to_string()))?;
        if row.y > row.n {
            return Err(Error::parse(
                source,
                line,
                format!("cluster `{}`: y = {} exceeds n = {}", row.id, row.y, row.n),
            ));
        }
        if row.urban > 1 {
            return Err(Error::parse(source, line, format!("cluster `{}`: urban must be 0 or 1", row.id)));
        }
        let location = PointKm::new(row.x_km, row.y_km);
        if !location.is_finite() {
            return Err(Error::parse(source, line, format!("cluster `{}`: non-finite coordinates", row.id)));
        }
        clusters.push(Cluster {
            id: row.id,
            location,
            y: row.y,
            n: row.n,
            urban: row.urban == 1,
            admin: row.admin_id,
        });
    }
    Dataset::new(clusters)
}

pub fn read_clusters(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_clusters(&text, &path.display().to_string())
}

pub fn clusters_to_csv(data: &Dataset) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for c in data.clusters() {
        w.serialize(ClusterRow {
            id: c.id.clone(),
            x_km: c.location.x,
            y_km: c.location.y,
            y: c.y,
            n: c.n,
            urban: u8::from(c.urban),
            admin_id: c.admin,
        })
        .map_err(|e| Error::InvalidInput(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::InvalidInput(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn write_clusters(data: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path, clusters_to_csv(data)?.as_bytes())
}
