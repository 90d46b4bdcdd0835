use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::blend::{BlendMethod, WeightedStyleSet, DEFAULT_EPS_OMEGA};
use crate::error::{Error, Result};
use crate::io::npy;
use crate::metrics::ReferenceStyle;
use crate::tensor::LatentVector;

const DEFAULT_PROMPTS_JSON: &str = include_str!("../../data/prompts.json");

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&raw).map_err(|e| Error::json(path.display().to_string(), e))
}

fn resolve(base: Option<&Path>, p: &Path) -> PathBuf {
    match base {
        Some(dir) if p.is_relative() => dir.join(p),
        _ => p.to_path_buf(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlendStyle {
    pub path: PathBuf,
    pub weight: f64,
}

/// `{"method": "linear"|"sli", "styles": [{"path", "weight"}], "eps_omega"?}`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlendSpec {
    pub method: BlendMethod,
    pub styles: Vec<BlendStyle>,
    #[serde(default)]
    pub eps_omega: Option<f64>,
}

impl BlendSpec {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let spec: BlendSpec = read_json(path)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.styles.is_empty() {
            return Err(Error::EmptySet("blend spec lists no styles".into()));
        }
        for s in &self.styles {
            if !s.weight.is_finite() || s.weight < 0.0 {
                return Err(
                    Error::InvalidWeight(s.weight).context(format!("style {}", s.path.display()))
                );
            }
        }
        if self.styles.iter().all(|s| s.weight == 0.0) {
            return Err(Error::AllZeroWeights);
        }
        if let Some(eps) = self.eps_omega {
            if eps.is_nan() || eps <= 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "eps_omega must be > 0, got {eps}"
                )));
            }
        }
        Ok(())
    }

    pub fn eps_omega(&self) -> f64 {
        self.eps_omega.unwrap_or(DEFAULT_EPS_OMEGA)
    }

    /// Style paths resolved against `base` (normally the spec file's directory).
    pub fn style_paths(&self, base: Option<&Path>) -> Vec<PathBuf> {
        self.styles.iter().map(|s| resolve(base, &s.path)).collect()
    }

    /// Loads every style vector (each file must hold exactly one 1-D vector)
    /// and builds the normalised weighted set.
    pub fn load_styles(&self, base: Option<&Path>) -> Result<WeightedStyleSet> {
        let mut styles = Vec::with_capacity(self.styles.len());
        for (style, path) in self.styles.iter().zip(self.style_paths(base)) {
            let ctx = || format!("style {}", style.path.display());
            let arr = npy::read_array(&path).map_err(|e| e.context(ctx()))?;
            if arr.shape().len() != 1 {
                return Err(Error::InvalidShape(format!(
                    "expected a 1-D vector, got shape {:?}",
                    arr.shape()
                ))
                .context(ctx()));
            }
            let v = arr.into_vectors().map_err(|e| e.context(ctx()))?.remove(0);
            styles.push((v, style.weight));
        }
        WeightedStyleSet::new(styles)?.normalize_weights()
    }
}

/// One reference style in a `--refs` file: an inline embedding or an NPY path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceEntry {
    pub name: String,
    #[serde(default)]
    pub embedding: Option<Vec<f64>>,
    #[serde(default)]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub weight: Option<f64>,
}

/// Reads a JSON array of [`ReferenceEntry`]. Missing weights default to an
/// equal split.
pub fn load_references(path: impl AsRef<Path>) -> Result<Vec<ReferenceStyle>> {
    let path = path.as_ref();
    let entries: Vec<ReferenceEntry> = read_json(path)?;
    if entries.is_empty() {
        return Err(Error::EmptySet(format!(
            "{}: no references",
            path.display()
        )));
    }
    let base = path.parent();
    let equal = 1.0 / entries.len() as f64;
    entries
        .into_iter()
        .map(|e| {
            let embedding = match (e.embedding, e.path) {
                (Some(v), None) => LatentVector::new(v)?,
                (None, Some(p)) => {
                    let mut vs = npy::read_vectors(resolve(base, &p))?;
                    if vs.len() != 1 {
                        return Err(Error::InvalidShape(format!(
                            "reference {} must hold one vector, found {}",
                            e.name,
                            vs.len()
                        )));
                    }
                    vs.remove(0)
                }
                _ => {
                    return Err(Error::InvalidParameter(format!(
                        "reference {} needs exactly one of embedding or path",
                        e.name
                    )))
                }
            };
            Ok(ReferenceStyle {
                name: e.name,
                embedding,
                weight: e.weight.unwrap_or(equal),
            })
        })
        .collect()
}

/// Generated embeddings from a single `.npy` file or every `.npy` file in a
/// directory (sorted by file name). 2-D files contribute one vector per row.
pub fn load_embeddings(path: impl AsRef<Path>) -> Result<Vec<LatentVector>> {
    let path = path.as_ref();
    let files = if path.is_dir() {
        let mut files: Vec<PathBuf> = fs::read_dir(path)
            .map_err(|e| Error::io(path, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "npy"))
            .collect();
        files.sort();
        files
    } else {
        vec![path.to_path_buf()]
    };
    let mut out = Vec::new();
    for f in files {
        out.extend(npy::read_vectors(&f)?);
    }
    if out.is_empty() {
        return Err(Error::EmptySet(format!(
            "no generated embeddings under {}",
            path.display()
        )));
    }
    Ok(out)
}

/// Text prompts used for generation runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PromptCatalog(pub Vec<String>);

impl PromptCatalog {
    pub fn default_catalog() -> Self {
        serde_json::from_str(DEFAULT_PROMPTS_JSON).expect("shipped prompts are valid")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        read_json(path)
    }
}
