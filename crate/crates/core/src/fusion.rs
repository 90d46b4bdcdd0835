//! Multi-modal prompt fusion.
//!
//! Each modality contributes a short text description. Music is described by the
//! catalog query closest to its embedding, weather by a fixed template. Verbose
//! descriptions are sent to an external paraphraser, then everything is joined
//! in input order.

use std::collections::HashMap;
use std::io::Write;
use std::path::PathBuf;
use std::process::{Command, Stdio};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::cosine_similarity;
use crate::par;
use crate::tensor::LatentVector;

const DEFAULT_CATALOG_JSON: &str = include_str!("../data/query_catalog.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Image,
    Audio,
    Music,
    Weather,
    Text,
}

impl std::fmt::Display for Modality {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Modality::Image => "image",
            Modality::Audio => "audio",
            Modality::Music => "music",
            Modality::Weather => "weather",
            Modality::Text => "text",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModalityDescription {
    pub modality: Modality,
    pub text: String,
    pub word_count: usize,
}

impl ModalityDescription {
    pub fn new(modality: Modality, text: impl Into<String>) -> Self {
        let text = text.into();
        let word_count = text.split_whitespace().count();
        ModalityDescription {
            modality,
            text,
            word_count,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CatalogQuery {
    pub text: String,
    pub embedding: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct QueryCatalog {
    texts: Vec<String>,
    embeddings: Vec<LatentVector>,
}

impl QueryCatalog {
    pub fn new(queries: Vec<CatalogQuery>) -> Result<Self> {
        if queries.is_empty() {
            return Err(Error::EmptySet("query catalog is empty".into()));
        }
        let dim = queries[0].embedding.len();
        let mut texts = Vec::with_capacity(queries.len());
        let mut embeddings = Vec::with_capacity(queries.len());
        for q in queries {
            if q.embedding.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: q.embedding.len(),
                });
            }
            let e = LatentVector::new(q.embedding)?;
            if e.is_zero() {
                return Err(Error::ZeroVector.context(format!("catalog query {:?}", q.text)));
            }
            texts.push(q.text);
            embeddings.push(e);
        }
        Ok(QueryCatalog { texts, embeddings })
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let queries: Vec<CatalogQuery> =
            serde_json::from_str(json).map_err(|e| Error::json("query catalog", e))?;
        Self::new(queries)
    }

    /// The shipped 24-query music mood catalog with fixture embeddings.
    pub fn default_catalog() -> Self {
        Self::from_json(DEFAULT_CATALOG_JSON).expect("shipped catalog is valid")
    }

    pub fn default_json() -> &'static str {
        DEFAULT_CATALOG_JSON
    }

    pub fn len(&self) -> usize {
        self.texts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.texts.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.embeddings[0].dim()
    }

    pub fn text(&self, i: usize) -> &str {
        &self.texts[i]
    }

    pub fn embedding(&self, i: usize) -> &LatentVector {
        &self.embeddings[i]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BestQuery {
    pub index: usize,
    pub text: String,
    pub score: f64,
}

/// Catalog entry with the highest cosine similarity; ties go to the lowest index.
pub fn best_music_query(music: &LatentVector, catalog: &QueryCatalog) -> Result<BestQuery> {
    if music.dim() != catalog.dim() {
        return Err(Error::DimensionMismatch {
            expected: catalog.dim(),
            found: music.dim(),
        });
    }
    if music.is_zero() {
        return Err(Error::ZeroVector);
    }
    let scores = par::try_map_slice(&catalog.embeddings, |q| cosine_similarity(music, q))?;
    let mut best = 0;
    for (i, s) in scores.iter().enumerate().skip(1) {
        if *s > scores[best] {
            best = i;
        }
    }
    Ok(BestQuery {
        index: best,
        text: catalog.texts[best].clone(),
        score: scores[best],
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ParaphraseParams {
    pub l_max: usize,
    pub l_min: usize,
    pub length_penalty: f64,
    pub num_beams: usize,
}

impl Default for ParaphraseParams {
    fn default() -> Self {
        ParaphraseParams {
            l_max: 60,
            l_min: 10,
            length_penalty: 2.0,
            num_beams: 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FusionConfig {
    /// Descriptions with more words than this are paraphrased.
    pub verbosity_threshold_k: usize,
    pub paraphrase: ParaphraseParams,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            verbosity_threshold_k: 10,
            paraphrase: ParaphraseParams::default(),
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<()> {
        let p = &self.paraphrase;
        if self.verbosity_threshold_k < 1 {
            return Err(Error::InvalidParameter(
                "verbosity_threshold_k must be >= 1".into(),
            ));
        }
        if p.l_min > p.l_max {
            return Err(Error::InvalidParameter(format!(
                "l_min ({}) exceeds l_max ({})",
                p.l_min, p.l_max
            )));
        }
        if p.num_beams < 1 {
            return Err(Error::InvalidParameter("num_beams must be >= 1".into()));
        }
        if !p.length_penalty.is_finite() {
            return Err(Error::InvalidParameter(
                "length_penalty must be finite".into(),
            ));
        }
        Ok(())
    }
}

pub fn needs_paraphrasing(d: &ModalityDescription, cfg: &FusionConfig) -> bool {
    d.word_count > cfg.verbosity_threshold_k
}

/// Joins non-empty texts with ", " in input order.
pub fn concatenate_descriptions(ds: &[ModalityDescription]) -> String {
    ds.iter()
        .map(|d| d.text.trim())
        .filter(|t| !t.is_empty())
        .collect::<Vec<_>>()
        .join(", ")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeatherRecord {
    pub condition: String,
    pub temperature_c: f64,
    pub wind_mps: f64,
}

/// `"<condition>, <t> degrees, wind <w> m/s"` with one decimal, ties to even.
pub fn weather_to_text(record: &WeatherRecord) -> Result<ModalityDescription> {
    if record.condition.trim().is_empty() {
        return Err(Error::InvalidParameter("weather condition is empty".into()));
    }
    Ok(ModalityDescription::new(
        Modality::Weather,
        format!(
            "{}, {:.1} degrees, wind {:.1} m/s",
            record.condition.trim(),
            record.temperature_c,
            record.wind_mps
        ),
    ))
}

/// Wire format of a paraphrase request sent to a provider.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParaphraseRequest {
    pub task: String,
    pub text: String,
    pub l_max: usize,
    pub l_min: usize,
    pub length_penalty: f64,
    pub num_beams: usize,
}

impl ParaphraseRequest {
    pub fn new(text: &str, p: &ParaphraseParams) -> Self {
        ParaphraseRequest {
            task: "paraphrase".into(),
            text: text.into(),
            l_max: p.l_max,
            l_min: p.l_min,
            length_penalty: p.length_penalty,
            num_beams: p.num_beams,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderResponse {
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProviderError {
    Unavailable(String),
    Failure(String),
}

impl ProviderError {
    fn for_modality(self, modality: Modality) -> Error {
        let modality = modality.to_string();
        match self {
            ProviderError::Unavailable(reason) => Error::ProviderUnavailable { modality, reason },
            ProviderError::Failure(reason) => Error::ProviderFailure { modality, reason },
        }
    }
}

pub trait Paraphraser: Sync {
    fn paraphrase(&self, request: &ParaphraseRequest) -> Result<String, ProviderError>;
}

/// Exact-text lookup table loaded from a JSON object.
#[derive(Debug, Clone, Default)]
pub struct FixtureParaphraser {
    table: HashMap<String, String>,
}

impl FixtureParaphraser {
    pub fn new(table: HashMap<String, String>) -> Self {
        FixtureParaphraser { table }
    }

    pub fn load(path: &str) -> Result<Self, ProviderError> {
        let raw = std::fs::read_to_string(path)
            .map_err(|e| ProviderError::Unavailable(format!("fixture {path}: {e}")))?;
        let table = serde_json::from_str(&raw)
            .map_err(|e| ProviderError::Failure(format!("malformed fixture {path}: {e}")))?;
        Ok(FixtureParaphraser { table })
    }
}

impl Paraphraser for FixtureParaphraser {
    fn paraphrase(&self, request: &ParaphraseRequest) -> Result<String, ProviderError> {
        self.table.get(&request.text).cloned().ok_or_else(|| {
            ProviderError::Failure(format!("fixture has no entry for {:?}", request.text))
        })
    }
}

/// Runs an external program per request: one JSON object on stdin, one on stdout.
#[derive(Debug, Clone)]
pub struct CommandParaphraser {
    program: PathBuf,
    args: Vec<String>,
}

impl CommandParaphraser {
    pub fn new(command_line: &str) -> Result<Self, ProviderError> {
        let mut parts = command_line.split_whitespace();
        let program = parts
            .next()
            .ok_or_else(|| ProviderError::Unavailable("empty provider command".into()))?;
        Ok(CommandParaphraser {
            program: program.into(),
            args: parts.map(str::to_owned).collect(),
        })
    }
}

impl Paraphraser for CommandParaphraser {
    fn paraphrase(&self, request: &ParaphraseRequest) -> Result<String, ProviderError> {
        let mut child = Command::new(&self.program)
            .args(&self.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| ProviderError::Unavailable(format!("{}: {e}", self.program.display())))?;
        let payload = serde_json::to_vec(request).expect("request serialises");
        if let Some(mut stdin) = child.stdin.take() {
            // A provider that exits without reading stdin shows up below as a
            // bad exit status or bad response.
            let _ = stdin.write_all(&payload);
        }
        let out = child
            .wait_with_output()
            .map_err(|e| ProviderError::Failure(format!("{}: {e}", self.program.display())))?;
        if !out.status.success() {
            return Err(ProviderError::Failure(format!(
                "{} exited with {}: {}",
                self.program.display(),
                out.status,
                String::from_utf8_lossy(&out.stderr).trim()
            )));
        }
        let resp: ProviderResponse = serde_json::from_slice(&out.stdout).map_err(|e| {
            ProviderError::Failure(format!("{}: bad response: {e}", self.program.display()))
        })?;
        Ok(resp.text)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    FixtureFile,
    ExternalCommand,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProviderBinding {
    pub kind: ProviderKind,
    pub locator: String,
}

impl ProviderBinding {
    /// Parses `fixture:<path>`, `command:<cmd>`, or a bare locator (`*.json`
    /// means fixture, anything else a command).
    pub fn parse(locator: &str) -> Self {
        let (kind, locator) = if let Some(rest) = locator.strip_prefix("fixture:") {
            (ProviderKind::FixtureFile, rest)
        } else if let Some(rest) = locator.strip_prefix("command:") {
            (ProviderKind::ExternalCommand, rest)
        } else if locator.ends_with(".json") {
            (ProviderKind::FixtureFile, locator)
        } else {
            (ProviderKind::ExternalCommand, locator)
        };
        ProviderBinding {
            kind,
            locator: locator.to_owned(),
        }
    }

    pub fn connect(&self) -> Result<Box<dyn Paraphraser>, ProviderError> {
        if self.locator.trim().is_empty() {
            return Err(ProviderError::Unavailable(
                "provider locator is empty".into(),
            ));
        }
        Ok(match self.kind {
            ProviderKind::FixtureFile => Box::new(FixtureParaphraser::load(&self.locator)?),
            ProviderKind::ExternalCommand => Box::new(CommandParaphraser::new(&self.locator)?),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FusionStep {
    pub modality: Modality,
    pub input: String,
    pub output: String,
    pub word_count: usize,
    pub paraphrased: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub best_query: Option<BestQuery>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FusionTrace {
    pub prompt: String,
    pub steps: Vec<FusionStep>,
}

/// Paraphrases the verbose descriptions and concatenates the result.
pub fn fuse(
    ds: &[ModalityDescription],
    cfg: &FusionConfig,
    provider: Option<&ProviderBinding>,
) -> Result<String> {
    fuse_traced(ds, cfg, provider).map(|t| t.prompt)
}

pub fn fuse_traced(
    ds: &[ModalityDescription],
    cfg: &FusionConfig,
    provider: Option<&ProviderBinding>,
) -> Result<FusionTrace> {
    cfg.validate()?;
    let flagged: Vec<usize> = (0..ds.len())
        .filter(|i| needs_paraphrasing(&ds[*i], cfg))
        .collect();
    let mut replaced: HashMap<usize, String> = HashMap::new();
    if let Some(&first) = flagged.first() {
        let modality = ds[first].modality;
        let binding = provider.ok_or_else(|| {
            ProviderError::Unavailable("no provider configured".into()).for_modality(modality)
        })?;
        let paraphraser = binding.connect().map_err(|e| e.for_modality(modality))?;
        let outputs = par::try_map_slice(&flagged, |&i| {
            let req = ParaphraseRequest::new(&ds[i].text, &cfg.paraphrase);
            paraphraser
                .paraphrase(&req)
                .map_err(|e| e.for_modality(ds[i].modality))
        })?;
        replaced.extend(flagged.iter().copied().zip(outputs));
    }

    let processed: Vec<ModalityDescription> = ds
        .iter()
        .enumerate()
        .map(|(i, d)| match replaced.get(&i) {
            Some(text) => ModalityDescription::new(d.modality, text.clone()),
            None => d.clone(),
        })
        .collect();
    let steps = ds
        .iter()
        .zip(&processed)
        .enumerate()
        .map(|(i, (d, p))| FusionStep {
            modality: d.modality,
            input: d.text.clone(),
            output: p.text.clone(),
            word_count: d.word_count,
            paraphrased: replaced.contains_key(&i),
            best_query: None,
        })
        .collect();
    Ok(FusionTrace {
        prompt: concatenate_descriptions(&processed),
        steps,
    })
}

/// One entry of a fusion inputs file. Exactly one of `text`, `embedding`
/// (music) or `weather` is expected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FusionInput {
    pub modality: Modality,
    #[serde(default)]
    pub text: Option<String>,
    #[serde(default)]
    pub embedding: Option<Vec<f64>>,
    #[serde(default)]
    pub weather: Option<WeatherRecord>,
}

/// Turns raw inputs into descriptions, matching music embeddings against the
/// catalog. The second element records the chosen query for music inputs.
pub fn describe_inputs(
    inputs: &[FusionInput],
    catalog: &QueryCatalog,
) -> Result<Vec<(ModalityDescription, Option<BestQuery>)>> {
    inputs
        .iter()
        .enumerate()
        .map(|(i, input)| {
            let ctx = || format!("input {i} ({})", input.modality);
            match (&input.text, &input.embedding, &input.weather) {
                (Some(text), None, None) => {
                    Ok((ModalityDescription::new(input.modality, text.clone()), None))
                }
                (None, Some(emb), None) if input.modality == Modality::Music => {
                    let v = LatentVector::new(emb.clone()).map_err(|e| e.context(ctx()))?;
                    let best = best_music_query(&v, catalog).map_err(|e| e.context(ctx()))?;
                    Ok((
                        ModalityDescription::new(Modality::Music, best.text.clone()),
                        Some(best),
                    ))
                }
                (None, None, Some(w)) if input.modality == Modality::Weather => {
                    Ok((weather_to_text(w).map_err(|e| e.context(ctx()))?, None))
                }
                _ => Err(Error::InvalidParameter(format!(
                    "{}: expected exactly one of text, embedding (music) or weather (weather)",
                    ctx()
                ))),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn words(n: usize) -> String {
        vec!["word"; n].join(" ")
    }

    #[test]
    fn threshold_is_strict() {
        let cfg = FusionConfig::default();
        let d = |n| ModalityDescription::new(Modality::Image, words(n));
        assert!(!needs_paraphrasing(&d(10), &cfg));
        assert!(needs_paraphrasing(&d(11), &cfg));
        assert!(!needs_paraphrasing(
            &ModalityDescription::new(Modality::Text, ""),
            &cfg
        ));
    }

    #[test]
    fn concatenation_rules() {
        let d = |t: &str| ModalityDescription::new(Modality::Text, t);
        assert_eq!(concatenate_descriptions(&[d("a castle")]), "a castle");
        assert_eq!(
            concatenate_descriptions(&[d("a castle"), d("rain")]),
            "a castle, rain"
        );
        assert_eq!(
            concatenate_descriptions(&[d("a castle"), d(""), d("rain")]),
            "a castle, rain"
        );
    }

    #[test]
    fn weather_template() {
        let w = |c: &str, t, wind| WeatherRecord {
            condition: c.into(),
            temperature_c: t,
            wind_mps: wind,
        };
        assert_eq!(
            weather_to_text(&w("clear", 20.0, 0.0)).unwrap().text,
            "clear, 20.0 degrees, wind 0.0 m/s"
        );
        assert_eq!(
            weather_to_text(&w("storm", -3.25, 12.5)).unwrap().text,
            "storm, -3.2 degrees, wind 12.5 m/s"
        );
        let rain = weather_to_text(&w("rain", 0.0, 0.0)).unwrap();
        assert_eq!(rain.modality, Modality::Weather);
        assert_eq!(rain.word_count, 6);
        assert!(weather_to_text(&w(" ", 1.0, 1.0)).is_err());
    }

    #[test]
    fn best_query_ties_and_identity() {
        let catalog = QueryCatalog::default_catalog();
        assert_eq!(catalog.len(), 24);
        assert_eq!(catalog.text(0), "dark and intense");
        let hit = best_music_query(catalog.embedding(7), &catalog).unwrap();
        assert_eq!(hit.index, 7);
        assert!((hit.score - 1.0).abs() < 1e-12);

        let tie = QueryCatalog::new(vec![
            CatalogQuery {
                text: "a".into(),
                embedding: vec![0.1, (1.0f64 - 0.01).sqrt()],
            },
            CatalogQuery {
                text: "b".into(),
                embedding: vec![0.9, (1.0f64 - 0.81).sqrt()],
            },
            CatalogQuery {
                text: "c".into(),
                embedding: vec![0.9, (1.0f64 - 0.81).sqrt()],
            },
        ])
        .unwrap();
        let music = LatentVector::basis(2, 0).unwrap();
        let hit = best_music_query(&music, &tie).unwrap();
        assert_eq!((hit.index, hit.text.as_str()), (1, "b"));

        assert!(best_music_query(&LatentVector::zeros(2).unwrap(), &tie).is_err());
        assert!(best_music_query(&LatentVector::basis(3, 0).unwrap(), &tie).is_err());
    }

    #[test]
    fn short_inputs_skip_provider() {
        let ds = vec![
            ModalityDescription::new(Modality::Image, "a castle"),
            ModalityDescription::new(Modality::Weather, "rain"),
        ];
        assert_eq!(
            fuse(&ds, &FusionConfig::default(), None).unwrap(),
            "a castle, rain"
        );
    }

    #[test]
    fn missing_provider_names_modality() {
        let ds = vec![ModalityDescription::new(Modality::Audio, words(12))];
        let err = fuse(&ds, &FusionConfig::default(), None).unwrap_err();
        match err {
            Error::ProviderUnavailable { modality, .. } => assert_eq!(modality, "audio"),
            other => panic!("unexpected {other:?}"),
        }
        let missing = ProviderBinding::parse("fixture:/definitely/not/here.json");
        let err = fuse(&ds, &FusionConfig::default(), Some(&missing)).unwrap_err();
        assert_eq!(err.exit_code(), 4);
    }

    #[test]
    fn binding_parse() {
        assert_eq!(
            ProviderBinding::parse("x.json").kind,
            ProviderKind::FixtureFile
        );
        assert_eq!(ProviderBinding::parse("fixture:x").locator, "x");
        let b = ProviderBinding::parse("command:python3 p.py");
        assert_eq!(
            (b.kind, b.locator.as_str()),
            (ProviderKind::ExternalCommand, "python3 p.py")
        );
    }

    #[test]
    fn config_validation() {
        let mut cfg = FusionConfig::default();
        cfg.paraphrase.l_min = 100;
        assert!(cfg.validate().is_err());
        let cfg: FusionConfig = serde_json::from_str(r#"{"verbosity_threshold_k": 5}"#).unwrap();
        assert_eq!(cfg.paraphrase, ParaphraseParams::default());
    }
}
