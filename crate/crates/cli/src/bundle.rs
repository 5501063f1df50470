//! On-disk bundles: a TOML manifest, an optional dataset table and one
//! prediction table per model.
//!
//! ```text
//! bundle/
//!   manifest.toml    label_universe, dataset, [[models]]
//!   dataset.csv      sample_id[,weight][,label]
//!   m1.csv           sample_id,p_<label>,...   (absent row = out of domain)
//! ```

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use logifold_core::simplex::SUM_TOLERANCE;
use logifold_core::{Dist, Ensemble, LabelSet, Model, SampleSpace};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{CliError, Result};

pub const MANIFEST: &str = "manifest.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub label_universe: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<String>,
    #[serde(default)]
    pub models: Vec<ModelEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelEntry {
    pub id: String,
    pub target: Vec<String>,
    pub predictions: String,
    #[serde(default)]
    pub domain: DomainPolicy,
    /// Routing generation, for `route`.
    #[serde(default)]
    pub generation: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DomainPolicy {
    /// A sample is in the domain exactly when its row is present.
    #[default]
    Rows,
    /// Every sample of the space must have a row.
    Full,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub file: String,
    pub line: Option<u64>,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(line) => write!(f, "{}:{}: {}", self.file, line, self.message),
            None => write!(f, "{}: {}", self.file, self.message),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bundle {
    pub manifest: Manifest,
    pub space: Arc<SampleSpace>,
    /// In manifest order.
    pub models: Vec<Model>,
}

/// Everything found while loading a bundle.
#[derive(Debug)]
pub struct Inspection {
    /// `None` when a violation prevents building the models.
    pub bundle: Option<Bundle>,
    pub violations: Vec<Violation>,
    /// SHA-256 over the names and bytes of every file read.
    pub fingerprint: String,
}

impl Bundle {
    /// Reads and checks a bundle, collecting every violation instead of
    /// stopping at the first. Only unreadable files are errors.
    pub fn inspect(dir: &Path) -> Result<Inspection> {
        Loader::new(dir).run()
    }

    /// Loads a bundle, failing on any violation.
    pub fn load(dir: &Path) -> Result<Bundle> {
        Ok(Self::load_with_fingerprint(dir)?.0)
    }

    pub fn load_with_fingerprint(dir: &Path) -> Result<(Bundle, String)> {
        let inspection = Self::inspect(dir)?;
        if !inspection.violations.is_empty() {
            return Err(CliError::InvalidBundle(inspection.violations));
        }
        let bundle = inspection.bundle.expect("no violations implies a bundle");
        Ok((bundle, inspection.fingerprint))
    }

    /// Writes the bundle under `dir` using the file names of the manifest.
    pub fn save(&self, dir: &Path) -> Result<()> {
        let manifest = toml::to_string_pretty(&self.manifest)
            .map_err(|e| CliError::Invalid(format!("manifest does not serialize: {e}")))?;
        write_file(&dir.join(MANIFEST), &manifest)?;
        if let Some(dataset) = &self.manifest.dataset {
            write_file(&dir.join(dataset), &self.dataset_csv())?;
        }
        for (entry, model) in self.manifest.models.iter().zip(&self.models) {
            write_file(&dir.join(&entry.predictions), &prediction_csv(model))?;
        }
        Ok(())
    }

    pub fn ensemble(&self, name: &str) -> Result<Ensemble> {
        Ok(Ensemble::new(name, self.space.clone(), self.models.clone())?)
    }

    /// Replaces hard zeros in every prediction by `eps` and renormalizes.
    pub fn floored(&self, eps: f64) -> Bundle {
        Bundle {
            models: self.models.iter().map(|m| m.floored(eps)).collect(),
            ..self.clone()
        }
    }

    /// Models grouped by their manifest generation, in generation order.
    pub fn generations(&self) -> Vec<Vec<Model>> {
        let count = self.manifest.models.iter().map(|e| e.generation + 1).max().unwrap_or(0);
        let mut groups = vec![Vec::new(); count];
        for (entry, model) in self.manifest.models.iter().zip(&self.models) {
            groups[entry.generation].push(model.clone());
        }
        groups
    }

    fn dataset_csv(&self) -> String {
        let space = &self.space;
        let mut out = String::from(if space.has_truth() {
            "sample_id,weight,label\n"
        } else {
            "sample_id,weight\n"
        });
        for i in 0..space.len() {
            out.push_str(space.id(i));
            out.push(',');
            out.push_str(&format_float(space.weight(i)));
            if space.has_truth() {
                out.push(',');
                out.push_str(space.truth_label(i).expect("truth attached"));
            }
            out.push('\n');
        }
        out
    }
}

/// Seventeen significant digits; parses back to the same `f64`.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

fn prediction_csv(model: &Model) -> String {
    let mut out = String::from("sample_id");
    for label in model.target().iter() {
        out.push_str(",p_");
        out.push_str(label);
    }
    out.push('\n');
    for (i, d) in model.predictions() {
        out.push_str(model.space().id(i));
        for &p in d.probs() {
            out.push(',');
            out.push_str(&format_float(p));
        }
        out.push('\n');
    }
    out
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

struct DatasetRow {
    id: String,
    line: u64,
    weight: Option<f64>,
    label: Option<String>,
}

struct PredictionRow {
    sample: String,
    line: u64,
    probs: Vec<f64>,
}

struct Loader<'a> {
    dir: &'a Path,
    violations: Vec<Violation>,
    hasher: Sha256,
}

impl<'a> Loader<'a> {
    fn new(dir: &'a Path) -> Self {
        Self {
            dir,
            violations: Vec::new(),
            hasher: Sha256::new(),
        }
    }

    fn flag(&mut self, file: &str, line: Option<u64>, message: impl Into<String>) {
        self.violations.push(Violation {
            file: file.to_owned(),
            line,
            message: message.into(),
        });
    }

    fn read(&mut self, name: &str) -> Result<String> {
        let path = self.dir.join(name);
        let bytes = fs::read(&path).map_err(|e| CliError::io(&path, e))?;
        self.hasher.update((name.len() as u64).to_le_bytes());
        self.hasher.update(name.as_bytes());
        self.hasher.update((bytes.len() as u64).to_le_bytes());
        self.hasher.update(&bytes);
        String::from_utf8(bytes).map_err(|e| {
            CliError::io(&path, std::io::Error::new(std::io::ErrorKind::InvalidData, e))
        })
    }

    fn finish(self, bundle: Option<Bundle>) -> Result<Inspection> {
        let bundle = if self.violations.is_empty() || bundle.is_some() {
            bundle
        } else {
            None
        };
        Ok(Inspection {
            bundle,
            violations: self.violations,
            fingerprint: hex::encode(self.hasher.finalize()),
        })
    }

    fn run(mut self) -> Result<Inspection> {
        let text = self.read(MANIFEST)?;
        let manifest: Manifest = match toml::from_str(&text) {
            Ok(m) => m,
            Err(e) => {
                let line = e.span().map(|s| line_of(&text, s.start));
                self.flag(MANIFEST, line, e.message().to_owned());
                return self.finish(None);
            }
        };
        let universe = match LabelSet::new(manifest.label_universe.iter().cloned()) {
            Ok(u) if u.len() >= 2 => Some(u),
            Ok(u) => {
                self.flag(MANIFEST, None, format!("label_universe needs at least 2 labels, got {}", u.len()));
                None
            }
            Err(e) => {
                self.flag(MANIFEST, None, format!("label_universe: {e}"));
                None
            }
        };
        if manifest.models.is_empty() {
            self.flag(MANIFEST, None, "no models declared");
        }
        let dataset = match &manifest.dataset {
            Some(name) => Some(self.dataset(name, universe.as_ref())?),
            None => None,
        };
        let known: Option<HashMap<String, usize>> = dataset
            .as_ref()
            .map(|rows| rows.iter().enumerate().map(|(i, r)| (r.id.clone(), i)).collect());

        let mut seen_ids = BTreeSet::new();
        let mut targets = Vec::new();
        let mut tables = Vec::new();
        for entry in &manifest.models {
            if !seen_ids.insert(entry.id.clone()) {
                self.flag(MANIFEST, None, format!("duplicate model id `{}`", entry.id));
            }
            let target = self.target(entry, universe.as_ref());
            let rows = self.predictions(entry, target.as_ref(), known.as_ref())?;
            targets.push(target);
            tables.push(rows);
        }
        self.check_generations(&manifest);

        let Some(universe) = universe else {
            return self.finish(None);
        };
        if !self.violations.is_empty() {
            return self.finish(None);
        }
        let space = match self.space(dataset, &tables, universe) {
            Some(s) => Arc::new(s),
            None => return self.finish(None),
        };
        for (entry, rows) in manifest.models.iter().zip(&tables) {
            if entry.domain == DomainPolicy::Full && rows.len() != space.len() {
                let present: BTreeSet<&str> = rows.iter().map(|r| r.sample.as_str()).collect();
                let missing: Vec<&str> = space.ids().iter().map(String::as_str).filter(|id| !present.contains(id)).collect();
                self.flag(
                    &entry.predictions,
                    None,
                    format!("domain policy is full but {} sample(s) have no row, first `{}`", missing.len(), missing[0]),
                );
            }
        }
        let mut models = Vec::new();
        for ((entry, target), rows) in manifest.models.iter().zip(targets).zip(&tables) {
            let target = target.expect("checked above");
            let mut table = vec![None; space.len()];
            for row in rows {
                let idx = space.index_of(&row.sample).expect("sample checked above");
                match Dist::new(target.clone(), row.probs.clone()) {
                    Ok(d) => table[idx] = Some(d),
                    Err(e) => self.flag(&entry.predictions, Some(row.line), e.to_string()),
                }
            }
            match Model::from_table(entry.id.clone(), space.clone(), target, table) {
                Ok(m) => models.push(m),
                Err(e) => self.flag(MANIFEST, None, e.to_string()),
            }
        }
        if !self.violations.is_empty() {
            return self.finish(None);
        }
        if space.has_truth() {
            self.check_truth(&manifest, &models, &tables);
        }
        let bundle = Bundle {
            manifest,
            space,
            models,
        };
        self.finish(Some(bundle))
    }

    fn dataset(&mut self, name: &str, universe: Option<&LabelSet>) -> Result<Vec<DatasetRow>> {
        let text = self.read(name)?;
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
        let headers = match reader.headers() {
            Ok(h) => h.clone(),
            Err(e) => {
                self.flag(name, Some(1), e.to_string());
                return Ok(Vec::new());
            }
        };
        let column = |n: &str| headers.iter().position(|h| h == n);
        let (Some(id_col), weight_col, label_col) = (column("sample_id"), column("weight"), column("label")) else {
            self.flag(name, Some(1), "header must contain `sample_id`");
            return Ok(Vec::new());
        };
        for h in headers.iter().filter(|h| !["sample_id", "weight", "label"].contains(h)) {
            self.flag(name, Some(1), format!("unknown column `{h}`"));
        }
        let mut rows: Vec<DatasetRow> = Vec::new();
        let mut seen = BTreeSet::new();
        for record in reader.records() {
            let record = match record {
                Ok(r) => r,
                Err(e) => {
                    let line = e.position().map(|p| p.line());
                    self.flag(name, line, e.to_string());
                    continue;
                }
            };
            let line = record.position().map_or(0, |p| p.line());
            let id = record.get(id_col).unwrap_or("").to_owned();
            if id.is_empty() {
                self.flag(name, Some(line), "empty sample_id");
                continue;
            }
            if !seen.insert(id.clone()) {
                self.flag(name, Some(line), format!("duplicate sample `{id}`"));
                continue;
            }
            let weight = match weight_col.and_then(|c| record.get(c)).filter(|w| !w.is_empty()) {
                None => None,
                Some(w) => match w.parse::<f64>() {
                    Ok(v) if v > 0.0 && v.is_finite() => Some(v),
                    Ok(v) => {
                        self.flag(name, Some(line), format!("weight {v} must be positive and finite"));
                        None
                    }
                    Err(_) => {
                        self.flag(name, Some(line), format!("weight `{w}` is not a number"));
                        None
                    }
                },
            };
            let label = label_col.and_then(|c| record.get(c)).filter(|l| !l.is_empty()).map(str::to_owned);
            if let (Some(l), Some(u)) = (&label, universe) {
                if !u.contains(l) {
                    self.flag(name, Some(line), format!("label `{l}` is not in label_universe"));
                }
            }
            rows.push(DatasetRow { id, line, weight, label });
        }
        let labeled = rows.iter().filter(|r| r.label.is_some()).count();
        if labeled > 0 && labeled < rows.len() {
            let first = rows.iter().find(|r| r.label.is_none()).unwrap();
            self.flag(
                name,
                Some(first.line),
                format!("sample `{}` has no label; label every sample or none", first.id),
            );
        }
        if rows.is_empty() {
            self.flag(name, None, "dataset has no samples");
        }
        Ok(rows)
    }

    fn target(&mut self, entry: &ModelEntry, universe: Option<&LabelSet>) -> Option<LabelSet> {
        let target = match LabelSet::new(entry.target.iter().cloned()) {
            Ok(t) => t,
            Err(e) => {
                self.flag(MANIFEST, None, format!("model `{}`: target: {e}", entry.id));
                return None;
            }
        };
        let universe = universe?;
        let outside: Vec<&str> = target.iter().filter(|l| !universe.contains(l)).collect();
        if !outside.is_empty() {
            self.flag(
                MANIFEST,
                None,
                format!("model `{}`: target label(s) {} not in label_universe", entry.id, outside.join(", ")),
            );
            return None;
        }
        Some(target)
    }

    fn predictions(
        &mut self,
        entry: &ModelEntry,
        target: Option<&LabelSet>,
        known: Option<&HashMap<String, usize>>,
    ) -> Result<Vec<PredictionRow>> {
        let name = entry.predictions.as_str();
        let text = self.read(name)?;
        let Some(target) = target else {
            return Ok(Vec::new());
        };
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
        let headers = match reader.headers() {
            Ok(h) => h.clone(),
            Err(e) => {
                self.flag(name, Some(1), e.to_string());
                return Ok(Vec::new());
            }
        };
        if headers.get(0) != Some("sample_id") {
            self.flag(name, Some(1), "first column must be `sample_id`");
            return Ok(Vec::new());
        }
        let mut slots = Vec::new();
        let mut header_ok = true;
        for h in headers.iter().skip(1) {
            match h.strip_prefix("p_").and_then(|l| target.index_of(l)) {
                Some(slot) if !slots.contains(&slot) => slots.push(slot),
                _ => {
                    self.flag(name, Some(1), format!("column `{h}` is not `p_<label>` for a distinct target label"));
                    header_ok = false;
                }
            }
        }
        if header_ok && slots.len() != target.len() {
            let missing: Vec<&str> = (0..target.len())
                .filter(|s| !slots.contains(s))
                .map(|s| target.get(s).unwrap())
                .collect();
            self.flag(name, Some(1), format!("missing column(s) for target label(s) {}", missing.join(", ")));
            header_ok = false;
        }
        if !header_ok {
            return Ok(Vec::new());
        }

        let mut rows = Vec::new();
        let mut seen = BTreeSet::new();
        for record in reader.records() {
            let record = match record {
                Ok(r) => r,
                Err(e) => {
                    let line = e.position().map(|p| p.line());
                    self.flag(name, line, e.to_string());
                    continue;
                }
            };
            let line = record.position().map_or(0, |p| p.line());
            let sample = record.get(0).unwrap_or("").to_owned();
            if known.is_some_and(|k| !k.contains_key(&sample)) {
                self.flag(name, Some(line), format!("sample `{sample}` is not in the dataset"));
                continue;
            }
            if !seen.insert(sample.clone()) {
                self.flag(name, Some(line), format!("duplicate row for sample `{sample}`"));
                continue;
            }
            let mut probs = vec![0.0; target.len()];
            let mut ok = true;
            for (&slot, cell) in slots.iter().zip(record.iter().skip(1)) {
                match cell.parse::<f64>() {
                    Ok(p) if (0.0..=1.0).contains(&p) => probs[slot] = p,
                    Ok(p) => {
                        self.flag(name, Some(line), format!("probability {p} outside [0, 1]"));
                        ok = false;
                    }
                    Err(_) => {
                        self.flag(name, Some(line), format!("`{cell}` is not a number"));
                        ok = false;
                    }
                }
            }
            if !ok {
                continue;
            }
            let sum: f64 = probs.iter().sum();
            if (sum - 1.0).abs() > SUM_TOLERANCE {
                self.flag(name, Some(line), format!("row sums to {sum}, not 1"));
                continue;
            }
            rows.push(PredictionRow { sample, line, probs });
        }
        Ok(rows)
    }

    fn check_generations(&mut self, manifest: &Manifest) {
        let used: BTreeSet<usize> = manifest.models.iter().map(|e| e.generation).collect();
        if let Some(&max) = used.iter().next_back() {
            if let Some(gap) = (0..=max).find(|g| !used.contains(g)) {
                self.flag(MANIFEST, None, format!("generation {gap} has no models; generations must be contiguous from 0"));
            }
        }
    }

    fn space(
        &mut self,
        dataset: Option<Vec<DatasetRow>>,
        tables: &[Vec<PredictionRow>],
        universe: LabelSet,
    ) -> Option<SampleSpace> {
        let Some(rows) = dataset else {
            let mut ids: Vec<String> = Vec::new();
            let mut seen = BTreeSet::new();
            for row in tables.iter().flatten() {
                if seen.insert(row.sample.as_str()) {
                    ids.push(row.sample.clone());
                }
            }
            return match SampleSpace::uniform(ids, universe) {
                Ok(s) => Some(s),
                Err(e) => {
                    self.flag(MANIFEST, None, e.to_string());
                    None
                }
            };
        };
        let uniform = 1.0 / rows.len() as f64;
        let labeled = rows.iter().all(|r| r.label.is_some());
        let samples = rows.iter().map(|r| (r.id.clone(), r.weight.unwrap_or(uniform)));
        let space = SampleSpace::new(samples, universe).and_then(|s| {
            if labeled {
                s.with_truth(rows.iter().map(|r| r.label.clone().unwrap()))
            } else {
                Ok(s)
            }
        });
        match space {
            Ok(s) => Some(s),
            Err(e) => {
                self.flag(MANIFEST, None, e.to_string());
                None
            }
        }
    }

    fn check_truth(&mut self, manifest: &Manifest, models: &[Model], tables: &[Vec<PredictionRow>]) {
        for ((entry, model), rows) in manifest.models.iter().zip(models).zip(tables) {
            for row in rows {
                let idx = model.space().index_of(&row.sample).expect("sample checked");
                let truth = model.space().truth_label(idx).expect("truth attached");
                if !model.target().contains(truth) {
                    self.flag(
                        &entry.predictions,
                        Some(row.line),
                        format!(
                            "sample `{}` is in the domain of `{}` but its true label `{truth}` is not in the target; \
                             the truth of an in-domain sample must lie in the target",
                            row.sample, entry.id
                        ),
                    );
                }
            }
        }
    }
}

fn line_of(text: &str, offset: usize) -> u64 {
    text[..offset.min(text.len())].bytes().filter(|&b| b == b'\n').count() as u64 + 1
}
