//! Experiment configuration: schema, presets and validation.

use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use supermix_core::cfrac::{GrowthSchedule, PartialQuotients};
use supermix_core::flow::SamplingMode;
use supermix_core::tolerance::{AmplitudeSchedule, ToleranceSchema};
use supermix_core::Error as CoreError;
use toml::{Table, Value};

pub const SCHEMA_VERSION: u32 = 1;

const DESK_SMALL: &str = include_str!("../presets/desk-small.toml");
const DESK_LARGE: &str = include_str!("../presets/desk-large.toml");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub name: String,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub frequency: FrequencySection,
    pub ceiling: CeilingSection,
    pub tolerances: ToleranceSchema,
    pub recurrence: RecurrenceSection,
    pub census: CensusSection,
    pub mixing: MixingSection,
    pub potential: PotentialSection,
    pub gordon: GordonSection,
    pub spectrum: SpectrumSection,
    pub block_bound: BlockBoundSection,
    pub contrast: ContrastSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrequencySection {
    pub schedule: String,
    pub levels: usize,
    pub alpha_seed: Vec<u64>,
    pub alpha_prime_seed: Vec<u64>,
    /// Largest denominator size the design may produce.
    pub budget_bits: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CeilingSection {
    pub amplitude: String,
    pub n0: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecurrenceSection {
    /// Grid points per period of `{qₙx}` inside `Cₙ`.
    pub grid: usize,
    /// Recurrence times up to this are also summed term by term.
    pub direct_limit: u64,
    /// Sampled orbits checked at every recurrence time.
    pub samples: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CensusSection {
    pub samples: usize,
    /// Literal indices `n` whose sets `Cₙ` are measured with the `n`-th
    /// convergent of `α`.
    pub index_sets: Vec<u32>,
    pub witness_threshold: f64,
    pub sampling: SamplingMode,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixingSection {
    pub times: usize,
    pub t_max: u64,
    pub grid_x: usize,
    pub grid_y: usize,
    /// Largest Spearman statistic accepted for the structured series.
    pub spearman_max: f64,
    /// Smallest Spearman statistic accepted for the `φ ≡ 1` control.
    pub control_min: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialSection {
    /// `smooth`, `lacunary` or `cos-x`.
    pub observable: String,
    pub lacunary_beta: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GordonSection {
    pub base_points: usize,
    /// Draw structured base points from `Cₙ × 𝕋`.
    pub c_sets: bool,
    /// Recurrence times above this are not sampled.
    pub max_k: u64,
    pub iid_trials: usize,
    pub iid_candidates: Vec<usize>,
    /// Required ratio of control to structured median defect.
    pub ratio_min: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumSection {
    pub size: usize,
    pub points: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockBoundSection {
    pub pairs: usize,
    pub max_period: usize,
    /// Blocks are `k = period·r` with `r ≤ max_repeat`.
    pub max_repeat: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContrastSection {
    pub base_points: usize,
    pub size: usize,
    pub variance_factor: f64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub field: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

fn violation(field: &str, message: impl Into<String>) -> Violation {
    Violation {
        field: field.into(),
        message: message.into(),
    }
}

pub const PRESETS: [&str; 2] = ["desk-small", "desk-large"];

pub fn preset_text(name: &str) -> Option<&'static str> {
    match name {
        "desk-small" => Some(DESK_SMALL),
        "desk-large" => Some(DESK_LARGE),
        _ => None,
    }
}

pub fn preset(name: &str) -> Option<ExperimentConfig> {
    preset_text(name).map(|t| validate_config(t).expect("shipped preset is valid"))
}

impl ExperimentConfig {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn schedule(&self) -> GrowthSchedule {
        GrowthSchedule::parse(&self.frequency.schedule).expect("validated")
    }

    pub fn amplitude(&self) -> AmplitudeSchedule {
        AmplitudeSchedule::parse(&self.ceiling.amplitude).expect("validated")
    }
}

fn type_name(v: &Value) -> &'static str {
    match v {
        Value::String(_) => "string",
        Value::Integer(_) => "integer",
        Value::Float(_) => "float",
        Value::Boolean(_) => "boolean",
        Value::Datetime(_) => "datetime",
        Value::Array(_) => "array",
        Value::Table(_) => "table",
    }
}

fn compatible(template: &Value, v: &Value) -> bool {
    matches!(
        (template, v),
        (Value::Float(_), Value::Integer(_)) | (Value::Float(_), Value::Float(_))
    ) || type_name(template) == type_name(v)
}

/// Compares `raw` against the shape of `template`, patching missing or
/// mistyped entries so that the remaining checks can still run.
fn structural(template: &Table, raw: &mut Table, prefix: &str, out: &mut Vec<Violation>, patched: &mut Vec<String>) {
    for (k, tv) in template {
        let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match raw.get_mut(k) {
            None => {
                out.push(violation(&path, "missing field"));
                raw.insert(k.clone(), tv.clone());
                patched.push(path);
            }
            Some(v) => {
                if let (Value::Table(t), Value::Table(r)) = (tv, &mut *v) {
                    structural(t, r, &path, out, patched);
                } else if let (Value::Float(_), Value::Integer(i)) = (tv, &*v) {
                    *v = Value::Float(*i as f64);
                } else if !compatible(tv, v) {
                    out.push(violation(
                        &path,
                        format!("expected {}, found {}", type_name(tv), type_name(v)),
                    ));
                    *v = tv.clone();
                    patched.push(path);
                }
            }
        }
    }
    let unknown: Vec<String> = raw.keys().filter(|k| !template.contains_key(*k)).cloned().collect();
    for k in unknown {
        let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        out.push(violation(&path, "unknown field"));
        raw.remove(&k);
    }
}

fn semantic(c: &ExperimentConfig) -> Vec<Violation> {
    let mut v = Vec::new();
    if c.schema_version != SCHEMA_VERSION {
        v.push(violation(
            "schema_version",
            format!("unsupported version {} (expected {SCHEMA_VERSION})", c.schema_version),
        ));
    }
    if c.name.trim().is_empty() {
        v.push(violation("name", "must not be empty"));
    }
    if c.output_dir.as_os_str().is_empty() {
        v.push(violation("output_dir", "must not be empty"));
    }
    if let Err(e) = GrowthSchedule::parse(&c.frequency.schedule) {
        v.push(violation("frequency.schedule", e.to_string()));
    }
    if !(1..=8).contains(&c.frequency.levels) {
        v.push(violation("frequency.levels", "must lie in 1..=8"));
    }
    for (field, seed) in [
        ("frequency.alpha_seed", &c.frequency.alpha_seed),
        ("frequency.alpha_prime_seed", &c.frequency.alpha_prime_seed),
    ] {
        if let Err(e) = PartialQuotients::from_u64(seed) {
            v.push(violation(field, e.to_string()));
        }
    }
    if c.frequency.budget_bits < 64 {
        v.push(violation("frequency.budget_bits", "must be at least 64"));
    }
    if let Err(e) = AmplitudeSchedule::parse(&c.ceiling.amplitude) {
        v.push(violation("ceiling.amplitude", e.to_string()));
    }
    if c.ceiling.n0 < 17 {
        v.push(violation("ceiling.n0", CoreError::PlateauEmpty(c.ceiling.n0).to_string()));
    }
    for msg in c.tolerances.validate() {
        let field = msg.split_whitespace().next().unwrap_or("tolerances").to_string();
        let field = field.split('/').next().unwrap_or("tolerances").to_string();
        v.push(violation(&field, msg));
    }
    if c.recurrence.grid < 16 {
        v.push(violation("recurrence.grid", "must be at least 16"));
    }
    if c.recurrence.samples == 0 {
        v.push(violation("recurrence.samples", "must be positive"));
    }
    if c.census.samples < 100 {
        v.push(violation("census.samples", "must be at least 100"));
    }
    if c.census.index_sets.iter().any(|&n| n < 2) {
        v.push(violation("census.index_sets", "indices must be at least 2"));
    }
    if !(c.census.witness_threshold > 0.0 && c.census.witness_threshold <= 1.0) {
        v.push(violation("census.witness_threshold", "must lie in (0, 1]"));
    }
    if c.mixing.times < 3 {
        v.push(violation("mixing.times", "must be at least 3"));
    }
    if c.mixing.t_max < 2 {
        v.push(violation("mixing.t_max", "must be at least 2"));
    }
    if c.mixing.grid_x < 8 || c.mixing.grid_y < 2 {
        v.push(violation("mixing.grid_x", "grid must be at least 8 × 2"));
    }
    if !(-1.0..=1.0).contains(&c.mixing.spearman_max) {
        v.push(violation("mixing.spearman_max", "must lie in [-1, 1]"));
    }
    if !(-1.0..=1.0).contains(&c.mixing.control_min) {
        v.push(violation("mixing.control_min", "must lie in [-1, 1]"));
    }
    if !["smooth", "lacunary", "cos-x"].contains(&c.potential.observable.as_str()) {
        v.push(violation("potential.observable", "expected smooth, lacunary or cos-x"));
    }
    if !(c.potential.lacunary_beta > 0.0 && c.potential.lacunary_beta <= 1.0) {
        v.push(violation("potential.lacunary_beta", "must lie in (0, 1]"));
    }
    if c.gordon.base_points == 0 {
        v.push(violation("gordon.base_points", "must be positive"));
    }
    if c.gordon.iid_candidates.iter().any(|&k| k == 0) {
        v.push(violation("gordon.iid_candidates", "candidates must be positive"));
    }
    if !(c.gordon.ratio_min >= 1.0) {
        v.push(violation("gordon.ratio_min", "must be at least 1"));
    }
    if c.spectrum.size < 3 || c.spectrum.size % 2 == 0 {
        v.push(violation("spectrum.size", "must be odd and at least 3"));
    }
    if c.spectrum.points == 0 {
        v.push(violation("spectrum.points", "must be positive"));
    }
    if c.block_bound.pairs == 0 || c.block_bound.max_period == 0 || c.block_bound.max_repeat == 0 {
        v.push(violation("block_bound", "pairs, max_period and max_repeat must be positive"));
    }
    if c.contrast.base_points < 20 {
        v.push(violation("contrast.base_points", "must be at least 20"));
    }
    if c.contrast.size < 201 || c.contrast.size % 2 == 0 {
        v.push(violation("contrast.size", "must be odd and at least 201"));
    }
    if !(c.contrast.variance_factor > 0.0) {
        v.push(violation("contrast.variance_factor", "must be positive"));
    }
    v
}

/// Parses a config, or lists every schema violation found.
pub fn validate_config(raw: &str) -> Result<ExperimentConfig, Vec<Violation>> {
    let mut table: Table = match raw.parse() {
        Ok(t) => t,
        Err(e) => return Err(vec![violation("<document>", e.to_string())]),
    };
    let template: Table = DESK_SMALL.parse().expect("preset parses");
    let mut out = Vec::new();
    let mut patched = Vec::new();
    structural(&template, &mut table, "", &mut out, &mut patched);
    match Value::Table(table).try_into::<ExperimentConfig>() {
        Ok(cfg) => {
            out.extend(
                semantic(&cfg)
                    .into_iter()
                    .filter(|s| !patched.iter().any(|p| s.field == *p || s.field.starts_with(&format!("{p}.")))),
            );
            if out.is_empty() {
                Ok(cfg)
            } else {
                Err(out)
            }
        }
        Err(e) => {
            out.push(violation("<document>", e.to_string()));
            Err(out)
        }
    }
}
