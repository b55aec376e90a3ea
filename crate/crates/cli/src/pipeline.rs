//! The staged pipeline with digest-keyed caching.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};
use rayon::prelude::*;
use supermix_core::birkhoff::{recurrence_estimate, RecurrenceReport, Translation};
use supermix_core::ceiling::props::{verify_properties, Prop36Report};
use supermix_core::ceiling::bundle::{bundle_files, read_bundle};
use supermix_core::ceiling::{build_ceiling, BuildOptions, CeilingFunction};
use supermix_core::cfrac::{design_pair, FrequencyPair, PartialQuotients};
use supermix_core::diagnostics::{
    census_radius, gordon_contrast, in_c_set, localization_contrast, log_times, recurrence_census, spearman, ContrastReport,
    CorrelationSeries, FiberObservable, GordonContrast, RecurrenceCensus,
};
use supermix_core::flow::{FlowMap, MeasureSampler, RecurrenceWitness, SamplingMode};
use supermix_core::schrodinger::{
    gordon_block_bound, gordon_check, gordon_defect, iid_trace, localization_metrics, periodic_trace,
    sample_potential, truncated_spectrum, GordonThreshold, Localization, Observable, PotentialTrace,
};
use supermix_core::Error as CoreError;

use crate::config::ExperimentConfig;
use crate::formats::{csv_bytes, spectrum_rows, trace_csv};

pub const MANIFEST: &str = "manifest.json";
/// Subdirectory of the output directory holding the ceiling bundle.
pub const CEILING_DIR: &str = "ceiling";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    DesignFrequency,
    BuildCeiling,
    VerifyProperties,
    RecurrenceScan,
    Census,
    MixingCorr,
    GordonScan,
    Spectrum,
    BlockBound,
    Contrast,
}

impl Stage {
    pub const ALL: [Stage; 10] = [
        Stage::DesignFrequency,
        Stage::BuildCeiling,
        Stage::VerifyProperties,
        Stage::RecurrenceScan,
        Stage::Census,
        Stage::MixingCorr,
        Stage::GordonScan,
        Stage::Spectrum,
        Stage::BlockBound,
        Stage::Contrast,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::DesignFrequency => "design-frequency",
            Stage::BuildCeiling => "build-ceiling",
            Stage::VerifyProperties => "verify-properties",
            Stage::RecurrenceScan => "recurrence-scan",
            Stage::Census => "census",
            Stage::MixingCorr => "mixing-corr",
            Stage::GordonScan => "gordon-scan",
            Stage::Spectrum => "spectrum",
            Stage::BlockBound => "block-bound",
            Stage::Contrast => "contrast",
        }
    }

    pub fn deps(self) -> &'static [Stage] {
        match self {
            Stage::DesignFrequency => &[],
            Stage::BuildCeiling => &[Stage::DesignFrequency],
            _ => &[Stage::DesignFrequency, Stage::BuildCeiling],
        }
    }

    pub fn json_file(self) -> String {
        format!("{}.json", self.name())
    }

    /// Config sections that feed this stage.
    fn inputs(self, c: &ExperimentConfig) -> serde_json::Value {
        match self {
            Stage::DesignFrequency => json!({ "frequency": c.frequency }),
            Stage::BuildCeiling => json!({ "ceiling": c.ceiling, "tolerances": c.tolerances, "levels": c.frequency.levels }),
            Stage::VerifyProperties => json!({ "tolerances": c.tolerances, "seed": c.seed }),
            Stage::RecurrenceScan => json!({ "recurrence": c.recurrence, "tolerances": c.tolerances, "seed": c.seed }),
            Stage::Census => json!({ "census": c.census, "tolerances": c.tolerances, "seed": c.seed }),
            Stage::MixingCorr => json!({ "mixing": c.mixing, "tolerances": c.tolerances }),
            Stage::GordonScan => json!({ "gordon": c.gordon, "potential": c.potential, "tolerances": c.tolerances, "seed": c.seed }),
            Stage::Spectrum => json!({ "spectrum": c.spectrum, "potential": c.potential, "seed": c.seed }),
            Stage::BlockBound => json!({ "block_bound": c.block_bound, "potential": c.potential, "max_k": c.gordon.max_k, "seed": c.seed }),
            Stage::Contrast => json!({ "contrast": c.contrast, "potential": c.potential, "seed": c.seed }),
        }
    }
}

impl std::str::FromStr for Stage {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| format!("unknown stage `{s}`"))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StageStatus {
    Done,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: Stage,
    pub input_digest: String,
    pub outputs: Vec<FileDigest>,
    pub wall_seconds: f64,
    pub cache_hit: bool,
    pub status: StageStatus,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub config_hash: String,
    pub artifact_versions: BTreeMap<String, String>,
    pub stages: Vec<StageRecord>,
    /// Every stage ran or was reused in the invocation that wrote this.
    pub complete: bool,
    /// First stage to rerun after a failure.
    pub resume_from: Option<Stage>,
}

impl RunManifest {
    pub fn record(&self, stage: Stage) -> Option<&StageRecord> {
        self.stages.iter().find(|r| r.stage == stage)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("stage {} failed: {source}", .stage.name())]
    Stage {
        stage: Stage,
        #[source]
        source: CoreError,
        manifest: Box<RunManifest>,
    },
    #[error("i/o on {path}: {message}")]
    Io { path: PathBuf, message: String },
}

impl PipelineError {
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Stage {
                source: CoreError::PrecisionInsufficient(_),
                ..
            } => 4,
            _ => 3,
        }
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> PipelineError {
    PipelineError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn file_digest(path: &Path) -> Option<String> {
    fs::read(path).ok().map(|b| sha256_hex(&b))
}

/// Hash of the config with the output directory left out.
pub fn config_hash(c: &ExperimentConfig) -> String {
    let mut c = c.clone();
    c.output_dir = PathBuf::new();
    sha256_hex(c.to_toml().as_bytes())
}

fn versions() -> BTreeMap<String, String> {
    BTreeMap::from([
        ("supermix-cli".to_string(), env!("CARGO_PKG_VERSION").to_string()),
        ("supermix-core".to_string(), supermix_core::VERSION.to_string()),
    ])
}

/// Row types for the CSV outputs.
#[derive(Serialize)]
struct CensusRow {
    id: usize,
    x: f64,
    y: f64,
    s: f64,
    level: usize,
    in_c: bool,
    distance: f64,
    radius: f64,
    alpha_hat: Option<f64>,
}

#[derive(Serialize)]
struct MixingRow {
    t: u64,
    structured: f64,
    structured_refined: f64,
    control: f64,
}

#[derive(Serialize)]
struct ContrastRow {
    population: &'static str,
    trace: usize,
    median_ipr: f64,
    median_ipr_interior: f64,
}

#[derive(Serialize)]
struct OrbitScanRow<'a> {
    id: usize,
    x: f64,
    y: f64,
    s: f64,
    level: usize,
    t: &'a str,
    distance: f64,
    radius: f64,
    witness: bool,
    ambiguous: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrbitSample {
    pub id: usize,
    pub x: f64,
    pub y: f64,
    pub s: f64,
    /// One per level, at `t = qⱼq′ⱼ`.
    pub witnesses: Vec<RecurrenceWitness>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecurrenceScan {
    pub reports: Vec<RecurrenceReport>,
    pub orbits: Vec<OrbitSample>,
    /// Fraction of sampled orbits within the radius, per level.
    pub level_witness: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CensusOutput {
    pub census: RecurrenceCensus,
    pub witness_threshold: f64,
    pub witness_pass: bool,
    pub sets_pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixingOutput {
    pub structured: CorrelationSeries,
    pub control: CorrelationSeries,
    pub spearman: f64,
    pub control_spearman: f64,
    pub converged: bool,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IidGordon {
    pub trials: usize,
    pub candidates: Vec<usize>,
    /// Trials in which every candidate exceeded its threshold.
    pub all_failed: usize,
    pub max_ratio_to_threshold: f64,
    pub min_ratio_to_threshold: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GordonOutput {
    /// One per level whose recurrence time fits under `max_k`, with base
    /// points as configured.
    pub structured: Vec<GordonContrast>,
    /// The same levels with Haar-distributed base points.
    pub unconditioned: Vec<GordonContrast>,
    pub iid: IidGordon,
    pub periodic_defect: f64,
    pub ratio_min: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumPoint {
    pub x: f64,
    pub y: f64,
    pub s: f64,
    pub eigenvalues: Vec<f64>,
    pub localization: Vec<Localization>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumOutput {
    pub size: usize,
    pub points: Vec<SpectrumPoint>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockCase {
    pub period: usize,
    pub k: usize,
    pub energy: f64,
    pub phi: [f64; 2],
    pub max_ln_norm: f64,
    pub satisfied: bool,
    pub cayley_hamilton: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockBoundOutput {
    pub cases: Vec<BlockCase>,
    pub satisfied: usize,
    pub cayley_agree: usize,
    /// Structured traces at the first recurrence time, over an energy grid.
    pub structured_k: Option<usize>,
    pub structured_satisfied: usize,
    pub structured_total: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContrastOutput {
    pub report: ContrastReport,
    pub pass: bool,
}

/// Pair, ceiling and flow shared by the later stages.
pub struct Model {
    pub pair: FrequencyPair,
    pub ceiling: CeilingFunction,
    pub map: FlowMap,
}

pub fn observable(c: &ExperimentConfig, map: &FlowMap) -> Observable {
    match c.potential.observable.as_str() {
        "lacunary" => Observable::lacunary(map, c.potential.lacunary_beta),
        "cos-x" => Observable::cos_x(),
        _ => Observable::smooth(map),
    }
}

pub fn design(c: &ExperimentConfig) -> Result<FrequencyPair, CoreError> {
    let a = PartialQuotients::from_u64(&c.frequency.alpha_seed)?;
    let b = PartialQuotients::from_u64(&c.frequency.alpha_prime_seed)?;
    design_pair(&c.schedule(), c.frequency.levels, (&a, &b), c.frequency.budget_bits)
}

pub fn build(c: &ExperimentConfig, pair: &FrequencyPair) -> Result<CeilingFunction, CoreError> {
    build_ceiling(
        pair,
        &BuildOptions {
            levels: c.frequency.levels,
            n0: c.ceiling.n0,
            amplitude: c.amplitude(),
            tol: c.tolerances.clone(),
        },
    )
}

pub fn model(c: &ExperimentConfig) -> Result<Model, CoreError> {
    let pair = design(c)?;
    let ceiling = build(c, &pair)?;
    let map = FlowMap::new(Translation::from_pair(&pair), ceiling.clone());
    Ok(Model { pair, ceiling, map })
}

pub fn recurrence_scan(c: &ExperimentConfig, m: &Model) -> Result<RecurrenceScan, CoreError> {
    let tr = Translation::from_pair(&m.pair);
    let reports = (1..=c.frequency.levels)
        .map(|l| {
            recurrence_estimate(
                &m.ceiling,
                &m.pair,
                &tr,
                l,
                c.recurrence.grid,
                &c.tolerances,
                c.recurrence.direct_limit,
            )
        })
        .collect::<Result<Vec<_>, _>>()?;
    let sampler = MeasureSampler {
        seed: c.seed,
        mode: SamplingMode::Haar,
    };
    let times: Vec<_> = (1..=c.frequency.levels).map(|j| m.pair.recurrence_time(j)).collect();
    let radii: Vec<f64> = times.iter().map(|t| census_radius(&m.map, t, &c.tolerances)).collect();
    let orbits = sampler
        .sample_points(c.recurrence.samples, &m.map)?
        .into_par_iter()
        .enumerate()
        .map(|(id, p)| {
            let witnesses = m.map.orbit_recurrences(&p, &times, |t| {
                radii[times.iter().position(|u| u == t).expect("listed time")]
            })?;
            Ok(OrbitSample {
                id,
                x: p.x,
                y: p.y,
                s: p.s,
                witnesses,
            })
        })
        .collect::<Result<Vec<_>, CoreError>>()?;
    let level_witness = (0..times.len())
        .map(|j| orbits.iter().filter(|o| o.witnesses[j].witness).count() as f64 / orbits.len().max(1) as f64)
        .collect();
    Ok(RecurrenceScan {
        reports,
        orbits,
        level_witness,
    })
}

pub fn census(c: &ExperimentConfig, m: &Model) -> Result<CensusOutput, CoreError> {
    let sampler = MeasureSampler {
        seed: c.seed,
        mode: c.census.sampling,
    };
    let census = recurrence_census(
        &m.map,
        &m.pair,
        &sampler,
        c.frequency.levels,
        c.census.samples,
        &c.census.index_sets,
        &c.tolerances,
    )?;
    Ok(CensusOutput {
        witness_pass: census.witness_fraction >= c.census.witness_threshold,
        sets_pass: census.index_sets.iter().all(|s| s.within_3_stderr),
        witness_threshold: c.census.witness_threshold,
        census,
    })
}

pub fn mixing(c: &ExperimentConfig, m: &Model) -> Result<MixingOutput, CoreError> {
    let times = log_times(c.mixing.times, c.mixing.t_max);
    let grid = (c.mixing.grid_x, c.mixing.grid_y);
    let structured = supermix_core::diagnostics::correlation_decay(
        &m.map,
        FiberObservable::CosFiber,
        &times,
        grid,
        &c.tolerances,
    )?;
    let unit = FlowMap::unit(m.map.translation.clone());
    let control =
        supermix_core::diagnostics::correlation_decay(&unit, FiberObservable::CosFiber, &times, grid, &c.tolerances)?;
    let tf: Vec<f64> = times.iter().map(|&t| t as f64).collect();
    let s = spearman(&tf, &structured.refined);
    let sc = spearman(&tf, &control.refined);
    let converged = structured.converged && control.converged;
    Ok(MixingOutput {
        pass: converged && s <= c.mixing.spearman_max && sc > c.mixing.control_min,
        spearman: s,
        control_spearman: sc,
        converged,
        structured,
        control,
    })
}

pub fn gordon(c: &ExperimentConfig, m: &Model) -> Result<GordonOutput, CoreError> {
    let obs = observable(c, &m.map);
    let mut structured = Vec::new();
    let mut unconditioned = Vec::new();
    for j in 1..=c.frequency.levels {
        let t = m.pair.recurrence_time(j);
        let Some(k) = u64::try_from(&t).ok().filter(|k| *k <= c.gordon.max_k) else {
            continue;
        };
        let k = k as usize;
        let level = c.gordon.c_sets.then_some(j);
        structured.push(gordon_contrast(&m.map, &m.pair, &obs, c.gordon.base_points, k, level, c.seed)?);
        unconditioned.push(gordon_contrast(&m.map, &m.pair, &obs, c.gordon.base_points, k, None, c.seed)?);
    }
    let rule = GordonThreshold {
        cap: c.tolerances.gordon_k_cap,
    };
    let kmax = c.gordon.iid_candidates.iter().copied().max().unwrap_or(1);
    let mut all_failed = 0;
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for i in 0..c.gordon.iid_trials {
        let tr = iid_trace(2 * kmax, 0.0, 1.0, c.seed.wrapping_add(10_000 + i as u64));
        let rep = gordon_check(&tr, &c.gordon.iid_candidates, &rule)?;
        if rep.entries.iter().all(|e| !e.pass) {
            all_failed += 1;
        }
        for e in &rep.entries {
            let r = e.defect / e.threshold;
            lo = lo.min(r);
            hi = hi.max(r);
        }
    }
    let per = periodic_trace(&[0.3, -1.1, 0.7, 2.0, -0.4], 4 * 5)?;
    let periodic_defect = gordon_defect(&per, 10)?;
    let pass = !structured.is_empty() && structured.iter().all(|g| g.ratio >= c.gordon.ratio_min);
    Ok(GordonOutput {
        structured,
        unconditioned,
        iid: IidGordon {
            trials: c.gordon.iid_trials,
            candidates: c.gordon.iid_candidates.clone(),
            all_failed,
            max_ratio_to_threshold: hi,
            min_ratio_to_threshold: lo,
        },
        periodic_defect,
        ratio_min: c.gordon.ratio_min,
        pass,
    })
}

/// The spectra and the traces they were computed from.
pub fn spectrum(c: &ExperimentConfig, m: &Model) -> Result<(SpectrumOutput, Vec<PotentialTrace>), CoreError> {
    let obs = observable(c, &m.map);
    let half = c.spectrum.size / 2;
    let sampler = MeasureSampler {
        seed: c.seed,
        mode: SamplingMode::Haar,
    };
    let points = sampler
        .sample_points(c.spectrum.points, &m.map)?
        .into_iter()
        .map(|p| {
            let trace = sample_potential(&m.map, &obs, &p, half)?;
            let s = truncated_spectrum(&trace, half)?;
            let point = SpectrumPoint {
                x: p.x,
                y: p.y,
                s: p.s,
                localization: localization_metrics(&s.eigenvectors)?,
                eigenvalues: s.eigenvalues,
            };
            Ok((point, trace))
        })
        .collect::<Result<Vec<_>, CoreError>>()?;
    let (points, traces) = points.into_iter().unzip();
    Ok((
        SpectrumOutput {
            size: 2 * half + 1,
            points,
        },
        traces,
    ))
}

pub fn block_bound(c: &ExperimentConfig, m: &Model) -> Result<BlockBoundOutput, CoreError> {
    let b = &c.block_bound;
    let mut rng = ChaCha8Rng::seed_from_u64(c.seed.wrapping_add(20_000));
    let mut cases = Vec::with_capacity(b.pairs);
    for _ in 0..b.pairs {
        let period = rng.gen_range(1..=b.max_period);
        let block: Vec<f64> = (0..period).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let k = period * rng.gen_range(1..=b.max_repeat);
        let trace = periodic_trace(&block, 2 * k)?;
        let energy = rng.gen_range(-5.0..5.0);
        let theta: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        let phi = [theta.cos(), theta.sin()];
        let r = gordon_block_bound(&trace, energy, k, phi)?;
        cases.push(BlockCase {
            period,
            k,
            energy,
            phi,
            max_ln_norm: r.ln_norms.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            satisfied: r.satisfied,
            cayley_hamilton: r.cayley_hamilton_bound == r.satisfied,
        });
    }
    let mut out = BlockBoundOutput {
        satisfied: cases.iter().filter(|c| c.satisfied).count(),
        cayley_agree: cases.iter().filter(|c| c.cayley_hamilton).count(),
        cases,
        structured_k: None,
        structured_satisfied: 0,
        structured_total: 0,
    };
    let t1 = m.pair.recurrence_time(1);
    if let Some(k) = u64::try_from(&t1).ok().filter(|k| *k <= c.gordon.max_k) {
        let k = k as usize;
        let obs = observable(c, &m.map);
        let q = m.pair.q(1).clone();
        let n = m.ceiling.n0;
        let sampler = MeasureSampler {
            seed: c.seed,
            mode: SamplingMode::Haar,
        };
        let pts = sampler.sample_where(4, &m.map, |x, _| in_c_set(&q, n, x), 1_000_000)?;
        out.structured_k = Some(k);
        for p in pts {
            let trace = sample_potential(&m.map, &obs, &p, 2 * k)?;
            for e in supermix_core::schrodinger::energy_grid(&trace, supermix_core::schrodinger::ENERGY_GRID) {
                let r = gordon_block_bound(&trace, e, k, [1.0, 0.0])?;
                out.structured_total += 1;
                out.structured_satisfied += r.satisfied as usize;
            }
        }
    }
    Ok(out)
}

pub fn contrast(c: &ExperimentConfig, m: &Model) -> Result<ContrastOutput, CoreError> {
    let obs = observable(c, &m.map);
    let report = localization_contrast(
        &m.map,
        &obs,
        c.contrast.base_points,
        c.contrast.size - 1,
        c.seed,
        c.contrast.variance_factor,
    )?;
    Ok(ContrastOutput {
        pass: report.structured_le_control,
        report,
    })
}

fn to_json<T: Serialize>(v: &T) -> Vec<u8> {
    let mut b = serde_json::to_vec_pretty(v).expect("serializable");
    b.push(b'\n');
    b
}

fn stage_json<T: Serialize>(stage: Stage, v: &T) -> (String, Vec<u8>) {
    (stage.json_file(), to_json(v))
}

/// Runs one stage, returning its files as (path relative to the output
/// directory, bytes); the stage JSON comes first.
fn execute(stage: Stage, c: &ExperimentConfig, m: &mut Option<Model>) -> Result<Vec<(String, Vec<u8>)>, CoreError> {
    let md = || m.as_ref().expect("model loaded");
    let csv = |b: Vec<u8>| (format!("{}.csv", stage.name()), b);
    Ok(match stage {
        Stage::DesignFrequency => vec![stage_json(stage, &design(c)?)],
        Stage::BuildCeiling => {
            let pair = design(c)?;
            let ceiling = build(c, &pair)?;
            let mut files = vec![stage_json(stage, &ceiling)];
            files.extend(
                bundle_files(&ceiling, &pair)
                    .into_iter()
                    .map(|(name, b)| (format!("{CEILING_DIR}/{name}"), b)),
            );
            files
        }
        Stage::VerifyProperties => {
            let r: Prop36Report = verify_properties(&md().ceiling, &md().pair, &c.tolerances, c.seed)?;
            vec![stage_json(stage, &r)]
        }
        Stage::RecurrenceScan => {
            let o = recurrence_scan(c, md())?;
            let times: Vec<String> = o.reports.iter().map(|r| r.t.to_string()).collect();
            let rows = o.orbits.iter().flat_map(|s| {
                s.witnesses.iter().enumerate().map(|(j, w)| OrbitScanRow {
                    id: s.id,
                    x: s.x,
                    y: s.y,
                    s: s.s,
                    level: j + 1,
                    t: &times[j],
                    distance: w.distance,
                    radius: w.radius,
                    witness: w.witness,
                    ambiguous: w.ambiguous,
                })
            });
            let mut files = vec![stage_json(stage, &o), csv(csv_bytes(rows))];
            for r in &o.reports {
                files.push((format!("recurrence-level-{}.csv", r.level), csv_bytes(r.grid_rows())));
            }
            files
        }
        Stage::Census => {
            let o = census(c, md())?;
            let rows = o.census.samples.iter().flat_map(|s| {
                (0..s.distances.len()).map(move |j| CensusRow {
                    id: s.id,
                    x: s.x,
                    y: s.y,
                    s: s.s,
                    level: j + 1,
                    in_c: s.in_c[j],
                    distance: s.distances[j],
                    radius: s.radii[j],
                    alpha_hat: s.alpha_hat[j],
                })
            });
            vec![stage_json(stage, &o), csv(csv_bytes(rows))]
        }
        Stage::MixingCorr => {
            let o = mixing(c, md())?;
            let rows = (0..o.structured.times.len()).map(|i| MixingRow {
                t: o.structured.times[i],
                structured: o.structured.values[i],
                structured_refined: o.structured.refined[i],
                control: o.control.refined[i],
            });
            vec![stage_json(stage, &o), csv(csv_bytes(rows))]
        }
        Stage::GordonScan => vec![stage_json(stage, &gordon(c, md())?)],
        Stage::Spectrum => {
            let (o, traces) = spectrum(c, md())?;
            let mut files = vec![stage_json(stage, &o)];
            for (i, (p, t)) in o.points.iter().zip(&traces).enumerate() {
                files.push((format!("trace-{i}.csv"), trace_csv(t)));
                files.push((format!("spectrum-{i}.csv"), csv_bytes(spectrum_rows(&p.eigenvalues, &p.localization))));
            }
            files
        }
        Stage::BlockBound => vec![stage_json(stage, &block_bound(c, md())?)],
        Stage::Contrast => {
            let o = contrast(c, md())?;
            let r = &o.report;
            let rows = [("structured", &r.structured), ("control", &r.control)]
                .into_iter()
                .flat_map(|(name, p)| {
                    p.trace_ipr
                        .iter()
                        .zip(&p.trace_ipr_interior)
                        .enumerate()
                        .map(move |(i, (a, b))| ContrastRow {
                            population: name,
                            trace: i,
                            median_ipr: *a,
                            median_ipr_interior: *b,
                        })
                });
            vec![stage_json(stage, &o), csv(csv_bytes(rows))]
        }
    })
}

fn load_model(dir: &Path) -> Result<Model, PipelineError> {
    let read = |s: Stage| -> Result<Vec<u8>, PipelineError> {
        let p = dir.join(s.json_file());
        fs::read(&p).map_err(|e| io_err(&p, e))
    };
    let pair: FrequencyPair = serde_json::from_slice(&read(Stage::DesignFrequency)?)
        .map_err(|e| io_err(&dir.join(Stage::DesignFrequency.json_file()), e))?;
    let ceiling: CeilingFunction = serde_json::from_slice(&read(Stage::BuildCeiling)?)
        .map_err(|e| io_err(&dir.join(Stage::BuildCeiling.json_file()), e))?;
    let map = FlowMap::new(Translation::from_pair(&pair), ceiling.clone());
    Ok(Model { pair, ceiling, map })
}

/// Pair and ceiling from the output directory, building or reusing them
/// through the pipeline first.
pub fn cached_model(c: &ExperimentConfig) -> Result<Model, PipelineError> {
    run_stages(c, &c.output_dir, &[Stage::BuildCeiling])?;
    load_model(&c.output_dir)
}

/// Pair and ceiling from a bundle directory.
pub fn bundle_model(dir: &Path) -> Result<Model, CoreError> {
    let (ceiling, pair) = read_bundle(dir)?;
    let map = FlowMap::new(Translation::from_pair(&pair), ceiling.clone());
    Ok(Model { pair, ceiling, map })
}

/// Adds the dependencies of `targets` and orders them.
pub fn closure(targets: &[Stage]) -> Vec<Stage> {
    let mut v: Vec<Stage> = targets.iter().flat_map(|s| s.deps().iter().copied().chain([*s])).collect();
    v.sort();
    v.dedup();
    v
}

fn write_manifest(dir: &Path, m: &RunManifest) -> Result<(), PipelineError> {
    let p = dir.join(MANIFEST);
    fs::write(&p, to_json(m)).map_err(|e| io_err(&p, e))
}

pub fn read_manifest(dir: &Path) -> Option<RunManifest> {
    serde_json::from_slice(&fs::read(dir.join(MANIFEST)).ok()?).ok()
}

/// Runs `targets` and their dependencies in `dir`, reusing outputs whose
/// inputs and files still match the previous manifest.
pub fn run_stages(c: &ExperimentConfig, dir: &Path, targets: &[Stage]) -> Result<RunManifest, PipelineError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let previous = read_manifest(dir);
    let mut manifest = RunManifest {
        schema_version: crate::config::SCHEMA_VERSION,
        config_hash: config_hash(c),
        artifact_versions: versions(),
        stages: Vec::new(),
        complete: false,
        resume_from: None,
    };
    let mut model: Option<Model> = None;
    let mut upstream: BTreeMap<Stage, String> = BTreeMap::new();
    let plan = closure(targets);
    // records of stages outside this plan stay listed, still subject to the
    // digest checks whenever they are reused
    let carried: Vec<StageRecord> = previous
        .as_ref()
        .map(|m| m.stages.iter().filter(|r| !plan.contains(&r.stage)).cloned().collect())
        .unwrap_or_default();
    manifest.stages = carried;
    for &stage in &plan {
        let deps: BTreeMap<&str, &String> = stage
            .deps()
            .iter()
            .map(|d| (d.name(), upstream.get(d).expect("dependency ran first")))
            .collect();
        let input_digest = sha256_hex(
            serde_json::to_string(&json!({
                "stage": stage.name(),
                "version": versions(),
                "inputs": stage.inputs(c),
                "upstream": deps,
            }))
            .expect("json")
            .as_bytes(),
        );
        let start = Instant::now();
        let cached = previous
            .as_ref()
            .and_then(|m| m.record(stage))
            .filter(|r| r.status == StageStatus::Done && r.input_digest == input_digest)
            .filter(|r| {
                r.outputs
                    .iter()
                    .all(|f| file_digest(&dir.join(&f.path)).as_deref() == Some(f.sha256.as_str()))
            })
            .cloned();
        let record = if let Some(mut r) = cached {
            r.cache_hit = true;
            r.wall_seconds = start.elapsed().as_secs_f64();
            r
        } else {
            if model.is_none() && !stage.deps().is_empty() && stage != Stage::BuildCeiling {
                model = Some(load_model(dir)?);
            }
            match execute(stage, c, &mut model) {
                Ok(files) => {
                    let mut outputs = Vec::with_capacity(files.len());
                    for (name, bytes) in files {
                        let path = dir.join(&name);
                        if let Some(parent) = path.parent() {
                            fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
                        }
                        fs::write(&path, &bytes).map_err(|e| io_err(&path, e))?;
                        outputs.push(FileDigest {
                            path: name,
                            sha256: sha256_hex(&bytes),
                        });
                    }
                    StageRecord {
                        stage,
                        input_digest,
                        outputs,
                        wall_seconds: start.elapsed().as_secs_f64(),
                        cache_hit: false,
                        status: StageStatus::Done,
                        error: None,
                    }
                }
                Err(e) => {
                    push_record(
                        &mut manifest,
                        StageRecord {
                            stage,
                            input_digest,
                            outputs: Vec::new(),
                            wall_seconds: start.elapsed().as_secs_f64(),
                            cache_hit: false,
                            status: StageStatus::Failed,
                            error: Some(e.to_string()),
                        },
                    );
                    manifest.resume_from = Some(stage);
                    write_manifest(dir, &manifest)?;
                    return Err(PipelineError::Stage {
                        stage,
                        source: e,
                        manifest: Box::new(manifest),
                    });
                }
            }
        };
        upstream.insert(stage, record.outputs.iter().map(|f| f.sha256.as_str()).collect::<Vec<_>>().join(":"));
        push_record(&mut manifest, record);
        write_manifest(dir, &manifest)?;
    }
    manifest.complete = Stage::ALL.iter().all(|s| plan.contains(s));
    write_manifest(dir, &manifest)?;
    Ok(manifest)
}

fn push_record(m: &mut RunManifest, r: StageRecord) {
    m.stages.retain(|x| x.stage != r.stage);
    m.stages.push(r);
    m.stages.sort_by_key(|x| x.stage);
}

/// The full pipeline into the config's output directory.
pub fn run_pipeline(c: &ExperimentConfig) -> Result<RunManifest, PipelineError> {
    run_stages(c, &c.output_dir, &Stage::ALL)
}

pub fn read_output<T: for<'de> Deserialize<'de>>(dir: &Path, stage: Stage) -> Result<T, PipelineError> {
    let p = dir.join(stage.json_file());
    let b = fs::read(&p).map_err(|e| io_err(&p, e))?;
    serde_json::from_slice(&b).map_err(|e| io_err(&p, e))
}
