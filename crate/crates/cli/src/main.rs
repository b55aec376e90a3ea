use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use num_bigint::BigInt;
use serde::Serialize;
use serde_json::json;
use supermix_cli::config::{validate_config, ExperimentConfig};
use supermix_cli::formats::{
    csv_bytes, exit_code, parse_candidates, parse_energies, parse_point, parse_times, parse_trace, spectrum_rows,
    Candidates, OrbitRow, OrbitTime, TimeSpec,
};
use supermix_cli::load_config;
use supermix_cli::pipeline::{bundle_model, closure, design, model, run_stages, Model, PipelineError, RunManifest, Stage};
use supermix_core::birkhoff::{recurrence_estimate, stretch_profile, Axis, Translation};
use supermix_core::ceiling::bundle::write_bundle;
use supermix_core::ceiling::props::verify_properties;
use supermix_core::ceiling::{build_ceiling, BuildOptions};
use supermix_core::cfrac::FrequencyPair;
use supermix_core::diagnostics::census_radius;
use supermix_core::flow::FlowPoint;
use supermix_core::schrodinger::{
    gordon_block_bound, gordon_check, localization_metrics, truncated_spectrum, GordonThreshold, PotentialTrace,
};
use supermix_core::tolerance::AmplitudeSchedule;
use supermix_core::Error as CoreError;

#[derive(Parser)]
#[command(name = "supermix", version, about = "Special flows with super-recurrence and mixing")]
struct Cli {
    /// Config file, or a preset name (desk-small, desk-large).
    #[arg(long, global = true, default_value = "desk-small")]
    config: String,
    /// Output directory; overrides the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Master seed; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for the parallel stages.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    DesignFrequency {
        /// Growth schedule, `<name>[:params]`.
        #[arg(long)]
        schedule: Option<String>,
    },
    /// With `--pair`, builds from that file and writes a bundle to `--out`.
    BuildCeiling {
        #[arg(long)]
        pair: Option<PathBuf>,
        #[arg(long)]
        levels: Option<usize>,
        #[arg(long)]
        amplitude: Option<String>,
    },
    /// With `--ceiling`, checks a bundle directory instead of the pipeline's.
    VerifyProperties {
        #[arg(long)]
        ceiling: Option<PathBuf>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// `|D S_m φ|` along one axis at one level.
    Stretch {
        #[arg(long)]
        level: usize,
        #[arg(long)]
        m: BigInt,
        #[arg(long)]
        axis: Axis,
        /// Grid size; defaults to the recurrence grid.
        #[arg(long)]
        grid: Option<usize>,
        #[arg(long)]
        ceiling: Option<PathBuf>,
    },
    /// `|S_tφ − t|` at the level's recurrence time.
    Recurrence {
        #[arg(long)]
        level: usize,
        #[arg(long)]
        ceiling: Option<PathBuf>,
    },
    /// Orbit log of one point as CSV.
    Orbit {
        /// `x,y,s`
        #[arg(long, allow_hyphen_values = true)]
        point: String,
        /// Comma list, or `auto:<levels>` for the recurrence times.
        #[arg(long, allow_hyphen_values = true)]
        times: String,
        #[arg(long)]
        ceiling: Option<PathBuf>,
    },
    RecurrenceScan {
        #[arg(long)]
        samples: Option<usize>,
    },
    Census {
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        levels: Option<usize>,
    },
    MixingCorr {
        /// `auto`, or the number of log-spaced times.
        #[arg(long)]
        times: Option<String>,
        /// Base grid size along x.
        #[arg(long)]
        grid: Option<usize>,
    },
    /// With `--trace`, checks that trace and prints the report.
    GordonScan {
        #[arg(long)]
        trace: Option<PathBuf>,
        /// `auto` or a comma list of periods.
        #[arg(long, requires = "trace")]
        candidates: Option<String>,
    },
    /// With `--trace`, prints the spectrum CSV of that trace.
    Spectrum {
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Matrix size, odd.
        #[arg(long)]
        size: Option<usize>,
    },
    /// With `--trace`, prints the three-block norms over an energy grid.
    BlockBound {
        #[arg(long, requires = "k")]
        trace: Option<PathBuf>,
        #[arg(long, requires = "trace")]
        k: Option<usize>,
        /// Comma list or `lo:hi:count`.
        #[arg(long, requires = "trace", allow_hyphen_values = true)]
        energies: Option<String>,
    },
    Contrast {
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        size: Option<usize>,
    },
    /// Every stage.
    Run,
    /// Checks the config and prints it back in canonical form.
    Validate,
}

enum Failure {
    Config(Vec<String>),
    Core(CoreError),
    Pipeline(PipelineError),
    Io(String),
}

impl From<CoreError> for Failure {
    fn from(e: CoreError) -> Self {
        Failure::Core(e)
    }
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        Failure::Pipeline(e)
    }
}

fn config_err(msg: impl Into<String>) -> Failure {
    Failure::Config(vec![msg.into()])
}

/// One line per stage in `plan`.
fn summary(m: &RunManifest, plan: &[Stage]) {
    for r in m.stages.iter().filter(|r| plan.contains(&r.stage)) {
        let state = if r.cache_hit { "cached" } else { "ran" };
        println!("{:<18} {:<6} {:>9.2}s  {}", r.stage.name(), state, r.wall_seconds, &r.input_digest[..12]);
    }
}

fn read_text(p: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(p).map_err(|e| Failure::Io(format!("{}: {e}", p.display())))
}

fn write_file(p: &Path, bytes: &[u8]) -> Result<(), Failure> {
    if let Some(parent) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Failure::Io(format!("{}: {e}", parent.display())))?;
    }
    std::fs::write(p, bytes).map_err(|e| Failure::Io(format!("{}: {e}", p.display())))
}

fn pretty<T: Serialize>(v: &T) -> Vec<u8> {
    let mut b = serde_json::to_vec_pretty(v).expect("serializable");
    b.push(b'\n');
    b
}

fn stdout(bytes: &[u8]) {
    use std::io::Write;
    std::io::stdout().write_all(bytes).expect("stdout");
}

fn read_trace(p: &Path) -> Result<PotentialTrace, Failure> {
    parse_trace(&read_text(p)?, &p.display().to_string()).map_err(config_err)
}

/// Re-checks a config after command-line overrides.
fn revalidate(cfg: &ExperimentConfig) -> Result<ExperimentConfig, Failure> {
    validate_config(&cfg.to_toml()).map_err(|v| Failure::Config(v.iter().map(|e| e.to_string()).collect()))
}

fn model_from(cfg: &ExperimentConfig, bundle: Option<&Path>) -> Result<Model, Failure> {
    Ok(match bundle {
        Some(d) => bundle_model(d)?,
        None => model(cfg)?,
    })
}

fn stages(cfg: &ExperimentConfig, targets: &[Stage]) -> Result<(), Failure> {
    let plan = closure(targets);
    match run_stages(cfg, &cfg.output_dir, targets) {
        Ok(m) => {
            summary(&m, &plan);
            println!("outputs in {}", cfg.output_dir.display());
            Ok(())
        }
        Err(e) => {
            if let PipelineError::Stage { manifest, .. } = &e {
                summary(manifest, &plan);
            }
            Err(e.into())
        }
    }
}

fn orbit(cfg: &ExperimentConfig, point: &str, times: &str, bundle: Option<&Path>) -> Result<(), Failure> {
    let (x, y, s) = parse_point(point).map_err(config_err)?;
    let spec = parse_times(times).map_err(config_err)?;
    let m = model_from(cfg, bundle)?;
    let p = FlowPoint::canonical(&m.map, x, y, s)?;
    let mut rows = Vec::new();
    let flag = |ambiguous: bool, witness: Option<bool>| {
        match (ambiguous, witness) {
            (true, _) => "ambiguous",
            (false, Some(true)) => "witness",
            (false, Some(false)) => "miss",
            (false, None) => "ok",
        }
        .to_string()
    };
    let (list, recurrences) = match spec {
        TimeSpec::List(v) => (v, false),
        TimeSpec::Auto(levels) => (
            (1..=levels.min(m.pair.levels))
                .map(|j| OrbitTime::Integer(m.pair.recurrence_time(j)))
                .collect(),
            true,
        ),
    };
    for t in list {
        let row = match &t {
            OrbitTime::Integer(k) if k.sign() != num_bigint::Sign::Minus => {
                let a = m.map.advance_split(&p, k, 0.0)?;
                let d = m.map.return_distance(&p, k)?;
                let witness = recurrences.then(|| d.distance <= census_radius(&m.map, k, &cfg.tolerances));
                OrbitRow {
                    t: t.to_string(),
                    x: a.point.x,
                    y: a.point.y,
                    s: a.point.s,
                    distance: d.distance,
                    flag: flag(a.ambiguous || d.ambiguous, witness),
                }
            }
            _ => {
                let tf = match &t {
                    OrbitTime::Real(v) => *v,
                    OrbitTime::Integer(k) => num_traits::ToPrimitive::to_f64(k).unwrap_or(f64::NEG_INFINITY),
                };
                let a = m.map.advance(&p, tf)?;
                OrbitRow {
                    t: t.to_string(),
                    x: a.point.x,
                    y: a.point.y,
                    s: a.point.s,
                    distance: m.map.quotient_distance(&p, &a.point),
                    flag: flag(a.ambiguous, None),
                }
            }
        };
        rows.push(row);
    }
    stdout(&csv_bytes(rows));
    Ok(())
}

fn dispatch(cmd: Cmd, mut cfg: ExperimentConfig) -> Result<(), Failure> {
    match cmd {
        Cmd::Validate => {
            print!("{}", cfg.to_toml());
            Ok(())
        }
        Cmd::Run => stages(&cfg, &Stage::ALL),
        Cmd::DesignFrequency { schedule } => {
            if let Some(s) = schedule {
                cfg.frequency.schedule = s;
            }
            stages(&revalidate(&cfg)?, &[Stage::DesignFrequency])
        }
        Cmd::BuildCeiling {
            pair: Some(path),
            levels,
            amplitude,
        } => {
            let pair: FrequencyPair = serde_json::from_str(&read_text(&path)?)
                .map_err(|e| config_err(format!("pair {}: {e}", path.display())))?;
            let levels = levels.unwrap_or(pair.levels);
            if levels == 0 || levels > pair.levels {
                return Err(config_err(format!("levels must lie in 1..={}", pair.levels)));
            }
            let amplitude = match amplitude {
                Some(a) => AmplitudeSchedule::parse(&a).map_err(|e| config_err(e.to_string()))?,
                None => cfg.amplitude(),
            };
            let ceiling = build_ceiling(
                &pair,
                &BuildOptions {
                    levels,
                    n0: cfg.ceiling.n0,
                    amplitude,
                    tol: cfg.tolerances.clone(),
                },
            )?;
            write_bundle(&cfg.output_dir, &ceiling, &pair)?;
            println!("bundle in {}", cfg.output_dir.display());
            Ok(())
        }
        Cmd::BuildCeiling {
            pair: None,
            levels,
            amplitude,
        } => {
            if let Some(l) = levels {
                cfg.frequency.levels = l;
            }
            if let Some(a) = amplitude {
                cfg.ceiling.amplitude = a;
            }
            stages(&revalidate(&cfg)?, &[Stage::BuildCeiling])
        }
        Cmd::VerifyProperties { ceiling, report } => match ceiling {
            Some(dir) => {
                let m = bundle_model(&dir)?;
                let r = verify_properties(&m.ceiling, &m.pair, &cfg.tolerances, cfg.seed)?;
                match report {
                    Some(p) => write_file(&p, &pretty(&r)),
                    None => Ok(stdout(&pretty(&r))),
                }
            }
            None => {
                stages(&cfg, &[Stage::VerifyProperties])?;
                if let Some(p) = report {
                    let from = cfg.output_dir.join(Stage::VerifyProperties.json_file());
                    std::fs::copy(&from, &p).map_err(|e| Failure::Io(format!("{}: {e}", p.display())))?;
                }
                Ok(())
            }
        },
        Cmd::Stretch {
            level,
            m,
            axis,
            grid,
            ceiling,
        } => {
            let md = model_from(&cfg, ceiling.as_deref())?;
            let tr = Translation::from_pair(&md.pair);
            let grid = grid.unwrap_or(cfg.recurrence.grid);
            let prof = stretch_profile(&md.ceiling, &md.pair, &tr, level, &m, axis, grid, &cfg.tolerances)?;
            let stem = format!("stretch-{level}-{}", axis_name(axis));
            write_file(&cfg.output_dir.join(format!("{stem}.json")), &pretty(&prof))?;
            write_file(&cfg.output_dir.join(format!("{stem}.csv")), &csv_bytes(prof.grid_rows()))?;
            let frac = prof.pass_fraction.map_or("none".to_string(), |f| format!("{f:.4}"));
            println!("level {level} axis {} in_window {} pass_fraction {frac}", axis_name(axis), prof.in_window);
            Ok(())
        }
        Cmd::Recurrence { level, ceiling } => {
            let md = model_from(&cfg, ceiling.as_deref())?;
            let tr = Translation::from_pair(&md.pair);
            let r = recurrence_estimate(
                &md.ceiling,
                &md.pair,
                &tr,
                level,
                cfg.recurrence.grid,
                &cfg.tolerances,
                cfg.recurrence.direct_limit,
            )?;
            write_file(&cfg.output_dir.join(format!("recurrence-{level}.json")), &pretty(&r))?;
            write_file(&cfg.output_dir.join(format!("recurrence-{level}.csv")), &csv_bytes(r.grid_rows()))?;
            println!(
                "level {level} t {} max_deviation {:e} tolerance {:e} pass {}",
                r.t,
                r.max_deviation,
                r.tolerance.max(r.floor),
                r.pass
            );
            Ok(())
        }
        Cmd::Orbit { point, times, ceiling } => orbit(&cfg, &point, &times, ceiling.as_deref()),
        Cmd::RecurrenceScan { samples } => {
            if let Some(n) = samples {
                cfg.recurrence.samples = n;
            }
            stages(&revalidate(&cfg)?, &[Stage::RecurrenceScan])
        }
        Cmd::Census { samples, levels } => {
            if let Some(n) = samples {
                cfg.census.samples = n;
            }
            if let Some(k) = levels {
                cfg.frequency.levels = k;
            }
            stages(&revalidate(&cfg)?, &[Stage::Census])
        }
        Cmd::MixingCorr { times, grid } => {
            match times.as_deref() {
                None | Some("auto") => {}
                Some(t) => {
                    cfg.mixing.times = t
                        .parse()
                        .map_err(|_| config_err(format!("times: expected auto or a count, got `{t}`")))?
                }
            }
            if let Some(r) = grid {
                cfg.mixing.grid_x = r;
            }
            stages(&revalidate(&cfg)?, &[Stage::MixingCorr])
        }
        Cmd::GordonScan { trace: None, .. } => stages(&cfg, &[Stage::GordonScan]),
        Cmd::GordonScan {
            trace: Some(path),
            candidates,
        } => {
            let trace = read_trace(&path)?;
            let list = match parse_candidates(candidates.as_deref().unwrap_or("auto")).map_err(config_err)? {
                Candidates::List(v) => v,
                Candidates::Auto => {
                    let pair = design(&cfg)?;
                    // recurrence times and their small multiples
                    let mut ks: Vec<usize> = (1..=pair.levels)
                        .filter_map(|j| num_traits::ToPrimitive::to_usize(&pair.recurrence_time(j)))
                        .flat_map(|t| (1..=3).map(move |r| r * t))
                        .filter(|&k| 2 * k <= trace.window)
                        .collect();
                    ks.sort_unstable();
                    ks.dedup();
                    if ks.is_empty() {
                        return Err(Failure::Core(CoreError::Window(format!(
                            "no recurrence time fits in half the window {}",
                            trace.window
                        ))));
                    }
                    ks
                }
            };
            let rule = GordonThreshold {
                cap: cfg.tolerances.gordon_k_cap,
            };
            stdout(&pretty(&gordon_check(&trace, &list, &rule)?));
            Ok(())
        }
        Cmd::Spectrum { trace: None, size } => {
            if let Some(n) = size {
                cfg.spectrum.size = n;
            }
            stages(&revalidate(&cfg)?, &[Stage::Spectrum])
        }
        Cmd::Spectrum {
            trace: Some(path),
            size,
        } => {
            let trace = read_trace(&path)?;
            let size = size.unwrap_or(cfg.spectrum.size);
            if size < 3 || size % 2 == 0 {
                return Err(config_err("size must be odd and at least 3"));
            }
            let s = truncated_spectrum(&trace, size / 2)?;
            let loc = localization_metrics(&s.eigenvectors)?;
            stdout(&csv_bytes(spectrum_rows(&s.eigenvalues, &loc)));
            Ok(())
        }
        Cmd::BlockBound { trace: None, .. } => stages(&cfg, &[Stage::BlockBound]),
        Cmd::BlockBound {
            trace: Some(path),
            k,
            energies,
        } => {
            let trace = read_trace(&path)?;
            let k = k.expect("clap requires k with trace");
            let energies = match energies {
                Some(e) => parse_energies(&e).map_err(config_err)?,
                None => supermix_core::schrodinger::energy_grid(&trace, supermix_core::schrodinger::ENERGY_GRID),
            };
            let results = energies
                .iter()
                .map(|&e| gordon_block_bound(&trace, e, k, [1.0, 0.0]))
                .collect::<Result<Vec<_>, _>>()?;
            let satisfied = results.iter().filter(|r| r.satisfied).count();
            let v = json!({ "k": k, "total": results.len(), "satisfied": satisfied, "results": results });
            stdout(&pretty(&v));
            Ok(())
        }
        Cmd::Contrast { samples, size } => {
            if let Some(n) = samples {
                cfg.contrast.base_points = n;
            }
            if let Some(m) = size {
                cfg.contrast.size = m;
            }
            stages(&revalidate(&cfg)?, &[Stage::Contrast])
        }
    }
}

fn axis_name(a: Axis) -> &'static str {
    match a {
        Axis::X => "x",
        Axis::Y => "y",
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut cfg = match load_config(&cli.config) {
        Ok(c) => c,
        Err(v) => {
            for e in v {
                eprintln!("config error: {e}");
            }
            return ExitCode::from(2);
        }
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = cli.out {
        cfg.output_dir = o;
    }
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("config error: threads: {e}");
            return ExitCode::from(2);
        }
    }
    match dispatch(cli.cmd, cfg) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(v)) => {
            for e in v {
                eprintln!("config error: {e}");
            }
            ExitCode::from(2)
        }
        Err(Failure::Core(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
        Err(Failure::Pipeline(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
        Err(Failure::Io(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
    }
}
