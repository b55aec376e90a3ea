//! On-disk form of a ceiling: `meta.json`, `pair.json` and one file per
//! layer. Totals are rebuilt on load.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{assemble_ceiling, CeilingFunction, XLayer, YLayer};
use crate::cfrac::FrequencyPair;
use crate::error::{Error, Result};
use crate::tolerance::AmplitudeSchedule;

pub const META: &str = "meta.json";
pub const PAIR: &str = "pair.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BundleMeta {
    pub schedule: String,
    pub amplitude: String,
    pub n0: u32,
    pub n_max: u32,
    pub levels: usize,
    pub x_layers: Vec<String>,
    pub y_layers: Vec<String>,
}

fn io(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Io(format!("{}: {e}", path.display()))
}

fn json_bytes<T: Serialize>(v: &T) -> Vec<u8> {
    let mut b = serde_json::to_vec_pretty(v).expect("serializable");
    b.push(b'\n');
    b
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let b = fs::read(path).map_err(|e| io(path, e))?;
    serde_json::from_slice(&b).map_err(|e| io(path, e))
}

/// File names and contents of the bundle, `meta.json` last.
pub fn bundle_files(ceiling: &CeilingFunction, pair: &FrequencyPair) -> Vec<(String, Vec<u8>)> {
    let levels = ceiling.levels();
    let meta = BundleMeta {
        schedule: pair.schedule.name(),
        amplitude: ceiling.amplitude.name(),
        n0: ceiling.n0,
        n_max: ceiling.n0 + levels.saturating_sub(1) as u32,
        levels,
        x_layers: (1..=levels).map(|j| format!("x-layer-{j}.json")).collect(),
        y_layers: (1..=levels).map(|j| format!("y-layer-{j}.json")).collect(),
    };
    let mut out = Vec::with_capacity(2 * levels + 2);
    for (name, layer) in meta.x_layers.iter().zip(&ceiling.x_layers) {
        out.push((name.clone(), json_bytes(layer)));
    }
    for (name, layer) in meta.y_layers.iter().zip(&ceiling.y_layers) {
        out.push((name.clone(), json_bytes(layer)));
    }
    out.push((PAIR.to_string(), json_bytes(pair)));
    out.push((META.to_string(), json_bytes(&meta)));
    out
}

/// Writes the bundle into `dir`, creating it if needed.
pub fn write_bundle(dir: &Path, ceiling: &CeilingFunction, pair: &FrequencyPair) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    for (name, bytes) in bundle_files(ceiling, pair) {
        let p = dir.join(name);
        fs::write(&p, bytes).map_err(|e| io(&p, e))?;
    }
    Ok(())
}

pub fn read_bundle(dir: &Path) -> Result<(CeilingFunction, FrequencyPair)> {
    let meta: BundleMeta = read_json(&dir.join(META))?;
    if meta.x_layers.len() != meta.levels || meta.y_layers.len() != meta.levels {
        return Err(Error::InvalidInput(format!("{}: layer count differs from levels", META)));
    }
    let pair: FrequencyPair = read_json(&dir.join(PAIR))?;
    if pair.schedule.name() != meta.schedule {
        return Err(Error::InvalidInput(format!(
            "bundle schedule `{}` but pair schedule `{}`",
            meta.schedule,
            pair.schedule.name()
        )));
    }
    let x: Vec<XLayer> = meta.x_layers.iter().map(|f| read_json(&dir.join(f))).collect::<Result<_>>()?;
    let y: Vec<YLayer> = meta.y_layers.iter().map(|f| read_json(&dir.join(f))).collect::<Result<_>>()?;
    let amplitude = AmplitudeSchedule::parse(&meta.amplitude)?;
    let c = assemble_ceiling(x, y, meta.n0, amplitude)?;
    Ok((c, pair))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_round_trip() {
        let dir = std::env::temp_dir().join(format!("supermix-bundle-{}", std::process::id()));
        let pair = crate::cfrac::design_pair(
            &crate::cfrac::GrowthSchedule::Cubic,
            1,
            (
                &crate::cfrac::PartialQuotients::from_u64(&[0, 1, 1]).unwrap(),
                &crate::cfrac::PartialQuotients::from_u64(&[0, 2, 2]).unwrap(),
            ),
            4096,
        )
        .unwrap();
        let c = CeilingFunction::unit();
        write_bundle(&dir, &c, &pair).unwrap();
        let (back, p) = read_bundle(&dir).unwrap();
        assert_eq!(back, c);
        assert_eq!(p, pair);
        fs::remove_dir_all(&dir).unwrap();
    }
}
