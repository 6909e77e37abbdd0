//! `key = value` platform descriptions.
//!
//! ```text
//! cluster.big.cores = 4
//! cluster.big.speed_per_mhz = 24000
//! cluster.big.levels = 800, 1000, 1500, 2000
//! cluster.big.mhz = 2000
//! power.big.2000 = 3.0, 0.9        # busy W, idle W per core
//! ```
//!
//! The same keys exist for `little`. Every listed level needs a power row
//! and every power row a level.

use std::collections::BTreeMap;
use std::fmt::Write;

use vjamp_core::amp::{Cluster, ClusterSpec, OperatingPoint, PlatformModel};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PlatformFileError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: bad value for `{key}`")]
    Value { line: usize, key: String },
    #[error("line {line}: duplicate key `{key}`")]
    Duplicate { line: usize, key: String },
    #[error("missing key `{0}`")]
    Missing(String),
    #[error("{cluster} cluster: level {mhz} MHz has no power row")]
    NoPower { cluster: &'static str, mhz: u32 },
    #[error("{cluster} cluster: power row for {mhz} MHz is not a listed level")]
    ExtraPower { cluster: &'static str, mhz: u32 },
    #[error("invalid platform: {0}")]
    Invalid(String),
}

fn cluster_name(c: Cluster) -> &'static str {
    match c {
        Cluster::Big => "big",
        Cluster::Little => "little",
    }
}

fn list<T: std::str::FromStr>(v: &str) -> Option<Vec<T>> {
    v.split(',').map(|s| s.trim().parse().ok()).collect()
}

pub fn parse_platform(text: &str) -> Result<PlatformModel, PlatformFileError> {
    let mut kv: BTreeMap<String, (usize, String)> = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (k, v) = content.split_once('=').ok_or(PlatformFileError::Syntax { line })?;
        let k = k.trim().to_string();
        if kv.contains_key(&k) {
            return Err(PlatformFileError::Duplicate { line, key: k });
        }
        kv.insert(k, (line, v.trim().to_string()));
    }

    let mut clusters = Vec::new();
    let mut used = 0;
    for c in [Cluster::Big, Cluster::Little] {
        let name = cluster_name(c);
        let get = |field: &str| {
            let key = format!("cluster.{name}.{field}");
            kv.get(&key).map(|(l, v)| (*l, v.clone(), key.clone())).ok_or(PlatformFileError::Missing(key))
        };
        let bad = |(line, _, key): &(usize, String, String)| PlatformFileError::Value { line: *line, key: key.clone() };
        let cores = get("cores")?;
        let speed = get("speed_per_mhz")?;
        let levels = get("levels")?;
        let mhz = get("mhz")?;
        used += 4;
        let n_cores: usize = cores.1.parse().map_err(|_| bad(&cores))?;
        let speed_per_mhz: f64 = speed.1.parse().map_err(|_| bad(&speed))?;
        let mut freqs: Vec<u32> = list(&levels.1).ok_or_else(|| bad(&levels))?;
        freqs.sort_unstable();
        let active: u32 = mhz.1.parse().map_err(|_| bad(&mhz))?;
        let mut points = Vec::new();
        for &f in &freqs {
            let key = format!("power.{name}.{f}");
            let (line, v) = kv.get(&key).ok_or(PlatformFileError::NoPower { cluster: name, mhz: f })?;
            used += 1;
            let w: Vec<f64> = list(v).filter(|w: &Vec<f64>| w.len() == 2).ok_or(PlatformFileError::Value {
                line: *line,
                key: key.clone(),
            })?;
            points.push(OperatingPoint {
                mhz: f,
                busy_w: w[0],
                idle_w: w[1],
            });
        }
        for (k, (line, _)) in &kv {
            if let Some(f) = k.strip_prefix(&format!("power.{name}.")) {
                let f: u32 = f.parse().map_err(|_| PlatformFileError::UnknownKey { line: *line, key: k.clone() })?;
                if !freqs.contains(&f) {
                    return Err(PlatformFileError::ExtraPower { cluster: name, mhz: f });
                }
            }
        }
        clusters.push((
            ClusterSpec {
                cores: n_cores,
                speed_per_mhz,
                points,
            },
            active,
        ));
    }
    if used != kv.len() {
        let (k, (line, _)) = kv
            .iter()
            .find(|(k, _)| !(k.starts_with("cluster.") || k.starts_with("power.")) || !known_cluster_key(k))
            .expect("an unused key exists");
        return Err(PlatformFileError::UnknownKey {
            line: *line,
            key: k.clone(),
        });
    }
    let (little, little_mhz) = clusters.pop().unwrap();
    let (big, big_mhz) = clusters.pop().unwrap();
    let p = PlatformModel {
        big,
        little,
        big_mhz,
        little_mhz,
    };
    p.validate().map_err(|e| PlatformFileError::Invalid(e.to_string()))?;
    Ok(p)
}

fn known_cluster_key(k: &str) -> bool {
    ["big", "little"].iter().any(|c| {
        ["cores", "speed_per_mhz", "levels", "mhz"]
            .iter()
            .any(|f| k == format!("cluster.{c}.{f}"))
            || k.strip_prefix(&format!("power.{c}.")).is_some_and(|f| f.parse::<u32>().is_ok())
    })
}

pub fn serialize_platform(p: &PlatformModel) -> String {
    let mut out = String::new();
    for c in [Cluster::Big, Cluster::Little] {
        let name = cluster_name(c);
        let spec = p.cluster(c);
        writeln!(out, "cluster.{name}.cores = {}", spec.cores).unwrap();
        writeln!(out, "cluster.{name}.speed_per_mhz = {}", spec.speed_per_mhz).unwrap();
        let levels: Vec<String> = spec.points.iter().map(|pt| pt.mhz.to_string()).collect();
        writeln!(out, "cluster.{name}.levels = {}", levels.join(", ")).unwrap();
        writeln!(out, "cluster.{name}.mhz = {}", p.mhz(c)).unwrap();
        for pt in &spec.points {
            writeln!(out, "power.{name}.{} = {}, {}", pt.mhz, pt.busy_w, pt.idle_w).unwrap();
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_round_trip() {
        for p in [PlatformModel::odroid_xu4(), PlatformModel::rpi3()] {
            let text = serialize_platform(&p);
            assert_eq!(parse_platform(&text).unwrap(), p);
        }
    }

    #[test]
    fn comments_and_blank_lines() {
        let mut text = String::from("# board\n\n");
        text.push_str(&serialize_platform(&PlatformModel::default()).replace('\n', "   # note\n"));
        assert_eq!(parse_platform(&text).unwrap(), PlatformModel::default());
    }

    #[test]
    fn errors() {
        let base = serialize_platform(&PlatformModel::default());
        let missing_row = base.replace("power.big.1500", "#");
        assert!(matches!(
            parse_platform(&missing_row),
            Err(PlatformFileError::NoPower { cluster: "big", mhz: 1500 })
        ));
        let extra = format!("{base}power.little.1200 = 1, 0.5\n");
        assert!(matches!(
            parse_platform(&extra),
            Err(PlatformFileError::ExtraPower { cluster: "little", mhz: 1200 })
        ));
        let unknown = format!("{base}turbo = yes\n");
        assert!(matches!(parse_platform(&unknown), Err(PlatformFileError::UnknownKey { key, .. }) if key == "turbo"));
        let dup = format!("{base}cluster.big.cores = 2\n");
        assert!(matches!(parse_platform(&dup), Err(PlatformFileError::Duplicate { .. })));
        let bad_mhz = base.replace("cluster.big.mhz = 2000", "cluster.big.mhz = 1234");
        assert!(matches!(parse_platform(&bad_mhz), Err(PlatformFileError::Invalid(_))));
        assert!(matches!(parse_platform("nonsense"), Err(PlatformFileError::Syntax { line: 1 })));
        let bad_row = base.replace("power.big.2000 = ", "power.big.2000 = 1.0, 2.0, ");
        assert!(matches!(parse_platform(&bad_row), Err(PlatformFileError::Value { .. })));
    }
}
