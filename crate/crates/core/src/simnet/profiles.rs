//! Device profile traces: `node_id,uplink_bps,downlink_bps,sec_per_local_step`.

use std::io::{Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};

use super::TraceError;
use crate::membership::{DeviceProfile, NodeId};

pub const PROFILE_COLUMNS: [&str; 4] = [
    "node_id",
    "uplink_bps",
    "downlink_bps",
    "sec_per_local_step",
];

pub fn read_profiles<R: Read>(reader: R) -> Result<Vec<DeviceProfile>, TraceError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| TraceError::at(1, e.to_string()))?
        .clone();
    for h in headers.iter() {
        if !PROFILE_COLUMNS.contains(&h) {
            return Err(TraceError::at(1, format!("unknown column {h:?}")));
        }
    }
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| TraceError::at(1, format!("missing column {name:?}")))
    };
    let (id_col, up_col, down_col, step_col) = (
        col("node_id")?,
        col("uplink_bps")?,
        col("downlink_bps")?,
        col("sec_per_local_step")?,
    );

    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| TraceError::at(line, e.to_string()))?;
        let num = |c: usize| {
            rec[c]
                .parse::<f64>()
                .map_err(|_| TraceError::at(line, format!("not a number: {:?}", &rec[c])))
        };
        let profile = DeviceProfile {
            node: NodeId::new(&rec[id_col]).map_err(|e| TraceError::at(line, e.to_string()))?,
            uplink_bps: num(up_col)?,
            downlink_bps: num(down_col)?,
            sec_per_local_step: num(step_col)?,
            city_index: 0,
        };
        profile
            .validate()
            .map_err(|e| TraceError::at(line, e.to_string()))?;
        out.push(profile);
    }
    Ok(out)
}

pub fn load_profiles(path: &Path) -> Result<Vec<DeviceProfile>, TraceError> {
    let f = std::fs::File::open(path).map_err(|e| TraceError::io(path, e))?;
    read_profiles(f)
}

pub fn write_profiles<W: Write>(profiles: &[DeviceProfile], writer: W) -> Result<(), TraceError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(PROFILE_COLUMNS).map_err(TraceError::csv)?;
    for p in profiles {
        w.write_record([
            p.node.to_string(),
            p.uplink_bps.to_string(),
            p.downlink_bps.to_string(),
            p.sec_per_local_step.to_string(),
        ])
        .map_err(TraceError::csv)?;
    }
    w.flush().map_err(|e| TraceError::at(0, e.to_string()))?;
    Ok(())
}

pub fn save_profiles(profiles: &[DeviceProfile], path: &Path) -> Result<(), TraceError> {
    let f = std::fs::File::create(path).map_err(|e| TraceError::io(path, e))?;
    write_profiles(profiles, f)
}

/// Log-normal spread of device capabilities around median values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileSpread {
    pub median_uplink_bps: f64,
    pub median_downlink_bps: f64,
    pub median_sec_per_step: f64,
    /// Standard deviation of the underlying normal (0 = homogeneous).
    pub sigma: f64,
}

impl Default for ProfileSpread {
    fn default() -> Self {
        ProfileSpread {
            median_uplink_bps: 20_000.0,
            median_downlink_bps: 60_000.0,
            median_sec_per_step: 1.0,
            sigma: 0.6,
        }
    }
}

/// `n` profiles named `n0..n{n-1}` drawn from `spread`.
pub fn synthesize_profiles(n: usize, spread: &ProfileSpread, seed: u64) -> Vec<DeviceProfile> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw = |median: f64, rng: &mut ChaCha8Rng| -> f64 {
        if spread.sigma == 0.0 {
            return median;
        }
        let d = LogNormal::new(median.ln(), spread.sigma).expect("valid log-normal");
        // Round to 1e-6 relative so the CSV text form is exact and short.
        let v: f64 = d.sample(rng);
        let scale = 10f64.powi(6 - v.log10().ceil() as i32);
        (v * scale).round() / scale
    };
    (0..n)
        .map(|i| DeviceProfile {
            node: NodeId::new(format!("n{i}")).expect("valid id"),
            uplink_bps: draw(spread.median_uplink_bps, &mut rng),
            downlink_bps: draw(spread.median_downlink_bps, &mut rng),
            sec_per_local_step: draw(spread.median_sec_per_step, &mut rng),
            city_index: 0,
        })
        .collect()
}
