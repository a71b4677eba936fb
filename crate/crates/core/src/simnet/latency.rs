//! City-to-city round-trip times and round-robin city assignment.

use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::TraceError;
use crate::membership::Membership;

/// Square matrix of RTTs in milliseconds between named cities.
#[derive(Debug, Clone, PartialEq)]
pub struct LatencyMatrix {
    cities: Vec<String>,
    rtt_ms: Vec<Vec<f64>>,
}

impl LatencyMatrix {
    pub fn new(cities: Vec<String>, rtt_ms: Vec<Vec<f64>>) -> Result<Self, TraceError> {
        if cities.is_empty() {
            return Err(TraceError::at(1, "no cities"));
        }
        if rtt_ms.len() != cities.len() {
            return Err(TraceError::at(
                rtt_ms.len() + 2,
                format!("expected {} rows, found {}", cities.len(), rtt_ms.len()),
            ));
        }
        for (i, row) in rtt_ms.iter().enumerate() {
            if row.len() != cities.len() {
                return Err(TraceError::at(i + 2, "matrix is not square"));
            }
            if let Some(v) = row.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
                return Err(TraceError::at(i + 2, format!("invalid rtt {v}")));
            }
        }
        Ok(LatencyMatrix { cities, rtt_ms })
    }

    /// A single city with the given intra-city RTT.
    pub fn single(rtt_ms: f64) -> Self {
        LatencyMatrix::new(vec!["local".into()], vec![vec![rtt_ms]]).expect("valid")
    }

    pub fn zero() -> Self {
        Self::single(0.0)
    }

    pub fn cities(&self) -> &[String] {
        &self.cities
    }

    pub fn len(&self) -> usize {
        self.cities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cities.is_empty()
    }

    pub fn rtt_ms(&self, a: usize, b: usize) -> f64 {
        self.rtt_ms[a][b]
    }

    /// Half the round-trip time, in seconds.
    pub fn one_way_seconds(&self, a: usize, b: usize) -> f64 {
        self.rtt_ms[a][b] / 2.0 / 1000.0
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self, TraceError> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let cities: Vec<String> = rdr
            .headers()
            .map_err(|e| TraceError::at(1, e.to_string()))?
            .iter()
            .map(str::to_owned)
            .collect();
        let mut rows = Vec::with_capacity(cities.len());
        for (i, record) in rdr.records().enumerate() {
            let line = i + 2;
            let record = record.map_err(|e| TraceError::at(line, e.to_string()))?;
            let row = record
                .iter()
                .map(|f| {
                    f.parse::<f64>()
                        .map_err(|_| TraceError::at(line, format!("not a number: {f:?}")))
                })
                .collect::<Result<Vec<f64>, _>>()?;
            rows.push(row);
        }
        LatencyMatrix::new(cities, rows)
    }

    pub fn load(path: &Path) -> Result<Self, TraceError> {
        let f = std::fs::File::open(path).map_err(|e| TraceError::io(path, e))?;
        Self::read_csv(f)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), TraceError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(&self.cities).map_err(TraceError::csv)?;
        for row in &self.rtt_ms {
            w.write_record(row.iter().map(|v| v.to_string()))
                .map_err(TraceError::csv)?;
        }
        w.flush().map_err(|e| TraceError::at(0, e.to_string()))?;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<(), TraceError> {
        let f = std::fs::File::create(path).map_err(|e| TraceError::io(path, e))?;
        self.write_csv(f)
    }

    /// Synthetic geography: cities uniformly on a sphere of Earth's radius,
    /// RTT = base + 2 * great-circle distance / (fiber speed) * route stretch.
    pub fn synthetic(n_cities: usize, seed: u64) -> Self {
        const EARTH_RADIUS_KM: f64 = 6371.0;
        const FIBER_KM_PER_MS: f64 = 200.0;
        const ROUTE_STRETCH: f64 = 1.5;
        const BASE_RTT_MS: f64 = 2.0;

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let points: Vec<[f64; 3]> = (0..n_cities)
            .map(|_| {
                let z: f64 = rng.random_range(-1.0..1.0);
                let phi: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                let r = (1.0 - z * z).sqrt();
                [r * phi.cos(), r * phi.sin(), z]
            })
            .collect();
        let rtt = points
            .iter()
            .map(|a| {
                points
                    .iter()
                    .map(|b| {
                        let dot = (a[0] * b[0] + a[1] * b[1] + a[2] * b[2]).clamp(-1.0, 1.0);
                        let km = EARTH_RADIUS_KM * dot.acos();
                        let ms = BASE_RTT_MS + 2.0 * km / FIBER_KM_PER_MS * ROUTE_STRETCH;
                        (ms * 1000.0).round() / 1000.0
                    })
                    .collect()
            })
            .collect();
        let cities = (0..n_cities).map(|i| format!("city{i:03}")).collect();
        LatencyMatrix::new(cities, rtt).expect("synthetic matrix is valid")
    }
}

/// Node at membership position `i` goes to city `i mod |cities|`.
pub fn assign_cities(membership: &Membership, matrix: &LatencyMatrix) -> Vec<usize> {
    (0..membership.len()).map(|i| i % matrix.len()).collect()
}

/// Writes the round-robin assignment into the membership's profiles.
pub fn apply_cities(membership: &mut Membership, matrix: &LatencyMatrix) {
    for (i, city) in assign_cities(membership, matrix).into_iter().enumerate() {
        membership.set_city(i, city);
    }
}
