//! Detector CSV ingestion and serialization.
//!
//! Schema: header `station_id,position_m,timestamp_s,speed,density`, one row
//! per (station, report). Units are SI unless the imperial flag converts
//! mph and veh/mile on load.

use super::{DetectorDataset, Observation, Rect, SamplingGeometry, Station};
use crate::error::{Error, Result};
use crate::physics::{NormScale, PhysicsSpec};
use std::collections::BTreeMap;
use std::path::Path;

const MPH_TO_MPS: f64 = 0.44704;
const MILE_M: f64 = 1609.344;

#[derive(Debug, serde::Deserialize)]
struct Row {
    station_id: String,
    position_m: f64,
    timestamp_s: f64,
    speed: f64,
    density: f64,
}

/// Parse a detector CSV into a dataset. Geometry is computed from the data:
/// minimal pairwise station spacing and minimal per-station reporting
/// interval. `imperial` converts mph and veh/mile to SI on the way in.
pub fn load_detector_csv(
    path: &Path,
    spec: &PhysicsSpec,
    imperial: bool,
) -> Result<DetectorDataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::config(format!("cannot open {}: {e}", path.display())))?;
    let mut observations: Vec<Observation> = Vec::new();
    // Station id -> (position, timestamps in file order).
    let mut stations: BTreeMap<String, (f64, Vec<f64>)> = BTreeMap::new();
    for rec in rdr.deserialize::<Row>() {
        let row: Row = match rec {
            Ok(r) => r,
            Err(e) => {
                let line = e
                    .position()
                    .map(|p| p.line() as usize)
                    .unwrap_or(0);
                return Err(Error::Parse {
                    line,
                    msg: format!("malformed detector row: {e}"),
                });
            }
        };
        let (u, rho) = if imperial {
            (row.speed * MPH_TO_MPS, row.density / MILE_M)
        } else {
            (row.speed, row.density)
        };
        let entry = stations
            .entry(row.station_id.clone())
            .or_insert((row.position_m, Vec::new()));
        entry.1.push(row.timestamp_s);
        observations.push(Observation {
            x: row.position_m,
            t: row.timestamp_s,
            rho,
            u,
        });
    }
    if observations.is_empty() {
        return Err(Error::config("detector file has no data rows"));
    }
    if stations.len() < 2 {
        return Err(Error::config(
            "spatial step undefined: need at least 2 stations",
        ));
    }
    // Per-station monotone timestamps and minimal reporting interval.
    let mut delta_t = f64::INFINITY;
    for (id, (_, times)) in &stations {
        for w in times.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::config(format!(
                    "non-monotone timestamps at station {id}: {} then {}",
                    w[0], w[1]
                )));
            }
            delta_t = delta_t.min(w[1] - w[0]);
        }
    }
    if !delta_t.is_finite() {
        return Err(Error::config("need at least 2 reports at some station"));
    }
    // Minimal pairwise spacing.
    let mut xs: Vec<f64> = stations.values().map(|(x, _)| *x).collect();
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut delta_x = f64::INFINITY;
    for w in xs.windows(2) {
        if (w[1] - w[0]).abs() < 1e-9 {
            return Err(Error::config("duplicate station positions"));
        }
        delta_x = delta_x.min(w[1] - w[0]);
    }

    let (mut x_lo, mut x_hi) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut t_lo, mut t_hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for o in &observations {
        x_lo = x_lo.min(o.x);
        x_hi = x_hi.max(o.x);
        t_lo = t_lo.min(o.t);
        t_hi = t_hi.max(o.t);
    }
    // A single report time per station would collapse the t axis.
    if t_hi <= t_lo {
        return Err(Error::config("degenerate time span in detector data"));
    }
    let domain = Rect {
        x_lo,
        x_hi,
        t_lo,
        t_hi,
    };
    let station_list: Vec<Station> = stations
        .into_iter()
        .map(|(id, (x, times))| {
            let mut dt = f64::INFINITY;
            for w in times.windows(2) {
                dt = dt.min(w[1] - w[0]);
            }
            Station {
                id,
                x,
                delta_t: if dt.is_finite() { dt } else { delta_t },
            }
        })
        .collect();
    let ds = DetectorDataset {
        observations,
        collocation: Vec::new(),
        stations: station_list,
        geometry: SamplingGeometry { delta_x, delta_t },
        scale: NormScale {
            l_x: domain.span_x(),
            l_t: domain.span_t(),
            rho_max: spec.rho_max,
            u_max: spec.u_max,
        },
        domain,
    };
    ds.validate()?;
    Ok(ds)
}

/// Write observations back out in the canonical schema (SI units).
pub fn write_detector_csv(path: &Path, dataset: &DetectorDataset) -> Result<()> {
    let mut w = csv::Writer::from_path(path)
        .map_err(|e| Error::config(format!("cannot create {}: {e}", path.display())))?;
    w.write_record(["station_id", "position_m", "timestamp_s", "speed", "density"])
        .map_err(io_err)?;
    for o in &dataset.observations {
        let station = dataset
            .stations
            .iter()
            .find(|s| (s.x - o.x).abs() < 1e-9)
            .map(|s| s.id.clone())
            .unwrap_or_else(|| "unknown".into());
        w.write_record([
            station,
            format!("{:?}", o.x),
            format!("{:?}", o.t),
            format!("{:?}", o.u),
            format!("{:?}", o.rho),
        ])
        .map_err(io_err)?;
    }
    w.flush()?;
    Ok(())
}

fn io_err(e: csv::Error) -> Error {
    Error::Numeric(format!("csv write failed: {e}"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write as _;

    fn spec() -> PhysicsSpec {
        PhysicsSpec::lwr(0.12)
    }

    fn write_tmp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn two_stations_give_spacing_and_cadence() {
        // Station pair 482.8 m apart reporting every 300 s.
        let f = write_tmp(
            "station_id,position_m,timestamp_s,speed,density\n\
             365,0.0,0,25.0,0.02\n\
             365,0.0,300,24.0,0.021\n\
             366,482.8,0,26.0,0.019\n\
             366,482.8,300,25.5,0.0195\n",
        );
        let ds = load_detector_csv(f.path(), &spec(), false).unwrap();
        assert!((ds.geometry.delta_x - 482.8).abs() < 1e-9);
        assert!((ds.geometry.delta_t - 300.0).abs() < 1e-9);
        assert_eq!(ds.observations.len(), 4);
    }

    #[test]
    fn single_station_is_rejected() {
        let f = write_tmp(
            "station_id,position_m,timestamp_s,speed,density\n\
             365,0.0,0,25.0,0.02\n\
             365,0.0,300,24.0,0.021\n",
        );
        assert!(load_detector_csv(f.path(), &spec(), false).is_err());
    }

    #[test]
    fn empty_file_is_rejected() {
        let f = write_tmp("station_id,position_m,timestamp_s,speed,density\n");
        assert!(load_detector_csv(f.path(), &spec(), false).is_err());
    }

    #[test]
    fn malformed_row_reports_line_number() {
        let f = write_tmp(
            "station_id,position_m,timestamp_s,speed,density\n\
             365,0.0,0,25.0,0.02\n\
             366,not_a_number,0,26.0,0.019\n",
        );
        let err = load_detector_csv(f.path(), &spec(), false).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn non_monotone_timestamps_rejected() {
        let f = write_tmp(
            "station_id,position_m,timestamp_s,speed,density\n\
             365,0.0,300,25.0,0.02\n\
             365,0.0,0,24.0,0.021\n\
             366,482.8,0,26.0,0.019\n\
             366,482.8,300,25.0,0.019\n",
        );
        assert!(load_detector_csv(f.path(), &spec(), false).is_err());
    }

    #[test]
    fn imperial_units_convert_on_load() {
        let f = write_tmp(
            "station_id,position_m,timestamp_s,speed,density\n\
             a,0.0,0,60.0,32.18688\n\
             a,0.0,300,60.0,32.18688\n\
             b,400.0,0,60.0,32.18688\n\
             b,400.0,300,60.0,32.18688\n",
        );
        let ds = load_detector_csv(f.path(), &spec(), true).unwrap();
        // 60 mph = 26.8224 m/s; 32.18688 veh/mile = 0.02 veh/m.
        assert!((ds.observations[0].u - 26.8224).abs() < 1e-9);
        assert!((ds.observations[0].rho - 0.02).abs() < 1e-12);
    }

    #[test]
    fn round_trip_through_csv() {
        let field = {
            let spec = spec();
            super::super::manufactured_solution(
                super::super::ManufacturedKind::SeparableSine {
                    a: 0.06,
                    b: 0.02,
                    k_x: 0.01,
                    k_t: 0.1,
                },
                spec,
                Rect {
                    x_lo: 0.0,
                    x_hi: 680.0,
                    t_lo: 0.0,
                    t_hi: 60.0,
                },
                69,
                241,
            )
            .unwrap()
        };
        let ds = super::super::sparse_sample(
            &field,
            SamplingGeometry {
                delta_x: 170.0,
                delta_t: 5.0,
            },
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("det.csv");
        write_detector_csv(&path, &ds).unwrap();
        let loaded = load_detector_csv(&path, &spec(), false).unwrap();
        assert_eq!(loaded.observations.len(), ds.observations.len());
        assert!((loaded.geometry.delta_x - ds.geometry.delta_x).abs() < 1e-9);
        assert!((loaded.geometry.delta_t - ds.geometry.delta_t).abs() < 1e-9);
        for (a, b) in loaded.observations.iter().zip(ds.observations.iter()) {
            assert_eq!(a.rho.to_bits(), b.rho.to_bits());
            assert_eq!(a.u.to_bits(), b.u.to_bits());
        }
    }
}
