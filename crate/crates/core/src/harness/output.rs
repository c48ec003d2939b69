//! CSV rows for sweeps, heatmaps and CDFs.
//!
//! Floats are written as `{:.12e}`; non-finite values as `nan`. The first
//! column of every file is the schema version.

use std::io::Write;

use crate::bounds::BoundReport;
use crate::codebooks::UnauthorizedStrategy;
use crate::error::Result;
use crate::geometry::Position3;
use crate::params::{NUM_CHANNEL_PARAMS, PARAM_NAMES};

pub const SCHEMA_VERSION: u32 = 1;

/// Names of the four nuisance-free parameters, in estimator order.
pub const NUISANCE_FREE_NAMES: [&str; 4] = ["tau_u", "phi", "theta", "tau_rl"];

/// Bounds of one scene, flattened for output.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundColumns {
    /// Square roots of the CRB, MCRB and MLB diagonals, native units.
    pub crb: [f64; NUM_CHANNEL_PARAMS],
    pub mcrb: [f64; NUM_CHANNEL_PARAMS],
    pub mlb: [f64; NUM_CHANNEL_PARAMS],
    /// `η̄ − η₀`, signed.
    pub bias: [f64; NUM_CHANNEL_PARAMS],
    pub crb_pos_m: f64,
    pub crb_clock_m: f64,
    pub alb_pos_m: f64,
    pub alb_clock_m: f64,
    pub degraded: bool,
    /// Set when the bounds could not be computed; every value is then NaN.
    pub failed: bool,
}

impl BoundColumns {
    pub fn from_report(r: &BoundReport) -> Self {
        Self {
            crb: r.crb,
            mcrb: r.mcrb.map(|v| v.max(0.0).sqrt()),
            mlb: r.mlb.map(|v| v.max(0.0).sqrt()),
            bias: r.bias,
            crb_pos_m: r.crb_position_m(),
            crb_clock_m: r.crb_clock_m(),
            alb_pos_m: r.alb_position_m,
            alb_clock_m: r.alb_clock_m,
            degraded: r.degraded,
            failed: false,
        }
    }

    pub fn failed() -> Self {
        let nan = [f64::NAN; NUM_CHANNEL_PARAMS];
        Self {
            crb: nan,
            mcrb: nan,
            mlb: nan,
            bias: nan,
            crb_pos_m: f64::NAN,
            crb_clock_m: f64::NAN,
            alb_pos_m: f64::NAN,
            alb_clock_m: f64::NAN,
            degraded: false,
            failed: true,
        }
    }
}

/// Monte Carlo error statistics; NaN when no trial succeeded.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RmseColumns {
    pub coarse_channel: [f64; 4],
    pub fine_channel: [f64; 4],
    pub coarse_pos_m: f64,
    pub coarse_clock_m: f64,
    pub fine_pos_m: f64,
    pub fine_clock_m: f64,
}

impl RmseColumns {
    pub fn empty() -> Self {
        Self {
            coarse_channel: [f64::NAN; 4],
            fine_channel: [f64::NAN; 4],
            coarse_pos_m: f64::NAN,
            coarse_clock_m: f64::NAN,
            fine_pos_m: f64::NAN,
            fine_clock_m: f64::NAN,
        }
    }
}

/// One line of a sweep, heatmap or bounds file.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub kind: &'static str,
    pub sweep_index: usize,
    pub power_dbm: f64,
    pub strategy: UnauthorizedStrategy,
    pub scenario: u8,
    pub ue: Position3,
    pub ris_unauth: Position3,
    pub trials: usize,
    pub successes: usize,
    pub seed: u64,
    pub bounds: BoundColumns,
    pub rmse: RmseColumns,
}

impl ResultRow {
    pub fn failure_rate(&self) -> f64 {
        if self.trials == 0 {
            0.0
        } else {
            (self.trials - self.successes) as f64 / self.trials as f64
        }
    }

    pub fn header() -> Vec<String> {
        let mut h: Vec<String> = [
            "schema_version",
            "kind",
            "sweep_index",
            "power_dbm",
            "strategy",
            "scenario",
            "ue_x",
            "ue_y",
            "ue_z",
            "ru_x",
            "ru_y",
            "ru_z",
            "trials",
            "successes",
            "failure_rate",
            "seed",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        for prefix in ["crb", "mcrb", "mlb", "bias"] {
            h.extend(PARAM_NAMES.iter().map(|p| format!("{prefix}_{p}")));
        }
        h.extend(
            ["crb_pos_m", "crb_clock_m", "alb_pos_m", "alb_clock_m", "bounds_degraded", "bounds_failed"]
                .iter()
                .map(|s| s.to_string()),
        );
        for stage in ["coarse", "fine"] {
            h.extend(NUISANCE_FREE_NAMES.iter().map(|p| format!("{stage}_rmse_{p}")));
        }
        h.extend(
            ["coarse_rmse_pos_m", "coarse_rmse_clock_m", "fine_rmse_pos_m", "fine_rmse_clock_m"]
                .iter()
                .map(|s| s.to_string()),
        );
        h
    }

    pub fn record(&self) -> Vec<String> {
        let mut r = vec![
            SCHEMA_VERSION.to_string(),
            self.kind.to_string(),
            self.sweep_index.to_string(),
            fmt(self.power_dbm),
            self.strategy.to_string(),
            self.scenario.to_string(),
            fmt(self.ue.x),
            fmt(self.ue.y),
            fmt(self.ue.z),
            fmt(self.ris_unauth.x),
            fmt(self.ris_unauth.y),
            fmt(self.ris_unauth.z),
            self.trials.to_string(),
            self.successes.to_string(),
            fmt(self.failure_rate()),
            self.seed.to_string(),
        ];
        let b = &self.bounds;
        for arr in [&b.crb, &b.mcrb, &b.mlb, &b.bias] {
            r.extend(arr.iter().map(|v| fmt(*v)));
        }
        r.extend([
            fmt(b.crb_pos_m),
            fmt(b.crb_clock_m),
            fmt(b.alb_pos_m),
            fmt(b.alb_clock_m),
            u8::from(b.degraded).to_string(),
            u8::from(b.failed).to_string(),
        ]);
        let m = &self.rmse;
        r.extend(m.coarse_channel.iter().map(|v| fmt(*v)));
        r.extend(m.fine_channel.iter().map(|v| fmt(*v)));
        r.extend([
            fmt(m.coarse_pos_m),
            fmt(m.coarse_clock_m),
            fmt(m.fine_pos_m),
            fmt(m.fine_clock_m),
        ]);
        r
    }
}

/// One step of an empirical CDF.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CdfRow {
    pub strategy: UnauthorizedStrategy,
    pub scenario: u8,
    pub value: f64,
    pub cumulative: f64,
}

impl CdfRow {
    pub fn header() -> Vec<String> {
        ["schema_version", "strategy", "scenario", "value", "cumulative"]
            .iter()
            .map(|s| s.to_string())
            .collect()
    }

    pub fn record(&self) -> Vec<String> {
        vec![
            SCHEMA_VERSION.to_string(),
            self.strategy.to_string(),
            self.scenario.to_string(),
            fmt(self.value),
            fmt(self.cumulative),
        ]
    }
}

pub fn fmt(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.12e}")
    } else {
        "nan".to_string()
    }
}

fn write_rows<W: Write>(out: W, header: Vec<String>, rows: impl Iterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(&header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_results<W: Write>(out: W, rows: &[ResultRow]) -> Result<()> {
    write_rows(out, ResultRow::header(), rows.iter().map(ResultRow::record))
}

pub fn write_cdf<W: Write>(out: W, rows: &[CdfRow]) -> Result<()> {
    write_rows(out, CdfRow::header(), rows.iter().map(CdfRow::record))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row() -> ResultRow {
        ResultRow {
            kind: "sweep",
            sweep_index: 0,
            power_dbm: 20.0,
            strategy: UnauthorizedStrategy::Random,
            scenario: 0,
            ue: Position3::new(1.0, 4.0, -2.0),
            ris_unauth: Position3::new(2.0, 5.0, 0.0),
            trials: 4,
            successes: 3,
            seed: 7,
            bounds: BoundColumns::failed(),
            rmse: RmseColumns::empty(),
        }
    }

    #[test]
    fn header_and_record_align() {
        assert_eq!(ResultRow::header().len(), row().record().len());
        assert_eq!(CdfRow::header().len(), 5);
    }

    #[test]
    fn written_csv_is_stable() {
        let mut a = Vec::new();
        write_results(&mut a, &[row()]).unwrap();
        let text = String::from_utf8(a).unwrap();
        let mut lines = text.lines();
        assert!(lines.next().unwrap().starts_with("schema_version,kind,"));
        let body = lines.next().unwrap();
        assert!(body.starts_with("1,sweep,0,2.000000000000e1,random,0,"));
        assert!(body.contains(",2.500000000000e-1,7,nan,"));
    }

    #[test]
    fn small_values_use_scientific_notation() {
        assert_eq!(fmt(1.5e-10), "1.500000000000e-10");
        assert_eq!(fmt(f64::INFINITY), "nan");
    }
}
