//! CSV and manifest writers for sweep results.
//!
//! Formats are fixed-width scientific notation so that repeated seeded runs
//! produce byte-identical files.

use std::io::Write;

use crate::scenario::SweepResult;

/// FNV-1a hash of arbitrary bytes, hex-encoded; used to fingerprint the
/// configuration file in the run manifest.
pub fn content_hash(bytes: &[u8]) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("{h:016x}")
}

/// Tidy per-drop CSV: one row per (sweep point, drop, system).
pub fn write_drops_csv<W: Write>(result: &SweepResult, mut w: W) -> std::io::Result<()> {
    writeln!(
        w,
        "{},drop,system,se_nats,se_bits,iterations,termination,best_run,multistart_spread_nats",
        result.axis_name
    )?;
    for point in &result.points {
        for d in &point.drops {
            writeln!(
                w,
                "{:.6},{},fim,{:.12e},{:.12e},{},{},{},{:.6e}",
                point.value,
                d.drop,
                d.fim_se_nats,
                d.fim_se_bits,
                d.iterations,
                d.termination,
                d.best_run,
                d.multi_start_spread
            )?;
            writeln!(
                w,
                "{:.6},{},raa,{:.12e},{:.12e},0,-,-1,0",
                point.value, d.drop, d.raa_se_nats, d.raa_se_bits
            )?;
        }
    }
    Ok(())
}

/// Aggregate CSV: one row per sweep point.
pub fn write_aggregate_csv<W: Write>(result: &SweepResult, mut w: W) -> std::io::Result<()> {
    writeln!(
        w,
        "{},mean_fim_nats,mean_raa_nats,mean_fim_bits,mean_raa_bits,gain_percent,\
         fim_ci95_nats,raa_ci95_nats,drops_ok,drops_failed",
        result.axis_name
    )?;
    for p in &result.points {
        writeln!(
            w,
            "{:.6},{:.12e},{:.12e},{:.12e},{:.12e},{:.6},{:.6e},{:.6e},{},{}",
            p.value,
            p.mean_fim_nats,
            p.mean_raa_nats,
            p.mean_fim_bits,
            p.mean_raa_bits,
            p.gain_percent,
            p.fim_ci95_nats,
            p.raa_ci95_nats,
            p.drops.len(),
            p.failures.len()
        )?;
    }
    Ok(())
}

/// JSON run manifest for reproducibility: tool version, seed, config hash,
/// and axis. Deliberately carries no timestamps so reruns are byte-stable.
pub fn write_manifest<W: Write>(
    mut w: W,
    subcommand: &str,
    axis_name: &str,
    seed: u64,
    config_bytes: &[u8],
) -> std::io::Result<()> {
    let manifest = serde_json::json!({
        "schema_version": 1,
        "tool": "fim",
        "tool_version": env!("CARGO_PKG_VERSION"),
        "subcommand": subcommand,
        "axis": axis_name,
        "seed": seed,
        "config_hash": content_hash(config_bytes),
    });
    writeln!(
        w,
        "{}",
        serde_json::to_string_pretty(&manifest).expect("static json")
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pgm::Termination;
    use crate::scenario::{DropRecord, PointResult};

    fn tiny_result() -> SweepResult {
        SweepResult {
            axis_name: "power_dbm".into(),
            points: vec![PointResult {
                value: 30.0,
                drops: vec![DropRecord {
                    drop: 0,
                    fim_se_nats: 1.5,
                    fim_se_bits: 1.5 / std::f64::consts::LN_2,
                    raa_se_nats: 1.2,
                    raa_se_bits: 1.2 / std::f64::consts::LN_2,
                    iterations: 12,
                    termination: Termination::GradientMap,
                    best_run: 1,
                    multi_start_spread: 0.01,
                }],
                failures: vec![],
                mean_fim_nats: 1.5,
                mean_raa_nats: 1.2,
                mean_fim_bits: 1.5 / std::f64::consts::LN_2,
                mean_raa_bits: 1.2 / std::f64::consts::LN_2,
                gain_percent: 25.0,
                fim_ci95_nats: 0.0,
                raa_ci95_nats: 0.0,
            }],
        }
    }

    #[test]
    fn csv_output_is_stable() {
        let result = tiny_result();
        let mut a = Vec::new();
        let mut b = Vec::new();
        write_drops_csv(&result, &mut a).unwrap();
        write_drops_csv(&result, &mut b).unwrap();
        assert_eq!(a, b);
        let text = String::from_utf8(a).unwrap();
        assert!(text.starts_with("power_dbm,drop,system,"));
        assert_eq!(text.lines().count(), 3);

        let mut agg = Vec::new();
        write_aggregate_csv(&result, &mut agg).unwrap();
        let text = String::from_utf8(agg).unwrap();
        assert!(text.contains("25.000000"));
    }

    #[test]
    fn manifest_is_stable_and_hash_sensitive() {
        let mut a = Vec::new();
        let mut b = Vec::new();
        write_manifest(&mut a, "sweep", "power_dbm", 7, b"config").unwrap();
        write_manifest(&mut b, "sweep", "power_dbm", 7, b"config").unwrap();
        assert_eq!(a, b);
        assert_ne!(content_hash(b"config"), content_hash(b"config2"));
    }
}
