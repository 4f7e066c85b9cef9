//! Distance sweeps written as CSV.

use std::io::Write;

use crate::analysis::{mc_vs_model, rate_point};
use crate::cli::config::RunConfig;
use crate::cli::CliError;

pub const CSV_HEADER: &str =
    "length_km,model_sifted_bps,model_qber,model_final_bps,mc_sifted_bps,mc_qber,mc_final_bps";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McColumns {
    pub sifted_bps: f64,
    /// `None` when nothing was sifted.
    pub qber: Option<f64>,
    pub final_bps: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub length_km: f64,
    pub model_sifted_bps: f64,
    pub model_qber: f64,
    pub model_final_bps: f64,
    pub mc: Option<McColumns>,
}

impl SweepRow {
    pub fn to_csv(&self) -> String {
        let mut s = format!(
            "{},{},{},{}",
            self.length_km, self.model_sifted_bps, self.model_qber, self.model_final_bps
        );
        match self.mc {
            Some(mc) => {
                let q = mc.qber.map(|q| q.to_string()).unwrap_or_default();
                s.push_str(&format!(",{},{},{}", mc.sifted_bps, q, mc.final_bps));
            }
            None => s.push_str(",,,"),
        }
        s
    }
}

/// One row per swept length; MC columns when `n_clocks > 0`, seeded `seed + row`.
pub fn sweep_rows(cfg: &RunConfig) -> Result<Vec<SweepRow>, CliError> {
    cfg.sweep
        .lengths()
        .into_iter()
        .enumerate()
        .map(|(i, l)| {
            let m = rate_point(&cfg.system, l)?;
            let mc = if cfg.n_clocks > 0 {
                let r = mc_vs_model(&cfg.system, l, cfg.n_clocks, cfg.seed.wrapping_add(i as u64))?;
                Some(McColumns {
                    sifted_bps: r.measured_sifted_bps,
                    qber: r.measured_qber,
                    final_bps: r.final_bps,
                })
            } else {
                None
            };
            Ok(SweepRow {
                length_km: l,
                model_sifted_bps: m.r_sift,
                model_qber: m.qber,
                model_final_bps: m.r_final,
                mc,
            })
        })
        .collect()
}

pub fn write_csv<W: Write + ?Sized>(rows: &[SweepRow], w: &mut W) -> std::io::Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for r in rows {
        writeln!(w, "{}", r.to_csv())?;
    }
    Ok(())
}

pub fn run_sweep<W: Write + ?Sized>(cfg: &RunConfig, stdout: &mut W) -> Result<(), CliError> {
    let rows = sweep_rows(cfg)?;
    let mut buf = Vec::new();
    write_csv(&rows, &mut buf)?;
    match &cfg.output {
        Some(path) => std::fs::write(path, buf)
            .map_err(|e| CliError::Output(format!("{}: {e}", path.display())))?,
        None => stdout.write_all(&buf)?,
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cli::config::parse_config;

    #[test]
    fn model_only_rows() {
        let cfg = parse_config("sweep=0,100,50\nn_clocks=0").unwrap();
        let mut out = Vec::new();
        run_sweep(&cfg, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(lines.len(), 4);
        assert!(lines[1].starts_with("0,"));
        assert!(lines[3].ends_with(",,,"));
        assert_eq!(lines[2].split(',').count(), 7);
    }

    #[test]
    fn anchor_row() {
        let cfg = parse_config("qe=0.05\nsweep=100,100,1\nn_clocks=0").unwrap();
        let rows = sweep_rows(&cfg).unwrap();
        assert!((rows[0].model_qber - 0.06).abs() < 1e-9);
    }

    #[test]
    fn mc_rows_repeat() {
        let cfg = parse_config("sweep=0,20,20\nn_clocks=200000\nseed=5").unwrap();
        let (mut a, mut b) = (Vec::new(), Vec::new());
        run_sweep(&cfg, &mut a).unwrap();
        run_sweep(&cfg, &mut b).unwrap();
        assert_eq!(a, b);
        let text = String::from_utf8(a).unwrap();
        let row: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
        assert!(row[4].parse::<f64>().unwrap() > 0.0);
    }
}
