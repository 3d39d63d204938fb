//! Table serialization: a fixed-header CSV and a matplotlib plot script
//! that reads it.

use std::io::Write;
use std::path::{Path, PathBuf};

use crate::scenario::ResultTable;

/// Output flavors of [`emit`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmitFormat {
    Csv,
    PlotScript,
}

pub const CSV_HEADER: &str = "scheme,M,t_mag_A,t_mag_B,phase_A,phase_B,snr_db,\
mean_bits,stderr,trials,seed,P1,P2,P3,P4,P5,P6,P7,P8,P9,P10";

/// Renders the fixed-header CSV. Failed cells keep their grid columns and
/// leave the measurement columns empty; power columns are empty for
/// non-SAMAT rows.
pub fn to_csv(table: &ResultTable) -> String {
    let mut out = String::with_capacity(64 * (table.rows.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for row in &table.rows {
        out.push_str(row.scheme.name());
        out.push(',');
        out.push_str(&row.m.to_string());
        for v in [
            row.t_mag_a,
            row.t_mag_b,
            row.phase_a,
            row.phase_b,
            row.snr_db,
        ] {
            out.push(',');
            out.push_str(&v.to_string());
        }
        match &row.estimate {
            Some(est) => {
                out.push_str(&format!(
                    ",{},{},{},{}",
                    est.mean_bits, est.stderr, est.trials, est.seed
                ));
            }
            None => out.push_str(",,,,"),
        }
        match &row.power {
            Some(alloc) => {
                for v in alloc.p {
                    out.push(',');
                    out.push_str(&v.to_string());
                }
            }
            None => out.push_str(",,,,,,,,,,"),
        }
        out.push('\n');
    }
    out
}

/// Writes the table (or its plot script) under `out_dir` with the given
/// file stem; returns the path written.
pub fn emit(
    table: &ResultTable,
    format: EmitFormat,
    out_dir: &Path,
    stem: &str,
) -> std::io::Result<PathBuf> {
    std::fs::create_dir_all(out_dir)?;
    let path = match format {
        EmitFormat::Csv => {
            let path = out_dir.join(format!("{stem}.csv"));
            let mut f = std::fs::File::create(&path)?;
            f.write_all(to_csv(table).as_bytes())?;
            path
        }
        EmitFormat::PlotScript => {
            let path = out_dir.join(format!("{stem}.py"));
            let mut f = std::fs::File::create(&path)?;
            f.write_all(plot_script(&format!("{stem}.csv"), "snr_db").as_bytes())?;
            path
        }
    };
    Ok(path)
}

/// A self-contained matplotlib script plotting mean_bits (with stderr
/// bars) against the chosen x column, one line per scheme. Only columns
/// present in the emitted CSV are referenced.
pub fn plot_script(csv_name: &str, x_column: &str) -> String {
    format!(
        r#"#!/usr/bin/env python3
"""Plot ergodic sum-rate curves from {csv}."""
import csv
import os
from collections import defaultdict

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

here = os.path.dirname(os.path.abspath(__file__))
series = defaultdict(list)
with open(os.path.join(here, "{csv}")) as fh:
    for row in csv.DictReader(fh):
        if not row["mean_bits"]:
            continue
        series[row["scheme"]].append(
            (float(row["{x}"]), float(row["mean_bits"]), float(row["stderr"]))
        )

fig, ax = plt.subplots(figsize=(7, 4.5))
for scheme in sorted(series):
    pts = sorted(series[scheme])
    xs = [p[0] for p in pts]
    ys = [p[1] for p in pts]
    es = [2 * p[2] for p in pts]
    ax.errorbar(xs, ys, yerr=es, marker="o", capsize=2, label=scheme)
ax.set_xlabel("{x}")
ax.set_ylabel("ergodic sum-rate (bits/s/Hz per slot)")
ax.grid(True, alpha=0.3)
ax.legend()
fig.tight_layout()
out = os.path.join(here, "{stem}.png")
fig.savefig(out, dpi=150)
print(out)
"#,
        csv = csv_name,
        x = x_column,
        stem = csv_name.trim_end_matches(".csv"),
    )
}
