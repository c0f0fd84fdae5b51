//! Presets that regenerate the datasets behind the standard figures.

use crate::config::ExperimentConfig;
use crate::ensemble::{run_experiment, EnsembleError, ExperimentResult, RunOptions};
use crate::hamiltonians::{Model, Protocol};
use crate::kernel::{SpinSpecies, MAX_DIM};
use std::fmt;
use std::io::Write;
use std::str::FromStr;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Figure {
    /// Spin statistics and `E_R/ħ` versus time, DC secular, `M = 2`.
    Fig1,
    /// `E_R,min/ħ` versus `M` and `s`, DC secular.
    Fig2,
    /// `E_R,min/ħ` versus `ω_L/ω_dd`, full model with the secular reference.
    Fig3,
    /// `E_R,min/ħ` versus `M` and `s`, RF protocol.
    FigS1,
}

impl Figure {
    pub const ALL: [Figure; 4] = [Figure::Fig1, Figure::Fig2, Figure::Fig3, Figure::FigS1];

    pub fn name(&self) -> &'static str {
        match self {
            Figure::Fig1 => "fig1",
            Figure::Fig2 => "fig2",
            Figure::Fig3 => "fig3",
            Figure::FigS1 => "figS1",
        }
    }
}

impl fmt::Display for Figure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Figure {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Figure::ALL
            .into_iter()
            .find(|f| f.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown figure '{s}' (expected fig1, fig2, fig3 or figS1)"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scale {
    Full,
    Desk,
}

impl FromStr for Scale {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "full" => Ok(Scale::Full),
            "desk" => Ok(Scale::Desk),
            other => Err(format!("unknown scale '{other}' (expected full or desk)")),
        }
    }
}

/// One experiment of a figure, with the label values of its table row.
#[derive(Clone, Debug)]
pub struct FigurePoint {
    pub config: ExperimentConfig,
    pub labels: Vec<(String, String)>,
}

fn spin(twice: u32, base: &ExperimentConfig) -> SpinSpecies {
    SpinSpecies::from_twice_spin(twice, base.species.gamma()).expect("positive spin")
}

fn clusters(scale: Scale, desk: usize) -> usize {
    match scale {
        Scale::Full => 40_000,
        Scale::Desk => desk,
    }
}

fn size_sweep(base: &ExperimentConfig, spins: &[u32], sizes: std::ops::RangeInclusive<usize>) -> Vec<FigurePoint> {
    let mut out = Vec::new();
    for &twice in spins {
        for m in sizes.clone() {
            let sp = spin(twice, base);
            if sp.dim().checked_pow(m as u32).is_none_or(|d| d > MAX_DIM) {
                continue;
            }
            let config = ExperimentConfig {
                species: sp,
                cluster_size: m,
                seed: base.seed + out.len() as u64,
                ..base.clone()
            };
            out.push(FigurePoint {
                config,
                labels: vec![("spin".into(), sp.to_string()), ("cluster_size".into(), m.to_string())],
            });
        }
    }
    out
}

/// The experiments making up `figure` at `scale`, derived from `base`
/// (seed, γ, ρ and numerical settings are taken from it).
pub fn figure_points(figure: Figure, scale: Scale, base: &ExperimentConfig) -> Vec<FigurePoint> {
    let dc = ExperimentConfig {
        protocol: Protocol::Dc,
        model: Model::Secular,
        ..base.clone()
    };
    match figure {
        Figure::Fig1 => vec![FigurePoint {
            config: ExperimentConfig {
                species: spin(1, base),
                cluster_size: 2,
                clusters: 40_000,
                ..dc
            },
            labels: vec![],
        }],
        Figure::Fig2 => {
            let base = ExperimentConfig {
                clusters: clusters(scale, 10_000),
                ..dc
            };
            match scale {
                Scale::Desk => size_sweep(&base, &[1, 2], 2..=6),
                Scale::Full => size_sweep(&base, &[1, 2, 3, 4, 5, 6], 2..=7),
            }
        }
        Figure::Fig3 => {
            let ratios: &[f64] = match scale {
                Scale::Desk => &[0.5, 1.0, 2.0, 5.0, 20.0, 100.0],
                Scale::Full => &[0.3, 0.5, 1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0],
            };
            let base = ExperimentConfig {
                species: spin(1, base),
                cluster_size: 2,
                clusters: clusters(scale, 4_000),
                ..dc
            };
            let mut out = vec![FigurePoint {
                config: base.clone(),
                labels: vec![("omega_ratio".into(), String::new()), ("model".into(), "secular".into())],
            }];
            for (i, &r) in ratios.iter().enumerate() {
                out.push(FigurePoint {
                    config: ExperimentConfig {
                        model: Model::Full,
                        omega_ratio: r,
                        seed: base.seed + 1 + i as u64,
                        ..base.clone()
                    },
                    labels: vec![("omega_ratio".into(), r.to_string()), ("model".into(), "full".into())],
                });
            }
            out
        }
        Figure::FigS1 => {
            let base = ExperimentConfig {
                protocol: Protocol::Rf,
                model: Model::Secular,
                clusters: clusters(scale, 10_000),
                ..base.clone()
            };
            match scale {
                Scale::Desk => size_sweep(&base, &[1], 2..=5),
                Scale::Full => size_sweep(&base, &[1, 2, 3, 4], 2..=7),
            }
        }
    }
}

/// A rectangular CSV table.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn column(&self, name: &str) -> Option<Vec<&str>> {
        let k = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[k].as_str()).collect())
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), EnsembleError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.columns)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug)]
pub struct FigureOutput {
    pub figure: Figure,
    pub table: Table,
    pub results: Vec<ExperimentResult>,
    /// Points that failed, with their labels and the error message.
    pub failures: Vec<String>,
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn fig1_table(r: &ExperimentResult) -> Table {
    let columns = [
        "tau",
        "mean_sx_per_spin",
        "rms_sx_per_spin",
        "mean_sy_per_spin",
        "rms_sy_per_spin",
        "mean_sz_per_spin",
        "rms_sz_per_spin",
        "er_over_hbar",
        "stderr",
    ]
    .map(String::from)
    .to_vec();
    let rows = (0..r.curve.tau.len())
        .map(|i| {
            let m = r.diagnostics.mean_per_spin[i];
            let v = r.diagnostics.var_per_spin[i];
            vec![
                r.curve.tau[i].to_string(),
                m[0].to_string(),
                v[0].max(0.0).sqrt().to_string(),
                m[1].to_string(),
                v[1].max(0.0).sqrt().to_string(),
                m[2].to_string(),
                v[2].max(0.0).sqrt().to_string(),
                r.curve.er_over_hbar[i].to_string(),
                r.curve.stderr[i].to_string(),
            ]
        })
        .collect();
    Table { columns, rows }
}

/// Summary columns appended after the labels of each point.
pub const SUMMARY_COLUMNS: [&str; 5] = ["er_min", "er_min_stderr", "tau_opt", "tau_opt_stderr", "at_boundary"];

fn summary_row(r: &ExperimentResult) -> Vec<String> {
    let o = r.curve.optimum;
    vec![
        opt(o.map(|o| o.er_min)),
        opt(r.curve.er_min_stderr),
        opt(o.map(|o| o.tau_opt)),
        opt(r.curve.tau_opt_stderr),
        o.map(|o| o.at_boundary.to_string()).unwrap_or_default(),
    ]
}

/// Runs every point of a figure. `progress` receives one line per point.
pub fn run_figure(
    figure: Figure,
    scale: Scale,
    base: &ExperimentConfig,
    options: RunOptions,
    progress: &mut dyn FnMut(&str),
) -> Result<FigureOutput, EnsembleError> {
    let points = figure_points(figure, scale, base);
    let total = points.len();
    let mut results = Vec::new();
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    let mut label_names = Vec::new();
    for (i, p) in points.iter().enumerate() {
        let label = p.labels.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(" ");
        progress(&format!("[{}/{}] {figure} {label}", i + 1, total));
        label_names = p.labels.iter().map(|(k, _)| k.clone()).collect();
        match run_experiment(&p.config, options) {
            Ok(r) => {
                let mut row: Vec<String> = p.labels.iter().map(|(_, v)| v.clone()).collect();
                row.extend(summary_row(&r));
                rows.push(row);
                results.push(r);
            }
            Err(e) if figure != Figure::Fig1 => failures.push(format!("{label}: {e}")),
            Err(e) => return Err(e),
        }
    }
    let table = match figure {
        Figure::Fig1 => fig1_table(&results[0]),
        _ => {
            let mut columns = label_names;
            columns.extend(SUMMARY_COLUMNS.map(String::from));
            Table { columns, rows }
        }
    };
    Ok(FigureOutput {
        figure,
        table,
        results,
        failures,
    })
}
