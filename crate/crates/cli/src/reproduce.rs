//! Shipped presets and the side-by-side comparison with published values.

use std::collections::BTreeMap;
use std::fmt;

use amglab::problems::Pattern;
use amglab::reference::{self, TwoGridBlock};
use clap::ValueEnum;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::runner::RateRow;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TableId {
    Table1,
    Table2,
    Fig2,
    Fig3,
    Fig4,
    Fig5,
}

impl fmt::Display for TableId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.to_possible_value().expect("named").get_name())
    }
}

impl TableId {
    pub fn preset(self) -> &'static str {
        match self {
            TableId::Table1 => include_str!("../presets/table1.toml"),
            TableId::Table2 => include_str!("../presets/table2.toml"),
            TableId::Fig2 => include_str!("../presets/fig2.toml"),
            TableId::Fig3 => include_str!("../presets/fig3.toml"),
            TableId::Fig4 => include_str!("../presets/fig4.toml"),
            TableId::Fig5 => include_str!("../presets/fig5.toml"),
        }
    }

    pub fn config(self) -> ExperimentConfig {
        ExperimentConfig::from_toml(self.preset()).expect("shipped presets parse")
    }
}

/// Acceptance rule for one compared value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Criterion {
    /// `|computed - published| <= tol`.
    Within(f64),
    AtMost(f64),
    Below(f64),
    Range(f64, f64),
    /// Reported for comparison only.
    Report,
}

impl Criterion {
    fn check(self, computed: f64, published: Option<f64>) -> Option<bool> {
        let ok = match self {
            Criterion::Within(tol) => (computed - published?).abs() <= tol,
            Criterion::AtMost(x) => computed <= x,
            Criterion::Below(x) => computed < x,
            Criterion::Range(lo, hi) => (lo..=hi).contains(&computed),
            Criterion::Report => return None,
        };
        Some(ok)
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Criterion::Within(t) => write!(f, "within {t}"),
            Criterion::AtMost(x) => write!(f, "<= {x}"),
            Criterion::Below(x) => write!(f, "< {x}"),
            Criterion::Range(lo, hi) => write!(f, "in [{lo}, {hi}]"),
            Criterion::Report => f.write_str("report"),
        }
    }
}

/// One line of `comparison.csv`.
#[derive(Debug, Clone, Serialize)]
pub struct Comparison {
    /// Reference cell, e.g. `table1.ideal[P1,N=16,k=1]`.
    pub tag: String,
    pub computed: f64,
    pub published: Option<f64>,
    pub criterion: String,
    /// Number of seeds averaged into `computed`.
    pub samples: usize,
    /// `pass`, `fail` or `report`.
    pub verdict: String,
}

impl Comparison {
    fn new(tag: String, computed: f64, samples: usize, published: Option<f64>, crit: Criterion) -> Self {
        let verdict = match crit.check(computed, published) {
            Some(true) => "pass",
            Some(false) => "fail",
            None => "report",
        };
        Self {
            tag,
            computed,
            published,
            criterion: crit.to_string(),
            samples,
            verdict: verdict.into(),
        }
    }

    pub fn line(&self) -> String {
        let published = self.published.map_or("-".to_string(), |p| format!("{p}"));
        format!(
            "{:6} {:40} computed {:<12.6} published {:<8} ({}, {} seed(s))",
            self.verdict.to_uppercase(),
            self.tag,
            self.computed,
            published,
            self.criterion,
            self.samples
        )
    }
}

type Key = (String, String, String, usize, u32);

/// Seed averages keyed by (study, method, problem, N, k). Failed cells
/// enter as NaN so the average fails every criterion.
fn averages(rows: &[RateRow]) -> BTreeMap<Key, (f64, usize)> {
    let mut acc: BTreeMap<Key, (f64, usize)> = BTreeMap::new();
    for r in rows {
        let e = acc
            .entry((r.study.clone(), r.method.clone(), r.problem.clone(), r.n, r.k))
            .or_insert((0.0, 0));
        e.0 += r.estimate;
        e.1 += 1;
    }
    acc.into_iter().map(|(k, (s, c))| (k, (s / c as f64, c))).collect()
}

fn two_grid_criterion(block: TwoGridBlock, p: Pattern, n: usize, k: u32, published: f64) -> Criterion {
    use Pattern::*;
    match (block, p) {
        (TwoGridBlock::Ideal, P4) => Criterion::Within(0.05),
        (TwoGridBlock::Ideal, _) => Criterion::Within(0.015),
        (TwoGridBlock::Optimal, P1 | P2) if published < 1e-3 => Criterion::AtMost(1e-3),
        (TwoGridBlock::Optimal, P1 | P2) => Criterion::Within(0.01),
        (TwoGridBlock::Optimal, _) => Criterion::Within(0.05),
        (TwoGridBlock::FRelax, P1) if k == 2 => Criterion::Within(0.01),
        (TwoGridBlock::FRelax, P2) if k == 4 => Criterion::Within(0.002),
        (TwoGridBlock::Sharp, P1) if k == 1 && n == 16 => Criterion::Range(0.22, 0.27),
        _ => Criterion::Report,
    }
}

fn block_name(b: TwoGridBlock) -> &'static str {
    match b {
        TwoGridBlock::Ideal => "ideal",
        TwoGridBlock::Sharp => "sharp",
        TwoGridBlock::FRelax => "frelax",
        TwoGridBlock::Optimal => "optimal",
    }
}

/// Builds the comparison for `id` from the rows of its preset run.
pub fn compare(id: TableId, rows: &[RateRow]) -> Vec<Comparison> {
    let avg = averages(rows);
    let get = |study: &str, method: &str, p: Pattern, n: usize, k: u32| {
        avg.get(&(study.to_string(), method.to_string(), p.to_string(), n, k)).copied()
    };
    let mut out = vec![];
    match id {
        TableId::Table1 => {
            let sources = [
                (TwoGridBlock::Ideal, "full", "ideal"),
                (TwoGridBlock::Sharp, "full", "cr_sharp"),
                (TwoGridBlock::FRelax, "frelax", "cr_frelax"),
                (TwoGridBlock::Optimal, "full", "optimal"),
            ];
            for (block, study, method) in sources {
                for n in reference::TWO_GRID_SIZES {
                    for p in Pattern::ALL_JUMP {
                        for k in reference::KS {
                            let (Some((v, c)), Some(published)) =
                                (get(study, method, p, n, k), reference::two_grid(block, n, p, k))
                            else {
                                continue;
                            };
                            let tag = format!("table1.{}[{p},N={n},k={k}]", block_name(block));
                            out.push(Comparison::new(tag, v, c, Some(published), two_grid_criterion(block, p, n, k, published)));
                        }
                    }
                }
            }
            let rb = [
                ("cr_frelax", Some(0.0), Criterion::AtMost(1e-12)),
                ("cr_sharp", Some(reference::SHARP_P4_REDBLACK), Criterion::Range(0.23, 0.27)),
                ("ideal", Some(reference::TRUE_P4_REDBLACK), Criterion::Within(0.005)),
            ];
            for (method, published, crit) in rb {
                if let Some((v, c)) = get("redblack", method, Pattern::P4, 32, 8) {
                    out.push(Comparison::new(format!("text.redblack.{method}[P4,N=32,k=8]"), v, c, published, crit));
                }
            }
        }
        TableId::Table2 => {
            for n in reference::BAMG_SIZES {
                for k in reference::KS {
                    let m = get("msymm", "bamg_msymm", Pattern::P4, n, k);
                    let i = get("identity", "bamg_identity", Pattern::P4, n, k);
                    if let Some((v, c)) = m {
                        let crit = if n == 33 || n == 65 { Criterion::Within(0.08) } else { Criterion::Report };
                        out.push(Comparison::new(format!("table2.msymm[P4,N={n},k={k}]"), v, c, reference::bamg(false, n, k), crit));
                    }
                    if let Some((v, c)) = i {
                        out.push(Comparison::new(
                            format!("table2.identity[P4,N={n},k={k}]"),
                            v,
                            c,
                            reference::bamg(true, n, k),
                            Criterion::Report,
                        ));
                    }
                    if let (Some((vm, c)), Some((vi, _)), true) = (m, i, n == 65 && k >= 4) {
                        out.push(Comparison::new(
                            format!("table2.msymm_minus_identity[P4,N={n},k={k}]"),
                            vm - vi,
                            c,
                            None,
                            Criterion::AtMost(0.0),
                        ));
                    }
                }
            }
        }
        TableId::Fig2 | TableId::Fig3 | TableId::Fig4 => {
            let (study, p, published, bound) = match id {
                TableId::Fig2 => ("gs", Pattern::P1, reference::MAXVOL_KAPPA_P1, 3.0),
                TableId::Fig3 => ("gs", Pattern::P2, reference::MAXVOL_KAPPA_P2, 3.0),
                _ => ("block", Pattern::P4, reference::MAXVOL_KAPPA_P4_BLOCK, 60.0),
            };
            for ((s, method, prob, n, k), (v, c)) in &avg {
                if s != study || *prob != p.to_string() {
                    continue;
                }
                let (published, crit) = match method.as_str() {
                    "maxvol" => (Some(published), Criterion::AtMost(bound)),
                    "maxvol_max_entry" => (None, Criterion::AtMost(1.0 + 1e-12)),
                    _ => (None, Criterion::Report),
                };
                out.push(Comparison::new(format!("{id}.{method}[{p},N={n},k={k}]"), *v, *c, published, crit));
            }
        }
        TableId::Fig5 => {
            for ((s, method, prob, n, k), (v, c)) in &avg {
                if method != "spectra" {
                    continue;
                }
                let crit = if prob == "P4" { Criterion::Below(0.25) } else { Criterion::Report };
                out.push(Comparison::new(format!("fig5.{s}.nonunit_fraction[{prob},N={n},k={k}]"), *v, *c, None, crit));
            }
        }
    }
    out
}
