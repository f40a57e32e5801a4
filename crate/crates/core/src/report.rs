//! Report assembly: per-attack quality aggregates, overhead tables, CSV
//! emission, and the normalized three-axis summary (effectiveness, quality,
//! cost) behind the benchmark's headline figure.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::evaluation::EvalReport;
use crate::overhead::OverheadRow;
use crate::quality::QualityReport;
use crate::{Error, Result};

/// Mean quality metrics per attack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityAggregate {
    pub attack_id: String,
    pub mean_cs: f64,
    pub mean_rouge_l: f64,
    pub mean_abs_ppl_delta: f64,
    pub mean_abs_fre_delta: f64,
    pub mean_ppl_before: f64,
    pub mean_ppl_after: f64,
    pub n: usize,
}

/// Group quality reports per attack and average (brute-force mean, unweighted).
pub fn aggregate_quality(reports: &[QualityReport]) -> Vec<QualityAggregate> {
    let mut groups: BTreeMap<&str, Vec<&QualityReport>> = BTreeMap::new();
    for r in reports {
        groups.entry(&r.attack_id).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|(attack_id, rs)| {
            let n = rs.len();
            let mean = |f: fn(&QualityReport) -> f64| rs.iter().map(|r| f(r)).sum::<f64>() / n as f64;
            QualityAggregate {
                attack_id: attack_id.to_string(),
                mean_cs: mean(|r| r.cs),
                mean_rouge_l: mean(|r| r.rouge_l),
                mean_abs_ppl_delta: mean(|r| r.ppl_delta.abs()),
                mean_abs_fre_delta: mean(|r| r.fre_delta.abs()),
                mean_ppl_before: mean(|r| r.ppl_before),
                mean_ppl_after: mean(|r| r.ppl_after),
                n,
            }
        })
        .collect()
}

/// Quality-axis composite weights; recorded in the summary output.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryWeights {
    pub cs: f64,
    pub rouge_l: f64,
    pub ppl: f64,
    pub fre: f64,
}

impl Default for SummaryWeights {
    fn default() -> Self {
        SummaryWeights {
            cs: 0.25,
            rouge_l: 0.25,
            ppl: 0.25,
            fre: 0.25,
        }
    }
}

/// Raw (un-normalized) axis inputs, always emitted alongside the summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawAxes {
    /// Mean over detector cells of (clean AUC - attacked AUC); higher better.
    pub auc_drop: f64,
    pub mean_cs: f64,
    pub mean_rouge_l: f64,
    pub mean_abs_ppl_delta: f64,
    pub mean_abs_fre_delta: f64,
    pub mean_wall_time_secs: f64,
}

/// One attack's normalized three-axis summary in [0, 1] (higher = better).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackSummary {
    pub attack_id: String,
    pub effectiveness: f64,
    pub quality: f64,
    pub cost: f64,
    pub raw: RawAxes,
    pub weights: SummaryWeights,
}

/// Min-max normalize to [0, 1]; a degenerate (zero-range) axis maps every
/// attack to 0.5.
fn min_max(values: &[f64]) -> Vec<f64> {
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if (hi - lo).abs() < 1e-15 {
        return vec![0.5; values.len()];
    }
    values.iter().map(|v| (v - lo) / (hi - lo)).collect()
}

/// Build the three-axis summary across attacks.
///
/// Effectiveness: min-maxed mean AUC drop versus the matching clean cell.
/// Quality: weighted composite of min-maxed CS and ROUGE-L (higher better) and
/// inverted min-maxed |dPPL| and |dFRE|. Cost: inverted min-maxed mean wall
/// time. Attacks missing any axis are excluded with a warning.
pub fn normalize_summary(
    eval_cells: &[EvalReport],
    quality: &[QualityAggregate],
    overhead: &[OverheadRow],
    weights: SummaryWeights,
) -> Result<(Vec<AttackSummary>, Vec<String>)> {
    let mut warnings = Vec::new();

    // clean AUC per (dataset, generator, detector)
    let clean: BTreeMap<(String, String, String), f64> = eval_cells
        .iter()
        .filter(|c| c.attack_id == "clean" && c.scenario_train_attack.is_none())
        .map(|c| {
            (
                (c.dataset.clone(), c.generator.clone(), c.detector_id.clone()),
                c.auc,
            )
        })
        .collect();

    let attack_ids: BTreeSet<String> = eval_cells
        .iter()
        .filter(|c| c.attack_id != "clean" && c.scenario_train_attack.is_none())
        .map(|c| c.attack_id.clone())
        .collect();

    let mut rows: Vec<(String, RawAxes)> = Vec::new();
    for attack in &attack_ids {
        let mut drops = Vec::new();
        for c in eval_cells
            .iter()
            .filter(|c| &c.attack_id == attack && c.scenario_train_attack.is_none())
        {
            let key = (c.dataset.clone(), c.generator.clone(), c.detector_id.clone());
            match clean.get(&key) {
                Some(clean_auc) => drops.push(clean_auc - c.auc),
                None => warnings.push(format!(
                    "attack {attack}: no clean cell for ({}, {}, {})",
                    c.dataset, c.generator, c.detector_id
                )),
            }
        }
        let q = quality.iter().find(|q| &q.attack_id == attack);
        let o: Vec<&OverheadRow> = overhead.iter().filter(|r| &r.attack_id == attack).collect();
        match (drops.is_empty(), q, o.is_empty()) {
            (false, Some(q), false) => {
                let n: usize = o.iter().map(|r| r.n).sum();
                let wall = o
                    .iter()
                    .map(|r| r.mean_wall_time_secs * r.n as f64)
                    .sum::<f64>()
                    / n as f64;
                rows.push((
                    attack.clone(),
                    RawAxes {
                        auc_drop: drops.iter().sum::<f64>() / drops.len() as f64,
                        mean_cs: q.mean_cs,
                        mean_rouge_l: q.mean_rouge_l,
                        mean_abs_ppl_delta: q.mean_abs_ppl_delta,
                        mean_abs_fre_delta: q.mean_abs_fre_delta,
                        mean_wall_time_secs: wall,
                    },
                ));
            }
            _ => warnings.push(format!(
                "attack {attack} excluded from the summary: missing axis data (effectiveness {}, quality {}, overhead {})",
                !drops.is_empty(),
                q.is_some(),
                !o.is_empty()
            )),
        }
    }

    if rows.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "the three-axis summary needs at least 2 attacks with complete data, got {}",
            rows.len()
        )));
    }

    let col = |f: fn(&RawAxes) -> f64| -> Vec<f64> { rows.iter().map(|(_, r)| f(r)).collect() };
    let eff = min_max(&col(|r| r.auc_drop));
    let cs = min_max(&col(|r| r.mean_cs));
    let rl = min_max(&col(|r| r.mean_rouge_l));
    let ppl = min_max(&col(|r| r.mean_abs_ppl_delta));
    let fre = min_max(&col(|r| r.mean_abs_fre_delta));
    let wall = min_max(&col(|r| r.mean_wall_time_secs));

    let wsum = weights.cs + weights.rouge_l + weights.ppl + weights.fre;
    let summaries = rows
        .into_iter()
        .enumerate()
        .map(|(i, (attack_id, raw))| AttackSummary {
            attack_id,
            effectiveness: eff[i],
            quality: (weights.cs * cs[i]
                + weights.rouge_l * rl[i]
                + weights.ppl * (1.0 - ppl[i])
                + weights.fre * (1.0 - fre[i]))
                / wsum,
            cost: 1.0 - wall[i],
            raw,
            weights,
        })
        .collect();
    Ok((summaries, warnings))
}

fn csv_field(s: &str) -> String {
    if s.contains(',') || s.contains('"') || s.contains('\n') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Evaluation cells as CSV.
pub fn eval_csv(cells: &[EvalReport]) -> String {
    let mut out = String::from(
        "dataset,generator,detector,attack,train_attack,auc,accuracy,precision,recall,f1,threshold,n_pos,n_neg,cells\n",
    );
    for c in cells {
        out.push_str(&format!(
            "{},{},{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{},{},{}\n",
            csv_field(&c.dataset),
            csv_field(&c.generator),
            csv_field(&c.detector_id),
            csv_field(&c.attack_id),
            csv_field(c.scenario_train_attack.as_deref().unwrap_or("")),
            c.auc,
            c.accuracy,
            c.precision,
            c.recall,
            c.f1,
            c.threshold,
            c.n_pos,
            c.n_neg,
            c.cells
        ));
    }
    out
}

/// Overhead table as CSV (token length x attack layout).
pub fn overhead_csv(rows: &[OverheadRow]) -> String {
    let mut out = String::from("attack,token_length,mean_wall_time_secs,mean_backend_calls,n\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{:.6},{:.3},{}\n",
            csv_field(&r.attack_id),
            r.token_length,
            r.mean_wall_time_secs,
            r.mean_backend_calls,
            r.n
        ));
    }
    out
}

/// Quality aggregates as CSV.
pub fn quality_csv(aggs: &[QualityAggregate]) -> String {
    let mut out = String::from(
        "attack,mean_cs,mean_rouge_l,mean_abs_ppl_delta,mean_abs_fre_delta,mean_ppl_before,mean_ppl_after,n\n",
    );
    for a in aggs {
        out.push_str(&format!(
            "{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{}\n",
            csv_field(&a.attack_id),
            a.mean_cs,
            a.mean_rouge_l,
            a.mean_abs_ppl_delta,
            a.mean_abs_fre_delta,
            a.mean_ppl_before,
            a.mean_ppl_after,
            a.n
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cell(attack: &str, detector: &str, auc: f64) -> EvalReport {
        EvalReport {
            dataset: "d".into(),
            generator: "g".into(),
            detector_id: detector.into(),
            attack_id: attack.into(),
            auc,
            accuracy: 0.5,
            precision: 0.5,
            recall: 0.5,
            f1: 0.5,
            threshold: 0.5,
            n_pos: 10,
            n_neg: 10,
            cells: 1,
            scenario_train_attack: None,
        }
    }

    fn quality_agg(attack: &str, cs: f64, rl: f64, dppl: f64, dfre: f64) -> QualityAggregate {
        QualityAggregate {
            attack_id: attack.into(),
            mean_cs: cs,
            mean_rouge_l: rl,
            mean_abs_ppl_delta: dppl,
            mean_abs_fre_delta: dfre,
            mean_ppl_before: 10.0,
            mean_ppl_after: 10.0 + dppl,
            n: 5,
        }
    }

    fn overhead_row(attack: &str, wall: f64) -> OverheadRow {
        OverheadRow {
            attack_id: attack.into(),
            token_length: 100,
            mean_wall_time_secs: wall,
            mean_backend_calls: 1.0,
            n: 4,
        }
    }

    #[test]
    fn dominant_attack_gets_ones() {
        let cells = vec![
            cell("clean", "det", 0.9),
            cell("a", "det", 0.2), // drop 0.7
            cell("b", "det", 0.8), // drop 0.1
        ];
        let quality = vec![
            quality_agg("a", 0.95, 0.9, 1.0, 0.5),
            quality_agg("b", 0.5, 0.4, 9.0, 8.0),
        ];
        let overhead = vec![overhead_row("a", 0.5), overhead_row("b", 3.0)];
        let (summaries, warnings) =
            normalize_summary(&cells, &quality, &overhead, SummaryWeights::default()).unwrap();
        assert!(warnings.is_empty());
        let a = summaries.iter().find(|s| s.attack_id == "a").unwrap();
        assert_eq!(a.effectiveness, 1.0);
        assert_eq!(a.quality, 1.0);
        assert_eq!(a.cost, 1.0);
        let b = summaries.iter().find(|s| s.attack_id == "b").unwrap();
        assert_eq!(b.effectiveness, 0.0);
        assert_eq!(b.cost, 0.0);
    }

    #[test]
    fn identical_attacks_drop_to_half() {
        let cells = vec![
            cell("clean", "det", 0.9),
            cell("a", "det", 0.5),
            cell("b", "det", 0.5),
        ];
        let quality = vec![
            quality_agg("a", 0.8, 0.8, 2.0, 2.0),
            quality_agg("b", 0.8, 0.8, 2.0, 2.0),
        ];
        let overhead = vec![overhead_row("a", 1.0), overhead_row("b", 1.0)];
        let (summaries, _) =
            normalize_summary(&cells, &quality, &overhead, SummaryWeights::default()).unwrap();
        for s in summaries {
            assert_eq!(s.effectiveness, 0.5);
            assert_eq!(s.quality, 0.5);
            assert_eq!(s.cost, 0.5);
        }
    }

    #[test]
    fn hand_computed_three_attack_normalization() {
        let cells = vec![
            cell("clean", "det", 0.9),
            cell("a", "det", 0.3), // drop 0.6
            cell("b", "det", 0.6), // drop 0.3
            cell("c", "det", 0.9), // drop 0.0
        ];
        let quality = vec![
            quality_agg("a", 0.9, 0.9, 0.0, 0.0),
            quality_agg("b", 0.5, 0.5, 5.0, 5.0),
            quality_agg("c", 0.7, 0.7, 10.0, 10.0),
        ];
        let overhead = vec![
            overhead_row("a", 2.0),
            overhead_row("b", 1.0),
            overhead_row("c", 4.0),
        ];
        let (summaries, _) =
            normalize_summary(&cells, &quality, &overhead, SummaryWeights::default()).unwrap();
        let b = summaries.iter().find(|s| s.attack_id == "b").unwrap();
        // effectiveness: (0.3 - 0.0) / (0.6 - 0.0) = 0.5
        assert!((b.effectiveness - 0.5).abs() < 1e-12);
        // cost: wall 1.0 is the minimum -> inverted 1.0
        assert_eq!(b.cost, 1.0);
        // quality by hand: cs mm = 0, rl mm = 0, ppl mm = 0.5 -> inverted 0.5,
        // fre mm = 0.5 -> 0.5; mean = (0 + 0 + 0.5 + 0.5) / 4 = 0.25
        assert!((b.quality - 0.25).abs() < 1e-12);
    }

    #[test]
    fn missing_axis_excludes_with_warning() {
        let cells = vec![
            cell("clean", "det", 0.9),
            cell("a", "det", 0.3),
            cell("b", "det", 0.6),
            cell("c", "det", 0.7),
        ];
        let quality = vec![
            quality_agg("a", 0.9, 0.9, 1.0, 1.0),
            quality_agg("b", 0.8, 0.8, 2.0, 2.0),
        ]; // c missing
        let overhead = vec![
            overhead_row("a", 1.0),
            overhead_row("b", 2.0),
            overhead_row("c", 3.0),
        ];
        let (summaries, warnings) =
            normalize_summary(&cells, &quality, &overhead, SummaryWeights::default()).unwrap();
        assert_eq!(summaries.len(), 2);
        assert!(warnings.iter().any(|w| w.contains("attack c excluded")));
    }

    #[test]
    fn quality_aggregate_matches_brute_force_mean() {
        let mk = |attack: &str, cs: f64| QualityReport {
            sample_id: "s".into(),
            attack_id: attack.into(),
            ppl_before: 10.0,
            ppl_after: 12.0,
            cs,
            rouge_l: 0.5,
            fre_before: 40.0,
            fre_after: 44.0,
            ppl_delta: 2.0,
            fre_delta: 4.0,
        };
        let reports = vec![mk("a", 0.8), mk("a", 0.6), mk("b", 1.0)];
        let aggs = aggregate_quality(&reports);
        let a = aggs.iter().find(|x| x.attack_id == "a").unwrap();
        assert!((a.mean_cs - 0.7).abs() < 1e-12);
        assert_eq!(a.n, 2);
        assert!((a.mean_abs_ppl_delta - 2.0).abs() < 1e-12);
    }
}
