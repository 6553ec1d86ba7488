//! Plain-text run artifacts.
//!
//! `metrics.tsv` holds everything that is a function of config and seed
//! (so repeated runs are byte-identical); wall-clock time goes to
//! `timings.tsv` next to it.
//!
//! ```text
//! # avaew metrics v1
//! # <config key> = <value>            (every key)
//! run_id  dataset  backbone  method  phase  auc  ctr  recon  wd  gd  gd_pair
//! ```

use std::fmt::Write as _;

use avaew_core::backbones::BackboneKind;

use crate::config::ExperimentConfig;
use crate::trainer::{AblationRow, PhaseReport, StepLog};

pub const METRICS_MAGIC: &str = "# avaew metrics v1";
pub const METRICS_COLUMNS: [&str; 11] = [
    "run_id", "dataset", "backbone", "method", "phase", "auc", "ctr", "recon", "wd", "gd", "gd_pair",
];

fn config_header(out: &mut String, cfg: &ExperimentConfig) {
    for line in cfg.to_text().lines().filter(|l| !l.is_empty() && !l.starts_with('#')) {
        let _ = writeln!(out, "# {line}");
    }
}

pub fn metrics_tsv(cfg: &ExperimentConfig, reports: &[PhaseReport]) -> String {
    let mut out = format!("{METRICS_MAGIC}\n");
    config_header(&mut out, cfg);
    out.push_str(&METRICS_COLUMNS.join("\t"));
    out.push('\n');
    for r in reports {
        let l = &r.losses;
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.6}",
            cfg.run_id,
            cfg.format.as_str(),
            cfg.backbone,
            r.method.as_str(),
            r.phase.as_str(),
            r.auc,
            l.ctr,
            l.recon,
            l.wd,
            l.gd,
            l.gd_pair
        );
    }
    out
}

/// One `stage<TAB>seconds` row per pipeline stage and phase.
pub fn timings_tsv(stages: &[(String, f64)]) -> String {
    let mut out = String::from("stage\tseconds\n");
    for (s, t) in stages {
        let _ = writeln!(out, "{s}\t{t:.3}");
    }
    out
}

pub fn trace_tsv(trace: &[StepLog]) -> String {
    let mut out = String::from("step\tctr\trecon\twd\tgd\tgd_pair\ttotal\tdisc_loss\tdisc_accuracy\n");
    for s in trace {
        let l = &s.losses;
        let _ = writeln!(
            out,
            "{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.4}",
            s.step, l.ctr, l.recon, l.wd, l.gd, l.gd_pair, l.total, s.disc_loss, s.disc_accuracy
        );
    }
    out
}

/// Warm-c AUC deltas of the published single-term ablations, in percent,
/// for (dataset, backbone), ordered recon, wd, gd, gd_pair.
pub fn reference_deltas(dataset: &str, backbone: BackboneKind) -> Option<[f64; 4]> {
    match (dataset, backbone) {
        ("taobao", BackboneKind::DeepFm) => Some([-0.81, -0.70, -0.74, -0.72]),
        ("taobao", BackboneKind::Ipnn) => Some([0.08, 0.10, -1.11, -0.02]),
        ("ml25m", BackboneKind::DeepFm) => Some([-0.37, 0.06, -0.03, -0.05]),
        ("ml25m", BackboneKind::Ipnn) => Some([-0.27, -0.60, -0.52, 0.08]),
        _ => None,
    }
}

/// Magnitude band the published deltas fall in (percent).
pub const REFERENCE_BAND_PCT: f64 = 1.2;

pub fn ablation_tsv(cfg: &ExperimentConfig, rows: &[AblationRow]) -> String {
    let mut out = String::from("# avaew ablation v1\n");
    config_header(&mut out, cfg);
    out.push_str("backbone\twithout\tfull_auc\tablated_auc\tdelta_pct\tin_reference_band\treference_pct\n");
    for r in rows {
        let pct = 100.0 * r.delta();
        let term = crate::trainer::ABLATIONS.iter().position(|t| *t == r.term);
        let reference = reference_deltas(cfg.format.as_str(), r.backbone)
            .zip(term)
            .map_or_else(|| "-".to_string(), |(d, i)| format!("{:+.2}", d[i]));
        let _ = writeln!(
            out,
            "{}\t{}\t{:.6}\t{:.6}\t{pct:+.3}\t{}\t{reference}",
            r.backbone,
            r.term,
            r.full_auc,
            r.ablated_auc,
            pct.abs() <= REFERENCE_BAND_PCT
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trainer::Method;
    use avaew_core::avaew::LossBreakdown;
    use avaew_core::features::Phase;

    #[test]
    fn metrics_have_one_record_per_report() {
        let cfg = ExperimentConfig::default();
        let reports: Vec<PhaseReport> = Phase::ALL
            .into_iter()
            .map(|phase| PhaseReport {
                method: Method::Base,
                phase,
                auc: 0.75,
                losses: LossBreakdown::default(),
                seconds: 1.0,
            })
            .collect();
        let text = metrics_tsv(&cfg, &reports);
        let records: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).skip(1).collect();
        assert_eq!(records.len(), 3);
        assert!(records[0].starts_with("default\tml1m\tdeepfm\tbase\twarm-a\t0.750000\t"));
        assert!(text.contains("# model.backbone = deepfm"));
        assert!(!text.contains("1.000"), "seconds must not leak into metrics");
    }

    #[test]
    fn ablation_rows_carry_reference() {
        let cfg = ExperimentConfig {
            format: crate::data::DatasetFormat::Ml25m,
            ..ExperimentConfig::default()
        };
        let rows = [AblationRow {
            backbone: BackboneKind::DeepFm,
            term: "recon",
            full_auc: 0.8,
            ablated_auc: 0.79,
        }];
        let text = ablation_tsv(&cfg, &rows);
        let last = text.lines().last().unwrap();
        assert_eq!(last, "deepfm\trecon\t0.800000\t0.790000\t-1.250\tfalse\t-0.37");
    }
}
