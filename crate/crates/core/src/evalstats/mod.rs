//! Evaluation: P/R/F1 with NA excluded, P@K%, precision-recall curves,
//! ranking metrics and the McNemar test.

mod mcnemar;
mod metrics;

pub use mcnemar::{build_contingency, chi2_1_sf, format_mcnemar_table, mcnemar, Contingency, McNemarResult, P_FLOOR};
pub use metrics::{
    evaluate, format_pr_csv, format_predictions, label_set, load_predictions, pr_curve, precision_at_percent, prf,
    ranking_metrics, save_predictions, EvalReport, LabelScore, PrPoint, Prf, PrfReport, PredictionRecord,
    RankingMetrics, Scored,
};
