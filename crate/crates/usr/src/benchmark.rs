//! Every (metric, quality, level) correlation cell of a score table, and the
//! agreement table of a dataset.

use rayon::prelude::*;
use usr_core::corpus::{AnnotatedDataset, Quality};
use usr_core::stats::{
    inter_annotator_agreement, system_level_with, turn_level, Agreement, CorrelationReport, Level,
    PValueMethod, ScoreTable,
};

/// Cells whose correlation is undefined (constant input, too few systems)
/// are logged and left out.
pub fn correlation_reports(table: &ScoreTable, system_p: PValueMethod) -> Vec<CorrelationReport> {
    let metrics = table.metric_names();
    let cells: Vec<(&str, Quality, Level)> = metrics
        .iter()
        .flat_map(|m| {
            Quality::ALL
                .into_iter()
                .flat_map(move |q| [(*m, q, Level::Turn), (*m, q, Level::System)])
        })
        .collect();
    cells
        .par_iter()
        .filter_map(|&(m, q, level)| {
            let r = match level {
                Level::Turn => turn_level(table, m, q),
                Level::System => system_level_with(table, m, q, system_p),
            };
            r.map_err(|e| log::warn!("{m} / {q} / {level:?}: {e}")).ok()
        })
        .collect()
}

pub fn agreement_table(ds: &AnnotatedDataset) -> Vec<Agreement> {
    Quality::ALL
        .into_iter()
        .filter_map(|q| {
            inter_annotator_agreement(ds, q)
                .map_err(|e| log::warn!("agreement on {q}: {e}"))
                .ok()
        })
        .collect()
}
