//! The JSON inference report: a digest of one posterior scan.

use serde::Serialize;

use bsi_core::bayes::PosteriorTable;
use bsi_core::machine::DataSeries;

#[derive(Serialize)]
pub struct DataDigest {
    pub length: usize,
    pub alphabet_size: usize,
}

#[derive(Serialize)]
pub struct ConfigEcho {
    pub alpha: f64,
    pub beta: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<String>,
    pub top_k: usize,
}

#[derive(Serialize)]
pub struct MapSummary {
    pub id: String,
    pub n_states: usize,
    pub posterior: f64,
}

#[derive(Serialize)]
pub struct ReportRow {
    pub id: String,
    pub n_states: usize,
    pub log_evidence: f64,
    pub posterior: f64,
    pub start_posterior: Vec<f64>,
}

/// Rows are the top-K machines by posterior (ties to the smaller id); the
/// posterior over all accepted machines sums to one, so `tail_mass` makes
/// the truncation explicit: rows + tail = 1.
#[derive(Serialize)]
pub struct InferenceReport {
    pub data: DataDigest,
    pub config: ConfigEcho,
    pub total_topologies: usize,
    pub accepting_count: usize,
    pub map: Option<MapSummary>,
    pub rows: Vec<ReportRow>,
    pub tail_mass: f64,
}

pub fn build_report(
    table: &PosteriorTable,
    data: &DataSeries,
    config: ConfigEcho,
    total_topologies: usize,
) -> InferenceReport {
    let top_k = config.top_k;
    let mut order: Vec<usize> = table
        .rows()
        .iter()
        .enumerate()
        .filter(|(_, r)| r.accepted)
        .map(|(i, _)| i)
        .collect();
    // Descending posterior; equal posteriors fall back to id order, which
    // is the row order.
    order.sort_by(|&a, &b| {
        let (ra, rb) = (&table.rows()[a], &table.rows()[b]);
        rb.posterior
            .partial_cmp(&ra.posterior)
            .unwrap()
            .then(ra.id.cmp(&rb.id))
    });

    let rows: Vec<ReportRow> = order
        .iter()
        .take(top_k)
        .map(|&i| {
            let r = &table.rows()[i];
            ReportRow {
                id: r.id.clone(),
                n_states: r.n_states,
                log_evidence: r.log_evidence,
                posterior: r.posterior,
                start_posterior: r.start_posterior.clone(),
            }
        })
        .collect();
    let tail_mass: f64 = order
        .iter()
        .skip(top_k)
        .map(|&i| table.rows()[i].posterior)
        .sum();

    let map = table.map_row().map(|r| MapSummary {
        id: r.id.clone(),
        n_states: r.n_states,
        posterior: r.posterior,
    });

    InferenceReport {
        data: DataDigest {
            length: data.len(),
            alphabet_size: data.alphabet_size(),
        },
        config,
        total_topologies,
        accepting_count: table.accepting_count(),
        map,
        rows,
        tail_mass,
    }
}
