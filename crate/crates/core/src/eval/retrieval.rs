//! Cosine-ranked retrieval and mean average precision.

use serde::Serialize;

use crate::error::{invalid, shape_err, Result};
use crate::linalg::{dot, Matrix};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RetrievalReport {
    /// Mean AP over queries with at least one relevant gallery item.
    pub map: f64,
    /// AP per query; `None` for queries excluded for lack of relevant items.
    pub per_query_ap: Vec<Option<f64>>,
    pub evaluated_queries: usize,
    pub excluded_queries: usize,
}

fn cosine(a: &[f64], na: f64, b: &[f64], nb: f64) -> f64 {
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot(a, b) / (na * nb)
    }
}

/// Gallery indices by descending cosine similarity to `query`; equal
/// similarities keep gallery order.
pub fn rank_gallery(query: &[f64], gallery: &Matrix) -> Vec<usize> {
    let nq = dot(query, query).sqrt();
    let sims: Vec<f64> = gallery
        .row_iter()
        .map(|g| cosine(query, nq, g, dot(g, g).sqrt()))
        .collect();
    let mut order: Vec<usize> = (0..gallery.rows()).collect();
    order.sort_by(|&a, &b| sims[b].total_cmp(&sims[a]).then(a.cmp(&b)));
    order
}

/// Mean of precision@rank over the ranks where relevant items appear.
pub fn average_precision(ranking: &[usize], relevant: &[usize]) -> Option<f64> {
    if relevant.is_empty() {
        return None;
    }
    let mut is_rel = vec![false; ranking.len()];
    for &r in relevant {
        if r < is_rel.len() {
            is_rel[r] = true;
        }
    }
    let total = is_rel.iter().filter(|&&b| b).count();
    if total == 0 {
        return None;
    }
    let mut hits = 0;
    let mut sum = 0.0;
    for (pos, &g) in ranking.iter().enumerate() {
        if is_rel[g] {
            hits += 1;
            sum += hits as f64 / (pos + 1) as f64;
        }
    }
    Some(sum / total as f64)
}

pub fn retrieval_map(
    queries: &Matrix,
    gallery: &Matrix,
    relevance: &[Vec<usize>],
) -> Result<RetrievalReport> {
    if queries.cols() != gallery.cols() {
        return shape_err(format!(
            "queries have dimension {}, gallery {}",
            queries.cols(),
            gallery.cols()
        ));
    }
    if relevance.len() != queries.rows() {
        return shape_err(format!(
            "{} queries but {} relevance sets",
            queries.rows(),
            relevance.len()
        ));
    }
    for (q, rel) in relevance.iter().enumerate() {
        if let Some(&bad) = rel.iter().find(|&&g| g >= gallery.rows()) {
            return invalid(format!(
                "query {q} lists gallery item {bad}, gallery has {} items",
                gallery.rows()
            ));
        }
    }
    let mut rel_sorted: Vec<Vec<usize>> = relevance.to_vec();
    rel_sorted.iter_mut().for_each(|r| {
        r.sort_unstable();
        r.dedup();
    });
    let per_query_ap: Vec<Option<f64>> = crate::par::Execution::default().map(queries.rows(), |q| {
        if rel_sorted[q].is_empty() {
            return None;
        }
        average_precision(&rank_gallery(queries.row(q), gallery), &rel_sorted[q])
    });
    let aps: Vec<f64> = per_query_ap.iter().flatten().copied().collect();
    let map = if aps.is_empty() {
        0.0
    } else {
        aps.iter().sum::<f64>() / aps.len() as f64
    };
    Ok(RetrievalReport {
        map,
        evaluated_queries: aps.len(),
        excluded_queries: per_query_ap.len() - aps.len(),
        per_query_ap,
    })
}

/// Relevance sets from labels: gallery items sharing the query's label.
pub fn relevance_from_labels(query_labels: &[usize], gallery_labels: &[usize]) -> Vec<Vec<usize>> {
    query_labels
        .iter()
        .map(|q| {
            gallery_labels
                .iter()
                .enumerate()
                .filter(|(_, g)| *g == q)
                .map(|(i, _)| i)
                .collect()
        })
        .collect()
}
