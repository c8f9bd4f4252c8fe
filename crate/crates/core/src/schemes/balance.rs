//! Intra-node load balancing and the dispersion metric.

use crate::error::{Error, Result};

/// Split `total` node-box atoms into contiguous near-even slices, one per
/// rank; sizes differ by at most one with the remainder on the lowest ranks.
pub fn partition_node_box(total: usize, ranks_per_node: usize) -> Vec<(usize, usize)> {
    let base = total / ranks_per_node;
    let rem = total % ranks_per_node;
    let mut out = Vec::with_capacity(ranks_per_node);
    let mut start = 0;
    for k in 0..ranks_per_node {
        let len = base + usize::from(k < rem);
        out.push((start, len));
        start += len;
    }
    out
}

/// Dispersion metric: sqrt(population variance / mean) * 100, exactly the
/// printed formula (dimensionally sigma/sqrt(mu), not the plain ratio the
/// name suggests).
pub fn sdmr(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::UndefinedMetric("sdmr of an empty series".into()));
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    if !(mean > 0.0) {
        return Err(Error::UndefinedMetric(format!(
            "sdmr needs a positive mean, got {mean}"
        )));
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / values.len() as f64;
    Ok((var / mean).sqrt() * 100.0)
}

/// Min/avg/max and dispersion of one per-rank series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesStats {
    pub min: f64,
    pub avg: f64,
    pub max: f64,
    pub sdmr: f64,
}

fn series_stats(values: &[f64]) -> Result<SeriesStats> {
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let avg = values.iter().sum::<f64>() / values.len() as f64;
    Ok(SeriesStats {
        min,
        avg,
        max,
        sdmr: sdmr(values)?,
    })
}

/// Per-rank atom counts and pair-phase cost proxies. Evaluation cost is
/// count-proportional (evaluating two atoms takes about twice one), so the
/// proxy is the evaluated-atom count.
#[derive(Debug, Clone, PartialEq)]
pub struct BalanceReport {
    pub natoms: SeriesStats,
    pub cost_proxy: SeriesStats,
}

pub fn balance_report(per_rank_counts: &[usize], per_rank_cost: &[f64]) -> Result<BalanceReport> {
    if per_rank_counts.len() != per_rank_cost.len() {
        return Err(Error::Dimension(format!(
            "{} counts vs {} costs",
            per_rank_counts.len(),
            per_rank_cost.len()
        )));
    }
    let counts: Vec<f64> = per_rank_counts.iter().map(|&c| c as f64).collect();
    Ok(BalanceReport {
        natoms: series_stats(&counts)?,
        cost_proxy: series_stats(per_rank_cost)?,
    })
}
