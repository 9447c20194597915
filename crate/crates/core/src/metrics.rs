//! Evaluation measures: support-recovery F-score, explained variance of a
//! globally sparse projection, and gene-set enrichment scoring
//! (hypergeometric tests with Benjamini-Hochberg control).

use crate::error::{Error, Result};
use crate::evidence::SupportVector;
use crate::linalg::{covariance_spectrum, DataMatrix};
use crate::selection::renormalize;
use crate::special::log_gamma;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

/// Harmonic mean of precision and recall between two supports; 0 when
/// either support or the intersection is empty.
pub fn f_score(predicted: &SupportVector, truth: &SupportVector) -> Result<f64> {
    if predicted.p() != truth.p() {
        return Err(Error::Argument(format!(
            "support lengths differ: {} vs {}",
            predicted.p(),
            truth.p()
        )));
    }
    if predicted.q() == 0 || truth.q() == 0 {
        return Ok(0.0);
    }
    let inter = predicted
        .mask()
        .iter()
        .zip(truth.mask())
        .filter(|(&a, &b)| a && b)
        .count() as f64;
    if inter == 0.0 {
        return Ok(0.0);
    }
    let precision = inter / predicted.q() as f64;
    let recall = inter / truth.q() as f64;
    Ok(2.0 * precision * recall / (precision + recall))
}

/// Fraction of the total variance captured by the top-d components of the
/// renormalized (PCA on the active columns) projection:
/// sum of the top-d eigenvalues of X_v^T X_v over Tr(X^T X). For the
/// orthonormal renormalized basis this coincides with the adjusted-variance
/// criterion.
pub fn explained_variance(x: &DataMatrix, support: &SupportVector, d: usize) -> Result<f64> {
    if support.q() == 0 {
        return Err(Error::EmptySupport);
    }
    if support.p() != x.p() {
        return Err(Error::Argument("support length does not match p".into()));
    }
    // the renormalization itself (PCA on X_v) determines the subspace; its
    // captured variance is the top-d spectrum of the active Gram
    let _ = renormalize(x, support, d.max(1).min(support.q()).min(x.n()))?;
    let active = support.active_indices();
    let mut sub = nalgebra::DMatrix::zeros(x.n(), active.len());
    for (out_j, &j) in active.iter().enumerate() {
        sub.set_column(out_j, &x.values().column(j));
    }
    let sub = DataMatrix::new(sub)?;
    let spectrum = covariance_spectrum(&sub);
    let d_eff = d.min(spectrum.len());
    let captured: f64 = spectrum.iter().take(d_eff).sum::<f64>() * x.n() as f64;
    let total = x.trace_gram();
    if total <= 0.0 {
        return Err(Error::Data("matrix has zero total variance".into()));
    }
    Ok((captured / total).clamp(0.0, 1.0))
}

/// Upper tail P(X >= overlap) of the hypergeometric law with population
/// pop, pathway_size marked items and selected draws, computed in log
/// space.
pub fn hypergeom_sf(overlap: u64, pop: u64, pathway_size: u64, selected: u64) -> Result<f64> {
    if pathway_size > pop || selected > pop {
        return Err(Error::Argument(format!(
            "inconsistent counts: pathway {pathway_size}, selected {selected}, population {pop}"
        )));
    }
    if overlap > pathway_size.min(selected) {
        return Err(Error::Argument(format!(
            "overlap {overlap} exceeds min(pathway, selected) = {}",
            pathway_size.min(selected)
        )));
    }
    let lower = (pathway_size + selected).saturating_sub(pop);
    if overlap <= lower {
        return Ok(1.0);
    }
    let upper = pathway_size.min(selected);
    let ln_choose = |n: u64, k: u64| -> Result<f64> {
        Ok(log_gamma(n as f64 + 1.0)?
            - log_gamma(k as f64 + 1.0)?
            - log_gamma((n - k) as f64 + 1.0)?)
    };
    let denom = ln_choose(pop, selected)?;
    let mut terms = Vec::with_capacity((upper - overlap + 1) as usize);
    for j in overlap..=upper {
        let t = ln_choose(pathway_size, j)? + ln_choose(pop - pathway_size, selected - j)? - denom;
        terms.push(t);
    }
    let hi = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = terms.iter().map(|t| (t - hi).exp()).sum();
    Ok((hi + sum.ln()).exp().min(1.0))
}

/// Benjamini-Hochberg step-up adjustment, returned in input order.
pub fn bh_adjust(pvalues: &[f64]) -> Result<Vec<f64>> {
    if pvalues.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::Argument("p-values must lie in [0, 1]".into()));
    }
    let m = pvalues.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| pvalues[a].partial_cmp(&pvalues[b]).unwrap());
    let mut adjusted = vec![0.0; m];
    let mut running = 1.0f64;
    for (rank, &idx) in order.iter().enumerate().rev() {
        let scaled = (pvalues[idx] * m as f64 / (rank + 1) as f64).min(1.0);
        running = running.min(scaled);
        adjusted[idx] = running;
    }
    Ok(adjusted)
}

/// Named variable subsets over a fixed universe.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeneSetCollection {
    universe_size: usize,
    sets: Vec<(String, Vec<usize>)>,
}

impl GeneSetCollection {
    pub fn new(universe_size: usize, sets: Vec<(String, Vec<usize>)>) -> Result<Self> {
        if sets.is_empty() {
            return Err(Error::Argument("collection must contain at least one set".into()));
        }
        for (name, members) in &sets {
            if members.is_empty() {
                return Err(Error::Argument(format!("set '{name}' is empty")));
            }
            if members.iter().any(|&j| j >= universe_size) {
                return Err(Error::Argument(format!(
                    "set '{name}' has members outside the universe of size {universe_size}"
                )));
            }
        }
        Ok(GeneSetCollection { universe_size, sets })
    }

    /// Parses GMT content (per line: name, description, member identifiers,
    /// tab-separated) against the ordered variable-name list. Members not
    /// in the list are dropped; sets left empty are skipped and reported.
    pub fn from_gmt(content: &str, names: &[String]) -> Result<(Self, Vec<String>)> {
        let index: HashMap<&str, usize> =
            names.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
        let mut sets = Vec::new();
        let mut dropped = Vec::new();
        for (line_no, line) in content.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split('\t');
            let name = fields
                .next()
                .filter(|s| !s.is_empty())
                .ok_or_else(|| Error::Data(format!("GMT line {} has no set name", line_no + 1)))?;
            let _description = fields.next();
            let mut members: Vec<usize> =
                fields.filter_map(|m| index.get(m).copied()).collect();
            members.sort_unstable();
            members.dedup();
            if members.is_empty() {
                dropped.push(name.to_string());
            } else {
                sets.push((name.to_string(), members));
            }
        }
        let collection = GeneSetCollection::new(names.len(), sets)?;
        Ok((collection, dropped))
    }

    pub fn universe_size(&self) -> usize {
        self.universe_size
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    pub fn sets(&self) -> &[(String, Vec<usize>)] {
        &self.sets
    }
}

/// Enrichment scoring output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PeiResult {
    /// Fraction of sets whose adjusted p-value is below the threshold.
    pub pei: f64,
    pub enriched: Vec<String>,
    pub raw_pvalues: Vec<f64>,
    pub adjusted_pvalues: Vec<f64>,
}

/// One hypergeometric test per set, BH-adjusted across the whole
/// collection; PEI = fraction of sets enriched at the threshold.
pub fn pei(
    selection: &[usize],
    collection: &GeneSetCollection,
    threshold: f64,
) -> Result<PeiResult> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::Argument(format!("threshold must lie in [0, 1], got {threshold}")));
    }
    let pop = collection.universe_size() as u64;
    let mut sel: Vec<usize> = selection.to_vec();
    sel.sort_unstable();
    sel.dedup();
    if sel.iter().any(|&j| j >= collection.universe_size()) {
        return Err(Error::Argument("selection index outside the universe".into()));
    }
    let selected = sel.len() as u64;
    let is_selected: Vec<bool> = {
        let mut mask = vec![false; collection.universe_size()];
        for &j in &sel {
            mask[j] = true;
        }
        mask
    };
    let mut raw = Vec::with_capacity(collection.len());
    for (_, members) in collection.sets() {
        let overlap = members.iter().filter(|&&j| is_selected[j]).count() as u64;
        raw.push(hypergeom_sf(overlap, pop, members.len() as u64, selected)?);
    }
    let adjusted = bh_adjust(&raw)?;
    // strict cut ("lower than"); a threshold of 1 disables it entirely,
    // since adjusted values are capped at exactly 1
    let passes = |a: f64| a < threshold || threshold >= 1.0;
    let enriched: Vec<String> = collection
        .sets()
        .iter()
        .zip(&adjusted)
        .filter(|(_, &a)| passes(a))
        .map(|((name, _), _)| name.clone())
        .collect();
    let pei = enriched.len() as f64 / collection.len() as f64;
    Ok(PeiResult { pei, enriched, raw_pvalues: raw, adjusted_pvalues: adjusted })
}
