//! Structure-recovery and ranking metrics.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::AdjacencyMatrix;
use crate::orchestrator::EpisodeRecord;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StructureReport {
    pub tpr: f64,
    pub fdr: f64,
    pub f1: f64,
    pub auroc: f64,
    pub shd: usize,
    pub sid: usize,
    pub atb_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
struct Counts {
    tp: usize,
    fp: usize,
    positives: usize,
}

fn counts(truth: &AdjacencyMatrix, est: &AdjacencyMatrix) -> Counts {
    let tp = est.edges().filter(|&(i, j)| truth.get(i, j)).count();
    Counts { tp, fp: est.edge_count() - tp, positives: truth.edge_count() }
}

/// `TP / P`; an empty truth is recovered perfectly.
pub fn tpr(truth: &AdjacencyMatrix, est: &AdjacencyMatrix) -> Result<f64> {
    truth.check_same_d(est)?;
    let c = counts(truth, est);
    Ok(if c.positives == 0 { 1.0 } else { c.tp as f64 / c.positives as f64 })
}

/// `FP / (TP + FP)`, zero for an empty estimate.
pub fn fdr(truth: &AdjacencyMatrix, est: &AdjacencyMatrix) -> Result<f64> {
    truth.check_same_d(est)?;
    let c = counts(truth, est);
    let predicted = c.tp + c.fp;
    Ok(if predicted == 0 { 0.0 } else { c.fp as f64 / predicted as f64 })
}

pub fn f1(truth: &AdjacencyMatrix, est: &AdjacencyMatrix) -> Result<f64> {
    let recall = tpr(truth, est)?;
    let precision = 1.0 - fdr(truth, est)?;
    Ok(if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) })
}

/// Number of unordered node pairs whose connection differs; a reversed edge
/// costs 1.
pub fn shd(truth: &AdjacencyMatrix, est: &AdjacencyMatrix) -> Result<usize> {
    truth.check_same_d(est)?;
    let d = truth.d();
    let mut total = 0;
    for i in 0..d {
        for j in i + 1..d {
            if (truth.get(i, j), truth.get(j, i)) != (est.get(i, j), est.get(j, i)) {
                total += 1;
            }
        }
    }
    Ok(total)
}

/// Mann–Whitney AUROC; ties count one half. Returns 0.5 when a class is empty.
pub fn auroc(labels: &[bool], scores: &[f64]) -> Result<f64> {
    if labels.len() != scores.len() {
        return Err(Error::DimensionMismatch(format!("{} labels, {} scores", labels.len(), scores.len())));
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut start = 0;
    while start < idx.len() {
        let mut end = start;
        while end + 1 < idx.len() && scores[idx[end + 1]] == scores[idx[start]] {
            end += 1;
        }
        let mid_rank = (start + end) as f64 / 2.0 + 1.0;
        rank_sum += idx[start..=end].iter().filter(|&&k| labels[k]).count() as f64 * mid_rank;
        start = end + 1;
    }
    let pos = labels.iter().filter(|&&l| l).count() as f64;
    let neg = labels.len() as f64 - pos;
    if pos == 0.0 || neg == 0.0 {
        return Ok(0.5);
    }
    Ok((rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg))
}

fn ancestors_of(a: &AdjacencyMatrix, targets: &[bool]) -> Vec<bool> {
    let mut anc = targets.to_vec();
    let mut stack: Vec<usize> = (0..a.d()).filter(|&v| targets[v]).collect();
    while let Some(v) = stack.pop() {
        for p in a.parents(v) {
            if !anc[p] {
                anc[p] = true;
                stack.push(p);
            }
        }
    }
    anc
}

/// d-separation of `x` and `y` given `z` by moralising the ancestral graph.
pub fn d_separated(a: &AdjacencyMatrix, x: usize, y: usize, z: &[bool]) -> bool {
    let d = a.d();
    let mut seed = z.to_vec();
    seed[x] = true;
    seed[y] = true;
    let anc = ancestors_of(a, &seed);
    let mut adj = vec![vec![false; d]; d];
    for v in (0..d).filter(|&v| anc[v]) {
        let pa = a.parents(v);
        for &p in &pa {
            adj[p][v] = true;
            adj[v][p] = true;
        }
        for (k, &p) in pa.iter().enumerate() {
            for &q in &pa[k + 1..] {
                adj[p][q] = true;
                adj[q][p] = true;
            }
        }
    }
    let mut seen = vec![false; d];
    let mut stack = vec![x];
    seen[x] = true;
    while let Some(v) = stack.pop() {
        if v == y {
            return false;
        }
        for w in 0..d {
            if adj[v][w] && anc[w] && !z[w] && !seen[w] {
                seen[w] = true;
                stack.push(w);
            }
        }
    }
    true
}

/// Whether `z` is a valid adjustment set for the effect of `x` on `y` in `g`.
pub fn is_valid_adjustment(g: &AdjacencyMatrix, x: usize, y: usize, z: &[bool]) -> bool {
    let d = g.d();
    if z[x] || z[y] {
        return false;
    }
    let de_x = g.descendants(x);
    let mut target = vec![false; d];
    target[y] = true;
    let an_y = ancestors_of(g, &target);
    // Nodes on proper causal paths from x to y, excluding x.
    let causal: Vec<usize> = (0..d).filter(|&w| w != x && de_x[w] && an_y[w]).collect();
    for &w in &causal {
        let de_w = g.descendants(w);
        if z[w] || (0..d).any(|v| z[v] && de_w[v]) {
            return false;
        }
    }
    let mut backdoor = g.clone();
    for &w in &causal {
        backdoor.set(x, w, false);
    }
    d_separated(&backdoor, x, y, z)
}

/// Structural intervention distance: ordered pairs `(i, j)` whose interventional
/// distribution is misjudged when adjusting for the estimated parents of `i`.
pub fn sid(truth: &AdjacencyMatrix, est: &AdjacencyMatrix) -> Result<usize> {
    truth.check_same_d(est)?;
    let d = truth.d();
    let mut errors = 0;
    for i in 0..d {
        let de_i = truth.descendants(i);
        let mut z = vec![false; d];
        for p in est.parents(i) {
            z[p] = true;
        }
        for j in (0..d).filter(|&j| j != i) {
            let wrong = if z[j] { de_i[j] } else { !is_valid_adjustment(truth, i, j, &z) };
            errors += usize::from(wrong);
        }
    }
    Ok(errors)
}

/// All metrics for one graph. `edge_scores` (row-major `d x d`) feed the AUROC;
/// without them the binary estimate is used.
pub fn structure_metrics(
    truth: &AdjacencyMatrix,
    est: &AdjacencyMatrix,
    edge_scores: Option<&[Vec<f64>]>,
) -> Result<StructureReport> {
    truth.check_same_d(est)?;
    let d = truth.d();
    if let Some(s) = edge_scores {
        if s.len() != d || s.iter().any(|r| r.len() != d) {
            return Err(Error::DimensionMismatch(format!("edge scores must be {d} x {d}")));
        }
    }
    let mut labels = Vec::with_capacity(d * d);
    let mut scores = Vec::with_capacity(d * d);
    for i in 0..d {
        for j in (0..d).filter(|&j| j != i) {
            labels.push(truth.get(i, j));
            scores.push(match edge_scores {
                Some(s) => s[i][j],
                None => f64::from(u8::from(est.get(i, j))),
            });
        }
    }
    Ok(StructureReport {
        tpr: tpr(truth, est)?,
        fdr: fdr(truth, est)?,
        f1: f1(truth, est)?,
        auroc: auroc(&labels, &scores)?,
        shd: shd(truth, est)?,
        sid: sid(truth, est)?,
        atb_ms: 0.0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingReport {
    pub k: Vec<usize>,
    pub pr_at_k: Vec<f64>,
    pub ap_at_k: Vec<f64>,
    pub mrr: f64,
}

fn precision_at(rank: &[usize], roots: &[usize], k: usize) -> f64 {
    let hits = rank.iter().take(k).filter(|v| roots.contains(v)).count();
    hits as f64 / k.min(roots.len()) as f64
}

/// PR@K, AP@K for each requested `K`, and the mean reciprocal rank of the roots.
pub fn ranking_metrics(rank: &[usize], roots: &[usize], ks: &[usize]) -> Result<RankingReport> {
    if roots.is_empty() {
        return Err(Error::Empty("ranking metrics need at least one true root"));
    }
    if ks.contains(&0) {
        return Err(Error::InvalidConfig("K must be positive".into()));
    }
    let pr_at_k = ks.iter().map(|&k| precision_at(rank, roots, k)).collect();
    let ap_at_k = ks
        .iter()
        .map(|&k| (1..=k).map(|kk| precision_at(rank, roots, kk)).sum::<f64>() / k as f64)
        .collect();
    let mrr = roots
        .iter()
        .map(|r| rank.iter().position(|v| v == r).map_or(0.0, |p| 1.0 / (p + 1) as f64))
        .sum::<f64>()
        / roots.len() as f64;
    Ok(RankingReport { k: ks.to_vec(), pr_at_k, ap_at_k, mrr })
}

/// Mean `wall_ms` over all records, converged batches included.
pub fn atb(records: &[EpisodeRecord]) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::Empty("average time per batch of no records"));
    }
    Ok(records.iter().map(|r| r.wall_ms).sum::<f64>() / records.len() as f64)
}

/// Component-wise mean of several reports (SHD and SID are rounded).
pub fn average(reports: &[StructureReport]) -> Option<AveragedReport> {
    if reports.is_empty() {
        return None;
    }
    let n = reports.len() as f64;
    let mean = |f: fn(&StructureReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
    Some(AveragedReport {
        tpr: mean(|r| r.tpr),
        fdr: mean(|r| r.fdr),
        f1: mean(|r| r.f1),
        auroc: mean(|r| r.auroc),
        shd: mean(|r| r.shd as f64),
        sid: mean(|r| r.sid as f64),
        atb_ms: mean(|r| r.atb_ms),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AveragedReport {
    pub tpr: f64,
    pub fdr: f64,
    pub f1: f64,
    pub auroc: f64,
    pub shd: f64,
    pub sid: f64,
    pub atb_ms: f64,
}

/// Aligned text table: one row per state, then the mean over states.
pub fn summary_table(per_state: &[(usize, StructureReport)]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:>6} {:>7} {:>7} {:>7} {:>7} {:>7} {:>7} {:>10}", "state", "TPR", "FDR", "F1", "AUROC", "SHD", "SID", "ATB(ms)");
    for (t, r) in per_state {
        let _ = writeln!(
            out,
            "{:>6} {:>7.3} {:>7.3} {:>7.3} {:>7.3} {:>7} {:>7} {:>10.2}",
            t, r.tpr, r.fdr, r.f1, r.auroc, r.shd, r.sid, r.atb_ms
        );
    }
    let reports: Vec<StructureReport> = per_state.iter().map(|(_, r)| *r).collect();
    if let Some(m) = average(&reports) {
        let _ = writeln!(
            out,
            "{:>6} {:>7.3} {:>7.3} {:>7.3} {:>7.3} {:>7.2} {:>7.2} {:>10.2}",
            "mean", m.tpr, m.fdr, m.f1, m.auroc, m.shd, m.sid, m.atb_ms
        );
    }
    out
}
