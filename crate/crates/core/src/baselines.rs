//! Reference switching policies: all-always-on, exhaustive search, and the
//! two clustering heuristics (MLC and THESIS). These provide oracles and
//! comparison curves for the learned policy.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::network::{evaluate_switch, MacroCellConfig, SwitchVector};
use crate::power::{LoadFraction, ProfileSet};

/// Exhaustive search refuses instances past this many small cells.
pub const ES_MAX_SBS: usize = 20;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BaselineError {
    #[error("exhaustive search is capped at {cap} small cells, got {n}")]
    TooManySbs { n: usize, cap: usize },
    #[error("k = {k} is outside 1..={n}")]
    InvalidK { k: usize, n: usize },
    #[error("threshold {0} is below the minimum of 2")]
    InvalidThreshold(usize),
}

/// A policy's pick for one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyResult {
    pub switch: SwitchVector,
    pub power_w: f64,
    pub feasible: bool,
}

fn result_for(
    switch: SwitchVector,
    loads: &[LoadFraction],
    cfg: &MacroCellConfig,
    profiles: &ProfileSet,
) -> PolicyResult {
    let outcome = evaluate_switch(loads, &switch, cfg, profiles);
    PolicyResult {
        switch,
        power_w: outcome.power_w,
        feasible: outcome.feasible,
    }
}

/// Keep every station on. Always feasible, never saves anything.
pub fn aao(loads: &[LoadFraction], profiles: &ProfileSet, cfg: &MacroCellConfig) -> PolicyResult {
    result_for(SwitchVector::all_on(cfg.n_bs()), loads, cfg, profiles)
}

/// Candidate ordering: lowest power first, then fewer sleeping cells, then
/// the lexicographically smallest switch vector.
fn better(candidate: &PolicyResult, incumbent: &PolicyResult) -> bool {
    if candidate.power_w != incumbent.power_w {
        return candidate.power_w < incumbent.power_w;
    }
    let (c_off, i_off) = (candidate.switch.n_off(), incumbent.switch.n_off());
    if c_off != i_off {
        return c_off < i_off;
    }
    candidate.switch < incumbent.switch
}

/// Enumerates every switch assignment over a subset of small cells (indices
/// into the small-cell list, 0-based) with all other cells held on, and
/// returns the best feasible one. The empty assignment (all on) is always a
/// candidate, so the result is always feasible.
fn best_over_subset(
    members: &[usize],
    loads: &[LoadFraction],
    profiles: &ProfileSet,
    cfg: &MacroCellConfig,
) -> PolicyResult {
    let n_sbs = cfg.n_sbs();
    let mut best = aao(loads, profiles, cfg);
    for mask in 1u64..(1u64 << members.len()) {
        let mut bits = vec![true; n_sbs];
        for (pos, &sbs) in members.iter().enumerate() {
            if mask & (1 << pos) != 0 {
                bits[sbs] = false;
            }
        }
        let candidate = result_for(SwitchVector::from_sbs_bits(&bits), loads, cfg, profiles);
        if candidate.feasible && better(&candidate, &best) {
            best = candidate;
        }
    }
    best
}

/// Full enumeration of all `2^(n_sbs)` assignments; the optimum under the
/// capacity constraint.
pub fn exhaustive_search(
    loads: &[LoadFraction],
    profiles: &ProfileSet,
    cfg: &MacroCellConfig,
) -> Result<PolicyResult, BaselineError> {
    let n = cfg.n_sbs();
    if n > ES_MAX_SBS {
        return Err(BaselineError::TooManySbs { n, cap: ES_MAX_SBS });
    }
    let members: Vec<usize> = (0..n).collect();
    Ok(best_over_subset(&members, loads, profiles, cfg))
}

/// One-dimensional cluster assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterAssignment {
    pub k: usize,
    pub labels: Vec<usize>,
    pub centroids: Vec<f64>,
}

impl ClusterAssignment {
    /// Member indices per cluster, in input order.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut groups = vec![Vec::new(); self.k];
        for (i, &label) in self.labels.iter().enumerate() {
            groups[label].push(i);
        }
        groups
    }
}

/// Lloyd iteration on scalar values. Initial centroids are sampled without
/// replacement from the data; emptied clusters steal the point farthest
/// from its centroid, so every cluster is non-empty on return.
pub fn kmeans(
    values: &[f64],
    k: usize,
    seed: u64,
    max_iters: usize,
) -> Result<ClusterAssignment, BaselineError> {
    let n = values.len();
    if k == 0 || k > n {
        return Err(BaselineError::InvalidK { k, n });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picks: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = i + rng.random_range(0..n - i);
        picks.swap(i, j);
    }
    let mut centroids: Vec<f64> = picks[..k].iter().map(|&i| values[i]).collect();
    let mut labels = vec![0usize; n];

    for _ in 0..max_iters.max(1) {
        let mut next = vec![0usize; n];
        for (i, &v) in values.iter().enumerate() {
            let mut best = 0usize;
            let mut best_d = (v - centroids[0]).abs();
            for (c, &centroid) in centroids.iter().enumerate().skip(1) {
                let d = (v - centroid).abs();
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            next[i] = best;
        }

        // Re-seat empty clusters with the worst-fitting point of a donor
        // cluster that can spare one.
        loop {
            let mut counts = vec![0usize; k];
            for &l in &next {
                counts[l] += 1;
            }
            let Some(empty) = counts.iter().position(|&c| c == 0) else {
                break;
            };
            let mut donor: Option<(usize, f64)> = None;
            for (i, &l) in next.iter().enumerate() {
                if counts[l] < 2 {
                    continue;
                }
                let d = (values[i] - centroids[l]).abs();
                if donor.map(|(_, best)| d > best).unwrap_or(true) {
                    donor = Some((i, d));
                }
            }
            match donor {
                Some((i, _)) => next[i] = empty,
                None => break,
            }
        }

        let mut sums = vec![0.0; k];
        let mut counts = vec![0usize; k];
        for (i, &l) in next.iter().enumerate() {
            sums[l] += values[i];
            counts[l] += 1;
        }
        let new_centroids: Vec<f64> = (0..k)
            .map(|c| {
                if counts[c] > 0 {
                    sums[c] / counts[c] as f64
                } else {
                    centroids[c]
                }
            })
            .collect();

        let converged = next == labels && new_centroids == centroids;
        labels = next;
        centroids = new_centroids;
        if converged {
            break;
        }
    }
    Ok(ClusterAssignment {
        k,
        labels,
        centroids,
    })
}

/// Clusters sorted by ascending mean load (ties by first member index).
fn clusters_by_load(assignment: &ClusterAssignment, sbs_loads: &[f64]) -> Vec<Vec<usize>> {
    let mut groups: Vec<Vec<usize>> = assignment
        .members()
        .into_iter()
        .filter(|g| !g.is_empty())
        .collect();
    groups.sort_by(|a, b| {
        let mean = |g: &Vec<usize>| g.iter().map(|&i| sbs_loads[i]).sum::<f64>() / g.len() as f64;
        mean(a).partial_cmp(&mean(b)).unwrap().then(a[0].cmp(&b[0]))
    });
    groups
}

/// Multi-level clustering: for each k, cluster the small cells by load and
/// greedily sleep whole clusters in ascending mean-load order while the
/// macro can absorb them; keep the lowest-power outcome over all k, with
/// all-on as the fallback.
pub fn mlc(
    loads: &[LoadFraction],
    profiles: &ProfileSet,
    cfg: &MacroCellConfig,
    k_range: std::ops::RangeInclusive<usize>,
    seed: u64,
) -> PolicyResult {
    let n_sbs = cfg.n_sbs();
    let sbs_loads: Vec<f64> = loads[1..].iter().map(|l| l.get()).collect();
    let mut best = aao(loads, profiles, cfg);
    for k in k_range {
        if k == 0 || k > n_sbs {
            continue;
        }
        let assignment = match kmeans(&sbs_loads, k, seed, 100) {
            Ok(a) => a,
            Err(_) => continue,
        };
        let mut bits = vec![true; n_sbs];
        for cluster in clusters_by_load(&assignment, &sbs_loads) {
            let mut tentative = bits.clone();
            for &i in &cluster {
                tentative[i] = false;
            }
            let outcome = evaluate_switch(
                loads,
                &SwitchVector::from_sbs_bits(&tentative),
                cfg,
                profiles,
            );
            if !outcome.feasible {
                break;
            }
            bits = tentative;
        }
        let candidate = result_for(SwitchVector::from_sbs_bits(&bits), loads, cfg, profiles);
        if better(&candidate, &best) {
            best = candidate;
        }
    }
    best
}

/// Threshold-based hybrid: cluster the small cells, split any cluster larger
/// than `threshold` in place until all fit, run an exhaustive search inside
/// each cluster with the rest held on, and return the lowest-power candidate
/// (all-on included).
pub fn thesis(
    loads: &[LoadFraction],
    profiles: &ProfileSet,
    cfg: &MacroCellConfig,
    threshold: usize,
    seed: u64,
) -> Result<PolicyResult, BaselineError> {
    if threshold < 2 {
        return Err(BaselineError::InvalidThreshold(threshold));
    }
    let n_sbs = cfg.n_sbs();
    let sbs_loads: Vec<f64> = loads[1..].iter().map(|l| l.get()).collect();

    let mut clusters: Vec<Vec<usize>> = if n_sbs == 0 {
        vec![]
    } else {
        vec![(0..n_sbs).collect()]
    };
    while let Some(pos) = clusters.iter().position(|c| c.len() > threshold) {
        let oversized = clusters.remove(pos);
        let values: Vec<f64> = oversized.iter().map(|&i| sbs_loads[i]).collect();
        let sub = kmeans(&values, 2, seed, 100)?;
        let mut halves = vec![Vec::new(), Vec::new()];
        for (local, &global) in oversized.iter().enumerate() {
            halves[sub.labels[local]].push(global);
        }
        // Splits are non-empty by the kmeans contract, so sizes strictly
        // shrink and the loop terminates.
        clusters.insert(pos, halves.pop().unwrap());
        clusters.insert(pos, halves.pop().unwrap());
    }

    let mut best = aao(loads, profiles, cfg);
    for cluster in &clusters {
        let candidate = best_over_subset(cluster, loads, profiles, cfg);
        if better(&candidate, &best) {
            best = candidate;
        }
    }
    Ok(best)
}
