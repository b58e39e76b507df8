//! Exact density-based clustering (DBSCAN) under cosine distance.

use super::RuleEmbedding;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub cluster_id: usize,
    /// Rule ids, sorted.
    pub members: Vec<String>,
    pub medoid: String,
    pub size: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Clustering {
    /// Sorted by size descending, then smallest member id.
    pub clusters: Vec<Cluster>,
    /// Rule ids in no cluster, sorted.
    pub noise: Vec<String>,
}

/// Unit vector, or `None` for the zero vector.
fn unit(v: &[f64]) -> Option<Vec<f64>> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    (n > 0.0).then(|| v.iter().map(|x| x / n).collect())
}

/// Cosine distance in [0, 2]. Two zero vectors are at distance 0; a zero
/// vector is at distance 1 from anything else.
pub fn cosine_distance(a: &[f64], b: &[f64]) -> f64 {
    dist(unit(a).as_deref(), unit(b).as_deref())
}

fn dist(a: Option<&[f64]>, b: Option<&[f64]>) -> f64 {
    match (a, b) {
        (Some(a), Some(b)) => (1.0 - a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>()).clamp(0.0, 2.0),
        (None, None) => 0.0,
        _ => 1.0,
    }
}

struct Dsu(Vec<usize>);

impl Dsu {
    fn find(&mut self, mut x: usize) -> usize {
        while self.0[x] != x {
            self.0[x] = self.0[self.0[x]];
            x = self.0[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.0[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// Cluster embeddings. A point is core when at least `min_pts` points (itself
/// included) lie within `eps`. Core points within `eps` of each other share a
/// cluster; a non-core point joins the cluster of its nearest core neighbour
/// (ties go to the smaller rule id); everything else is noise.
///
/// Output does not depend on input order. Panics unless `eps > 0` and
/// `min_pts >= 2`.
pub fn cluster_rules(embeddings: &[RuleEmbedding], eps: f64, min_pts: usize) -> Clustering {
    assert!(eps > 0.0 && min_pts >= 2, "eps must be positive and min_pts at least 2");
    let n = embeddings.len();
    let units: Vec<Option<Vec<f64>>> = embeddings.iter().map(|e| unit(&e.vector)).collect();
    let d = |i: usize, j: usize| dist(units[i].as_deref(), units[j].as_deref());
    let id = |i: usize| embeddings[i].rule_id.as_str();

    let mut counts = vec![1usize; n];
    for i in 0..n {
        for j in i + 1..n {
            if d(i, j) <= eps {
                counts[i] += 1;
                counts[j] += 1;
            }
        }
    }
    let core: Vec<bool> = counts.iter().map(|&c| c >= min_pts).collect();

    let mut dsu = Dsu((0..n).collect());
    let mut nearest: Vec<Option<(f64, usize)>> = vec![None; n];
    let closer = |cur: Option<(f64, usize)>, dj: f64, j: usize| match cur {
        None => true,
        Some((dc, c)) => dj < dc || (dj == dc && id(j) < id(c)),
    };
    for i in 0..n {
        for j in i + 1..n {
            let dij = d(i, j);
            if dij > eps {
                continue;
            }
            match (core[i], core[j]) {
                (true, true) => dsu.union(i, j),
                (true, false) if closer(nearest[j], dij, i) => nearest[j] = Some((dij, i)),
                (false, true) if closer(nearest[i], dij, j) => nearest[i] = Some((dij, j)),
                _ => {}
            }
        }
    }

    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    let mut noise = Vec::new();
    for i in 0..n {
        let anchor = if core[i] { Some(i) } else { nearest[i].map(|(_, c)| c) };
        match anchor {
            Some(a) => groups.entry(dsu.find(a)).or_default().push(i),
            None => noise.push(id(i).to_string()),
        }
    }

    let mut clusters: Vec<Cluster> = groups
        .into_values()
        .map(|members| {
            let medoid = members
                .iter()
                .map(|&m| (members.iter().map(|&o| d(m, o)).sum::<f64>(), m))
                .min_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(Ordering::Equal).then_with(|| id(a.1).cmp(id(b.1))))
                .map(|(_, m)| id(m).to_string())
                .expect("non-empty cluster");
            let mut ids: Vec<String> = members.iter().map(|&m| id(m).to_string()).collect();
            ids.sort();
            Cluster { cluster_id: 0, size: ids.len(), members: ids, medoid }
        })
        .collect();
    clusters.sort_by(|a, b| b.size.cmp(&a.size).then_with(|| a.members[0].cmp(&b.members[0])));
    for (k, c) in clusters.iter_mut().enumerate() {
        c.cluster_id = k;
    }
    noise.sort();
    Clustering { clusters, noise }
}

/// Member minimizing the summed cosine distance to its co-members; ties go to
/// the smaller rule id.
pub fn medoid(members: &[&RuleEmbedding]) -> Option<String> {
    let units: Vec<Option<Vec<f64>>> = members.iter().map(|e| unit(&e.vector)).collect();
    (0..members.len())
        .map(|i| ((0..members.len()).map(|j| dist(units[i].as_deref(), units[j].as_deref())).sum::<f64>(), i))
        .min_by(|a, b| {
            a.0.partial_cmp(&b.0).unwrap_or(Ordering::Equal).then_with(|| members[a.1].rule_id.cmp(&members[b.1].rule_id))
        })
        .map(|(_, i)| members[i].rule_id.clone())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankedCluster {
    pub rank: usize,
    pub cluster: Cluster,
    pub medoid_text: String,
}

/// The `k` largest clusters, ties broken by cluster id, with the medoid's rule
/// text looked up through `text_of`.
pub fn select_top_clusters<'a>(
    clusters: &[Cluster],
    k: usize,
    text_of: impl Fn(&str) -> Option<&'a str>,
) -> Vec<RankedCluster> {
    let mut sorted: Vec<&Cluster> = clusters.iter().collect();
    sorted.sort_by(|a, b| b.size.cmp(&a.size).then(a.cluster_id.cmp(&b.cluster_id)));
    sorted
        .into_iter()
        .take(k)
        .enumerate()
        .map(|(rank, c)| RankedCluster {
            rank: rank + 1,
            medoid_text: text_of(&c.medoid).unwrap_or_default().to_string(),
            cluster: c.clone(),
        })
        .collect()
}
