//! Modal-path extraction from mixture sequences (MultiPAC).
//!
//! Components of the mixture at each prediction timestep are clustered
//! with a weight-aware DBSCAN; layer-by-layer, clusters attach to the
//! parent in the previous layer that contributes the largest summed weight
//! through shared component indices. Tracing each final-layer node back to
//! the root yields the modal paths, weighted by the (renormalized) leaf
//! cluster weight.
//!
//! DBSCAN specifics, chosen for determinism and mass preservation:
//! - The core test replaces the point count with the summed weight of the
//!   eps-neighbourhood (`>= min_weight`).
//! - Clusters are the connected components of core points under the eps
//!   relation; labels are numbered by the smallest member index.
//! - Border points attach to the cluster of their nearest core point
//!   (ties to the lowest core index), independent of expansion order.
//! - Noise points carry probability mass, so instead of being discarded
//!   they merge into the cluster with the nearest centroid. In the
//!   degenerate case where no core exists at all, every point becomes its
//!   own cluster.
//!
//! Cluster membership and parent assignment are discrete and act as
//! constants of the backward pass; centroids and path weights are
//! recomputed on the tape from mixture weights and means
//! ([`modal_paths_vars`]), so training gradients flow into both.
//!
//! Tree JSON layout (the CLI export format):
//!
//! ```json
//! {"layers": [[{"centroid": [x, y], "weight": 0.7,
//!               "members": [0, 2], "parent": null}, ...], ...]}
//! ```

use serde::{Deserialize, Serialize};

use crate::gmm::{GmmSequence, MdnStep};
use crate::numerics::{NumericsError, Result, Tensor, Var};

/// Clustering parameters. The defaults — an eps of roughly a body width
/// and a 5% mass floor — are exposed in every config surface.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MultipacConfig {
    /// DBSCAN neighbourhood radius, meters.
    pub eps: f64,
    /// Minimum summed neighbourhood weight for a core point.
    pub min_weight: f64,
}

impl Default for MultipacConfig {
    fn default() -> Self {
        MultipacConfig {
            eps: 0.5,
            min_weight: 0.05,
        }
    }
}

/// One cluster of mixture components at one prediction timestep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterNode {
    /// Prediction timestep (layer) this node belongs to.
    pub timestep: usize,
    /// Weighted mean of member component means.
    pub centroid: (f64, f64),
    /// Summed weight of member components.
    pub weight: f64,
    /// Mixture component indices belonging to this cluster.
    pub members: Vec<usize>,
    /// Index of the parent node in the previous layer (absent at layer 0).
    pub parent: Option<usize>,
}

/// Timestep-layered cluster tree. Every non-root node has exactly one
/// parent in the previous layer; layer node counts never exceed K.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModalPathTree {
    pub layers: Vec<Vec<ClusterNode>>,
}

/// A leaf-to-root path through the tree, in time order, with likelihood.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModalPath {
    pub points: Vec<(f64, f64)>,
    pub weight: f64,
}

/// Weight-aware DBSCAN over component means. Every point receives a label;
/// labels are dense from 0 and numbered by smallest member index.
pub fn weighted_dbscan(
    points: &[(f64, f64)],
    weights: &[f64],
    config: &MultipacConfig,
) -> Result<Vec<usize>> {
    let k = points.len();
    if k == 0 || weights.len() != k {
        return Err(NumericsError::Dimension {
            op: "weighted_dbscan",
            detail: format!("{} points vs {} weights", k, weights.len()),
        });
    }
    if !(config.eps > 0.0) {
        return Err(NumericsError::Usage("dbscan eps must be positive".into()));
    }
    let dist = |a: usize, b: usize| -> f64 {
        let (dx, dy) = (points[a].0 - points[b].0, points[a].1 - points[b].1);
        (dx * dx + dy * dy).sqrt()
    };

    // Core test: summed weight of the eps-neighbourhood (self included).
    let is_core: Vec<bool> = (0..k)
        .map(|i| {
            let mass: f64 = (0..k)
                .filter(|&j| dist(i, j) <= config.eps)
                .map(|j| weights[j])
                .sum();
            mass >= config.min_weight
        })
        .collect();

    const UNLABELED: usize = usize::MAX;
    let mut labels = vec![UNLABELED; k];

    // Connected components of cores under the eps relation, BFS in index
    // order so labels come out ordered by smallest member.
    let mut next = 0usize;
    for start in 0..k {
        if !is_core[start] || labels[start] != UNLABELED {
            continue;
        }
        let label = next;
        next += 1;
        let mut queue = vec![start];
        labels[start] = label;
        while let Some(p) = queue.pop() {
            for q in 0..k {
                if is_core[q] && labels[q] == UNLABELED && dist(p, q) <= config.eps {
                    labels[q] = label;
                    queue.push(q);
                }
            }
        }
    }

    if next == 0 {
        // No cores at all: fall back to singleton clusters.
        for (i, l) in labels.iter_mut().enumerate() {
            *l = i;
        }
        return Ok(labels);
    }

    // Border points join their nearest core's cluster.
    for i in 0..k {
        if labels[i] != UNLABELED || is_core[i] {
            continue;
        }
        let mut best: Option<(f64, usize)> = None;
        for j in 0..k {
            if is_core[j] && dist(i, j) <= config.eps {
                let d = dist(i, j);
                if best.map_or(true, |(bd, _)| d < bd) {
                    best = Some((d, labels[j]));
                }
            }
        }
        if let Some((_, label)) = best {
            labels[i] = label;
        }
    }

    // Noise merges into the cluster with the nearest centroid.
    let centroid_of = |label: usize, labels: &[usize]| -> (f64, f64) {
        let (mut sx, mut sy, mut sw) = (0.0, 0.0, 0.0);
        for j in 0..k {
            if labels[j] == label {
                sx += weights[j] * points[j].0;
                sy += weights[j] * points[j].1;
                sw += weights[j];
            }
        }
        if sw > 0.0 {
            (sx / sw, sy / sw)
        } else {
            // Zero-mass cluster: plain mean keeps the centroid defined.
            let members: Vec<usize> = (0..k).filter(|&j| labels[j] == label).collect();
            let n = members.len() as f64;
            (
                members.iter().map(|&j| points[j].0).sum::<f64>() / n,
                members.iter().map(|&j| points[j].1).sum::<f64>() / n,
            )
        }
    };
    let centroids: Vec<(f64, f64)> = (0..next).map(|l| centroid_of(l, &labels)).collect();
    for i in 0..k {
        if labels[i] != UNLABELED {
            continue;
        }
        let mut best = (f64::INFINITY, 0usize);
        for (l, c) in centroids.iter().enumerate() {
            let d = ((points[i].0 - c.0).powi(2) + (points[i].1 - c.1).powi(2)).sqrt();
            if d < best.0 {
                best = (d, l);
            }
        }
        labels[i] = best.1;
    }

    Ok(canonicalize(&labels))
}

/// Renumbers labels densely in order of first occurrence.
pub fn canonicalize(labels: &[usize]) -> Vec<usize> {
    let mut map: Vec<Option<usize>> = vec![None; labels.len()];
    let mut next = 0;
    labels
        .iter()
        .map(|&l| {
            *map[l].get_or_insert_with(|| {
                let v = next;
                next += 1;
                v
            })
        })
        .collect()
}

/// Builds the layered cluster tree for one agent's mixture sequence.
pub fn build_tree(gmm: &GmmSequence, config: &MultipacConfig) -> Result<ModalPathTree> {
    if gmm.steps.is_empty() {
        return Err(NumericsError::Usage("modal-path tree of an empty sequence".into()));
    }
    let mut layers: Vec<Vec<ClusterNode>> = Vec::with_capacity(gmm.steps.len());
    for (t, step) in gmm.steps.iter().enumerate() {
        let points: Vec<(f64, f64)> = step.components.iter().map(|c| c.mu).collect();
        let weights: Vec<f64> = step.components.iter().map(|c| c.pi).collect();
        let labels = weighted_dbscan(&points, &weights, config)?;
        let n_clusters = labels.iter().max().map_or(0, |m| m + 1);
        let mut nodes = Vec::with_capacity(n_clusters);
        for label in 0..n_clusters {
            let members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == label).collect();
            let weight: f64 = members.iter().map(|&i| weights[i]).sum();
            let centroid = if weight > 0.0 {
                (
                    members.iter().map(|&i| weights[i] * points[i].0).sum::<f64>() / weight,
                    members.iter().map(|&i| weights[i] * points[i].1).sum::<f64>() / weight,
                )
            } else {
                let n = members.len() as f64;
                (
                    members.iter().map(|&i| points[i].0).sum::<f64>() / n,
                    members.iter().map(|&i| points[i].1).sum::<f64>() / n,
                )
            };
            let parent = if t == 0 {
                None
            } else {
                Some(assign_parent(&members, &weights, &layers[t - 1], centroid))
            };
            nodes.push(ClusterNode {
                timestep: t,
                centroid,
                weight,
                members,
                parent,
            });
        }
        layers.push(nodes);
    }
    Ok(ModalPathTree { layers })
}

/// Parent choice: the previous-layer cluster whose members contribute the
/// largest summed current-step weight through shared component indices
/// (component-identity transition mass); nearest centroid as a fallback
/// when nothing is shared. Ties break to the lowest parent index.
fn assign_parent(
    members: &[usize],
    weights: &[f64],
    parents: &[ClusterNode],
    centroid: (f64, f64),
) -> usize {
    let mut best: Option<(f64, usize)> = None;
    for (pi, parent) in parents.iter().enumerate() {
        let mass: f64 = members
            .iter()
            .filter(|m| parent.members.contains(m))
            .map(|&m| weights[m])
            .sum();
        if mass > 0.0 && best.map_or(true, |(bm, _)| mass > bm) {
            best = Some((mass, pi));
        }
    }
    if let Some((_, pi)) = best {
        return pi;
    }
    let mut nearest = (f64::INFINITY, 0usize);
    for (pi, parent) in parents.iter().enumerate() {
        let d = ((centroid.0 - parent.centroid.0).powi(2)
            + (centroid.1 - parent.centroid.1).powi(2))
        .sqrt();
        if d < nearest.0 {
            nearest = (d, pi);
        }
    }
    nearest.1
}

impl ModalPathTree {
    pub fn horizon(&self) -> usize {
        self.layers.len()
    }

    /// Structural invariants: parents exist, layer weights each sum to 1.
    pub fn validate(&self, k: usize) -> Result<()> {
        for (t, layer) in self.layers.iter().enumerate() {
            if layer.is_empty() || layer.len() > k {
                return Err(NumericsError::Usage(format!(
                    "layer {} has {} nodes for K={}",
                    t,
                    layer.len(),
                    k
                )));
            }
            let total: f64 = layer.iter().map(|n| n.weight).sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(NumericsError::Usage(format!(
                    "layer {} weights sum to {}",
                    t, total
                )));
            }
            for node in layer {
                match (t, node.parent) {
                    (0, None) => {}
                    (0, Some(_)) => {
                        return Err(NumericsError::Usage("root layer node with parent".into()))
                    }
                    (_, None) => {
                        return Err(NumericsError::Usage(format!(
                            "non-root node in layer {} without parent",
                            t
                        )))
                    }
                    (_, Some(p)) if p >= self.layers[t - 1].len() => {
                        return Err(NumericsError::Usage(format!(
                            "layer {} parent index {} out of range",
                            t, p
                        )))
                    }
                    _ => {}
                }
            }
        }
        Ok(())
    }
}

/// One path per final-layer node, traced to the root and reversed into
/// time order; weights are leaf aggregate weights renormalized to sum to 1.
pub fn extract_modal_paths(tree: &ModalPathTree) -> Result<Vec<ModalPath>> {
    let Some(last) = tree.layers.last() else {
        return Err(NumericsError::Usage("empty modal-path tree".into()));
    };
    let total: f64 = last.iter().map(|n| n.weight).sum();
    if total <= 0.0 {
        return Err(NumericsError::Usage("leaf weights sum to zero".into()));
    }
    let mut paths = Vec::with_capacity(last.len());
    for leaf in last {
        let mut points = Vec::with_capacity(tree.layers.len());
        let mut node = leaf;
        let mut layer = tree.layers.len() - 1;
        loop {
            points.push(node.centroid);
            match node.parent {
                Some(p) => {
                    layer -= 1;
                    node = &tree.layers[layer][p];
                }
                None => break,
            }
        }
        points.reverse();
        paths.push(ModalPath {
            points,
            weight: leaf.weight / total,
        });
    }
    Ok(paths)
}

/// The path with maximal likelihood; ties break to the smallest index.
pub fn most_likely_path(paths: &[ModalPath]) -> Result<&ModalPath> {
    paths
        .iter()
        .reduce(|best, p| if p.weight > best.weight { p } else { best })
        .ok_or_else(|| NumericsError::Usage("no modal paths".into()))
}

/// Convenience: tree plus extracted paths for one agent.
pub fn modal_paths(gmm: &GmmSequence, config: &MultipacConfig) -> Result<(ModalPathTree, Vec<ModalPath>)> {
    let tree = build_tree(gmm, config)?;
    let paths = extract_modal_paths(&tree)?;
    Ok((tree, paths))
}

// ---------------------------------------------------------------------------
// Differentiable overlay

/// A modal path whose positions and weight are tape variables (1x1 each),
/// recomputed from the mixture weights and means under fixed memberships.
pub struct ModalPathVars {
    /// `(x, y)` vars per timestep, in time order.
    pub points: Vec<(Var, Var)>,
    pub weight: Var,
}

/// Rebuilds the paths of `tree` (computed from values) on the tape for one
/// agent, so centroids and weights stay differentiable with respect to the
/// mixture parameters. `steps` are the generator outputs; `agent` selects
/// the row.
pub fn modal_paths_vars(
    tree: &ModalPathTree,
    steps: &[MdnStep],
    agent: usize,
) -> Result<Vec<ModalPathVars>> {
    if steps.len() != tree.layers.len() {
        return Err(NumericsError::Dimension {
            op: "modal_paths_vars",
            detail: format!(
                "{} mixture steps vs {} tree layers",
                steps.len(),
                tree.layers.len()
            ),
        });
    }
    let Some(first) = steps.first() else {
        return Err(NumericsError::Usage("modal paths over zero steps".into()));
    };
    let k = first.k();
    let tape = first.pi.tape().clone();

    // Per-node centroids and aggregate weights, per layer.
    let mut node_vars: Vec<Vec<(Var, Var, Var)>> = Vec::with_capacity(tree.layers.len());
    for (step, layer) in steps.iter().zip(&tree.layers) {
        let select = {
            let mut s = Tensor::zeros(&[1, step.agents()]);
            s.values_mut()[agent] = 1.0;
            tape.constant(s)
        };
        let pi = select.matmul(&step.pi)?; // [1, K]
        let mux = select.matmul(&step.mu_x)?;
        let muy = select.matmul(&step.mu_y)?;
        let mut layer_vars = Vec::with_capacity(layer.len());
        for node in layer {
            let mut mask = Tensor::zeros(&[k, 1]);
            for &m in &node.members {
                mask.values_mut()[m] = 1.0;
            }
            let mask = tape.constant(mask);
            let mass = pi.matmul(&mask)?; // [1,1]
            // Guard the division: cluster mass can only vanish if every
            // member weight underflows.
            let mass_safe = mass.clamp_min(1e-12)?;
            let cx = pi.mul(&mux)?.matmul(&mask)?.div(&mass_safe)?;
            let cy = pi.mul(&muy)?.matmul(&mask)?.div(&mass_safe)?;
            layer_vars.push((cx, cy, mass));
        }
        node_vars.push(layer_vars);
    }

    let last_layer = tree.layers.len() - 1;
    let leaf_masses: Vec<&Var> = node_vars[last_layer].iter().map(|(_, _, m)| m).collect();
    let total = tape.concat_rows(&leaf_masses)?.sum()?.clamp_min(1e-12)?;

    let mut out = Vec::with_capacity(tree.layers[last_layer].len());
    for (leaf_idx, leaf) in tree.layers[last_layer].iter().enumerate() {
        let mut points_rev: Vec<(Var, Var)> = Vec::with_capacity(tree.layers.len());
        let mut node = leaf;
        let mut layer = last_layer;
        let mut idx = leaf_idx;
        loop {
            let (cx, cy, _) = &node_vars[layer][idx];
            points_rev.push((cx.clone(), cy.clone()));
            match node.parent {
                Some(p) => {
                    layer -= 1;
                    idx = p;
                    node = &tree.layers[layer][p];
                }
                None => break,
            }
        }
        points_rev.reverse();
        let weight = node_vars[last_layer][leaf_idx].2.div(&total)?;
        out.push(ModalPathVars {
            points: points_rev,
            weight,
        });
    }
    Ok(out)
}
