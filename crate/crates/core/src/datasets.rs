//! Toy dataset generators and the loaders that read them back.
//!
//! Three families: knowledge-graph triplet stores (TSV splits), small graphs
//! for link prediction / node classification (edge list + labels + features),
//! and arithmetic token sequences for masked reconstruction. All generators
//! are ChaCha-seeded and byte-for-byte reproducible.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

// ── knowledge-graph triplets ────────────────────────────────────────────────

/// Encoded triplet splits plus the vocabulary they are encoded against.
/// Relation ids `r < raw_relations` are as loaded; `r + raw_relations` is the
/// reciprocal direction, appended per split at load time so that tail-only
/// ranking covers head queries too.
#[derive(Debug, Clone)]
pub struct TripletStore {
    pub entities: Vec<String>,
    pub relations: Vec<String>,
    pub raw_relations: usize,
    pub train: Vec<[usize; 3]>,
    pub valid: Vec<[usize; 3]>,
    pub test: Vec<[usize; 3]>,
}

impl TripletStore {
    /// Read `train.tsv`, `valid.tsv`, `test.tsv` from a directory. The
    /// vocabulary is built from the union of all three splits (sorted,
    /// deduplicated). Duplicate lines stay in the split stream — only the
    /// known-true filter deduplicates.
    pub fn load(dir: &Path) -> Result<Self> {
        let train_raw = read_triplet_file(&dir.join("train.tsv"))?;
        let valid_raw = read_triplet_file(&dir.join("valid.tsv"))?;
        let test_raw = read_triplet_file(&dir.join("test.tsv"))?;

        let all = || train_raw.iter().chain(&valid_raw).chain(&test_raw);
        let mut entities: Vec<String> = all()
            .flat_map(|(h, _, t)| [h.clone(), t.clone()])
            .collect();
        entities.sort();
        entities.dedup();
        let mut relations: Vec<String> = all().map(|(_, r, _)| r.clone()).collect();
        relations.sort();
        relations.dedup();
        let raw_relations = relations.len();
        for r in 0..raw_relations {
            let name = format!("{}_inv", relations[r]);
            relations.push(name);
        }

        let encode = |raw: &[(String, String, String)], which: &str| -> Result<Vec<[usize; 3]>> {
            let mut out = Vec::with_capacity(raw.len() * 2);
            for (i, (h, r, t)) in raw.iter().enumerate() {
                let lookup = |name: &str, kind: &str, table: &[String]| {
                    table
                        .binary_search_by(|x| x.as_str().cmp(name))
                        .map_err(|_| Error::Parse {
                            path: format!("{}/{which}.tsv", dir.display()),
                            line: i + 1,
                            msg: format!("{kind} '{name}' missing from the vocabulary"),
                        })
                };
                let h = lookup(h, "entity", &entities)?;
                let r = lookup(r, "relation", &relations[..raw_relations])?;
                let t = lookup(t, "entity", &entities)?;
                out.push([h, r, t]);
            }
            // Reciprocal augmentation mirrors the stream as-is.
            let n = out.len();
            for i in 0..n {
                let [h, r, t] = out[i];
                out.push([t, r + raw_relations, h]);
            }
            Ok(out)
        };

        Ok(TripletStore {
            train: encode(&train_raw, "train")?,
            valid: encode(&valid_raw, "valid")?,
            test: encode(&test_raw, "test")?,
            entities,
            relations,
            raw_relations,
        })
    }

    pub fn num_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn num_relations(&self) -> usize {
        self.relations.len()
    }

    /// Every (h, r, t) across all splits — the filter set for ranking.
    pub fn all_true(&self) -> HashSet<[usize; 3]> {
        self.train
            .iter()
            .chain(&self.valid)
            .chain(&self.test)
            .copied()
            .collect()
    }
}

fn read_triplet_file(path: &Path) -> Result<Vec<(String, String, String)>> {
    let text = fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split('\t');
        match (fields.next(), fields.next(), fields.next(), fields.next()) {
            (Some(h), Some(r), Some(t), None) => {
                out.push((h.to_string(), r.to_string(), t.to_string()))
            }
            _ => {
                return Err(Error::Parse {
                    path: path.display().to_string(),
                    line: i + 1,
                    msg: "expected exactly 3 tab-separated fields".into(),
                })
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct KgManifest {
    pub kind: String,
    pub branching: usize,
    pub depth: usize,
    pub seed: u64,
    pub entities: usize,
    pub relations: usize,
    pub train: usize,
    pub valid: usize,
    pub test: usize,
}

/// Generate a complete `branching`-ary tree of the given depth as a
/// knowledge graph: one `parent_of` triple per edge, split so that every
/// entity still occurs in the train split. Validation and test each take up
/// to `max(1, round(0.1 · edges))` triples, chosen among edges whose
/// endpoints stay covered — tiny trees may yield shorter held-out splits.
pub fn gen_tree_kg(dir: &Path, branching: usize, depth: usize, seed: u64) -> Result<KgManifest> {
    if branching < 2 || depth < 1 {
        return Err(Error::InvalidArgument(format!(
            "tree needs branching ≥ 2 and depth ≥ 1, got {branching}/{depth}"
        )));
    }
    // Breadth-first construction: node 0 is the root.
    let mut edges: Vec<(usize, usize)> = Vec::new(); // (child, parent)
    let mut level: Vec<usize> = vec![0];
    let mut next_id = 1;
    for _ in 0..depth {
        let mut next_level = Vec::new();
        for &parent in &level {
            for _ in 0..branching {
                edges.push((next_id, parent));
                next_level.push(next_id);
                next_id += 1;
            }
        }
        level = next_level;
    }
    let num_entities = next_id;

    // Each triple doubles under reciprocal augmentation at load time.
    if edges.len() * 2 < 10 {
        return Err(Error::InvalidArgument(format!(
            "tree of {num_entities} entities yields only {} triplets with reciprocals \
             (fewer than 10); grow branching or depth",
            edges.len() * 2
        )));
    }

    let quota = ((edges.len() as f64) * 0.1).round().max(1.0) as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..edges.len()).collect();
    order.shuffle(&mut rng);

    // Occurrence counts guard the every-entity-in-train invariant.
    let mut occ = vec![0usize; num_entities];
    for &(c, p) in &edges {
        occ[c] += 1;
        occ[p] += 1;
    }
    let mut valid = Vec::new();
    let mut test = Vec::new();
    let mut held = vec![false; edges.len()];
    for &i in &order {
        if valid.len() == quota && test.len() == quota {
            break;
        }
        let (c, p) = edges[i];
        if occ[c] > 1 && occ[p] > 1 {
            occ[c] -= 1;
            occ[p] -= 1;
            held[i] = true;
            if valid.len() < quota {
                valid.push(edges[i]);
            } else {
                test.push(edges[i]);
            }
        }
    }
    let train: Vec<(usize, usize)> = edges
        .iter()
        .enumerate()
        .filter(|(i, _)| !held[*i])
        .map(|(_, e)| *e)
        .collect();

    fs::create_dir_all(dir)?;
    let write_split = |name: &str, rows: &[(usize, usize)]| -> Result<()> {
        let mut text = String::new();
        for &(c, p) in rows {
            text.push_str(&format!("n{p}\tparent_of\tn{c}\n"));
        }
        fs::write(dir.join(name), text)?;
        Ok(())
    };
    write_split("train.tsv", &train)?;
    write_split("valid.tsv", &valid)?;
    write_split("test.tsv", &test)?;

    let manifest = KgManifest {
        kind: "tree-kg".into(),
        branching,
        depth,
        seed,
        entities: num_entities,
        relations: 1,
        train: train.len(),
        valid: valid.len(),
        test: test.len(),
    };
    fs::write(
        dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest).expect("manifest serializes"),
    )?;
    Ok(manifest)
}

// ── graphs ──────────────────────────────────────────────────────────────────

/// Undirected graph with per-node labels and (optionally) features.
/// Edges are stored normalized (`u < v`) and deduplicated.
#[derive(Debug, Clone)]
pub struct Graph {
    pub num_nodes: usize,
    pub edges: Vec<(usize, usize)>,
    pub labels: Vec<usize>,
    pub features: Vec<Vec<f64>>,
}

impl Graph {
    pub fn num_classes(&self) -> usize {
        self.labels.iter().copied().max().map_or(0, |m| m + 1)
    }

    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.num_nodes];
        for &(u, v) in &self.edges {
            adj[u].push(v);
            adj[v].push(u);
        }
        adj
    }

    pub fn edge_set(&self) -> HashSet<(usize, usize)> {
        self.edges.iter().copied().collect()
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct GraphManifest {
    pub kind: String,
    pub nodes: usize,
    pub edges: usize,
    pub classes: usize,
    pub feature_dim: usize,
    pub seed: u64,
}

pub const GRAPH_FEATURE_DIM: usize = 8;

/// Class-conditional Gaussian features: one prototype per class, nodes get
/// their class prototype plus noise. Keeps node classification learnable
/// from features alone while the graph structure carries the geometry.
fn prototype_features(labels: &[usize], classes: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let protos: Vec<Vec<f64>> = (0..classes)
        .map(|_| {
            (0..GRAPH_FEATURE_DIM)
                .map(|_| crate::manifold::normal::<f64>(rng) * 0.5)
                .collect()
        })
        .collect();
    labels
        .iter()
        .map(|&c| {
            protos[c]
                .iter()
                .map(|&m| m + 0.35 * crate::manifold::normal::<f64>(rng))
                .collect()
        })
        .collect()
}

/// Random tree whose labels are depth parity, grown so the two classes stay
/// balanced within one node: each new node picks its parent uniformly among
/// existing nodes of the depth parity that produces the rarer class.
pub fn gen_tree_graph(num_nodes: usize, seed: u64) -> Result<Graph> {
    if num_nodes < 4 {
        return Err(Error::InvalidArgument(format!(
            "tree graph needs ≥ 4 nodes, got {num_nodes}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut depth = vec![0usize];
    let mut edges = Vec::with_capacity(num_nodes - 1);
    let mut class_count = [1usize, 0]; // root has depth 0 ⇒ class 0
    for child in 1..num_nodes {
        // To add a node of class c we need a parent of parity 1 − c.
        let want_class = if class_count[0] <= class_count[1] { 0 } else { 1 };
        let parent_parity = 1 - want_class;
        let candidates: Vec<usize> = (0..child)
            .filter(|&i| depth[i] % 2 == parent_parity)
            .collect();
        let parent = if candidates.is_empty() {
            rng.gen_range(0..child)
        } else {
            candidates[rng.gen_range(0..candidates.len())]
        };
        depth.push(depth[parent] + 1);
        class_count[depth[child] % 2] += 1;
        edges.push((parent.min(child), parent.max(child)));
    }
    let labels: Vec<usize> = depth.iter().map(|d| d % 2).collect();
    let features = prototype_features(&labels, 2, &mut rng);
    Ok(Graph {
        num_nodes,
        edges,
        labels,
        features,
    })
}

/// Two cliques of `num_nodes / 2` joined by a single bridge edge; labels are
/// clique membership.
pub fn gen_barbell_graph(num_nodes: usize, seed: u64) -> Result<Graph> {
    if num_nodes < 6 || num_nodes % 2 != 0 {
        return Err(Error::InvalidArgument(format!(
            "barbell needs an even node count ≥ 6, got {num_nodes}"
        )));
    }
    let half = num_nodes / 2;
    let mut edges = Vec::new();
    for side in 0..2 {
        let base = side * half;
        for i in 0..half {
            for j in i + 1..half {
                edges.push((base + i, base + j));
            }
        }
    }
    edges.push((half - 1, half)); // the bridge
    edges.sort();
    edges.dedup();
    let labels: Vec<usize> = (0..num_nodes).map(|i| i / half).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let features = prototype_features(&labels, 2, &mut rng);
    Ok(Graph {
        num_nodes,
        edges,
        labels,
        features,
    })
}

/// Write a graph as `edges.txt` (one `u v` pair per line), `labels.txt`
/// (`node label`), `features.tsv`, and a manifest.
pub fn write_graph(dir: &Path, graph: &Graph, kind: &str, seed: u64) -> Result<GraphManifest> {
    fs::create_dir_all(dir)?;
    let mut text = String::new();
    for &(u, v) in &graph.edges {
        text.push_str(&format!("{u}\t{v}\n"));
    }
    fs::write(dir.join("edges.txt"), text)?;

    let mut text = String::new();
    for (i, &l) in graph.labels.iter().enumerate() {
        text.push_str(&format!("{i}\t{l}\n"));
    }
    fs::write(dir.join("labels.txt"), text)?;

    let mut text = String::new();
    for (i, f) in graph.features.iter().enumerate() {
        text.push_str(&format!("{i}"));
        for v in f {
            text.push_str(&format!("\t{v:.17}"));
        }
        text.push('\n');
    }
    fs::write(dir.join("features.tsv"), text)?;

    let manifest = GraphManifest {
        kind: kind.into(),
        nodes: graph.num_nodes,
        edges: graph.edges.len(),
        classes: graph.num_classes(),
        feature_dim: graph.features.first().map_or(0, |f| f.len()),
        seed,
    };
    fs::write(
        dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest).expect("manifest serializes"),
    )?;
    Ok(manifest)
}

/// Read a graph back from a directory written by [`write_graph`].
pub fn load_graph(dir: &Path) -> Result<Graph> {
    let edges_path = dir.join("edges.txt");
    let labels_path = dir.join("labels.txt");

    let labels_text = fs::read_to_string(&labels_path)?;
    let mut labeled: Vec<(usize, usize)> = Vec::new();
    for (i, line) in labels_text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let mut it = line.split_whitespace();
        let parse = |s: Option<&str>, what: &str| -> Result<usize> {
            s.and_then(|v| v.parse().ok()).ok_or_else(|| Error::Parse {
                path: labels_path.display().to_string(),
                line: i + 1,
                msg: format!("expected {what}"),
            })
        };
        let node = parse(it.next(), "a node id")?;
        let label = parse(it.next(), "a class label")?;
        labeled.push((node, label));
    }
    labeled.sort();
    let num_nodes = labeled.len();
    for (expect, &(got, _)) in labeled.iter().enumerate() {
        if got != expect {
            return Err(Error::Parse {
                path: labels_path.display().to_string(),
                line: 0,
                msg: format!("node ids must cover 0..{num_nodes} exactly; missing {expect}"),
            });
        }
    }
    let labels: Vec<usize> = labeled.into_iter().map(|(_, l)| l).collect();

    let edges = load_edge_list(&edges_path, Some(num_nodes))?;

    let features_path = dir.join("features.tsv");
    let mut features = vec![Vec::new(); num_nodes];
    if features_path.exists() {
        let text = fs::read_to_string(&features_path)?;
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.is_empty() {
                continue;
            }
            let mut it = line.split('\t');
            let node: usize = it
                .next()
                .and_then(|v| v.parse().ok())
                .filter(|&n| n < num_nodes)
                .ok_or_else(|| Error::Parse {
                    path: features_path.display().to_string(),
                    line: i + 1,
                    msg: "expected a known node id".into(),
                })?;
            let row: std::result::Result<Vec<f64>, _> = it.map(str::parse).collect();
            features[node] = row.map_err(|e| Error::Parse {
                path: features_path.display().to_string(),
                line: i + 1,
                msg: format!("bad feature value: {e}"),
            })?;
        }
    }

    Ok(Graph {
        num_nodes,
        edges,
        labels,
        features,
    })
}

/// Parse a whitespace-separated edge list. Self-loops are an error; parallel
/// edges collapse. When `num_nodes` is given, out-of-range ids are an error.
pub fn load_edge_list(path: &Path, num_nodes: Option<usize>) -> Result<Vec<(usize, usize)>> {
    let text = fs::read_to_string(path)?;
    let mut edges = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let mut it = line.split_whitespace();
        let parse = |s: Option<&str>| -> Result<usize> {
            s.and_then(|v| v.parse().ok()).ok_or_else(|| Error::Parse {
                path: path.display().to_string(),
                line: i + 1,
                msg: "expected two node ids".into(),
            })
        };
        let u = parse(it.next())?;
        let v = parse(it.next())?;
        if u == v {
            return Err(Error::Parse {
                path: path.display().to_string(),
                line: i + 1,
                msg: format!("self-loop at node {u}"),
            });
        }
        if let Some(n) = num_nodes {
            if u >= n || v >= n {
                return Err(Error::Parse {
                    path: path.display().to_string(),
                    line: i + 1,
                    msg: format!("node id {} out of range 0..{n}", u.max(v)),
                });
            }
        }
        edges.push((u.min(v), u.max(v)));
    }
    edges.sort();
    edges.dedup();
    Ok(edges)
}

// ── task splits ─────────────────────────────────────────────────────────────

/// Link-prediction split: 85/5/10% of edges, plus an equal number of sampled
/// non-edges per split. Message passing must use only `train_pos`.
#[derive(Debug, Clone)]
pub struct LpSplit {
    pub train_pos: Vec<(usize, usize)>,
    pub valid_pos: Vec<(usize, usize)>,
    pub test_pos: Vec<(usize, usize)>,
    pub train_neg: Vec<(usize, usize)>,
    pub valid_neg: Vec<(usize, usize)>,
    pub test_neg: Vec<(usize, usize)>,
}

pub fn lp_split(graph: &Graph, seed: u64) -> Result<LpSplit> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = graph.edges.clone();
    edges.shuffle(&mut rng);
    let n = edges.len();
    let n_valid = ((n as f64) * 0.05).round().max(1.0) as usize;
    let n_test = ((n as f64) * 0.10).round().max(1.0) as usize;
    if n_valid + n_test >= n {
        return Err(Error::InvalidArgument(format!(
            "graph has too few edges ({n}) to hold out {n_valid}+{n_test}"
        )));
    }
    let valid_pos = edges[..n_valid].to_vec();
    let test_pos = edges[n_valid..n_valid + n_test].to_vec();
    let train_pos = edges[n_valid + n_test..].to_vec();

    let present = graph.edge_set();
    let mut used: HashSet<(usize, usize)> = HashSet::new();
    let mut draw_negatives = |count: usize| -> Result<Vec<(usize, usize)>> {
        let mut out = Vec::with_capacity(count);
        let mut attempts = 0usize;
        while out.len() < count {
            attempts += 1;
            if attempts > count * 1000 {
                return Err(Error::InvalidArgument(
                    "graph is too dense to sample distinct non-edges".into(),
                ));
            }
            let u = rng.gen_range(0..graph.num_nodes);
            let v = rng.gen_range(0..graph.num_nodes);
            if u == v {
                continue;
            }
            let e = (u.min(v), u.max(v));
            if present.contains(&e) || used.contains(&e) {
                continue;
            }
            used.insert(e);
            out.push(e);
        }
        Ok(out)
    };
    let train_neg = draw_negatives(train_pos.len())?;
    let valid_neg = draw_negatives(valid_pos.len())?;
    let test_neg = draw_negatives(test_pos.len())?;

    Ok(LpSplit {
        train_pos,
        valid_pos,
        test_pos,
        train_neg,
        valid_neg,
        test_neg,
    })
}

/// Node-classification split: 30/10/60% of nodes.
#[derive(Debug, Clone)]
pub struct NcSplit {
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
    pub test: Vec<usize>,
}

pub fn nc_split(num_nodes: usize, seed: u64) -> NcSplit {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut nodes: Vec<usize> = (0..num_nodes).collect();
    nodes.shuffle(&mut rng);
    let n_train = ((num_nodes as f64) * 0.30).round() as usize;
    let n_valid = ((num_nodes as f64) * 0.10).round() as usize;
    NcSplit {
        train: nodes[..n_train].to_vec(),
        valid: nodes[n_train..n_train + n_valid].to_vec(),
        test: nodes[n_train + n_valid..].to_vec(),
    }
}

// ── masked arithmetic sequences ─────────────────────────────────────────────

/// One training item: tokens `t_j = (start + j·stride) mod vocab`, with the
/// token at `masked_pos` to be reconstructed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskedSeq {
    pub tokens: Vec<usize>,
    pub masked_pos: usize,
    pub target: usize,
}

/// Deterministic enumeration of every (start, stride, masked position)
/// combination — `vocab × strides × seq_len` items.
pub fn gen_masked_sequences(vocab: usize, seq_len: usize, strides: &[usize]) -> Vec<MaskedSeq> {
    let mut out = Vec::with_capacity(vocab * strides.len() * seq_len);
    for start in 0..vocab {
        for &stride in strides {
            let tokens: Vec<usize> = (0..seq_len).map(|j| (start + j * stride) % vocab).collect();
            for masked_pos in 0..seq_len {
                out.push(MaskedSeq {
                    target: tokens[masked_pos],
                    tokens: tokens.clone(),
                    masked_pos,
                });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tree_kg_generation_and_reload() {
        let dir = tempfile::tempdir().unwrap();
        let m = gen_tree_kg(dir.path(), 3, 3, 7).unwrap();
        assert_eq!(m.entities, 40, "1 + 3 + 9 + 27 nodes");
        assert_eq!(m.train + m.valid + m.test, 39, "one triple per edge");
        assert_eq!(m.valid, 4, "10% of 39 rounds to 4");
        assert_eq!(m.test, 4);

        let store = TripletStore::load(dir.path()).unwrap();
        assert_eq!(store.num_entities(), 40);
        assert_eq!(store.relations, vec!["parent_of", "parent_of_inv"]);
        assert_eq!(store.train.len(), m.train * 2, "reciprocals double the split");
        assert_eq!(store.test.len(), m.test * 2);

        // Every entity appears in the (augmented) train split.
        let mut seen = vec![false; store.num_entities()];
        for t in &store.train {
            seen[t[0]] = true;
            seen[t[2]] = true;
        }
        assert!(seen.iter().all(|&s| s), "an entity is missing from train");

        // Reciprocal rows really are mirrored originals.
        let n = store.train.len() / 2;
        for i in 0..n {
            let [h, r, t] = store.train[i];
            assert_eq!(store.train[n + i], [t, r + 1, h]);
        }
    }

    #[test]
    fn tree_kg_is_deterministic_per_seed() {
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        let d3 = tempfile::tempdir().unwrap();
        gen_tree_kg(d1.path(), 3, 2, 11).unwrap();
        gen_tree_kg(d2.path(), 3, 2, 11).unwrap();
        gen_tree_kg(d3.path(), 3, 2, 12).unwrap();
        for f in ["train.tsv", "valid.tsv", "test.tsv"] {
            let a = fs::read(d1.path().join(f)).unwrap();
            let b = fs::read(d2.path().join(f)).unwrap();
            assert_eq!(a, b, "{f} must be byte-identical for equal seeds");
        }
        let a = fs::read(d1.path().join("train.tsv")).unwrap();
        let c = fs::read(d3.path().join("train.tsv")).unwrap();
        assert_ne!(a, c, "different seeds should shuffle differently");
    }

    #[test]
    fn tiny_trees_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let err = gen_tree_kg(dir.path(), 2, 1, 0).unwrap_err();
        assert!(err.to_string().contains("fewer than 10"), "{err}");
        assert!(gen_tree_kg(dir.path(), 1, 3, 0).is_err());

        // The smallest in-contract tree: 7 nodes, 6 triples, 12 with reciprocals.
        let ok = tempfile::tempdir().unwrap();
        let m = gen_tree_kg(ok.path(), 2, 2, 0).unwrap();
        assert_eq!(m.entities, 7);
        assert_eq!(m.train + m.valid + m.test, 6);
    }

    #[test]
    fn single_line_store_counts() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("train.tsv"), "a\tr\tb\n").unwrap();
        fs::write(dir.path().join("valid.tsv"), "").unwrap();
        fs::write(dir.path().join("test.tsv"), "").unwrap();
        let store = TripletStore::load(dir.path()).unwrap();
        assert_eq!(store.num_entities(), 2);
        assert_eq!(store.relations, vec!["r", "r_inv"]);
        assert_eq!(store.train, vec![[0, 0, 1], [1, 1, 0]]);
    }

    #[test]
    fn triplet_loader_vocab_duplicates_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("train.tsv"), "a\tr\tb\nb\tr\tc\n").unwrap();
        fs::write(dir.path().join("valid.tsv"), "a\tr\tz\n").unwrap();
        fs::write(dir.path().join("test.tsv"), "").unwrap();
        // The vocabulary spans all splits, so 'z' is known.
        let store = TripletStore::load(dir.path()).unwrap();
        assert_eq!(store.num_entities(), 4);
        assert!(store.entities.contains(&"z".to_string()));

        fs::write(dir.path().join("valid.tsv"), "a\tr\n").unwrap();
        let err = TripletStore::load(dir.path()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("3 tab-separated") && msg.contains(":1:"), "{msg}");

        // CRLF endings accepted; duplicate lines stay in the stream but the
        // known-true filter deduplicates.
        fs::write(dir.path().join("valid.tsv"), "a\tr\tb\r\na\tr\tb\r\n").unwrap();
        let store = TripletStore::load(dir.path()).unwrap();
        assert_eq!(store.valid.len(), 4, "2 duplicate rows + 2 reciprocals");
        let dup_count = store.all_true().iter().filter(|t| **t == store.valid[0]).count();
        assert_eq!(dup_count, 1, "filter holds each triplet once");
    }

    #[test]
    fn tree_graph_is_balanced_connected_and_feature_labeled() {
        let g = gen_tree_graph(63, 5).unwrap();
        assert_eq!(g.edges.len(), 62);
        let c1 = g.labels.iter().filter(|&&l| l == 1).count();
        let c0 = g.num_nodes - c1;
        assert!(c0.abs_diff(c1) <= 1, "classes {c0}/{c1} out of balance");

        // Connectivity via BFS.
        let adj = g.adjacency();
        let mut seen = vec![false; g.num_nodes];
        let mut queue = vec![0];
        seen[0] = true;
        while let Some(u) = queue.pop() {
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    queue.push(v);
                }
            }
        }
        assert!(seen.iter().all(|&s| s), "tree must be connected");

        assert!(g.features.iter().all(|f| f.len() == GRAPH_FEATURE_DIM));
        // Edges connect opposite classes (depth parity flips along edges).
        for &(u, v) in &g.edges {
            assert_ne!(g.labels[u], g.labels[v], "tree edges always cross classes");
        }
    }

    #[test]
    fn barbell_structure() {
        let g = gen_barbell_graph(10, 1).unwrap();
        // Two K5s plus the bridge.
        assert_eq!(g.edges.len(), 2 * 10 + 1);
        assert_eq!(g.labels[..5], [0, 0, 0, 0, 0]);
        assert_eq!(g.labels[5..], [1, 1, 1, 1, 1]);
        assert!(g.edge_set().contains(&(4, 5)), "bridge edge");
        assert!(gen_barbell_graph(7, 1).is_err(), "odd count rejected");
    }

    #[test]
    fn graph_write_load_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let g = gen_tree_graph(31, 9).unwrap();
        write_graph(dir.path(), &g, "tree-graph", 9).unwrap();
        let back = load_graph(dir.path()).unwrap();
        assert_eq!(back.num_nodes, g.num_nodes);
        let mut sorted = g.edges.clone();
        sorted.sort(); // the loader canonicalizes edge order
        assert_eq!(back.edges, sorted);
        assert_eq!(back.labels, g.labels);
        for (a, b) in back.features.iter().zip(&g.features) {
            for (x, y) in a.iter().zip(b) {
                assert!((x - y).abs() < 1e-15, "feature roundtrip drift");
            }
        }
    }

    #[test]
    fn edge_list_error_paths() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("edges.txt");
        fs::write(&p, "0 1\n1 1\n").unwrap();
        let err = load_edge_list(&p, None).unwrap_err();
        assert!(err.to_string().contains("self-loop"), "{err}");

        fs::write(&p, "0 1\n0 9\n").unwrap();
        let err = load_edge_list(&p, Some(5)).unwrap_err();
        assert!(err.to_string().contains("out of range"), "{err}");

        fs::write(&p, "0 1\n1 0\n0 1\n").unwrap();
        assert_eq!(load_edge_list(&p, None).unwrap(), vec![(0, 1)], "dedup both directions");
    }

    #[test]
    fn lp_split_proportions_and_disjointness() {
        let g = gen_barbell_graph(20, 3).unwrap(); // 2·C(10,2)+1 = 91 edges
        let s = lp_split(&g, 4).unwrap();
        assert_eq!(s.valid_pos.len(), 5, "5% of 91 rounds to 5");
        assert_eq!(s.test_pos.len(), 9, "10% of 91 rounds to 9");
        assert_eq!(s.train_pos.len(), 91 - 14);
        assert_eq!(s.train_neg.len(), s.train_pos.len());

        let present = g.edge_set();
        let negs: Vec<_> = s
            .train_neg
            .iter()
            .chain(&s.valid_neg)
            .chain(&s.test_neg)
            .collect();
        for &&e in &negs {
            assert!(!present.contains(&e), "negative {e:?} is a real edge");
        }
        let distinct: HashSet<_> = negs.iter().collect();
        assert_eq!(distinct.len(), negs.len(), "negatives must not repeat across splits");
    }

    #[test]
    fn nc_split_covers_all_nodes() {
        let s = nc_split(63, 2);
        assert_eq!(s.train.len(), 19, "30% of 63");
        assert_eq!(s.valid.len(), 6, "10% of 63");
        assert_eq!(s.test.len(), 63 - 25);
        let mut all: Vec<usize> = s.train.iter().chain(&s.valid).chain(&s.test).copied().collect();
        all.sort();
        assert_eq!(all, (0..63).collect::<Vec<_>>());
    }

    #[test]
    fn masked_sequences_enumerate_the_rule() {
        let items = gen_masked_sequences(12, 8, &[1, 2]);
        assert_eq!(items.len(), 12 * 2 * 8);
        for it in &items {
            assert_eq!(it.tokens.len(), 8);
            assert_eq!(it.target, it.tokens[it.masked_pos]);
        }
        // Spot-check the arithmetic: start 3, stride 2.
        let found = items
            .iter()
            .find(|it| it.tokens[0] == 3 && it.tokens[1] == 5)
            .unwrap();
        assert_eq!(found.tokens, vec![3, 5, 7, 9, 11, 1, 3, 5]);
        // Every (start, stride) pair contributes seq_len distinct mask positions.
        let distinct: HashSet<_> = items
            .iter()
            .map(|it| (it.tokens.clone(), it.masked_pos))
            .collect();
        assert_eq!(distinct.len(), items.len());
    }
}
