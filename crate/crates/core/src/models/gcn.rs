//! Graph convolution on the hyperboloid.
//!
//! Each layer shares one linear transform across query, key, and value
//! roles: `x_iˡ = Att(HL(x_iˡ⁻¹), {HL(x_jˡ⁻¹)}, {HL(x_jˡ⁻¹)})` over the
//! neighbors of node `i` (plus the node itself when `include_self` is on).
//! Two decoders cover the toy tasks: a Fermi–Dirac edge decoder for link
//! prediction and class-embedding distance logits for node classification.

use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::layers::{attention, lift_spatial_t, squared_distance_t, LinearCfg, LorentzLinear};
use crate::manifold::{self, Curvature};
use crate::params::{Constraint, Param, ParamKind, StepCtx};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Fermi–Dirac edge probability `(exp((d² − r)/t) + 1)⁻¹`, i.e.
/// `σ((r − d²)/t)`: monotone decreasing in the squared distance, 0.5 at the
/// decision radius `r`.
pub fn fermi_dirac<T: Scalar>(d2: T, r: T, t: T) -> Result<T> {
    if t <= T::zero() {
        return Err(Error::domain(
            "fermi_dirac",
            format!("temperature must be positive, got {t}"),
        ));
    }
    let z = (d2 - r) / t;
    // Evaluate the saturating branch directly so huge z cannot overflow.
    Ok(if z >= T::zero() {
        let e = (-z).exp();
        e / (e + T::one())
    } else {
        T::one() / (z.exp() + T::one())
    })
}

#[derive(Debug, Clone)]
pub struct GcnConfig {
    /// Spatial dimensionality of every hidden layer's output.
    pub dim: usize,
    /// Number of stacked convolution layers.
    pub layers: usize,
    /// Whether a node's own transformed feature joins its keys/values.
    pub include_self: bool,
    pub dropout: f64,
    /// Sigmoid-gain init λ for the layer transforms.
    pub gain_init: f64,
    /// Init std for learnable node embeddings (link-prediction input).
    pub init_std: f64,
}

impl Default for GcnConfig {
    fn default() -> Self {
        GcnConfig {
            dim: 16,
            layers: 2,
            include_self: true,
            dropout: 0.0,
            gain_init: 2.5,
            init_std: 0.05,
        }
    }
}

/// Where node representations come from.
enum NodeInput<T> {
    /// Fixed per-node spatial features, lifted onto the sheet.
    Features(Vec<Vec<T>>),
    /// Learnable `[N, dim]` spatial embeddings.
    Embeddings(Param<T>),
}

enum Decoder<T> {
    /// Fermi–Dirac link decoder: decision radius `r` and temperature `t`.
    FermiDirac { r: Param<T>, t: Param<T> },
    /// `[C, dim]` class points; logits are negated squared distances.
    Classes(Param<T>),
}

pub struct GcnModel<T: Scalar> {
    curv: Curvature<T>,
    num_nodes: usize,
    include_self: bool,
    input: NodeInput<T>,
    layers: Vec<LorentzLinear<T>>,
    decoder: Decoder<T>,
}

impl<T: Scalar> GcnModel<T> {
    fn build_layers(
        in_spatial: usize,
        cfg: &GcnConfig,
        curv: Curvature<T>,
        rng: &mut ChaCha8Rng,
    ) -> Result<Vec<LorentzLinear<T>>> {
        if cfg.dim == 0 || cfg.layers == 0 {
            return Err(Error::InvalidArgument(format!(
                "need dim ≥ 1 and ≥ 1 layer, got {}/{}",
                cfg.dim, cfg.layers
            )));
        }
        let lin_cfg = LinearCfg {
            dropout: cfg.dropout,
            gain_init: cfg.gain_init,
            ..LinearCfg::default()
        };
        Ok((0..cfg.layers)
            .map(|l| {
                let in_len = if l == 0 { in_spatial + 1 } else { cfg.dim + 1 };
                LorentzLinear::new(&format!("gcn.layer{l}"), in_len, cfg.dim, curv, lin_cfg, rng)
            })
            .collect())
    }

    /// Link-prediction variant: learnable node embeddings in, Fermi–Dirac
    /// edge decoder out.
    pub fn link_prediction(
        num_nodes: usize,
        curv: Curvature<T>,
        cfg: &GcnConfig,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        if num_nodes < 2 {
            return Err(Error::InvalidArgument(format!(
                "link prediction needs ≥ 2 nodes, got {num_nodes}"
            )));
        }
        let layers = Self::build_layers(cfg.dim, cfg, curv, rng)?;
        let emb_data: Vec<T> = (0..num_nodes * cfg.dim)
            .map(|_| manifold::normal::<T>(rng) * T::c(cfg.init_std))
            .collect();
        let input = NodeInput::Embeddings(Param::new(
            "gcn.node_emb",
            vec![num_nodes, cfg.dim],
            emb_data,
            ParamKind::LorentzSpatial,
        ));
        let decoder = Decoder::FermiDirac {
            r: Param::new("gcn.fd.r", vec![1], vec![T::c(2.0)], ParamKind::Euclidean),
            t: Param::new("gcn.fd.t", vec![1], vec![T::one()], ParamKind::Euclidean)
                .with_constraint(Constraint::MinValue(1e-3)),
        };
        Ok(GcnModel {
            curv,
            num_nodes,
            include_self: cfg.include_self,
            input,
            layers,
            decoder,
        })
    }

    /// Node-classification variant: fixed input features, class-embedding
    /// decoder.
    pub fn node_classification(
        features: Vec<Vec<T>>,
        num_classes: usize,
        curv: Curvature<T>,
        cfg: &GcnConfig,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let feat_dim = features.first().map_or(0, |f| f.len());
        if features.is_empty() || feat_dim == 0 {
            return Err(Error::InvalidArgument(
                "node classification needs nonempty feature vectors".into(),
            ));
        }
        if features.iter().any(|f| f.len() != feat_dim) {
            return Err(Error::InvalidArgument(
                "all nodes must share one feature dimension".into(),
            ));
        }
        if num_classes < 2 {
            return Err(Error::InvalidArgument(format!(
                "need ≥ 2 classes, got {num_classes}"
            )));
        }
        let num_nodes = features.len();
        let layers = Self::build_layers(feat_dim, cfg, curv, rng)?;
        let class_data: Vec<T> = (0..num_classes * cfg.dim)
            .map(|_| manifold::normal::<T>(rng) * T::c(cfg.init_std))
            .collect();
        let decoder = Decoder::Classes(Param::new(
            "gcn.class",
            vec![num_classes, cfg.dim],
            class_data,
            ParamKind::LorentzSpatial,
        ));
        Ok(GcnModel {
            curv,
            num_nodes,
            include_self: cfg.include_self,
            input: NodeInput::Features(features),
            layers,
            decoder,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn curvature(&self) -> Curvature<T> {
        self.curv
    }

    pub fn num_classes(&self) -> Option<usize> {
        match &self.decoder {
            Decoder::Classes(p) => Some(p.shape()[0]),
            Decoder::FermiDirac { .. } => None,
        }
    }

    /// Parameters in a fixed order: node embeddings (if learnable), layer
    /// transforms, decoder.
    pub fn params(&self) -> Vec<&Param<T>> {
        let mut out = Vec::new();
        if let NodeInput::Embeddings(p) = &self.input {
            out.push(p);
        }
        for l in &self.layers {
            out.extend(l.params());
        }
        match &self.decoder {
            Decoder::FermiDirac { r, t } => {
                out.push(r);
                out.push(t);
            }
            Decoder::Classes(p) => out.push(p),
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut out = Vec::new();
        if let NodeInput::Embeddings(p) = &mut self.input {
            out.push(p);
        }
        for l in &mut self.layers {
            out.extend(l.params_mut());
        }
        match &mut self.decoder {
            Decoder::FermiDirac { r, t } => {
                out.push(r);
                out.push(t);
            }
            Decoder::Classes(p) => out.push(p),
        }
        out
    }

    fn input_points<'t>(&self, ctx: &StepCtx<'t, T>) -> Result<Vec<Tensor<'t, T>>> {
        match &self.input {
            NodeInput::Features(rows) => rows
                .iter()
                .map(|row| {
                    lift_spatial_t(&Tensor::constant(&[row.len()], row.clone()), self.curv)
                })
                .collect(),
            NodeInput::Embeddings(p) => {
                let table = ctx.param(p);
                (0..self.num_nodes)
                    .map(|i| lift_spatial_t(&table.row(i)?, self.curv))
                    .collect()
            }
        }
    }

    /// Run the full stack; returns one manifold point per node. Message
    /// passing follows `adjacency` (whatever edge set the task allows), so
    /// link prediction can pass a train-edges-only neighborhood.
    pub fn forward<'t>(
        &self,
        ctx: &StepCtx<'t, T>,
        adjacency: &[Vec<usize>],
    ) -> Result<Vec<Tensor<'t, T>>> {
        if adjacency.len() != self.num_nodes {
            return Err(Error::InvalidArgument(format!(
                "adjacency covers {} nodes, model has {}",
                adjacency.len(),
                self.num_nodes
            )));
        }
        for (i, nbrs) in adjacency.iter().enumerate() {
            if let Some(&j) = nbrs.iter().find(|&&j| j >= self.num_nodes) {
                let _ = i;
                return Err(Error::UnknownId {
                    kind: "node",
                    id: j,
                    count: self.num_nodes,
                });
            }
        }
        let mut x = self.input_points(ctx)?;
        for layer in &self.layers {
            let transformed: Vec<Tensor<'t, T>> = x
                .iter()
                .map(|xi| layer.forward(ctx, xi))
                .collect::<Result<_>>()?;
            let mut next = Vec::with_capacity(self.num_nodes);
            for i in 0..self.num_nodes {
                let mut kv: Vec<Tensor<'t, T>> =
                    adjacency[i].iter().map(|&j| transformed[j].clone()).collect();
                if self.include_self {
                    kv.push(transformed[i].clone());
                }
                if kv.is_empty() {
                    // Isolated node with self excluded: keep its own feature.
                    next.push(transformed[i].clone());
                    continue;
                }
                let mut out = attention(&[transformed[i].clone()], &kv, &kv, self.curv)?;
                next.push(out.pop().expect("one query yields one output"));
            }
            x = next;
        }
        Ok(x)
    }

    /// Taped Fermi–Dirac logit `(r − d²(u, v))/t` for one node pair.
    fn edge_logit<'t>(
        &self,
        ctx: &StepCtx<'t, T>,
        reps: &[Tensor<'t, T>],
        u: usize,
        v: usize,
    ) -> Result<Tensor<'t, T>> {
        let (r, t) = match &self.decoder {
            Decoder::FermiDirac { r, t } => (ctx.param(r), ctx.param(t)),
            Decoder::Classes(_) => {
                return Err(Error::Config(
                    "this model has a class decoder, not a link decoder".into(),
                ))
            }
        };
        for id in [u, v] {
            if id >= reps.len() {
                return Err(Error::UnknownId {
                    kind: "node",
                    id,
                    count: reps.len(),
                });
            }
        }
        let d2 = squared_distance_t(&reps[u], &reps[v], self.curv)?;
        r.sub(&d2)?.div(&t)
    }

    /// Edge probability `σ((r − d²)/t)`.
    pub fn edge_probability<'t>(
        &self,
        ctx: &StepCtx<'t, T>,
        reps: &[Tensor<'t, T>],
        u: usize,
        v: usize,
    ) -> Result<Tensor<'t, T>> {
        Ok(self.edge_logit(ctx, reps, u, v)?.sigmoid())
    }

    /// Binary cross-entropy over positive and negative edge sets.
    pub fn lp_loss<'t>(
        &self,
        ctx: &StepCtx<'t, T>,
        reps: &[Tensor<'t, T>],
        positives: &[(usize, usize)],
        negatives: &[(usize, usize)],
    ) -> Result<Tensor<'t, T>> {
        if positives.is_empty() || negatives.is_empty() {
            return Err(Error::InvalidArgument(
                "link-prediction loss needs both positive and negative edges".into(),
            ));
        }
        let mut total: Option<Tensor<'t, T>> = None;
        let mut add = |t: Tensor<'t, T>| -> Result<()> {
            total = Some(match total.take() {
                Some(acc) => acc.add(&t)?,
                None => t,
            });
            Ok(())
        };
        for &(u, v) in positives {
            add(log_sigmoid(&self.edge_logit(ctx, reps, u, v)?))?;
        }
        for &(u, v) in negatives {
            add(log_sigmoid(&self.edge_logit(ctx, reps, u, v)?.neg()))?;
        }
        let count = T::from_usize(positives.len() + negatives.len()).expect("count fits scalar");
        total.expect("nonempty edge sets").neg().div(&Tensor::scalar(count))
    }

    /// Plain edge probabilities for evaluation (run with an eval context).
    pub fn edge_scores<'t>(
        &self,
        ctx: &StepCtx<'t, T>,
        reps: &[Tensor<'t, T>],
        edges: &[(usize, usize)],
    ) -> Result<Vec<f64>> {
        edges
            .iter()
            .map(|&(u, v)| Ok(self.edge_probability(ctx, reps, u, v)?.item().to_f64c()))
            .collect()
    }

    /// Class logits `[−d²(rep, class_c)]_c` for one node representation.
    pub fn class_logits<'t>(
        &self,
        ctx: &StepCtx<'t, T>,
        rep: &Tensor<'t, T>,
    ) -> Result<Tensor<'t, T>> {
        let emb = match &self.decoder {
            Decoder::Classes(p) => ctx.param(p),
            Decoder::FermiDirac { .. } => {
                return Err(Error::Config(
                    "this model has a link decoder, not a class decoder".into(),
                ))
            }
        };
        let classes = emb.shape()[0];
        let mut logits = Vec::with_capacity(classes);
        for c in 0..classes {
            let point = lift_spatial_t(&emb.row(c)?, self.curv)?;
            logits.push(squared_distance_t(rep, &point, self.curv)?.neg());
        }
        let refs: Vec<&Tensor<'t, T>> = logits.iter().collect();
        Tensor::concat(&refs)
    }

    /// Cross-entropy over distance logits at the listed nodes.
    pub fn nc_loss<'t>(
        &self,
        ctx: &StepCtx<'t, T>,
        reps: &[Tensor<'t, T>],
        nodes: &[usize],
        labels: &[usize],
    ) -> Result<Tensor<'t, T>> {
        if nodes.is_empty() {
            return Err(Error::InvalidArgument("empty node batch".into()));
        }
        let mut total: Option<Tensor<'t, T>> = None;
        for &i in nodes {
            if i >= reps.len() {
                return Err(Error::UnknownId {
                    kind: "node",
                    id: i,
                    count: reps.len(),
                });
            }
            let y = labels[i];
            let probs = self.class_logits(ctx, &reps[i])?.softmax()?;
            let nll = probs
                .slice_last(y, y + 1)?
                .clamp_min(T::c(1e-12))
                .log()
                .neg();
            total = Some(match total.take() {
                Some(acc) => acc.add(&nll)?,
                None => nll,
            });
        }
        let count = T::from_usize(nodes.len()).expect("count fits scalar");
        total.expect("nonempty batch").div(&Tensor::scalar(count))
    }

    /// Argmax class predictions at the listed nodes (evaluation path).
    pub fn predict_classes<'t>(
        &self,
        ctx: &StepCtx<'t, T>,
        reps: &[Tensor<'t, T>],
        nodes: &[usize],
    ) -> Result<Vec<usize>> {
        nodes
            .iter()
            .map(|&i| {
                let logits = self.class_logits(ctx, &reps[i])?;
                let data = logits.data();
                let mut best = 0;
                for (c, &v) in data.iter().enumerate() {
                    if v > data[best] {
                        best = c;
                    }
                }
                Ok(best)
            })
            .collect()
    }
}

/// `log σ(x)`, floored so saturated logits stay finite.
fn log_sigmoid<'t, T: Scalar>(x: &Tensor<'t, T>) -> Tensor<'t, T> {
    x.sigmoid().clamp_min(T::c(1e-12)).log()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::lorentz_inner;
    use crate::tensor::{finite_difference_check, Tape};
    use rand::SeedableRng;

    fn curv() -> Curvature<f64> {
        Curvature::standard()
    }

    fn drift(coords: &[f64]) -> f64 {
        (lorentz_inner(coords, coords) + 1.0).abs()
    }

    fn small_cfg(layers: usize) -> GcnConfig {
        GcnConfig {
            dim: 4,
            layers,
            include_self: true,
            dropout: 0.0,
            gain_init: 2.5,
            init_std: 0.2,
        }
    }

    // ── Fermi–Dirac decoder ─────────────────────────────────────────────────

    #[test]
    fn fermi_dirac_oracles() {
        assert!((fermi_dirac(2.0_f64, 2.0, 0.7).unwrap() - 0.5).abs() < 1e-15, "d² = r");
        let e = std::f64::consts::E;
        let p = fermi_dirac(3.5, 2.0, 1.5).unwrap();
        assert!(
            (p - 1.0 / (e + 1.0)).abs() < 1e-15,
            "d² = r + t must give 1/(e+1), got {p}"
        );
        assert!(fermi_dirac(1e6, 2.0, 1.0).unwrap() < 1e-10, "far edges vanish");
        assert!(fermi_dirac(1e300, 0.0, 1.0).unwrap() == 0.0, "no overflow");
        assert!(fermi_dirac(1.0, 1.0, 0.0).is_err(), "zero temperature");
        assert!(fermi_dirac(1.0, 1.0, -2.0).is_err(), "negative temperature");
    }

    #[test]
    fn fermi_dirac_is_monotone_decreasing_in_distance() {
        let mut last = 1.0;
        for i in 0..50 {
            let p = fermi_dirac(i as f64 * 0.3, 4.0, 0.9).unwrap();
            assert!(p < last, "p must fall as d² grows");
            assert!(p > 0.0 && p < 1.0);
            last = p;
        }
    }

    // ── layer structure ─────────────────────────────────────────────────────

    #[test]
    fn single_node_with_self_loop_keeps_its_transformed_feature() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let model =
            GcnModel::node_classification(vec![vec![0.3, -0.2]], 2, curv(), &small_cfg(1), &mut rng)
                .unwrap();
        let tape = Tape::new();
        let ctx = StepCtx::eval(&tape);
        let reps = model.forward(&ctx, &[vec![]]).unwrap();
        let direct = model.layers[0]
            .forward(&ctx, &model.input_points(&ctx).unwrap()[0])
            .unwrap();
        for (a, b) in reps[0].data().iter().zip(direct.data()) {
            assert!(
                (a - b).abs() < 1e-12,
                "attention over a single element must return it: {a} vs {b}"
            );
        }
    }

    #[test]
    fn isolated_node_without_self_loop_passes_through_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let cfg = GcnConfig {
            include_self: false,
            ..small_cfg(1)
        };
        let model = GcnModel::node_classification(
            vec![vec![0.3, -0.2], vec![0.9, 0.1]],
            2,
            curv(),
            &cfg,
            &mut rng,
        )
        .unwrap();
        let tape = Tape::new();
        let ctx = StepCtx::eval(&tape);
        // Node 0 isolated; node 1 attends to node 0.
        let reps = model.forward(&ctx, &[vec![], vec![0]]).unwrap();
        let direct = model.layers[0]
            .forward(&ctx, &model.input_points(&ctx).unwrap()[0])
            .unwrap();
        assert_eq!(reps[0].data(), direct.data(), "exact pass-through");
    }

    #[test]
    fn output_depends_only_on_the_receptive_field() {
        // Path 0–1–2–3, one layer: node 0 sees {0, 1}, so node 3's feature
        // must not influence it.
        let features = |f3: f64| vec![vec![0.1, 0.2], vec![-0.3, 0.5], vec![0.7, 0.0], vec![f3, 1.0]];
        let adj = vec![vec![1], vec![0, 2], vec![1, 3], vec![2]];
        let build = |f3: f64| {
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            GcnModel::node_classification(features(f3), 2, curv(), &small_cfg(1), &mut rng).unwrap()
        };
        let run = |model: &GcnModel<f64>, node: usize| {
            let tape = Tape::new();
            let ctx = StepCtx::eval(&tape);
            model.forward(&ctx, &adj).unwrap()[node].data().to_vec()
        };
        let (a, b) = (build(0.4), build(-5.0));
        assert_eq!(run(&a, 0), run(&b, 0), "node 3 is outside node 0's field");
        assert_ne!(run(&a, 2), run(&b, 2), "node 3 is inside node 2's field");
    }

    #[test]
    fn relabeling_nodes_permutes_outputs() {
        let features = vec![
            vec![0.1, 0.2],
            vec![-0.3, 0.5],
            vec![0.7, 0.0],
            vec![0.4, 1.0],
            vec![-0.6, -0.1],
        ];
        let adj = vec![vec![1, 2], vec![0], vec![0, 3], vec![2, 4], vec![3]];
        let perm = [3usize, 0, 4, 2, 1]; // node i becomes perm[i]
        let mut pfeat = vec![Vec::new(); 5];
        let mut padj = vec![Vec::new(); 5];
        for i in 0..5 {
            pfeat[perm[i]] = features[i].clone();
            padj[perm[i]] = adj[i].iter().map(|&j| perm[j]).collect();
        }
        let build = |feat: Vec<Vec<f64>>| {
            let mut rng = ChaCha8Rng::seed_from_u64(13);
            GcnModel::node_classification(feat, 2, curv(), &small_cfg(2), &mut rng).unwrap()
        };
        let (a, b) = (build(features), build(pfeat));
        let tape = Tape::new();
        let ctx = StepCtx::eval(&tape);
        let ra = a.forward(&ctx, &adj).unwrap();
        let rb = b.forward(&ctx, &padj).unwrap();
        for i in 0..5 {
            assert_eq!(
                ra[i].data(),
                rb[perm[i]].data(),
                "output for node {i} must follow the relabeling bitwise"
            );
        }
    }

    #[test]
    fn representations_stay_on_manifold() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let feats: Vec<Vec<f64>> = (0..10)
            .map(|_| (0..6).map(|_| manifold::normal::<f64>(&mut rng)).collect())
            .collect();
        let model = GcnModel::node_classification(feats, 3, curv(), &small_cfg(2), &mut rng).unwrap();
        // Ring adjacency.
        let adj: Vec<Vec<usize>> = (0..10).map(|i| vec![(i + 9) % 10, (i + 1) % 10]).collect();
        let tape = Tape::new();
        let ctx = StepCtx::eval(&tape);
        for (i, rep) in model.forward(&ctx, &adj).unwrap().iter().enumerate() {
            let d = drift(rep.data());
            assert!(d < 1e-9, "node {i} drift {d}");
            assert!(rep.data()[0] > 0.0, "node {i} left the upper sheet");
        }
    }

    #[test]
    fn forward_rejects_bad_adjacency() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let model = GcnModel::link_prediction(3, curv(), &small_cfg(1), &mut rng).unwrap();
        let tape = Tape::new();
        let ctx = StepCtx::eval(&tape);
        assert!(model.forward(&ctx, &[vec![], vec![]]).is_err(), "wrong node count");
        assert!(
            matches!(
                model.forward(&ctx, &[vec![5], vec![], vec![]]),
                Err(Error::UnknownId { .. })
            ),
            "out-of-range neighbor"
        );
    }

    #[test]
    fn decoder_role_mismatches_are_config_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let lp = GcnModel::link_prediction(3, curv(), &small_cfg(1), &mut rng).unwrap();
        let nc = GcnModel::node_classification(
            vec![vec![0.1], vec![0.2], vec![0.3]],
            2,
            curv(),
            &small_cfg(1),
            &mut rng,
        )
        .unwrap();
        let tape = Tape::new();
        let ctx = StepCtx::eval(&tape);
        let adj = vec![vec![1], vec![0, 2], vec![1]];
        let lp_reps = lp.forward(&ctx, &adj).unwrap();
        let nc_reps = nc.forward(&ctx, &adj).unwrap();
        assert!(matches!(lp.class_logits(&ctx, &lp_reps[0]), Err(Error::Config(_))));
        assert!(matches!(
            nc.edge_probability(&ctx, &nc_reps, 0, 1),
            Err(Error::Config(_))
        ));
    }

    // ── losses and gradients ────────────────────────────────────────────────

    #[test]
    fn lp_loss_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let cfg = GcnConfig {
            dim: 3,
            ..small_cfg(1)
        };
        let model = GcnModel::link_prediction(4, curv(), &cfg, &mut rng).unwrap();
        let adj = vec![vec![1], vec![0, 2], vec![1, 3], vec![2]];
        let pos = [(0usize, 1usize), (1, 2), (2, 3)];
        let neg = [(0usize, 3usize), (0, 2)];

        type FdFn<'c> =
            dyn for<'a> Fn(&'a Tape<f64>, &Tensor<'a, f64>) -> Result<Tensor<'a, f64>> + 'c;
        // Node embeddings, first layer weight, and both decoder params.
        for which in [0usize, 1, 5, 6] {
            let f: &FdFn = &|tape, leaf| {
                let ctx = StepCtx::train(tape, 50);
                ctx.bind_tensor(model.params()[which], leaf.clone());
                let reps = model.forward(&ctx, &adj)?;
                model.lp_loss(&ctx, &reps, &pos, &neg)
            };
            let p = model.params()[which];
            let report =
                finite_difference_check(f, p.values(), p.shape(), 1e-6, 1e-5, None).unwrap();
            assert!(
                report.pass,
                "param {} max rel err {}",
                p.name(),
                report.max_rel_err
            );
        }
    }

    #[test]
    fn nc_loss_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(78);
        let cfg = GcnConfig {
            dim: 3,
            ..small_cfg(1)
        };
        let feats = vec![vec![0.4, -0.1], vec![0.0, 0.8], vec![-0.5, 0.2], vec![0.9, 0.3]];
        let model = GcnModel::node_classification(feats, 2, curv(), &cfg, &mut rng).unwrap();
        let adj = vec![vec![1], vec![0, 2], vec![1, 3], vec![2]];
        let labels = [0usize, 1, 0, 1];
        let nodes = [0usize, 1, 2, 3];

        type FdFn<'c> =
            dyn for<'a> Fn(&'a Tape<f64>, &Tensor<'a, f64>) -> Result<Tensor<'a, f64>> + 'c;
        // First layer weight/gate vector and the class embeddings.
        for which in [0usize, 1, 4] {
            let f: &FdFn = &|tape, leaf| {
                let ctx = StepCtx::train(tape, 51);
                ctx.bind_tensor(model.params()[which], leaf.clone());
                let reps = model.forward(&ctx, &adj)?;
                model.nc_loss(&ctx, &reps, &nodes, &labels)
            };
            let p = model.params()[which];
            let report =
                finite_difference_check(f, p.values(), p.shape(), 1e-6, 1e-5, None).unwrap();
            assert!(
                report.pass,
                "param {} max rel err {}",
                p.name(),
                report.max_rel_err
            );
        }
    }

    #[test]
    fn edge_probabilities_are_probabilities() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let model = GcnModel::link_prediction(5, curv(), &small_cfg(2), &mut rng).unwrap();
        let adj: Vec<Vec<usize>> = (0..5).map(|i| vec![(i + 1) % 5]).collect();
        let tape = Tape::new();
        let ctx = StepCtx::eval(&tape);
        let reps = model.forward(&ctx, &adj).unwrap();
        let scores = model
            .edge_scores(&ctx, &reps, &[(0, 1), (1, 3), (2, 4)])
            .unwrap();
        for s in scores {
            assert!(s > 0.0 && s < 1.0, "probability out of range: {s}");
        }
        assert!(model.lp_loss(&ctx, &reps, &[], &[(0, 1)]).is_err(), "empty positives");
    }

    #[test]
    fn class_predictions_follow_nearest_class_embedding() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let cfg = GcnConfig {
            dim: 2,
            layers: 1,
            ..small_cfg(1)
        };
        let mut model = GcnModel::node_classification(
            vec![vec![0.5, 0.0], vec![-0.5, 0.0]],
            2,
            curv(),
            &cfg,
            &mut rng,
        )
        .unwrap();
        let tape = Tape::new();
        let ctx = StepCtx::eval(&tape);
        let adj = vec![vec![], vec![]];
        let reps = model.forward(&ctx, &adj).unwrap();
        // Plant class embeddings exactly at the two node representations.
        let planted: Vec<f64> = reps
            .iter()
            .flat_map(|r| r.data()[1..].to_vec())
            .collect();
        if let Decoder::Classes(p) = &mut model.decoder {
            p.set_values(planted);
        }
        let ctx2 = StepCtx::eval(&tape);
        let reps2 = model.forward(&ctx2, &adj).unwrap();
        let pred = model.predict_classes(&ctx2, &reps2, &[0, 1]).unwrap();
        assert_eq!(pred, vec![0, 1], "each node sits on its own class point");
    }
}
