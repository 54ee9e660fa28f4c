//! A small hyperbolic transformer encoder for masked-token reconstruction.
//!
//! Tokens and positions are embedded as points on the hyperboloid, combined by
//! a position-encoding residual whose transform is shared across positions,
//! and refined by encoder blocks of multi-head distance attention plus a relu
//! feed-forward — both closed by the norm-rescaling residual, so every
//! intermediate stays on the manifold. The reconstruction head scores each
//! vocabulary item by its negative squared distance to an output anchor.

use rand_chacha::ChaCha8Rng;

use crate::datasets::MaskedSeq;
use crate::error::{Error, Result};
use crate::layers::{
    lift_spatial_t, position_encode, squared_distance_t, Activation, LinearCfg, LorentzResidual,
    MultiHeadAttention,
};
use crate::manifold::{normal, Curvature};
use crate::params::{Param, ParamKind, StepCtx};
use crate::scalar::Scalar;
use crate::tensor::{Tape, Tensor};

#[derive(Debug, Clone)]
pub struct TransformerConfig {
    /// Spatial width of every representation; must split evenly into heads.
    pub dim: usize,
    pub heads: usize,
    /// Number of encoder blocks; zero is legal and leaves the embeddings as-is.
    pub blocks: usize,
    /// Real token ids are `0..vocab`; the id `vocab` itself is the mask.
    pub vocab: usize,
    pub max_len: usize,
    pub dropout: f64,
    /// Std of the token / position / output embedding tables.
    pub init_std: f64,
}

impl Default for TransformerConfig {
    fn default() -> Self {
        TransformerConfig {
            dim: 16,
            heads: 2,
            blocks: 2,
            vocab: 12,
            max_len: 8,
            dropout: 0.0,
            init_std: 0.05,
        }
    }
}

struct Block<T> {
    attn: MultiHeadAttention<T>,
    ffn: LorentzResidual<T>,
}

pub struct ToyTransformer<T> {
    curv: Curvature<T>,
    dim: usize,
    vocab: usize,
    max_len: usize,
    /// `[vocab + 1, dim]` — the extra last row is the mask token.
    token_emb: Param<T>,
    pos_emb: Param<T>,
    /// Shared position-encoding transform (one matrix for all positions).
    embed: LorentzResidual<T>,
    blocks: Vec<Block<T>>,
    /// Per-vocabulary output anchors scored by negative squared distance.
    out_emb: Param<T>,
}

impl<T: Scalar> ToyTransformer<T> {
    pub fn new(curv: Curvature<T>, cfg: &TransformerConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        if cfg.vocab < 2 {
            return Err(Error::InvalidArgument(format!(
                "reconstruction over {} token(s) is degenerate",
                cfg.vocab
            )));
        }
        if cfg.max_len == 0 {
            return Err(Error::InvalidArgument("maximum sequence length is zero".into()));
        }
        let table = |name: &str, rows: usize, dim: usize, rng: &mut ChaCha8Rng| {
            let values = (0..rows * dim)
                .map(|_| normal::<T>(rng) * T::c(cfg.init_std))
                .collect();
            Param::new(name, vec![rows, dim], values, ParamKind::LorentzSpatial)
        };
        let token_emb = table("tf.token_emb", cfg.vocab + 1, cfg.dim, rng);
        let pos_emb = table("tf.pos_emb", cfg.max_len, cfg.dim, rng);
        let embed = LorentzResidual::new(
            "tf.embed",
            cfg.dim + 1,
            cfg.dim,
            curv,
            LinearCfg {
                dropout: cfg.dropout,
                ..LinearCfg::default()
            },
            rng,
        );
        let blocks = (0..cfg.blocks)
            .map(|l| {
                let attn = MultiHeadAttention::new(
                    &format!("tf.block{l}.attn"),
                    cfg.dim,
                    cfg.heads,
                    curv,
                    LinearCfg {
                        dropout: cfg.dropout,
                        ..LinearCfg::default()
                    },
                    rng,
                )?;
                let ffn = LorentzResidual::new(
                    &format!("tf.block{l}.ffn"),
                    cfg.dim + 1,
                    cfg.dim,
                    curv,
                    LinearCfg {
                        dropout: cfg.dropout,
                        act: Activation::Relu,
                        ..LinearCfg::default()
                    },
                    rng,
                );
                Ok(Block { attn, ffn })
            })
            .collect::<Result<Vec<_>>>()?;
        let out_emb = table("tf.out_emb", cfg.vocab, cfg.dim, rng);
        Ok(ToyTransformer {
            curv,
            dim: cfg.dim,
            vocab: cfg.vocab,
            max_len: cfg.max_len,
            token_emb,
            pos_emb,
            embed,
            blocks,
            out_emb,
        })
    }

    /// The reserved mask id — one past the real vocabulary.
    pub fn mask_id(&self) -> usize {
        self.vocab
    }

    pub fn vocab(&self) -> usize {
        self.vocab
    }

    pub fn params(&self) -> Vec<&Param<T>> {
        let mut ps = vec![&self.token_emb, &self.pos_emb];
        ps.extend(self.embed.params());
        for b in &self.blocks {
            ps.extend(b.attn.params());
            ps.extend(b.ffn.params());
        }
        ps.push(&self.out_emb);
        ps
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut ps = vec![&mut self.token_emb, &mut self.pos_emb];
        ps.extend(self.embed.params_mut());
        for b in &mut self.blocks {
            ps.extend(b.attn.params_mut());
            ps.extend(b.ffn.params_mut());
        }
        ps.push(&mut self.out_emb);
        ps
    }

    fn check_tokens(&self, tokens: &[usize]) -> Result<()> {
        if tokens.is_empty() {
            return Err(Error::InvalidArgument("empty token sequence".into()));
        }
        if tokens.len() > self.max_len {
            return Err(Error::InvalidArgument(format!(
                "sequence length {} exceeds the maximum {}",
                tokens.len(),
                self.max_len
            )));
        }
        for &id in tokens {
            if id > self.vocab {
                return Err(Error::UnknownId {
                    kind: "token",
                    id,
                    count: self.vocab + 1,
                });
            }
        }
        Ok(())
    }

    /// Representations after every stage: index 0 is the position-encoded
    /// embeddings, index `l + 1` the output of block `l`.
    pub fn forward_trace<'t>(
        &self,
        ctx: &StepCtx<'t, T>,
        tokens: &[usize],
    ) -> Result<Vec<Vec<Tensor<'t, T>>>> {
        self.check_tokens(tokens)?;
        let temb = ctx.param(&self.token_emb);
        let pemb = ctx.param(&self.pos_emb);
        let mut xs = Vec::with_capacity(tokens.len());
        for (i, &id) in tokens.iter().enumerate() {
            let tok = lift_spatial_t(&temb.row(id)?, self.curv)?;
            let pos = lift_spatial_t(&pemb.row(i)?, self.curv)?;
            xs.push(position_encode(&self.embed, ctx, &tok, &pos)?);
        }
        let mut stages = Vec::with_capacity(self.blocks.len() + 1);
        stages.push(xs);
        for block in &self.blocks {
            let attended = block.attn.forward(ctx, stages.last().unwrap())?;
            let mut next = Vec::with_capacity(attended.len());
            for y in &attended {
                let skip = y.slice_last(1, self.dim + 1)?;
                next.push(block.ffn.forward(ctx, y, &skip)?);
            }
            stages.push(next);
        }
        Ok(stages)
    }

    /// Final per-position points.
    pub fn forward<'t>(
        &self,
        ctx: &StepCtx<'t, T>,
        tokens: &[usize],
    ) -> Result<Vec<Tensor<'t, T>>> {
        Ok(self.forward_trace(ctx, tokens)?.pop().unwrap())
    }

    /// Negative squared distance from a representation to every output anchor.
    pub fn logits_t<'t>(
        &self,
        ctx: &StepCtx<'t, T>,
        rep: &Tensor<'t, T>,
    ) -> Result<Tensor<'t, T>> {
        let emb = ctx.param(&self.out_emb);
        let mut logits = Vec::with_capacity(self.vocab);
        for v in 0..self.vocab {
            let anchor = lift_spatial_t(&emb.row(v)?, self.curv)?;
            logits.push(squared_distance_t(rep, &anchor, self.curv)?.neg());
        }
        let refs: Vec<&Tensor<'t, T>> = logits.iter().collect();
        Tensor::concat(&refs)
    }

    /// Mean cross-entropy of the true token at each masked position. The mask
    /// id is substituted into the sequence here; `seq.tokens` stays original.
    pub fn loss_t<'t>(
        &self,
        ctx: &StepCtx<'t, T>,
        batch: &[MaskedSeq],
    ) -> Result<Tensor<'t, T>> {
        if batch.is_empty() {
            return Err(Error::InvalidArgument("empty masked-sequence batch".into()));
        }
        let mut acc = Tensor::scalar(T::zero());
        for seq in batch {
            if seq.masked_pos >= seq.tokens.len() {
                return Err(Error::InvalidArgument(format!(
                    "masked position {} outside a length-{} sequence",
                    seq.masked_pos,
                    seq.tokens.len()
                )));
            }
            if seq.target >= self.vocab {
                return Err(Error::UnknownId {
                    kind: "token",
                    id: seq.target,
                    count: self.vocab,
                });
            }
            let mut masked = seq.tokens.clone();
            masked[seq.masked_pos] = self.mask_id();
            let outs = self.forward(ctx, &masked)?;
            let logits = self.logits_t(ctx, &outs[seq.masked_pos])?;
            let p = logits
                .softmax()?
                .slice_last(seq.target, seq.target + 1)?
                .clamp_min(T::c(1e-12))
                .log();
            acc = acc.add(&p)?;
        }
        Ok(acc.neg().div(&Tensor::scalar(T::c(batch.len() as f64)))?)
    }

    /// Untaped greedy prediction at the masked position.
    pub fn predict_masked(&self, seq: &MaskedSeq) -> Result<usize> {
        let tape = Tape::new();
        let ctx = StepCtx::eval(&tape);
        let mut masked = seq.tokens.clone();
        if seq.masked_pos >= masked.len() {
            return Err(Error::InvalidArgument(format!(
                "masked position {} outside a length-{} sequence",
                seq.masked_pos,
                masked.len()
            )));
        }
        masked[seq.masked_pos] = self.mask_id();
        let outs = self.forward(&ctx, &masked)?;
        let logits = self.logits_t(&ctx, &outs[seq.masked_pos])?;
        let data = logits.data();
        let mut best = 0;
        for v in 1..data.len() {
            if data[v] > data[best] {
                best = v;
            }
        }
        Ok(best)
    }

    /// Fraction of masked positions reconstructed exactly.
    pub fn accuracy(&self, batch: &[MaskedSeq]) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::InvalidArgument("empty masked-sequence batch".into()));
        }
        let mut hits = 0usize;
        for seq in batch {
            if self.predict_masked(seq)? == seq.target {
                hits += 1;
            }
        }
        Ok(hits as f64 / batch.len() as f64)
    }
}
