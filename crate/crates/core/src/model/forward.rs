//! Assembled tokenizer: encoder, factorization, per-stream quantization,
//! recombination, decoder, and the training loss.
//!
//! All variants share one backbone; swapping the variant changes only the
//! bottleneck subgraph (projection width, mixer, residual projections), so
//! checkpoints differ only under the `bottleneck.` name scope.

use crate::error::{CoreError, Result};
use crate::field::Field;
use crate::model::config::{ModelConfig, Variant};
use crate::model::net::{self, TrunkIdx};
use crate::model::params::{Binding, ConvIdx, NetBuilder, ParamStore};
use crate::quantizer::{
    commitment_loss, factorize_graph, fsq_quantize, FactorizationSpec, QuantizerSpec, TokenGrid,
};
use crate::rng::Rng;
use phaedra_tensor::{Element, Gradients, Graph, TensorId};

/// Commitment weight for the morphology stream; the amplitude stream is
/// unscaled because dense levels already keep that term small.
pub const MORPH_COMMIT_BETA: f64 = 0.25;
pub const AMP_COMMIT_BETA: f64 = 1.0;

#[derive(Debug, Clone)]
pub(crate) struct Plan {
    pub encoder: TrunkIdx,
    pub proj: ConvIdx,
    pub mixer: Option<ConvIdx>,
    pub amp_down: Option<ConvIdx>,
    pub amp_up: Option<ConvIdx>,
    /// Residual variant: projection of the quantized residual stream before
    /// the contributions are summed.
    pub res_proj: Option<ConvIdx>,
    pub decoder: TrunkIdx,
    pub decoder_out: ConvIdx,
}

pub struct Model<T: Element> {
    pub config: ModelConfig,
    pub params: ParamStore<T>,
    pub(crate) plan: Plan,
}

/// Token grids for one encoded sample, morphology stream first.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenizedSample {
    pub variant: Variant,
    pub latent_h: usize,
    pub latent_w: usize,
    pub streams: Vec<TokenGrid>,
}

/// How the discrete bottleneck participates in a built graph.
pub enum BottleneckMode<'a, T> {
    /// Straight-through quantization: forward carries the discrete values,
    /// gradients flow to the bounded continuous latents.
    Quantized,
    /// Skip quantization entirely; the decoder sees the bounded continuous
    /// latents (the embedding-error path).
    ContinuousRelaxation,
    /// Smooth end-to-end function for finite-difference verification:
    /// decodes the continuous latents while the commitment terms pull
    /// toward externally captured constants.
    FrozenVerification(&'a [Vec<T>]),
}

/// One quantized stream inside a built graph.
pub struct StreamNodes<T> {
    /// Bounded continuous latent, `tanh(scale * z)`.
    pub cont: TensorId,
    /// Node the decoder consumes (straight-through output when quantized).
    pub decode_node: TensorId,
    pub values: Option<Vec<T>>,
    pub tokens: Option<TokenGrid>,
}

pub struct BottleneckOutput<T> {
    pub z_tilde: TensorId,
    /// Morphology stream first, amplitude second (when present).
    pub streams: Vec<StreamNodes<T>>,
    pub commit_mu: Option<TensorId>,
    pub commit_alpha: Option<TensorId>,
}

pub struct TrainGraph<T> {
    pub binding: Binding,
    pub input: TensorId,
    pub z_cq: TensorId,
    pub bottleneck: BottleneckOutput<T>,
    pub x_hat: TensorId,
    pub rec: TensorId,
    pub commit_mu: TensorId,
    pub commit_alpha: TensorId,
    pub loss: TensorId,
}

/// Per-parameter gradients plus the scalar loss terms of one sample.
pub struct TrainStep<T> {
    pub grads: Vec<Vec<T>>,
    pub loss_total: f64,
    pub loss_rec: f64,
    pub loss_commit_mu: f64,
    pub loss_commit_alpha: f64,
}

/// Evaluation outputs for one sample.
pub struct EvalSampleOut {
    pub tokens: Option<TokenizedSample>,
    pub quantized: Field,
    pub continuous: Field,
}

impl<T: Element> Model<T> {
    pub fn build(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut store = ParamStore::new();
        let mut rng = Rng::seed_from_u64(seed);
        let mut b = NetBuilder { store: &mut store, rng: &mut rng };

        let encoder = net::build_encoder(&mut b, &config);
        let proj = b.conv("bottleneck.proj", config.c_q(), encoder.mid_channels, 3, false);
        let mixer = matches!(config.variant, Variant::Phaedra | Variant::CodebookAblation)
            .then(|| b.conv("bottleneck.mixer", config.decoder_width(), config.c_q(), 1, false));
        let (amp_down, amp_up, res_proj) = if config.variant == Variant::ResidualAblation {
            (
                Some(b.conv("bottleneck.amp_down", 1, config.embed_dim, 1, false)),
                // starts at zero so the sequential pipeline begins at the
                // plain-FSQ operating point; the coarse path grows in
                Some(b.conv("bottleneck.amp_up", config.embed_dim, 1, 1, true)),
                Some(b.conv("bottleneck.res_proj", config.embed_dim, config.embed_dim, 1, false)),
            )
        } else {
            (None, None, None)
        };
        let (decoder, decoder_out) = net::build_decoder(&mut b, &config);

        // The recombination mixer starts as an identity embedding of the
        // morphology stream (amplitude columns zero), so split variants
        // begin at the single-stream FSQ operating point rather than behind
        // a random channel shuffle.
        if let Some(m) = &mixer {
            let w = store.get_mut(m.weight);
            let c_q = config.c_q();
            w.data.fill(T::ZERO);
            for o in 0..config.decoder_width().min(c_q) {
                w.data[o * c_q + o] = T::ONE;
            }
        }
        if let Some(rp) = &res_proj {
            let w = store.get_mut(rp.weight);
            let e = config.embed_dim;
            w.data.fill(T::ZERO);
            for o in 0..e {
                w.data[o * e + o] = T::ONE;
            }
        }

        Ok(Model {
            config,
            params: store,
            plan: Plan { encoder, proj, mixer, amp_down, amp_up, res_proj, decoder, decoder_out },
        })
    }

    pub fn param_count(&self) -> usize {
        self.params.value_count()
    }

    /// Quantizer specs in stream order for this variant.
    pub fn stream_specs(&self) -> Vec<QuantizerSpec> {
        let mut specs = Vec::new();
        if let Some(m) = self.config.morph_spec() {
            specs.push(m);
        }
        if let Some(a) = self.config.amp_spec() {
            specs.push(a);
        }
        specs
    }

    fn conv1x1(
        &self,
        g: &mut Graph<T>,
        x: TensorId,
        conv: &ConvIdx,
        bind: &Binding,
    ) -> Result<TensorId> {
        Ok(g.conv2d(x, bind.id(conv.weight), Some(bind.id(conv.bias)), 1, 0)?)
    }

    fn quantize_stream(
        &self,
        g: &mut Graph<T>,
        z: TensorId,
        spec: &QuantizerSpec,
        mode: &BottleneckMode<'_, T>,
        stream_idx: usize,
        commit_beta: f64,
    ) -> Result<(StreamNodes<T>, Option<TensorId>)> {
        let shape = g.shape(z).to_vec();
        let (h, w) = (shape[1], shape[2]);
        let scaled = g.scale(z, spec.scale)?;
        let cont = g.tanh(scaled)?;
        match mode {
            BottleneckMode::Quantized => {
                let (values, tokens) = fsq_quantize(g.data(z), h, w, spec)?;
                let v_leaf = g.constant(&shape, values.clone())?;
                let st = g.straight_through(cont, v_leaf)?;
                let commit = commitment_loss(g, cont, v_leaf, commit_beta)?;
                Ok((
                    StreamNodes { cont, decode_node: st, values: Some(values), tokens: Some(tokens) },
                    Some(commit),
                ))
            }
            BottleneckMode::ContinuousRelaxation => {
                Ok((StreamNodes { cont, decode_node: cont, values: None, tokens: None }, None))
            }
            BottleneckMode::FrozenVerification(frozen) => {
                let target = frozen.get(stream_idx).ok_or_else(|| {
                    CoreError::StreamMismatch(format!("no frozen values for stream {stream_idx}"))
                })?;
                let v_leaf = g.constant(&shape, target.clone())?;
                let commit = commitment_loss(g, cont, v_leaf, commit_beta)?;
                Ok((StreamNodes { cont, decode_node: cont, values: None, tokens: None }, Some(commit)))
            }
        }
    }

    pub(crate) fn apply_bottleneck(
        &self,
        g: &mut Graph<T>,
        z_cq: TensorId,
        bind: &Binding,
        mode: &BottleneckMode<'_, T>,
    ) -> Result<BottleneckOutput<T>> {
        match self.config.variant {
            Variant::Continuous => Ok(BottleneckOutput {
                z_tilde: z_cq,
                streams: Vec::new(),
                commit_mu: None,
                commit_alpha: None,
            }),
            Variant::Fsq => {
                let spec = self.config.morph_spec().expect("fsq has a morphology spec");
                let (stream, commit) =
                    self.quantize_stream(g, z_cq, &spec, mode, 0, MORPH_COMMIT_BETA)?;
                Ok(BottleneckOutput {
                    z_tilde: stream.decode_node,
                    streams: vec![stream],
                    commit_mu: commit,
                    commit_alpha: None,
                })
            }
            Variant::Phaedra | Variant::CodebookAblation => {
                let morph = self.config.morph_spec().expect("split variant morphology spec");
                let amp = self.config.amp_spec().expect("split variant amplitude spec");
                let fact = FactorizationSpec::new(self.config.c_mu, amp.dims())?;
                let (z_mu, z_alpha) = factorize_graph(g, z_cq, &fact)?;
                let (mu, commit_mu) =
                    self.quantize_stream(g, z_mu, &morph, mode, 0, MORPH_COMMIT_BETA)?;
                let (alpha, commit_alpha) =
                    self.quantize_stream(g, z_alpha, &amp, mode, 1, AMP_COMMIT_BETA)?;
                let cat = g.concat_channels(mu.decode_node, alpha.decode_node)?;
                let mixer = self.plan.mixer.as_ref().expect("split variant has a mixer");
                let z_tilde = self.conv1x1(g, cat, mixer, bind)?;
                Ok(BottleneckOutput {
                    z_tilde,
                    streams: vec![mu, alpha],
                    commit_mu,
                    commit_alpha,
                })
            }
            Variant::ResidualAblation => {
                let morph = self.config.morph_spec().expect("residual morphology spec");
                let amp = self.config.amp_spec().expect("residual amplitude spec");
                let amp_down = self.plan.amp_down.as_ref().expect("residual amp_down");
                let amp_up = self.plan.amp_up.as_ref().expect("residual amp_up");
                // coarse scalar pass first
                let z_alpha_pre = self.conv1x1(g, z_cq, amp_down, bind)?;
                let (alpha, commit_alpha) =
                    self.quantize_stream(g, z_alpha_pre, &amp, mode, 1, AMP_COMMIT_BETA)?;
                let coarse = self.conv1x1(g, alpha.decode_node, amp_up, bind)?;
                // morphology quantizes what the coarse pass missed
                let residual = g.sub(z_cq, coarse)?;
                let (mu, commit_mu) =
                    self.quantize_stream(g, residual, &morph, mode, 0, MORPH_COMMIT_BETA)?;
                let res_proj = self.plan.res_proj.as_ref().expect("residual res_proj");
                let refined = self.conv1x1(g, mu.decode_node, res_proj, bind)?;
                let z_tilde = g.add(refined, coarse)?;
                Ok(BottleneckOutput {
                    z_tilde,
                    streams: vec![mu, alpha],
                    commit_mu,
                    commit_alpha,
                })
            }
        }
    }

    fn input_leaf(&self, g: &mut Graph<T>, x: &[T]) -> Result<TensorId> {
        let c = self.config.in_channels;
        let r = self.config.input_resolution;
        if x.len() != c * r * r {
            return Err(CoreError::FieldShape { expected: c * r * r, got: x.len() });
        }
        Ok(g.leaf(&[c, r, r], x.to_vec(), false)?)
    }

    /// Encoder trunk plus projection: input values -> C_q latent node.
    pub fn encode_latent_graph(
        &self,
        g: &mut Graph<T>,
        x: &[T],
        requires_grad: bool,
    ) -> Result<(Binding, TensorId)> {
        let binding = self.params.bind(g, requires_grad)?;
        let input = self.input_leaf(g, x)?;
        let feats = net::run_encoder(g, input, &self.plan.encoder, &binding)?;
        let z_cq = g.conv2d(
            feats,
            binding.id(self.plan.proj.weight),
            Some(binding.id(self.plan.proj.bias)),
            1,
            1,
        )?;
        Ok((binding, z_cq))
    }

    /// Encoder side only, stopping at the bottleneck streams. Used by the
    /// straight-through verification, which reseeds gradients at the
    /// continuous latents.
    pub fn build_encoder_streams(
        &self,
        g: &mut Graph<T>,
        x: &[T],
    ) -> Result<(Binding, BottleneckOutput<T>)> {
        let (binding, z_cq) = self.encode_latent_graph(g, x, true)?;
        let bn = self.apply_bottleneck(g, z_cq, &binding, &BottleneckMode::Quantized)?;
        Ok((binding, bn))
    }

    /// Full forward graph with reconstruction and commitment losses.
    pub fn build_train_graph(
        &self,
        g: &mut Graph<T>,
        x: &[T],
        mode: BottleneckMode<'_, T>,
        requires_grad: bool,
    ) -> Result<TrainGraph<T>> {
        let (binding, z_cq) = self.encode_latent_graph(g, x, requires_grad)?;
        let bottleneck = self.apply_bottleneck(g, z_cq, &binding, &mode)?;
        let x_hat = net::run_decoder(
            g,
            bottleneck.z_tilde,
            &self.plan.decoder,
            &self.plan.decoder_out,
            &binding,
        )?;
        let input = self.input_leaf(g, x)?;
        let diff = g.sub(input, x_hat)?;
        let absdiff = g.abs(diff)?;
        let rec = g.mean(absdiff)?;
        let commit_mu = match bottleneck.commit_mu {
            Some(id) => id,
            None => g.scalar(0.0),
        };
        let commit_alpha = match bottleneck.commit_alpha {
            Some(id) => id,
            None => g.scalar(0.0),
        };
        let partial = g.add(rec, commit_mu)?;
        let loss = g.add(partial, commit_alpha)?;
        Ok(TrainGraph {
            binding,
            input,
            z_cq,
            bottleneck,
            x_hat,
            rec,
            commit_mu,
            commit_alpha,
            loss,
        })
    }

    /// One training forward/backward on a normalized sample.
    pub fn forward_train(&self, x: &[T], parallel: bool) -> Result<TrainStep<T>> {
        let mut g = Graph::with_parallel(parallel);
        let tg = self.build_train_graph(&mut g, x, BottleneckMode::Quantized, true)?;
        let grads = g.backward(tg.loss)?;
        let per_param = self.collect_grads(&tg.binding, &grads);
        Ok(TrainStep {
            grads: per_param,
            loss_total: g.data(tg.loss)[0].to_f64(),
            loss_rec: g.data(tg.rec)[0].to_f64(),
            loss_commit_mu: g.data(tg.commit_mu)[0].to_f64(),
            loss_commit_alpha: g.data(tg.commit_alpha)[0].to_f64(),
        })
    }

    pub fn collect_grads(&self, binding: &Binding, grads: &Gradients<T>) -> Vec<Vec<T>> {
        binding.ids.iter().map(|&id| grads.get_or_zeros(id)).collect()
    }

    /// Quantized stream values at the current parameters, for the frozen
    /// verification mode.
    pub fn capture_frozen(&self, x: &[T]) -> Result<Vec<Vec<T>>> {
        let mut g = Graph::new();
        let tg = self.build_train_graph(&mut g, x, BottleneckMode::Quantized, false)?;
        Ok(tg
            .bottleneck
            .streams
            .into_iter()
            .map(|s| s.values.expect("quantized mode emits values"))
            .collect())
    }

    fn field_to_values(&self, field: &Field) -> Result<Vec<T>> {
        if !field.normalized {
            return Err(CoreError::NotNormalized);
        }
        if field.channels != self.config.in_channels
            || field.height != self.config.input_resolution
            || field.width != self.config.input_resolution
        {
            return Err(CoreError::FieldShape {
                expected: self.config.in_channels
                    * self.config.input_resolution
                    * self.config.input_resolution,
                got: field.data.len(),
            });
        }
        Ok(field.data.iter().map(|&v| T::from_f64(v as f64)).collect())
    }

    fn values_to_field(&self, values: &[T]) -> Field {
        Field {
            channels: self.config.in_channels,
            height: self.config.input_resolution,
            width: self.config.input_resolution,
            data: values.iter().map(|&v| v.to_f64() as f32).collect(),
            normalized: true,
        }
    }

    /// Deterministic tokenization of a normalized field; no decoder runs.
    pub fn encode(&self, field: &Field) -> Result<TokenizedSample> {
        if self.config.variant == Variant::Continuous {
            return Err(CoreError::StreamMismatch(
                "the continuous variant has no discrete tokens".into(),
            ));
        }
        let x = self.field_to_values(field)?;
        let mut g = Graph::new();
        let (binding, z_cq) = self.encode_latent_graph(&mut g, &x, false)?;
        let bn = self.apply_bottleneck(&mut g, z_cq, &binding, &BottleneckMode::Quantized)?;
        let streams: Vec<TokenGrid> = bn
            .streams
            .into_iter()
            .map(|s| s.tokens.expect("quantized mode emits tokens"))
            .collect();
        Ok(TokenizedSample {
            variant: self.config.variant,
            latent_h: self.config.latent_resolution(),
            latent_w: self.config.latent_resolution(),
            streams,
        })
    }

    fn check_streams(&self, sample: &TokenizedSample) -> Result<()> {
        let specs = self.stream_specs();
        if sample.variant != self.config.variant {
            return Err(CoreError::StreamMismatch(format!(
                "tokens are for variant {}, checkpoint is {}",
                sample.variant.as_str(),
                self.config.variant.as_str()
            )));
        }
        if sample.streams.len() != specs.len() {
            return Err(CoreError::StreamMismatch(format!(
                "expected {} streams, got {}",
                specs.len(),
                sample.streams.len()
            )));
        }
        let latent = self.config.latent_resolution();
        for (grid, spec) in sample.streams.iter().zip(specs.iter()) {
            if &grid.spec != spec {
                return Err(CoreError::StreamMismatch(format!(
                    "stream spec {:?} does not match expected {:?}",
                    grid.spec, spec
                )));
            }
            if grid.h != latent || grid.w != latent {
                return Err(CoreError::StreamMismatch(format!(
                    "grid {}x{} does not match latent {latent}x{latent}",
                    grid.h, grid.w
                )));
            }
            grid.validate()?;
        }
        Ok(())
    }

    /// Reconstruct a normalized field from token grids.
    pub fn decode(&self, sample: &TokenizedSample) -> Result<Field> {
        self.check_streams(sample)?;
        let mut g = Graph::new();
        let binding = self.params.bind(&mut g, false)?;
        let latent = self.config.latent_resolution();
        let leaves: Vec<TensorId> = sample
            .streams
            .iter()
            .map(|grid| {
                let values: Vec<T> = grid.dequantize()?;
                let shape = [grid.spec.dims(), latent, latent];
                Ok(g.constant(&shape, values)?)
            })
            .collect::<Result<_>>()?;
        let z_tilde = match self.config.variant {
            Variant::Continuous => unreachable!("check_streams rejects continuous"),
            Variant::Fsq => leaves[0],
            Variant::Phaedra | Variant::CodebookAblation => {
                let cat = g.concat_channels(leaves[0], leaves[1])?;
                let mixer = self.plan.mixer.as_ref().expect("split variant has a mixer");
                self.conv1x1(&mut g, cat, mixer, &binding)?
            }
            Variant::ResidualAblation => {
                let amp_up = self.plan.amp_up.as_ref().expect("residual amp_up");
                let res_proj = self.plan.res_proj.as_ref().expect("residual res_proj");
                let coarse = self.conv1x1(&mut g, leaves[1], amp_up, &binding)?;
                let refined = self.conv1x1(&mut g, leaves[0], res_proj, &binding)?;
                g.add(refined, coarse)?
            }
        };
        let x_hat = net::run_decoder(
            &mut g,
            z_tilde,
            &self.plan.decoder,
            &self.plan.decoder_out,
            &binding,
        )?;
        Ok(self.values_to_field(g.data(x_hat)))
    }

    /// decode(encode(x)) in one graph; the evaluation reconstruction.
    pub fn reconstruct(&self, field: &Field) -> Result<Field> {
        let x = self.field_to_values(field)?;
        let mut g = Graph::new();
        let tg = self.build_train_graph(&mut g, &x, BottleneckMode::Quantized, false)?;
        Ok(self.values_to_field(g.data(tg.x_hat)))
    }

    /// Everything evaluation needs from one sample, off a single encoder
    /// pass: token grids (quantized variants), the quantized
    /// reconstruction, and the continuous-path reconstruction.
    pub fn evaluate_sample(&self, field: &Field) -> Result<EvalSampleOut> {
        let x = self.field_to_values(field)?;
        let mut g = Graph::new();
        let (binding, z_cq) = self.encode_latent_graph(&mut g, &x, false)?;

        let bn_q = self.apply_bottleneck(&mut g, z_cq, &binding, &BottleneckMode::Quantized)?;
        let x_q = net::run_decoder(&mut g, bn_q.z_tilde, &self.plan.decoder, &self.plan.decoder_out, &binding)?;
        let quantized = self.values_to_field(g.data(x_q));
        let tokens = (self.config.variant != Variant::Continuous).then(|| TokenizedSample {
            variant: self.config.variant,
            latent_h: self.config.latent_resolution(),
            latent_w: self.config.latent_resolution(),
            streams: bn_q
                .streams
                .into_iter()
                .map(|s| s.tokens.expect("quantized mode emits tokens"))
                .collect(),
        });

        let continuous = if self.config.variant == Variant::Continuous {
            quantized.clone()
        } else {
            let bn_c =
                self.apply_bottleneck(&mut g, z_cq, &binding, &BottleneckMode::ContinuousRelaxation)?;
            let x_c = net::run_decoder(&mut g, bn_c.z_tilde, &self.plan.decoder, &self.plan.decoder_out, &binding)?;
            self.values_to_field(g.data(x_c))
        };
        Ok(EvalSampleOut { tokens, quantized, continuous })
    }

    /// Quantized reconstruction plus the continuous-path reconstruction from
    /// the same encoder output (the embedding-error reference).
    pub fn reconstruct_pair(&self, field: &Field) -> Result<(Field, Field)> {
        let x = self.field_to_values(field)?;
        let mut g = Graph::new();
        let (binding, z_cq) = self.encode_latent_graph(&mut g, &x, false)?;

        let bn_q = self.apply_bottleneck(&mut g, z_cq, &binding, &BottleneckMode::Quantized)?;
        let x_q = net::run_decoder(&mut g, bn_q.z_tilde, &self.plan.decoder, &self.plan.decoder_out, &binding)?;
        let quantized = self.values_to_field(g.data(x_q));

        if self.config.variant == Variant::Continuous {
            return Ok((quantized.clone(), quantized));
        }
        let bn_c =
            self.apply_bottleneck(&mut g, z_cq, &binding, &BottleneckMode::ContinuousRelaxation)?;
        let x_c = net::run_decoder(&mut g, bn_c.z_tilde, &self.plan.decoder, &self.plan.decoder_out, &binding)?;
        let continuous = self.values_to_field(g.data(x_c));
        Ok((quantized, continuous))
    }
}
