//! Discrete bottlenecks: FSQ streams, the VQ baseline, the channel-split
//! factorize/quantize chain, index packing, and token serialization.
//!
//! All quantization here is a pure function of its inputs; learned state
//! (codebooks, mixer weights) is read-only during quantization, so these
//! are safe to call concurrently.

mod factorize;
mod fsq;
mod spec;
mod token;
mod vq;

pub use factorize::{commitment_loss, factorize, factorize_graph, recombine_concat, FactorizationSpec};
pub use fsq::{fsq_dequantize, fsq_quantize, fsq_requantize, fsq_unbound, zero_code};
pub use spec::{pack_index, unpack_index, QuantizerSpec};
pub use token::{
    read_token_file, tokens_from_bytes, tokens_to_bytes, write_token_file, TokenGrid, TOKEN_MAGIC,
    TOKEN_VERSION,
};
pub use vq::{vq_quantize, VqCodebook};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    #[test]
    fn phaedra_default_pair_has_paper_vocabulary() {
        let morph = QuantizerSpec::morphology_default();
        let amp = QuantizerSpec::amplitude_default();
        assert_eq!(morph.codebook_size(), 8640);
        assert_eq!(amp.codebook_size(), 1024);
        assert_eq!(morph.codebook_size() + amp.codebook_size(), 9664);
        // one morphology + one amplitude token per latent position
        let (h, w) = (32, 32);
        assert_eq!(2 * h * w, 2048);
    }

    #[test]
    fn idempotence_property_over_random_latents() {
        // quantize -> emitted values -> requantize reproduces identical
        // tokens and values, for both default streams
        let mut rng = Rng::seed_from_u64(123);
        for spec in [
            QuantizerSpec::morphology_default(),
            QuantizerSpec::amplitude_default(),
            QuantizerSpec::amplitude_ablation_default(),
        ] {
            for _ in 0..50 {
                let (h, w) = (4, 4);
                let z: Vec<f64> = (0..spec.dims() * h * w).map(|_| rng.normal() * 2.0).collect();
                let (values, tokens) = fsq_quantize(&z, h, w, &spec).unwrap();
                let (values2, tokens2) = fsq_requantize(&values, h, w, &spec).unwrap();
                assert_eq!(tokens2.indices, tokens.indices);
                assert_eq!(values2, values);
                // and dequantize agrees with the emitted values bit-exactly
                let deq = fsq_dequantize::<f64>(&tokens).unwrap();
                assert_eq!(deq, values);
            }
        }
    }

    #[test]
    fn recombination_mixer_contract() {
        use phaedra_tensor::Graph;
        // identity-initialized 1x1 mixer with output width C_mu + 1 returns
        // the concatenation unchanged
        let (c_mu, h, w) = (8usize, 2usize, 2usize);
        let c_q = c_mu + 1;
        let mut rng = Rng::seed_from_u64(71);
        let mu: Vec<f64> = (0..c_mu * h * w).map(|_| rng.uniform_in(-1.0, 1.0)).collect();
        let alpha: Vec<f64> = (0..h * w).map(|_| rng.uniform_in(-1.0, 1.0)).collect();

        let run = |mu_data: &[f64], alpha_data: &[f64], weights: Vec<f64>| -> Vec<f64> {
            let mut g = Graph::<f64>::new();
            let m = g.leaf(&[c_mu, h, w], mu_data.to_vec(), false).unwrap();
            let a = g.leaf(&[1, h, w], alpha_data.to_vec(), false).unwrap();
            let cat = g.concat_channels(m, a).unwrap();
            let wt = g.leaf(&[c_q, c_q, 1, 1], weights, false).unwrap();
            let out = g.conv2d(cat, wt, None, 1, 0).unwrap();
            g.data(out).to_vec()
        };

        let mut identity = vec![0.0f64; c_q * c_q];
        for i in 0..c_q {
            identity[i * c_q + i] = 1.0;
        }
        let out = run(&mu, &alpha, identity.clone());
        let mut concat = mu.clone();
        concat.extend_from_slice(&alpha);
        assert_eq!(out, concat);

        // the mixer is linear, so zeroing the amplitude stream leaves the
        // output depending on morphology alone
        let mut random_w = Vec::with_capacity(c_q * c_q);
        for _ in 0..c_q * c_q {
            random_w.push(rng.uniform_in(-0.5, 0.5));
        }
        let zero_alpha = vec![0.0f64; h * w];
        let base = run(&mu, &zero_alpha, random_w.clone());
        let alpha2: Vec<f64> = (0..h * w).map(|_| rng.uniform_in(-1.0, 1.0)).collect();
        let shifted = run(&mu, &alpha2, random_w.clone());
        let direct = run(&mu, &zero_alpha, random_w.clone());
        assert_eq!(base, direct);
        assert_ne!(base, shifted);

        // mixer-weight gradients match finite differences
        use phaedra_tensor::gradcheck::check_gradient;
        let (mu_c, alpha_c) = (mu.clone(), alpha.clone());
        let mut weights = random_w;
        let analytic = {
            let mut g = Graph::<f64>::new();
            let m = g.leaf(&[c_mu, h, w], mu_c.clone(), false).unwrap();
            let a = g.leaf(&[1, h, w], alpha_c.clone(), false).unwrap();
            let cat = g.concat_channels(m, a).unwrap();
            let wt = g.leaf(&[c_q, c_q, 1, 1], weights.clone(), true).unwrap();
            let out = g.conv2d(cat, wt, None, 1, 0).unwrap();
            let loss = g.sum(out).unwrap();
            g.backward(loss).unwrap().get_or_zeros(wt)
        };
        let worst = check_gradient(
            |w_vals: &[f64]| {
                let mut g = Graph::<f64>::new();
                let m = g.leaf(&[c_mu, h, w], mu_c.clone(), false).unwrap();
                let a = g.leaf(&[1, h, w], alpha_c.clone(), false).unwrap();
                let cat = g.concat_channels(m, a).unwrap();
                let wt = g.leaf(&[c_q, c_q, 1, 1], w_vals.to_vec(), true).unwrap();
                let out = g.conv2d(cat, wt, None, 1, 0).unwrap();
                let loss = g.sum(out).unwrap();
                g.data(loss)[0]
            },
            &mut weights,
            &analytic,
            1e-5,
        );
        assert!(worst < 1e-6, "mixer gradient rel err {worst}");
    }

    #[test]
    fn vq_idempotence_on_own_output() {
        let mut rng = Rng::seed_from_u64(9);
        let dim = 3;
        let k = 11;
        let entries: Vec<f64> = (0..k * dim).map(|_| rng.uniform_in(-1.0, 1.0)).collect();
        let cb = VqCodebook::new(entries, k, dim).unwrap();
        let z: Vec<f64> = (0..dim * 16).map(|_| rng.uniform_in(-1.0, 1.0)).collect();
        let (values, indices) = vq_quantize(&z, 4, 4, &cb).unwrap();
        let (values2, indices2) = vq_quantize(&values, 4, 4, &cb).unwrap();
        assert_eq!(indices2, indices);
        assert_eq!(values2, values);
    }
}
