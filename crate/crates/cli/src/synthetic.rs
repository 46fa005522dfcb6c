//! Synthetic embedding corpora with known principal structure.

use lombard_core::{AttributeTable, EmbeddingCorpus, StyleEmbedding};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub struct SyntheticCorpus {
    pub corpus: EmbeddingCorpus,
    pub attributes: AttributeTable,
}

/// Orthonormalizes the columns of a `rows x cols` matrix in place (modified Gram-Schmidt).
fn orthonormal_columns(m: &mut [Vec<f64>]) {
    let cols = m[0].len();
    for j in 0..cols {
        for k in 0..j {
            let dot: f64 = m.iter().map(|r| r[j] * r[k]).sum();
            m.iter_mut().for_each(|r| r[j] -= dot * r[k]);
        }
        let norm = m.iter().map(|r| r[j] * r[j]).sum::<f64>().sqrt();
        m.iter_mut().for_each(|r| r[j] /= norm);
    }
}

/// Embeddings `e_i = mu + sum_k z_ik q_k` with exactly uncorrelated latent
/// columns of standard deviations `4, 3, 2.5, 2, ...` along a random
/// orthonormal basis `q`. The attribute `loudness = 65 + 6 * z_i0 / sd_0 + noise`
/// is affine in the first principal score, with noise standard deviation
/// `noise_fraction * 6`. A three-level `clarity` label follows the sign of the
/// second latent. Basis directions follow the fitted-component sign
/// convention, so the first fitted score correlates positively with loudness.
pub fn loudness_corpus(count: usize, dim: usize, noise_fraction: f64, seed: u64) -> SyntheticCorpus {
    assert!(count >= 3 && dim >= 2, "need at least 3 embeddings of dimension 2");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let latent_dim = dim.min(count - 1);
    let sd: Vec<f64> = (0..latent_dim).map(|k| 4.0 / (1.0 + 0.35 * k as f64)).collect();

    // centred latent scores with exactly orthogonal columns
    let mut z: Vec<Vec<f64>> = (0..count)
        .map(|_| (0..latent_dim).map(|_| rng.sample(StandardNormal)).collect())
        .collect();
    for j in 0..latent_dim {
        let mean = z.iter().map(|r| r[j]).sum::<f64>() / count as f64;
        z.iter_mut().for_each(|r| r[j] -= mean);
    }
    orthonormal_columns(&mut z);
    let scale = ((count - 1) as f64).sqrt();
    for r in z.iter_mut() {
        for (v, s) in r.iter_mut().zip(&sd) {
            *v *= s * scale;
        }
    }

    let mut basis: Vec<Vec<f64>> = (0..dim)
        .map(|_| (0..latent_dim).map(|_| rng.sample(StandardNormal)).collect())
        .collect();
    orthonormal_columns(&mut basis);
    // orient each direction like fitted components: largest-magnitude entry positive
    for k in 0..latent_dim {
        let pivot = (0..dim)
            .max_by(|&a, &b| basis[a][k].abs().total_cmp(&basis[b][k].abs()))
            .unwrap();
        if basis[pivot][k] < 0.0 {
            basis.iter_mut().for_each(|r| r[k] = -r[k]);
        }
    }
    let mu: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();

    let mut embeddings = Vec::with_capacity(count);
    let mut attributes = AttributeTable::new();
    for (i, zi) in z.iter().enumerate() {
        let id = format!("utt{i:04}");
        let values: Vec<f32> = (0..dim)
            .map(|d| (mu[d] + zi.iter().enumerate().map(|(k, &zk)| zk * basis[d][k]).sum::<f64>()) as f32)
            .collect();
        let noise: f64 = rng.sample(StandardNormal);
        let loudness = 65.0 + 6.0 * zi[0] / sd[0] + noise_fraction * 6.0 * noise;
        let clarity = if zi[1] > 0.5 * sd[1] {
            1.0
        } else if zi[1] < -0.5 * sd[1] {
            -1.0
        } else {
            0.0
        };
        attributes.insert(&id, "loudness", loudness);
        attributes.insert(&id, "clarity", clarity);
        embeddings.push(StyleEmbedding::new(id, values));
    }
    SyntheticCorpus {
        corpus: EmbeddingCorpus::new(embeddings).expect("synthetic corpus is consistent"),
        attributes,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use lombard_core::embedding_store::join_attributes;
    use lombard_core::{ComponentCount, PcaModel};

    #[test]
    fn first_component_tracks_loudness() {
        let s = loudness_corpus(200, 16, 0.01, 4);
        let model = PcaModel::<f64>::fit(&s.corpus, ComponentCount::Max).unwrap();
        let pairs = join_attributes(&s.corpus, &s.attributes, "loudness").unwrap();
        let r = model.correlate_components(&pairs).unwrap();
        assert!(r[0].pearson_r.unwrap() > 0.99);
        for c in &r[2..] {
            assert!(c.pearson_r.is_none_or(|v| v.abs() < 0.2));
        }
    }
}
