use super::{validate_texts, EmbedBackend, EmbeddingVector, GatewayError};

pub const TRIGRAM_DIM: usize = 256;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

/// Offline embedding: character trigrams of each lowercased alphanumeric
/// word, padded as `#word#`, hashed into 256 buckets and L2-normalized.
#[derive(Debug, Clone, Default)]
pub struct TrigramEmbedder;

impl TrigramEmbedder {
    pub const MODEL_ID: &'static str = "trigram-hash-256";

    pub fn embed_one(text: &str) -> Vec<f64> {
        let mut counts = vec![0.0f64; TRIGRAM_DIM];
        let lowered = text.to_lowercase();
        for word in lowered.split(|c: char| !c.is_alphanumeric()).filter(|w| !w.is_empty()) {
            let padded: Vec<char> = std::iter::once('#')
                .chain(word.chars())
                .chain(std::iter::once('#'))
                .collect();
            for gram in padded.windows(3) {
                let s: String = gram.iter().collect();
                counts[(fnv1a(s.as_bytes()) % TRIGRAM_DIM as u64) as usize] += 1.0;
            }
        }
        let norm = counts.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            counts.iter_mut().for_each(|x| *x /= norm);
        }
        counts
    }
}

impl EmbedBackend for TrigramEmbedder {
    fn model_id(&self) -> String {
        Self::MODEL_ID.into()
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, GatewayError> {
        validate_texts(texts)?;
        Ok(texts
            .iter()
            .map(|t| EmbeddingVector::new(Self::embed_one(t), Self::MODEL_ID))
            .collect())
    }
}

/// `dot(a, b) / (|a| |b|)` in double precision.
pub fn cosine_similarity(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, GatewayError> {
    if a.values.len() != b.values.len() {
        return Err(GatewayError::DimensionMismatch(a.values.len(), b.values.len()));
    }
    let dot: f64 = a.values.iter().zip(&b.values).map(|(x, y)| x * y).sum();
    let na = a.values.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.values.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(GatewayError::ZeroVector);
    }
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}
