use std::io::BufRead;

use super::{Encoder, EncoderError, Result, Vocab};
use crate::tensor::ParamStore;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PretrainedStats {
    /// Embedding rows overwritten.
    pub replaced: usize,
    /// File entries whose form is not in the vocabulary.
    pub unused_entries: usize,
    /// Vocabulary forms (PAD and UNK excluded) absent from the file.
    pub missing_forms: usize,
}

/// Reads `form v1 .. vdim` lines and overwrites the matching token-embedding
/// rows. The whole file is checked before anything is written, so a
/// dimension error leaves the table as it was.
pub fn load_pretrained_embeddings<R: BufRead>(
    reader: R,
    vocab: &Vocab,
    encoder: &Encoder,
    store: &mut ParamStore,
) -> Result<PretrainedStats> {
    let dim = encoder.config().dim;
    let mut rows: Vec<(usize, Vec<f64>)> = Vec::new();
    let mut stats = PretrainedStats::default();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let mut parts = line.split_whitespace();
        let Some(form) = parts.next() else { continue };
        let values: Vec<f64> = parts
            .map(|p| p.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| EncoderError::DimMismatch { line: lineno + 1, expected: dim, found: 0 })?;
        if values.len() != dim {
            return Err(EncoderError::DimMismatch { line: lineno + 1, expected: dim, found: values.len() });
        }
        if vocab.contains(form) && vocab.id(form) > super::UNK {
            rows.push((vocab.id(form), values));
        } else {
            stats.unused_entries += 1;
        }
    }
    rows.sort_by_key(|r| r.0);
    rows.dedup_by_key(|r| r.0);
    let table = store.get_mut(encoder.token_embedding());
    for (id, values) in &rows {
        table.value.data_mut()[id * dim..(id + 1) * dim].copy_from_slice(values);
    }
    stats.replaced = rows.len();
    stats.missing_forms = vocab.len().saturating_sub(2) - rows.len();
    Ok(stats)
}
