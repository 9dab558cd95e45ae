use crate::error::Result;
use crate::nn::params::{ParamId, ParamStore};
use crate::tensor::{gaussian_init, Tape, Tensor, Value};

/// Word id reserved for padding; its embedding row stays zero and is never
/// updated.
pub const PAD: u32 = 0;
/// Word id for out-of-vocabulary tokens.
pub const UNK: u32 = 1;

/// Register a `[vocab, dim]` embedding table. Row [`PAD`] is zeroed.
pub fn init_embedding(
    store: &mut ParamStore,
    name: &str,
    vocab: usize,
    dim: usize,
    std: f64,
    seed: u64,
) -> Result<ParamId> {
    let mut table = gaussian_init(&[vocab, dim], std, seed)?;
    table.row_mut(0).fill(0.0);
    store.add(name, table)
}

/// Mean word embedding of a post concatenated with its context vector:
/// the per-post input row of the recurrent encoder.
///
/// [`PAD`] tokens are dropped before pooling; a post with no remaining
/// tokens pools to the zero vector so the row stays well-defined.
pub fn embed_and_pool(
    tape: &mut Tape,
    table: Value,
    tokens: &[u32],
    context: Value,
) -> Result<Value> {
    let real: Vec<u32> = tokens.iter().copied().filter(|&t| t != PAD).collect();
    let pooled = if real.is_empty() {
        let dim = tape.shape(table)[1];
        tape.constant(Tensor::zeros(&[dim]))
    } else {
        let rows = tape.gather_rows(table, &real)?;
        tape.mean_over_time(rows, real.len())?
    };
    tape.concat(&[pooled, context])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;

    fn toy_table(tape: &mut Tape) -> Value {
        // rows: PAD, UNK, then two one-hot words
        let t = Tensor::from_rows(&[
            vec![0.0, 0.0],
            vec![0.3, 0.3],
            vec![1.0, 0.0],
            vec![0.0, 1.0],
        ])
        .unwrap();
        tape.leaf(t)
    }

    #[test]
    fn two_tokens_pool_to_mean() {
        let mut tape = Tape::new();
        let table = toy_table(&mut tape);
        let ctx = tape.constant(Tensor::from_vec(vec![0.5]));
        let x = embed_and_pool(&mut tape, table, &[2, 3], ctx).unwrap();
        assert_eq!(tape.data(x).data(), &[0.5, 0.5, 0.5]);
    }

    #[test]
    fn single_token_is_identity() {
        let mut tape = Tape::new();
        let table = toy_table(&mut tape);
        let ctx = tape.constant(Tensor::from_vec(vec![-1.0]));
        let x = embed_and_pool(&mut tape, table, &[2], ctx).unwrap();
        assert_eq!(tape.data(x).data(), &[1.0, 0.0, -1.0]);
    }

    #[test]
    fn unk_tokens_pool_to_unk_row() {
        let mut tape = Tape::new();
        let table = toy_table(&mut tape);
        let ctx = tape.constant(Tensor::from_vec(vec![0.5]));
        let x = embed_and_pool(&mut tape, table, &[UNK, UNK, UNK], ctx).unwrap();
        assert_eq!(tape.data(x).data(), &[0.3, 0.3, 0.5]);
    }

    #[test]
    fn pad_is_dropped_and_empty_posts_pool_to_zero() {
        let mut tape = Tape::new();
        let table = toy_table(&mut tape);
        let ctx = tape.constant(Tensor::from_vec(vec![0.7]));
        let mixed = embed_and_pool(&mut tape, table, &[PAD, 2, PAD], ctx).unwrap();
        assert_eq!(tape.data(mixed).data(), &[1.0, 0.0, 0.7]);
        let empty = embed_and_pool(&mut tape, table, &[PAD, PAD], ctx).unwrap();
        assert_eq!(tape.data(empty).data(), &[0.0, 0.0, 0.7]);
    }

    #[test]
    fn out_of_range_id_is_a_vocab_error() {
        let mut tape = Tape::new();
        let table = toy_table(&mut tape);
        let ctx = tape.constant(Tensor::from_vec(vec![0.0]));
        let err = embed_and_pool(&mut tape, table, &[9], ctx).unwrap_err();
        assert!(matches!(err, Error::Vocab(9, 4)));
    }

    #[test]
    fn pad_row_zero_after_init() {
        let mut store = ParamStore::new();
        let id = init_embedding(&mut store, "emb", 5, 3, 0.1, 7).unwrap();
        assert_eq!(store.get(id).row(0), &[0.0, 0.0, 0.0]);
        // non-PAD rows actually drew from the initializer
        assert!(store.get(id).row(1).iter().any(|v| *v != 0.0));
    }
}
