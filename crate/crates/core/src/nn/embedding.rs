//! Token vocabulary and the embedding table.

use std::collections::HashMap;
use std::path::Path;

use rand::Rng;

use crate::autodiff::{NodeId, ParamId, Params, Tape, Tensor};

use super::NnError;

pub const UNK: &str = "<unk>";

/// Token/id bijection with id 0 reserved for the unknown token.
#[derive(Debug, Clone)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    /// Build from tokens in first-seen order (deterministic for a fixed
    /// iteration order).
    pub fn build<'a>(tokens: impl IntoIterator<Item = &'a str>) -> Self {
        let mut v = Vocab { tokens: Vec::new(), index: HashMap::new() };
        v.intern(UNK);
        for tok in tokens {
            v.intern(tok);
        }
        v
    }

    /// Rebuild from a stored token list (checkpoints); the list must start
    /// with the unknown token.
    pub fn from_token_list(tokens: Vec<String>) -> Result<Self, NnError> {
        if tokens.first().map(String::as_str) != Some(UNK) {
            return Err(NnError::Vocab(format!(
                "token list must start with '{}'",
                UNK
            )));
        }
        let mut v = Vocab { tokens: Vec::new(), index: HashMap::new() };
        for tok in tokens {
            if v.index.contains_key(&tok) {
                return Err(NnError::Vocab(format!("duplicate token '{}'", tok)));
            }
            v.intern(&tok);
        }
        Ok(v)
    }

    fn intern(&mut self, tok: &str) -> usize {
        if let Some(&id) = self.index.get(tok) {
            return id;
        }
        self.tokens.push(tok.to_string());
        self.index.insert(tok.to_string(), self.tokens.len() - 1);
        self.tokens.len() - 1
    }

    /// Id of a token, 0 (unknown) when absent.
    pub fn id(&self, tok: &str) -> usize {
        self.index.get(tok).copied().unwrap_or(0)
    }

    pub fn contains(&self, tok: &str) -> bool {
        self.index.contains_key(tok)
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

/// The embedding matrix: `|V| x d_emb`, row 0 pinned to the zero vector for
/// unknown tokens. Trainable by default; loading a vector file freezes it.
#[derive(Debug, Clone)]
pub struct Embeddings {
    pub table: ParamId,
    pub d_emb: usize,
    pub frozen: bool,
}

impl Embeddings {
    pub fn init(
        params: &mut Params,
        name: &str,
        vocab: &Vocab,
        d_emb: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let mut t = Tensor::uniform(&[vocab.len(), d_emb], -0.1, 0.1, rng);
        t.data_mut()[..d_emb].iter_mut().for_each(|v| *v = 0.0);
        Embeddings { table: params.add(name, t), d_emb, frozen: false }
    }

    /// Initialize from a plain-text vector file (`token v1 .. vd` per line)
    /// and freeze. Tokens without a line keep the zero vector.
    pub fn init_from_file(
        params: &mut Params,
        name: &str,
        vocab: &Vocab,
        d_emb: usize,
        path: &Path,
    ) -> Result<Self, NnError> {
        let body = std::fs::read_to_string(path).map_err(|e| {
            NnError::EmbeddingFile(format!("{}: {}", path.display(), e))
        })?;
        let mut t = Tensor::zeros(&[vocab.len(), d_emb]);
        for (line_no, line) in body.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let tok = parts.next().ok_or_else(|| {
                NnError::EmbeddingFile(format!("{} line {}: empty line", path.display(), line_no + 1))
            })?;
            let vals: Result<Vec<f64>, _> = parts.map(str::parse::<f64>).collect();
            let vals = vals.map_err(|e| {
                NnError::EmbeddingFile(format!("{} line {}: {}", path.display(), line_no + 1, e))
            })?;
            if vals.len() != d_emb {
                return Err(NnError::EmbeddingFile(format!(
                    "{} line {}: expected {} values, got {}",
                    path.display(),
                    line_no + 1,
                    d_emb,
                    vals.len()
                )));
            }
            if !vocab.contains(tok) || tok == UNK {
                continue;
            }
            let id = vocab.id(tok);
            t.data_mut()[id * d_emb..(id + 1) * d_emb].copy_from_slice(&vals);
        }
        Ok(Embeddings { table: params.add_frozen(name, t), d_emb, frozen: true })
    }

    pub fn embed(&self, tape: &mut Tape, params: &Params, token_id: usize) -> Result<NodeId, NnError> {
        let table = tape.param(params, self.table);
        Ok(tape.embed(table, token_id)?)
    }

    /// Embed a whole id sequence.
    pub fn embed_all(
        &self,
        tape: &mut Tape,
        params: &Params,
        ids: &[usize],
    ) -> Result<Vec<NodeId>, NnError> {
        ids.iter().map(|&id| self.embed(tape, params, id)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn unknown_tokens_map_to_zero_vector() {
        let vocab = Vocab::build(["alpha", "beta"].into_iter());
        assert_eq!(vocab.id("alpha"), 1);
        assert_eq!(vocab.id("never-seen"), 0);

        let mut params = Params::new();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let emb = Embeddings::init(&mut params, "emb", &vocab, 4, &mut rng);
        let mut tape = Tape::eval();
        let unk = emb.embed(&mut tape, &params, vocab.id("never-seen")).unwrap();
        assert_eq!(tape.value(unk).data(), &[0.0; 4]);
        let known = emb.embed(&mut tape, &params, vocab.id("beta")).unwrap();
        assert!(tape.value(known).data().iter().any(|&v| v != 0.0));
    }

    #[test]
    fn vector_file_initializes_and_freezes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vectors.txt");
        std::fs::write(&path, "alpha 1 2 3\nmissing 9 9 9\nbeta 0.5 -0.5 0.25\n").unwrap();
        let vocab = Vocab::build(["alpha", "beta", "gamma"].into_iter());
        let mut params = Params::new();
        let emb = Embeddings::init_from_file(&mut params, "emb", &vocab, 3, &path).unwrap();
        assert!(emb.frozen);
        assert!(!params.entry(emb.table).trainable);
        let table = params.value(emb.table);
        assert_eq!(&table.data()[3..6], &[1.0, 2.0, 3.0]); // alpha
        assert_eq!(&table.data()[9..12], &[0.0, 0.0, 0.0]); // gamma kept zero
    }

    #[test]
    fn malformed_vector_file_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vectors.txt");
        std::fs::write(&path, "alpha 1 2\n").unwrap();
        let vocab = Vocab::build(["alpha"].into_iter());
        let mut params = Params::new();
        let err = Embeddings::init_from_file(&mut params, "emb", &vocab, 3, &path).unwrap_err();
        assert!(err.to_string().contains("expected 3 values"), "{err}");
    }

    #[test]
    fn token_list_round_trip() {
        let vocab = Vocab::build(["x", "y"].into_iter());
        let rebuilt = Vocab::from_token_list(vocab.tokens().to_vec()).unwrap();
        assert_eq!(rebuilt.id("y"), vocab.id("y"));
        assert!(Vocab::from_token_list(vec!["x".into()]).is_err(), "must start with unk");
    }
}
