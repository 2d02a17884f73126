//! Phase vocabulary, prompt template and the frozen prompt encoder.
//!
//! The encoder is a fixed random embedding table (seeded, never trained):
//! every distinct prompt maps to a distinct `[L_text, D_text]` matrix. It
//! stands in for a pretrained sequence encoder; anything with the same
//! `encode` signature can replace it.

use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Tensor;
use crate::params::{Component, ParameterStore};

pub const PROMPT_PREFIX: &str = "Laparoscopic cholecystectomy during ";
pub const DEFAULT_TEXT_LEN: usize = 8;
pub const DEFAULT_TEXT_DIM: usize = 64;
pub const TABLE_SEED: u64 = 7;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SurgicalPhase {
    #[serde(rename = "preparation")]
    Preparation = 0,
    #[serde(rename = "calot triangle dissection")]
    CalotTriangleDissection = 1,
    #[serde(rename = "clipping and cutting")]
    ClippingAndCutting = 2,
    #[serde(rename = "gallbladder dissection")]
    GallbladderDissection = 3,
}

impl SurgicalPhase {
    pub const ALL: [SurgicalPhase; 4] = [
        SurgicalPhase::Preparation,
        SurgicalPhase::CalotTriangleDissection,
        SurgicalPhase::ClippingAndCutting,
        SurgicalPhase::GallbladderDissection,
    ];

    pub fn code(self) -> usize {
        self as usize
    }

    pub fn from_code(code: usize) -> Option<Self> {
        Self::ALL.get(code).copied()
    }

    pub fn display(self) -> &'static str {
        match self {
            SurgicalPhase::Preparation => "preparation",
            SurgicalPhase::CalotTriangleDissection => "calot triangle dissection",
            SurgicalPhase::ClippingAndCutting => "clipping and cutting",
            SurgicalPhase::GallbladderDissection => "gallbladder dissection",
        }
    }

    /// Filesystem-friendly name.
    pub fn slug(self) -> String {
        self.display().replace(' ', "_")
    }

    pub fn from_display(s: &str) -> Option<Self> {
        let s = s.trim().to_lowercase();
        Self::ALL.into_iter().find(|p| p.display() == s)
    }
}

impl fmt::Display for SurgicalPhase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.display())
    }
}

pub fn format_prompt(phase: SurgicalPhase) -> String {
    format!("{PROMPT_PREFIX}{}", phase.display())
}

fn legal_prompts() -> String {
    SurgicalPhase::ALL
        .iter()
        .map(|&p| format!("{:?}", format_prompt(p)))
        .collect::<Vec<_>>()
        .join(", ")
}

/// Case-insensitive inverse of [`format_prompt`].
pub fn parse_phase(prompt: &str) -> Result<SurgicalPhase> {
    let norm = prompt.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
    let prefix = PROMPT_PREFIX.to_lowercase();
    norm.strip_prefix(&prefix)
        .and_then(SurgicalPhase::from_display)
        .ok_or_else(|| Error::Parse {
            prompt: prompt.to_string(),
            legal: legal_prompts(),
        })
}

/// Words the default table knows; anything else maps to the unknown row.
pub const DEFAULT_VOCAB: &[&str] = &[
    "laparoscopic",
    "cholecystectomy",
    "during",
    "preparation",
    "calot",
    "triangle",
    "dissection",
    "clipping",
    "and",
    "cutting",
    "gallbladder",
];

const PAD_ROW: usize = 0;
const UNK_ROW: usize = 1;

/// Frozen word-embedding table: row 0 pads, row 1 is the unknown word,
/// rows `2..` follow `vocab`.
#[derive(Clone, Debug, PartialEq)]
pub struct TokenizerTable {
    vocab: Vec<String>,
    table: Tensor<f32>,
    max_len: usize,
}

impl Default for TokenizerTable {
    fn default() -> Self {
        TokenizerTable::new(DEFAULT_VOCAB, DEFAULT_TEXT_DIM, DEFAULT_TEXT_LEN, TABLE_SEED)
    }
}

impl TokenizerTable {
    /// Entries drawn from `N(0, 1/dim)` with a fixed seed.
    pub fn new(vocab: &[&str], dim: usize, max_len: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows = vocab.len() + 2;
        TokenizerTable {
            vocab: vocab.iter().map(|w| w.to_lowercase()).collect(),
            table: Tensor::randn(&[rows, dim], 1.0 / (dim as f64).sqrt(), &mut rng),
            max_len,
        }
    }

    pub fn dim(&self) -> usize {
        self.table.shape()[1]
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    pub fn table(&self) -> &Tensor<f32> {
        &self.table
    }

    fn row_of(&self, word: &str) -> usize {
        self.vocab
            .iter()
            .position(|w| w == word)
            .map_or(UNK_ROW, |i| i + 2)
    }

    fn gather(&self, rows: &[usize]) -> Tensor<f32> {
        let d = self.dim();
        let mut data = Vec::with_capacity(self.max_len * d);
        for slot in 0..self.max_len {
            let r = rows.get(slot).copied().unwrap_or(PAD_ROW);
            data.extend_from_slice(&self.table.data()[r * d..(r + 1) * d]);
        }
        Tensor::new(vec![self.max_len, d], data).expect("gathered rows")
    }

    /// Embedding of the empty prompt (all pad slots), used as the
    /// unconditional input for guidance.
    pub fn null_embedding(&self) -> Tensor<f32> {
        self.gather(&[])
    }

    pub fn fingerprint(&self) -> String {
        self.to_store().fingerprint()
    }

    pub fn to_store(&self) -> ParameterStore<f32> {
        let mut store = ParameterStore::new(Component::Text);
        store.freeze();
        store.insert("table", self.table.clone());
        store.set_meta(serde_json::json!({
            "vocab": self.vocab,
            "max_len": self.max_len,
        }));
        store
    }

    pub fn from_store(store: &ParameterStore<f32>) -> Result<Self> {
        if store.component() != Component::Text {
            return Err(Error::ComponentTag {
                expected: Component::Text.to_string(),
                found: store.component().to_string(),
            });
        }
        let vocab: Vec<String> = serde_json::from_value(store.meta()["vocab"].clone())?;
        let max_len = store.meta()["max_len"]
            .as_u64()
            .ok_or_else(|| Error::Checkpoint("text store lacks max_len".into()))?
            as usize;
        let table = store.get("table")?.clone();
        if table.ndim() != 2 || table.shape()[0] != vocab.len() + 2 {
            return Err(Error::Checkpoint(format!(
                "text table {:?} does not fit a {}-word vocabulary",
                table.shape(),
                vocab.len()
            )));
        }
        Ok(TokenizerTable {
            vocab,
            table,
            max_len,
        })
    }
}

/// Lower-cased whitespace tokens looked up in the frozen table, padded or
/// truncated to `max_len` slots.
pub fn encode_text(prompt: &str, vocab: &TokenizerTable) -> Result<Tensor<f32>> {
    let words: Vec<String> = prompt.split_whitespace().map(str::to_lowercase).collect();
    if words.is_empty() {
        return Err(Error::Input("empty prompt".into()));
    }
    let rows: Vec<usize> = words.iter().map(|w| vocab.row_of(w)).collect();
    Ok(vocab.gather(&rows))
}

/// A phase, its prompt and the prompt's embedding.
#[derive(Clone, Debug, PartialEq)]
pub struct PromptCondition {
    pub phase: SurgicalPhase,
    pub text: String,
    pub embedding: Tensor<f32>,
}

impl PromptCondition {
    pub fn new(phase: SurgicalPhase, vocab: &TokenizerTable) -> Self {
        let text = format_prompt(phase);
        let embedding = encode_text(&text, vocab).expect("template prompts are nonempty");
        PromptCondition {
            phase,
            text,
            embedding,
        }
    }

    pub fn from_prompt(prompt: &str, vocab: &TokenizerTable) -> Result<Self> {
        let phase = parse_phase(prompt)?;
        Ok(PromptCondition {
            phase,
            text: prompt.to_string(),
            embedding: encode_text(prompt, vocab)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn template_examples() {
        assert_eq!(
            format_prompt(SurgicalPhase::Preparation),
            "Laparoscopic cholecystectomy during preparation"
        );
        assert_eq!(
            format_prompt(SurgicalPhase::GallbladderDissection),
            "Laparoscopic cholecystectomy during gallbladder dissection"
        );
    }

    #[test]
    fn parse_is_inverse_and_case_insensitive() {
        for p in SurgicalPhase::ALL {
            assert_eq!(parse_phase(&format_prompt(p)).unwrap(), p);
            assert_eq!(SurgicalPhase::from_code(p.code()), Some(p));
        }
        assert_eq!(
            parse_phase("LAPAROSCOPIC CHOLECYSTECTOMY DURING CLIPPING AND CUTTING").unwrap(),
            SurgicalPhase::ClippingAndCutting
        );
    }

    #[test]
    fn parse_rejects_and_lists_legal_prompts() {
        let err = parse_phase("random text").unwrap_err();
        let msg = err.to_string();
        for p in SurgicalPhase::ALL {
            assert!(msg.contains(&format_prompt(p)), "{msg}");
        }
        assert!(parse_phase("Laparoscopic cholecystectomy during lunch").is_err());
    }

    #[test]
    fn phase_codes_are_stable() {
        assert_eq!(SurgicalPhase::Preparation.code(), 0);
        assert_eq!(SurgicalPhase::CalotTriangleDissection.code(), 1);
        assert_eq!(SurgicalPhase::ClippingAndCutting.code(), 2);
        assert_eq!(SurgicalPhase::GallbladderDissection.code(), 3);
        assert_eq!(
            serde_json::to_string(&SurgicalPhase::ClippingAndCutting).unwrap(),
            "\"clipping and cutting\""
        );
    }

    #[test]
    fn encoder_is_frozen_and_shaped() {
        let table = TokenizerTable::default();
        let a = encode_text("Laparoscopic cholecystectomy during preparation", &table).unwrap();
        let b = encode_text("Laparoscopic cholecystectomy during preparation", &table).unwrap();
        assert_eq!(a.data(), b.data());
        assert_eq!(a.shape(), &[8, 64]);
        let long = encode_text(&"word ".repeat(20), &table).unwrap();
        assert_eq!(long.shape(), &[8, 64]);
        assert!(matches!(encode_text("   ", &table), Err(Error::Input(_))));
        assert_eq!(TokenizerTable::default().fingerprint(), table.fingerprint());
    }

    #[test]
    fn phase_embeddings_are_distinct() {
        let table = TokenizerTable::default();
        let embs: Vec<Tensor<f32>> = SurgicalPhase::ALL
            .iter()
            .map(|&p| PromptCondition::new(p, &table).embedding)
            .collect();
        let cos = |a: &Tensor<f32>, b: &Tensor<f32>| {
            let dot: f64 = a.data().iter().zip(b.data()).map(|(&x, &y)| x as f64 * y as f64).sum();
            let na: f64 = a.data().iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt();
            let nb: f64 = b.data().iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt();
            dot / (na * nb)
        };
        for i in 0..4 {
            for j in i + 1..4 {
                assert!(cos(&embs[i], &embs[j]) < 0.999);
            }
        }
    }

    #[test]
    fn store_roundtrip() {
        let table = TokenizerTable::default();
        let back = TokenizerTable::from_store(&table.to_store()).unwrap();
        assert_eq!(back, table);
        assert!(table.to_store().is_frozen());
    }
}
