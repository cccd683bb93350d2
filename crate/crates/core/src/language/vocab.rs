//! Word-level vocabulary over the synthetic grammar with byte fallback,
//! plus appended special tokens (`<SEG>`, `<OBJi>`, role markers).

use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};

pub const SEG_TOKEN: &str = "<SEG>";
pub const USER_TOKEN: &str = "<user>";
pub const ASSISTANT_TOKEN: &str = "<assistant>";
pub const SCENE_TOKEN: &str = "<scene>";
pub const EOS_TOKEN: &str = "</s>";

const PUNCT: [char; 4] = ['.', ',', '?', '!'];

/// Token ↔ id bijection. Ids are append-only: base tokens (words, punctuation,
/// 256 byte-fallback tokens) come first, specials strictly above them, and
/// extension never renumbers an existing id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    base_len: usize,
    byte_offset: usize,
}

impl Vocabulary {
    /// Base vocabulary plus the role-marker specials. `<OBJi>`/`<SEG>` are
    /// added separately by [`Vocabulary::extend`].
    pub fn new(words: &[&str]) -> Self {
        let mut tokens: Vec<String> = Vec::new();
        for w in words {
            if !tokens.iter().any(|t| t == w) {
                tokens.push((*w).to_string());
            }
        }
        for p in PUNCT {
            tokens.push(p.to_string());
        }
        let byte_offset = tokens.len();
        for b in 0..=255u8 {
            tokens.push(format!("<0x{b:02X}>"));
        }
        let base_len = tokens.len();
        for s in [USER_TOKEN, ASSISTANT_TOKEN, SCENE_TOKEN, EOS_TOKEN] {
            tokens.push(s.to_string());
        }
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Vocabulary { tokens, index, base_len, byte_offset }
    }

    /// Append `<OBJ1>`…`<OBJn>` and `<SEG>` if absent. Idempotent for the
    /// same `n`; never renumbers existing ids.
    pub fn extend(&mut self, n_objects: usize) {
        for i in 1..=n_objects {
            let tok = format!("<OBJ{i}>");
            if !self.index.contains_key(&tok) {
                self.index.insert(tok.clone(), self.tokens.len());
                self.tokens.push(tok);
            }
        }
        if !self.index.contains_key(SEG_TOKEN) {
            self.index.insert(SEG_TOKEN.to_string(), self.tokens.len());
            self.tokens.push(SEG_TOKEN.to_string());
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn base_len(&self) -> usize {
        self.base_len
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(|s| s.as_str())
    }

    pub fn seg_id(&self) -> Option<usize> {
        self.id(SEG_TOKEN)
    }

    pub fn obj_id(&self, instance: u32) -> Option<usize> {
        self.id(&format!("<OBJ{instance}>"))
    }

    pub fn eos_id(&self) -> usize {
        self.id(EOS_TOKEN).expect("eos always present")
    }

    pub fn user_id(&self) -> usize {
        self.id(USER_TOKEN).expect("role markers always present")
    }

    pub fn assistant_id(&self) -> usize {
        self.id(ASSISTANT_TOKEN).expect("role markers always present")
    }

    pub fn scene_id(&self) -> usize {
        self.id(SCENE_TOKEN).expect("role markers always present")
    }

    fn is_byte(&self, id: usize) -> Option<u8> {
        if (self.byte_offset..self.byte_offset + 256).contains(&id) {
            Some((id - self.byte_offset) as u8)
        } else {
            None
        }
    }

    fn is_punct_token(&self, id: usize) -> bool {
        self.tokens[id].len() == 1 && PUNCT.contains(&self.tokens[id].chars().next().unwrap())
    }

    pub fn tokenize(&self, text: &str) -> Vec<usize> {
        let mut ids = Vec::new();
        for chunk in text.split_whitespace() {
            let mut rest = chunk;
            let mut trailing: Vec<usize> = Vec::new();
            // specials match whole chunks only
            while rest.len() > 1 {
                let last = rest.chars().last().unwrap();
                if PUNCT.contains(&last) && self.index.get(rest).is_none() {
                    trailing.push(self.index[&last.to_string()]);
                    rest = &rest[..rest.len() - last.len_utf8()];
                } else {
                    break;
                }
            }
            if !rest.is_empty() {
                match self.index.get(rest) {
                    Some(&id) => ids.push(id),
                    None => {
                        for b in rest.bytes() {
                            ids.push(self.byte_offset + b as usize);
                        }
                    }
                }
            }
            ids.extend(trailing.iter().rev());
        }
        ids
    }

    pub fn detokenize(&self, ids: &[usize]) -> Result<String> {
        let mut out = String::new();
        let mut byte_run: Vec<u8> = Vec::new();
        let flush = |out: &mut String, run: &mut Vec<u8>| {
            if !run.is_empty() {
                if !out.is_empty() {
                    out.push(' ');
                }
                out.push_str(&String::from_utf8_lossy(run));
                run.clear();
            }
        };
        for &id in ids {
            if id >= self.tokens.len() {
                return Err(Error::Contract(format!("unknown token id {id}")));
            }
            if let Some(b) = self.is_byte(id) {
                byte_run.push(b);
                continue;
            }
            flush(&mut out, &mut byte_run);
            if self.is_punct_token(id) {
                out.push_str(&self.tokens[id]);
            } else {
                if !out.is_empty() {
                    out.push(' ');
                }
                out.push_str(&self.tokens[id]);
            }
        }
        flush(&mut out, &mut byte_run);
        Ok(out)
    }

    /// JSON list of tokens in id order.
    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string(&self.tokens)
            .map_err(|e| Error::Parse { path: path.display().to_string(), message: e.to_string() })?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path, base_len: usize, byte_offset: usize) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let tokens: Vec<String> = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        if base_len > tokens.len() {
            return Err(Error::Vocabulary(format!(
                "base length {base_len} exceeds {} tokens",
                tokens.len()
            )));
        }
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Ok(Vocabulary { tokens, index, base_len, byte_offset })
    }

    pub fn byte_offset(&self) -> usize {
        self.byte_offset
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

/// Vocabulary over the synthetic grammar.
pub fn grammar_vocabulary() -> Vocabulary {
    Vocabulary::new(&crate::pointcloud::synth::grammar_words())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab() -> Vocabulary {
        let mut v = grammar_vocabulary();
        v.extend(9);
        v
    }

    #[test]
    fn specials_are_single_tokens() {
        let v = vocab();
        let ids = v.tokenize("It is <OBJ3>. <SEG>");
        let toks: Vec<&str> = ids.iter().map(|&i| v.token(i).unwrap()).collect();
        assert_eq!(toks, vec!["It", "is", "<OBJ3>", ".", "<SEG>"]);
    }

    #[test]
    fn empty_string_is_empty_sequence() {
        assert!(vocab().tokenize("").is_empty());
    }

    #[test]
    fn round_trip_on_grammar_sentences() {
        use crate::pointcloud::synth::{synth_scene, GeneratorConfig};
        let v = vocab();
        let cfg = GeneratorConfig { objects_per_scene: 6, ..Default::default() };
        let mut checked = 0;
        for seed in 0..25 {
            let (_, _, samples) = synth_scene(&cfg, seed, "s").unwrap();
            for s in samples {
                for text in [&s.instruction, &s.response] {
                    let ids = v.tokenize(text);
                    assert_eq!(&v.detokenize(&ids).unwrap(), text);
                    checked += 1;
                }
            }
        }
        assert!(checked >= 100, "only {checked} sentences checked");
    }

    #[test]
    fn byte_fallback_round_trips_unknown_words() {
        let v = vocab();
        let text = "Segment the zorp.";
        let ids = v.tokenize(text);
        assert_eq!(v.detokenize(&ids).unwrap(), text);
    }

    #[test]
    fn extension_is_idempotent_and_append_only() {
        let mut v = grammar_vocabulary();
        let before: Vec<(String, usize)> =
            v.tokens().iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        let base_count = v.len();
        v.extend(4);
        assert_eq!(v.len(), base_count + 5); // 4 identifiers + <SEG>
        for (tok, id) in &before {
            assert_eq!(v.id(tok), Some(*id), "id of {tok} changed");
        }
        let after_once = v.tokens().to_vec();
        v.extend(4);
        assert_eq!(v.tokens(), &after_once[..]);
    }

    #[test]
    fn unknown_id_in_detokenize_is_contract_error() {
        let v = vocab();
        assert!(matches!(v.detokenize(&[v.len()]), Err(Error::Contract(_))));
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vocab.json");
        let v = vocab();
        v.save(&path).unwrap();
        let loaded = Vocabulary::load(&path, v.base_len(), v.byte_offset()).unwrap();
        assert_eq!(loaded, v);
    }
}
