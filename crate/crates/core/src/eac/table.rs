use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::{uniform_init, Graph, ParamStore, Rng, Var};

pub const UNK_WORD: &str = "<unk>";
pub const PAD_WORD: &str = "<pad>";
pub const WORD_PARAM: &str = "tok.word";
pub const CHAR_PARAM: &str = "tok.char";

const UNK_IDX: usize = 0;
const PAD_IDX: usize = 1;
/// Character rows: 0 = out-of-alphabet fallback, 1 = padding.
const CHAR_FALLBACK: usize = 0;
const CHAR_PAD: usize = 1;

/// Lowercased whitespace/punctuation tokenizer used for attribute literals.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| c.is_whitespace() || (c.is_ascii_punctuation() && c != '-' && c != '\''))
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Word and character vocabularies plus the names of their embedding
/// parameters. Index 0/1 of both tables are reserved for unknown and padding.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenEmbeddingTable {
    words: Vec<String>,
    chars: Vec<char>,
    pub word_dim: usize,
    pub char_dim: usize,
    #[serde(skip)]
    word_index: HashMap<String, usize>,
    #[serde(skip)]
    char_index: HashMap<char, usize>,
}

impl TokenEmbeddingTable {
    /// Builds vocabularies from raw tokens (lowercased). Ordering is sorted,
    /// so the same token multiset always yields the same table.
    pub fn build<'a, I>(tokens: I, word_dim: usize, char_dim: usize) -> Self
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut words = BTreeSet::new();
        let mut chars = BTreeSet::new();
        for t in tokens {
            let t = t.to_lowercase();
            chars.extend(t.chars());
            words.insert(t);
        }
        words.remove(UNK_WORD);
        words.remove(PAD_WORD);
        let words: Vec<String> = [UNK_WORD.to_string(), PAD_WORD.to_string()]
            .into_iter()
            .chain(words)
            .collect();
        // the two reserved char rows get placeholder code points
        let chars: Vec<char> = ['\u{0}', '\u{1}'].into_iter().chain(chars.into_iter().filter(|c| *c > '\u{1}')).collect();
        Self::from_parts(words, chars, word_dim, char_dim)
    }

    pub fn from_parts(words: Vec<String>, chars: Vec<char>, word_dim: usize, char_dim: usize) -> Self {
        let mut t = Self {
            words,
            chars,
            word_dim,
            char_dim,
            word_index: HashMap::new(),
            char_index: HashMap::new(),
        };
        t.reindex();
        t
    }

    /// Rebuilds lookup maps (needed after deserialization).
    pub fn reindex(&mut self) {
        self.word_index = self.words.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        self.char_index = self
            .chars
            .iter()
            .enumerate()
            .skip(2)
            .map(|(i, c)| (*c, i))
            .collect();
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn chars(&self) -> &[char] {
        &self.chars
    }

    pub fn dim(&self) -> usize {
        self.word_dim + self.char_dim
    }

    pub fn word_index(&self, word: &str) -> usize {
        if word == PAD_WORD {
            return PAD_IDX;
        }
        self.word_index
            .get(&word.to_lowercase())
            .copied()
            .unwrap_or(UNK_IDX)
    }

    pub fn char_indices(&self, word: &str) -> Vec<usize> {
        if word == PAD_WORD {
            return vec![CHAR_PAD];
        }
        let idx: Vec<usize> = word
            .to_lowercase()
            .chars()
            .map(|c| self.char_index.get(&c).copied().unwrap_or(CHAR_FALLBACK))
            .collect();
        if idx.is_empty() {
            vec![CHAR_FALLBACK]
        } else {
            idx
        }
    }

    /// Creates `tok.word` and `tok.char`. Rows found in `pretrained` are
    /// copied in; everything else is uniform in ±0.1.
    pub fn init_params(&self, store: &mut ParamStore, rng: &mut Rng, pretrained: Option<&WordVectors>) -> Result<()> {
        let mut w = uniform_init(rng, self.words.len(), self.word_dim, 0.1);
        if let Some(vecs) = pretrained {
            if vecs.dim != self.word_dim {
                return Err(Error::InvalidArgument(format!(
                    "word vectors have dimension {}, table expects {}",
                    vecs.dim, self.word_dim
                )));
            }
            for (i, word) in self.words.iter().enumerate().skip(2) {
                if let Some(v) = vecs.get(word) {
                    w.row_mut(i).copy_from_slice(v);
                }
            }
        }
        store.insert(WORD_PARAM, w);
        store.insert(CHAR_PARAM, uniform_init(rng, self.chars.len(), self.char_dim, 0.1));
        Ok(())
    }

    /// `[word vector ‖ mean of character vectors]` as a column.
    pub fn embed(&self, g: &mut Graph<'_>, word: &str) -> Result<Var> {
        let params = g.params();
        let wid = params
            .id(WORD_PARAM)
            .ok_or_else(|| Error::InvalidArgument("token table parameters missing".into()))?;
        let cid = params
            .id(CHAR_PARAM)
            .ok_or_else(|| Error::InvalidArgument("token table parameters missing".into()))?;
        let wv = g.embed_row(wid, self.word_index(word))?;
        let cv = g.embed_mean(cid, &self.char_indices(word))?;
        g.vstack(&[wv, cv])
    }
}

/// Pretrained vectors read from a plain-text file (`token v1 v2 ...`).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WordVectors {
    pub dim: usize,
    vectors: HashMap<String, Vec<f64>>,
}

impl WordVectors {
    pub fn get(&self, word: &str) -> Option<&[f64]> {
        self.vectors.get(word).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

pub fn load_word_vectors(path: impl AsRef<Path>) -> Result<WordVectors> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_word_vectors(&text, path)
}

/// Parses the text format; a leading word2vec-style `count dim` header is
/// tolerated. Tokens are lowercased; the first occurrence wins.
pub fn parse_word_vectors(text: &str, path: &Path) -> Result<WordVectors> {
    let mut out = WordVectors::default();
    for (i, line) in text.lines().enumerate() {
        let fields: Vec<&str> = line.split(' ').filter(|f| !f.is_empty()).collect();
        if fields.is_empty() {
            continue;
        }
        if i == 0 && fields.len() == 2 && fields.iter().all(|f| f.parse::<usize>().is_ok()) {
            continue;
        }
        if fields.len() < 2 {
            return Err(Error::parse(path, i + 1, "expected a token followed by values"));
        }
        let values = fields[1..]
            .iter()
            .map(|f| f.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::parse(path, i + 1, "non-finite value"));
        }
        if out.dim == 0 {
            out.dim = values.len();
        } else if values.len() != out.dim {
            return Err(Error::parse(
                path,
                i + 1,
                format!("expected {} values, found {}", out.dim, values.len()),
            ));
        }
        out.vectors.entry(fields[0].to_lowercase()).or_insert(values);
    }
    Ok(out)
}

/// Convenience: the embedding of one token evaluated outside any training graph.
pub fn embed_token(table: &TokenEmbeddingTable, params: &ParamStore, word: &str) -> Result<Vec<f64>> {
    let mut g = Graph::new(params);
    let v = table.embed(&mut g, word)?;
    Ok(g.to_vec(v))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup() -> (TokenEmbeddingTable, ParamStore) {
        let table = TokenEmbeddingTable::build(["Obama", "a", "visited", "paris"], 4, 3);
        let mut p = ParamStore::new();
        table.init_params(&mut p, &mut Rng::new(1), None).unwrap();
        (table, p)
    }

    fn char_row(table: &TokenEmbeddingTable, p: &ParamStore, c: char) -> Vec<f64> {
        let i = table.chars().iter().position(|x| *x == c).unwrap();
        p.get(CHAR_PARAM).unwrap().row(i).to_vec()
    }

    #[test]
    fn known_word_concatenates_char_mean() {
        let (table, p) = setup();
        let v = embed_token(&table, &p, "obama").unwrap();
        assert_eq!(v.len(), 7);
        let wi = table.word_index("obama");
        assert_eq!(&v[..4], p.get(WORD_PARAM).unwrap().row(wi));
        let mut mean = vec![0.0; 3];
        for c in "obama".chars() {
            for (m, x) in mean.iter_mut().zip(char_row(&table, &p, c)) {
                *m += x / 5.0;
            }
        }
        for (a, b) in v[4..].iter().zip(&mean) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn unseen_word_uses_unknown_vector() {
        let (table, p) = setup();
        let v = embed_token(&table, &p, "zzz").unwrap();
        assert_eq!(&v[..4], p.get(WORD_PARAM).unwrap().row(0));
        // 'z' is outside the alphabet too
        assert_eq!(&v[4..], p.get(CHAR_PARAM).unwrap().row(0));
    }

    #[test]
    fn single_char_word_is_exact() {
        let (table, p) = setup();
        let v = embed_token(&table, &p, "a").unwrap();
        assert_eq!(&v[4..], char_row(&table, &p, 'a').as_slice());
    }

    #[test]
    fn unk_and_pad_are_distinct() {
        let (table, p) = setup();
        let pad = embed_token(&table, &p, PAD_WORD).unwrap();
        let unk = embed_token(&table, &p, "qqqq").unwrap();
        assert_ne!(pad, unk);
        assert_eq!(table.word_index(PAD_WORD), 1);
    }

    #[test]
    fn word_vector_file() {
        let text = "2 3\nparis 0.1 0.2 0.3\nObama 1 2 3\nparis 9 9 9\n";
        let vecs = parse_word_vectors(text, Path::new("v.txt")).unwrap();
        assert_eq!((vecs.dim, vecs.len()), (3, 2));
        assert_eq!(vecs.get("paris").unwrap(), &[0.1, 0.2, 0.3]);
        let bad = parse_word_vectors("a 1 2\nb 1\n", Path::new("v.txt")).unwrap_err();
        assert!(matches!(bad, Error::Parse { line: 2, .. }));

        let table = TokenEmbeddingTable::build(["obama", "paris"], 3, 2);
        let mut p = ParamStore::new();
        table.init_params(&mut p, &mut Rng::new(0), Some(&vecs)).unwrap();
        assert_eq!(p.get(WORD_PARAM).unwrap().row(table.word_index("obama")), &[1.0, 2.0, 3.0]);
        let small = TokenEmbeddingTable::build(["x"], 5, 2);
        assert!(small.init_params(&mut ParamStore::new(), &mut Rng::new(0), Some(&vecs)).is_err());
    }

    #[test]
    fn tokenizer() {
        assert_eq!(tokenize("President of the U.S., born 1961"), ["president", "of", "the", "u", "s", "born", "1961"]);
        assert!(tokenize("  ").is_empty());
    }

    #[test]
    fn serde_roundtrip_reindexes() {
        let (table, _) = setup();
        let json = serde_json::to_string(&table).unwrap();
        let mut back: TokenEmbeddingTable = serde_json::from_str(&json).unwrap();
        back.reindex();
        assert_eq!(back, table);
    }
}
