//! Glyph-level n-gram language model and the prior algebra used to combine
//! it with classifier posteriors.
//!
//! Glyph ids are `0..k`; id `k` is the sentence-start symbol, which only
//! ever appears in contexts. Conditionals interpolate trigram, bigram and
//! unigram maximum-likelihood estimates with fixed weights and mix in a
//! small uniform floor, so every probability is strictly positive.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// Weight of the uniform distribution mixed into every conditional.
pub const UNIFORM_FLOOR: f64 = 1e-4;
/// Language priors below this are clipped before case-control correction.
pub const PRIOR_FLOOR: f64 = 1e-12;

const MAGIC: &str = "GLYPHLM";
const VERSION: u32 = 1;

/// Anything that can score a glyph given its predecessors.
pub trait LanguageModel: Sync {
    fn num_classes(&self) -> usize;

    /// Number of glyphs in an n-gram: the context holds `order() - 1` ids.
    fn order(&self) -> usize;

    /// `P(y | context)`, where `context` lists the preceding ids oldest
    /// first, padded with the sentence-start id `num_classes()`.
    fn cond_prob(&self, context: &[usize], y: usize) -> f64;

    fn bos(&self) -> usize {
        self.num_classes()
    }

    /// Log-probability of one sentence; the context starts from
    /// sentence-start padding.
    fn seq_logprob(&self, sentence: &[usize]) -> f64 {
        let h = self.order().saturating_sub(1);
        let mut context = vec![self.bos(); h];
        let mut total = 0.0;
        for &y in sentence {
            total += self.cond_prob(&context, y).ln();
            if h > 0 {
                context.remove(0);
                context.push(y);
            }
        }
        total
    }
}

/// Uniform model: every glyph has probability `1/k` in every context.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UniformLm {
    pub k: usize,
    pub order: usize,
}

impl LanguageModel for UniformLm {
    fn num_classes(&self) -> usize {
        self.k
    }

    fn order(&self) -> usize {
        self.order
    }

    fn cond_prob(&self, _context: &[usize], _y: usize) -> f64 {
        1.0 / self.k as f64
    }
}

impl LanguageModel for crate::synth::LanguageSpec {
    fn num_classes(&self) -> usize {
        self.k
    }

    fn order(&self) -> usize {
        3
    }

    fn cond_prob(&self, context: &[usize], y: usize) -> f64 {
        self.prob(context[0], context[1], y)
    }
}

/// Bijection between corpus tokens and glyph ids.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn new(tokens: Vec<String>) -> Result<Vocabulary> {
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if t.is_empty() || t.chars().any(char::is_whitespace) {
                return Err(Error::Format(format!("token {t:?} is empty or contains whitespace")));
            }
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::Format(format!("duplicate token {t:?}")));
            }
        }
        if tokens.is_empty() {
            return Err(Error::Empty("vocabulary"));
        }
        Ok(Vocabulary { tokens, index })
    }

    /// Tokens named after the alphabet's glyph programs.
    pub fn from_alphabet(alphabet: &crate::synth::AlphabetSpec) -> Result<Vocabulary> {
        Vocabulary::new(alphabet.glyphs.iter().map(|g| g.name.clone()).collect())
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn encode_line(&self, line: &str) -> Result<Vec<usize>> {
        line.split_whitespace()
            .map(|t| self.id(t).ok_or_else(|| Error::Format(format!("unknown token {t:?}"))))
            .collect()
    }

    pub fn decode(&self, ids: &[usize]) -> Result<String> {
        let words: Result<Vec<&str>> = ids
            .iter()
            .map(|&i| self.token(i).ok_or_else(|| Error::InvalidParameter(format!("glyph id {i} outside vocabulary"))))
            .collect();
        Ok(words?.join(" "))
    }

    /// Reads a corpus: one sentence per line, blank lines skipped.
    pub fn parse_corpus(&self, text: &str) -> Result<Vec<Vec<usize>>> {
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| self.encode_line(l))
            .collect()
    }

    pub fn format_corpus(&self, corpus: &[Vec<usize>]) -> Result<String> {
        let mut out = String::new();
        for s in corpus {
            out.push_str(&self.decode(s)?);
            out.push('\n');
        }
        Ok(out)
    }

    /// One token per line, in id order.
    pub fn to_text(&self) -> String {
        self.tokens.iter().map(|t| format!("{t}\n")).collect()
    }

    pub fn parse(text: &str) -> Result<Vocabulary> {
        Vocabulary::new(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty())
                .map(String::from)
                .collect(),
        )
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        Ok(std::fs::write(path, self.to_text())?)
    }

    pub fn load(path: &Path) -> Result<Vocabulary> {
        Vocabulary::parse(&std::fs::read_to_string(path)?)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
struct Counts {
    total: u64,
    next: HashMap<usize, u64>,
}

impl Counts {
    fn add(&mut self, y: usize) {
        self.total += 1;
        *self.next.entry(y).or_insert(0) += 1;
    }

    fn mle(&self, y: usize) -> f64 {
        self.next.get(&y).map_or(0.0, |&c| c as f64 / self.total as f64)
    }
}

/// Interpolated trigram counts, stored sparsely by context.
#[derive(Clone, Debug, PartialEq)]
pub struct TrigramTable {
    pub k: usize,
    /// Conditionals use the previous `order - 1` glyphs (1 to 3).
    pub order: usize,
    /// Unigram, bigram and trigram weights; they sum to 1.
    pub weights: [f64; 3],
    unigram: Counts,
    bigram: HashMap<usize, Counts>,
    trigram: HashMap<(usize, usize), Counts>,
}

impl TrigramTable {
    pub const DEFAULT_WEIGHTS: [f64; 3] = [0.1, 0.3, 0.6];

    /// Counts 1-, 2- and 3-grams over `corpus`, padding every sentence
    /// with two sentence-start symbols.
    pub fn train(corpus: &[Vec<usize>], k: usize, weights: [f64; 3]) -> Result<TrigramTable> {
        check_weights(weights)?;
        if k == 0 {
            return Err(Error::InvalidParameter("alphabet size must be positive".into()));
        }
        if corpus.iter().all(|s| s.is_empty()) {
            return Err(Error::Empty("corpus"));
        }
        let mut t = TrigramTable {
            k,
            order: 3,
            weights,
            unigram: Counts::default(),
            bigram: HashMap::new(),
            trigram: HashMap::new(),
        };
        for s in corpus {
            let (mut c2, mut c1) = (k, k);
            for &y in s {
                if y >= k {
                    return Err(Error::InvalidParameter(format!("glyph id {y} outside alphabet of {k}")));
                }
                t.unigram.add(y);
                t.bigram.entry(c1).or_default().add(y);
                t.trigram.entry((c2, c1)).or_default().add(y);
                c2 = c1;
                c1 = y;
            }
        }
        Ok(t)
    }

    pub fn with_order(mut self, order: usize) -> Result<TrigramTable> {
        if !(1..=3).contains(&order) {
            return Err(Error::InvalidParameter(format!("n-gram order {order} outside 1..=3")));
        }
        self.order = order;
        Ok(self)
    }

    /// `P(y | c2, c1)` at the table's order. Unseen contexts contribute
    /// nothing through their own term; weights of unused orders are
    /// spread proportionally over the used ones.
    pub fn prob(&self, c2: usize, c1: usize, y: usize) -> f64 {
        let [w1, w2, w3] = self.weights;
        let (w1, w2, w3) = match self.order {
            1 => (1.0, 0.0, 0.0),
            2 => (w1 / (w1 + w2), w2 / (w1 + w2), 0.0),
            _ => (w1, w2, w3),
        };
        let mut p = w1 * self.unigram.mle(y);
        if w2 > 0.0 {
            p += w2 * self.bigram.get(&c1).map_or(0.0, |c| c.mle(y));
        }
        if w3 > 0.0 {
            p += w3 * self.trigram.get(&(c2, c1)).map_or(0.0, |c| c.mle(y));
        }
        (1.0 - UNIFORM_FLOOR) * p + UNIFORM_FLOOR / self.k as f64
    }

    /// `P(y | c1)` regardless of the table's order.
    pub fn bigram(&self, c1: usize, y: usize) -> f64 {
        let [w1, w2, _] = self.weights;
        let s = w1 + w2;
        let p = if s > 0.0 {
            (w1 * self.unigram.mle(y) + w2 * self.bigram.get(&c1).map_or(0.0, |c| c.mle(y))) / s
        } else {
            self.unigram.mle(y)
        };
        (1.0 - UNIFORM_FLOOR) * p + UNIFORM_FLOOR / self.k as f64
    }

    /// Floored unigram distribution: the language prior of each glyph.
    pub fn unigram_prior(&self) -> Vec<f64> {
        (0..self.k)
            .map(|y| (1.0 - UNIFORM_FLOOR) * self.unigram.mle(y) + UNIFORM_FLOOR / self.k as f64)
            .collect()
    }

    /// Number of times `(c2, c1)` occurred as a trigram context.
    pub fn context_count(&self, c2: usize, c1: usize) -> u64 {
        self.trigram.get(&(c2, c1)).map_or(0, |c| c.total)
    }

    /// Observed trigram contexts with their counts, sorted.
    pub fn contexts(&self) -> Vec<((usize, usize), u64)> {
        let mut v: Vec<_> = self.trigram.iter().map(|(&c, n)| (c, n.total)).collect();
        v.sort_unstable();
        v
    }

    pub fn trigram_mle(&self, c2: usize, c1: usize, y: usize) -> f64 {
        self.trigram.get(&(c2, c1)).map_or(0.0, |c| c.mle(y))
    }

    /// Text serialization with every count listed in sorted order.
    pub fn to_text(&self) -> String {
        let mut out = format!("{MAGIC} {VERSION}\n");
        writeln!(out, "k {}", self.k).unwrap();
        writeln!(out, "order {}", self.order).unwrap();
        writeln!(out, "weights {:?} {:?} {:?}", self.weights[0], self.weights[1], self.weights[2]).unwrap();
        for (y, n) in sorted(&self.unigram.next) {
            writeln!(out, "u {y} {n}").unwrap();
        }
        let bi: BTreeMap<_, _> = self.bigram.iter().collect();
        for (c1, counts) in bi {
            for (y, n) in sorted(&counts.next) {
                writeln!(out, "b {c1} {y} {n}").unwrap();
            }
        }
        let tri: BTreeMap<_, _> = self.trigram.iter().collect();
        for ((c2, c1), counts) in tri {
            for (y, n) in sorted(&counts.next) {
                writeln!(out, "t {c2} {c1} {y} {n}").unwrap();
            }
        }
        out
    }

    pub fn parse(text: &str) -> Result<TrigramTable> {
        let bad = |line: usize, what: &str| Error::Format(format!("language model line {}: {what}", line + 1));
        let mut lines = text.lines().enumerate();
        let header = lines.next().map(|(_, l)| l).unwrap_or("");
        match header.split_once(' ') {
            Some((MAGIC, v)) if v == VERSION.to_string() => {}
            Some((MAGIC, v)) => return Err(Error::Format(format!("unsupported language model version {v}"))),
            _ => return Err(Error::Format("missing language model header".into())),
        }
        let mut field = |name: &str| -> Result<Vec<String>> {
            let (i, l) = lines.next().ok_or_else(|| Error::Format(format!("missing {name}")))?;
            let mut parts = l.split_whitespace();
            if parts.next() != Some(name) {
                return Err(bad(i, &format!("expected {name}")));
            }
            Ok(parts.map(String::from).collect())
        };
        let num = |v: &[String], i: usize| -> Result<usize> {
            v.get(i).and_then(|s| s.parse().ok()).ok_or_else(|| Error::Format("bad integer".into()))
        };
        let k = num(&field("k")?, 0)?;
        let order = num(&field("order")?, 0)?;
        let w = field("weights")?;
        let mut weights = [0.0; 3];
        for (i, slot) in weights.iter_mut().enumerate() {
            *slot = w
                .get(i)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Format("bad weights".into()))?;
        }
        check_weights(weights)?;
        let mut t = TrigramTable {
            k,
            order: 3,
            weights,
            unigram: Counts::default(),
            bigram: HashMap::new(),
            trigram: HashMap::new(),
        };
        for (i, l) in lines {
            let parts: Vec<&str> = l.split_whitespace().collect();
            let ints: Option<Vec<u64>> = parts.iter().skip(1).map(|s| s.parse().ok()).collect();
            let ints = ints.ok_or_else(|| bad(i, "bad integer"))?;
            let target = match (parts.first().copied(), ints.len()) {
                (Some("u"), 2) => &mut t.unigram,
                (Some("b"), 3) => t.bigram.entry(ints[0] as usize).or_default(),
                (Some("t"), 4) => t.trigram.entry((ints[0] as usize, ints[1] as usize)).or_default(),
                _ => return Err(bad(i, "unrecognized record")),
            };
            let (y, n) = (ints[ints.len() - 2] as usize, ints[ints.len() - 1]);
            if y >= k || n == 0 || target.next.insert(y, n).is_some() {
                return Err(bad(i, "invalid or duplicate count"));
            }
            target.total += n;
        }
        if t.unigram.total == 0 {
            return Err(Error::Empty("language model counts"));
        }
        t.with_order(order)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        Ok(std::fs::write(path, self.to_text())?)
    }

    pub fn load(path: &Path) -> Result<TrigramTable> {
        TrigramTable::parse(&std::fs::read_to_string(path)?)
    }
}

fn sorted(m: &HashMap<usize, u64>) -> Vec<(usize, u64)> {
    let mut v: Vec<_> = m.iter().map(|(&y, &n)| (y, n)).collect();
    v.sort_unstable();
    v
}

fn check_weights(w: [f64; 3]) -> Result<()> {
    if w.iter().any(|&x| !(x >= 0.0)) || ((w.iter().sum::<f64>()) - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParameter(format!("interpolation weights {w:?} must be non-negative and sum to 1")));
    }
    Ok(())
}

/// Trains a trigram table with the default interpolation weights.
pub fn train_ngram(corpus: &[Vec<usize>], k: usize) -> Result<TrigramTable> {
    TrigramTable::train(corpus, k, TrigramTable::DEFAULT_WEIGHTS)
}

impl LanguageModel for TrigramTable {
    fn num_classes(&self) -> usize {
        self.k
    }

    fn order(&self) -> usize {
        self.order
    }

    fn cond_prob(&self, context: &[usize], y: usize) -> f64 {
        let bos = self.k;
        let n = context.len();
        let c1 = if n >= 1 { context[n - 1] } else { bos };
        let c2 = if n >= 2 { context[n - 2] } else { bos };
        self.prob(c2, c1, y)
    }
}

/// Class frequencies in the language and in the classifier's training set.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassPrior {
    pub language: Vec<f64>,
    pub training: Vec<f64>,
}

impl ClassPrior {
    pub fn uniform(k: usize) -> ClassPrior {
        ClassPrior {
            language: vec![1.0 / k as f64; k],
            training: vec![1.0 / k as f64; k],
        }
    }

    /// Language prior from the table's unigrams; balanced training set.
    pub fn from_table(table: &TrigramTable) -> ClassPrior {
        ClassPrior {
            language: table.unigram_prior(),
            training: vec![1.0 / table.k as f64; table.k],
        }
    }
}

/// Reweights posteriors learned under `prior.training` to `prior.language`:
/// `p̃(y) ∝ p̂(y) · P(y) / P̂(y)`.
pub fn case_control_correct(p_hat: &[f64], prior: &ClassPrior) -> Result<Vec<f64>> {
    let k = p_hat.len();
    if prior.language.len() != k || prior.training.len() != k {
        return Err(Error::Shape(format!(
            "{k} posteriors against priors of {} and {}",
            prior.language.len(),
            prior.training.len()
        )));
    }
    if k == 0 {
        return Err(Error::Empty("posteriors"));
    }
    if let Some(i) = prior.training.iter().position(|&p| !(p > 0.0)) {
        return Err(Error::InvalidParameter(format!("training prior of class {i} is not positive")));
    }
    let ratio: Vec<f64> = prior
        .language
        .iter()
        .zip(&prior.training)
        .map(|(&l, &t)| l.max(PRIOR_FLOOR) / t)
        .collect();
    // a constant ratio cancels exactly; renormalizing would only add rounding
    if ratio.iter().all(|&r| r == ratio[0]) {
        return Ok(p_hat.to_vec());
    }
    let w: Vec<f64> = p_hat.iter().zip(&ratio).map(|(&p, &r)| p * r).collect();
    let s: f64 = w.iter().sum();
    if !(s > 0.0) {
        return Err(Error::InvalidParameter("posteriors vanish under the prior".into()));
    }
    Ok(w.into_iter().map(|v| v / s).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn abc() -> Vec<Vec<usize>> {
        vec![vec![0, 1, 2]; 3]
    }

    #[test]
    fn deterministic_corpus_arithmetic() {
        let t = train_ngram(&abc(), 3).unwrap();
        // trigram and bigram MLEs are 1, unigram 1/3
        let want = (1.0 - UNIFORM_FLOOR) * (0.6 + 0.3 + 0.1 / 3.0) + UNIFORM_FLOOR / 3.0;
        assert!((t.prob(0, 1, 2) - want).abs() < 1e-15);
        assert!(t.prob(0, 1, 2) > 0.93);
        assert!((t.prob(3, 3, 0) - want).abs() < 1e-15);
    }

    #[test]
    fn single_glyph_corpus() {
        let t = train_ngram(&[vec![0]], 4).unwrap();
        let p = t.prob(4, 4, 0);
        assert!((p - ((1.0 - UNIFORM_FLOOR) + UNIFORM_FLOOR / 4.0)).abs() < 1e-15);
        let other = t.prob(4, 4, 1);
        assert_eq!(other, UNIFORM_FLOOR / 4.0);
    }

    #[test]
    fn unseen_context_backs_off() {
        let t = train_ngram(&[vec![0, 1, 0, 1], vec![2, 2]], 3).unwrap();
        let p = t.prob(2, 0, 1);
        assert_eq!(t.context_count(2, 0), 0);
        let want = (1.0 - UNIFORM_FLOOR) * (0.1 * 2.0 / 6.0 + 0.3 * 1.0) + UNIFORM_FLOOR / 3.0;
        assert!((p - want).abs() < 1e-15);
        assert!(t.prob(2, 2, 1) > 0.0);
    }

    #[test]
    fn sequence_log_probability() {
        let t = train_ngram(&abc(), 3).unwrap();
        assert_eq!(t.seq_logprob(&[]), 0.0);
        assert_eq!(t.seq_logprob(&[1]), t.prob(3, 3, 1).ln());
        let s = [0, 1, 2];
        let joined = t.seq_logprob(&[0, 1, 2, 0, 1, 2]);
        let separate = 2.0 * t.seq_logprob(&s);
        let by_hand = 2.0 * t.prob(3, 3, 0).ln()
            + 2.0 * t.prob(3, 0, 1).ln()
            + 2.0 * t.prob(0, 1, 2).ln()
            - t.prob(3, 3, 0).ln()
            - t.prob(3, 0, 1).ln()
            + t.prob(1, 2, 0).ln()
            + t.prob(2, 0, 1).ln();
        assert!((joined - by_hand).abs() < 1e-12);
        assert!((joined - separate).abs() > 1.0);
    }

    #[test]
    fn lower_orders() {
        let t = train_ngram(&abc(), 3).unwrap().with_order(2).unwrap();
        let want = (1.0 - UNIFORM_FLOOR) * (0.1 / 0.4 / 3.0 + 0.3 / 0.4) + UNIFORM_FLOOR / 3.0;
        assert!((t.cond_prob(&[1], 2) - want).abs() < 1e-15);
        assert_eq!(t.cond_prob(&[1], 2), t.bigram(1, 2));
        let u = t.with_order(1).unwrap();
        assert!((u.cond_prob(&[], 2) - ((1.0 - UNIFORM_FLOOR) / 3.0 + UNIFORM_FLOOR / 3.0)).abs() < 1e-15);
        assert!(train_ngram(&abc(), 3).unwrap().with_order(4).is_err());
    }

    #[test]
    fn training_errors() {
        assert!(matches!(train_ngram(&[], 3), Err(Error::Empty(_))));
        assert!(matches!(train_ngram(&[vec![]], 3), Err(Error::Empty(_))));
        assert!(train_ngram(&[vec![3]], 3).is_err());
        assert!(TrigramTable::train(&abc(), 3, [0.5, 0.5, 0.5]).is_err());
    }

    #[test]
    fn case_control_worked_example() {
        let prior = ClassPrior {
            language: vec![0.9, 0.1],
            training: vec![0.5, 0.5],
        };
        let p = case_control_correct(&[0.6, 0.4], &prior).unwrap();
        assert!((p[0] - 1.08 / 1.16).abs() < 1e-12);
        assert!((p[0] - 0.931).abs() < 1e-3 && (p[1] - 0.069).abs() < 1e-3);
    }

    #[test]
    fn case_control_uniform_and_degenerate() {
        let p = [0.125, 0.5, 0.375];
        assert_eq!(case_control_correct(&p, &ClassPrior::uniform(3)).unwrap(), p.to_vec());
        let degenerate = ClassPrior {
            language: vec![0.0, 1.0, 0.0],
            training: vec![1.0 / 3.0; 3],
        };
        let q = case_control_correct(&p, &degenerate).unwrap();
        assert!(q[1] > 1.0 - 1e-10);
        let zero = ClassPrior {
            language: vec![1.0 / 3.0; 3],
            training: vec![0.5, 0.5, 0.0],
        };
        assert!(case_control_correct(&p, &zero).is_err());
        assert!(case_control_correct(&p[..2], &ClassPrior::uniform(3)).is_err());
    }

    #[test]
    fn round_trip() {
        let corpus = vec![vec![0, 1, 2, 1], vec![2, 2, 0], vec![1]];
        let t = train_ngram(&corpus, 3).unwrap();
        let text = t.to_text();
        let back = TrigramTable::parse(&text).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.to_text(), text);
        assert!(TrigramTable::parse(&text.replace("GLYPHLM 1", "GLYPHLM 2")).is_err());
        assert!(TrigramTable::parse(&text.replace("u 0", "x 0")).is_err());
        assert!(TrigramTable::parse("").is_err());
    }

    #[test]
    fn vocabulary_round_trip() {
        let v = Vocabulary::new(vec!["ka".into(), "ga".into(), "ma".into()]).unwrap();
        let corpus = v.parse_corpus("ka ga\n\nma  ka\n").unwrap();
        assert_eq!(corpus, vec![vec![0, 1], vec![2, 0]]);
        assert_eq!(v.format_corpus(&corpus).unwrap(), "ka ga\nma ka\n");
        assert_eq!(Vocabulary::parse(&v.to_text()).unwrap(), v);
        assert!(v.encode_line("ka xx").is_err());
        assert!(Vocabulary::new(vec!["a".into(), "a".into()]).is_err());
    }
}
