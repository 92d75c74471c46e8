//! Templates, target sets, attribute sets, and category files; renders
//! [`MaskedQuery`] instances against a backend.
//!
//! Grammatical number is data, not code: every template and target word
//! carries a number tag and rendering refuses disagreeing combinations,
//! so each rendered sentence stays grammatical.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::backend::{MaskedQuery, ModelBackend, SlotRole};
use crate::error::{BiasError, Result};

pub const TARGET_PLACEHOLDER: &str = "[TARGET]";
pub const ATTRIBUTE_PLACEHOLDER: &str = "[ATTRIBUTE]";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NumberAgreement {
    Singular,
    Plural,
    Any,
}

impl NumberAgreement {
    pub fn accepts(self, other: NumberAgreement) -> bool {
        self == NumberAgreement::Any || other == NumberAgreement::Any || self == other
    }
}

impl std::fmt::Display for NumberAgreement {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            NumberAgreement::Singular => write!(f, "singular"),
            NumberAgreement::Plural => write!(f, "plural"),
            NumberAgreement::Any => write!(f, "any"),
        }
    }
}

fn default_any() -> NumberAgreement {
    NumberAgreement::Any
}

/// A probe sentence with a `[TARGET]` placeholder and optionally an
/// `[ATTRIBUTE]` placeholder.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Template {
    #[serde(default)]
    pub id: String,
    pub text: String,
    #[serde(default = "default_any")]
    pub number: NumberAgreement,
}

impl Template {
    pub fn new(id: impl Into<String>, text: impl Into<String>, number: NumberAgreement) -> Result<Self> {
        let t = Template {
            id: id.into(),
            text: text.into(),
            number,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        let targets = self.text.matches(TARGET_PLACEHOLDER).count();
        let attributes = self.text.matches(ATTRIBUTE_PLACEHOLDER).count();
        if targets != 1 {
            return Err(BiasError::Validation(format!(
                "template `{}` must contain exactly one {TARGET_PLACEHOLDER}",
                self.text
            )));
        }
        if attributes > 1 {
            return Err(BiasError::Validation(format!(
                "template `{}` may contain at most one {ATTRIBUTE_PLACEHOLDER}",
                self.text
            )));
        }
        Ok(())
    }

    pub fn has_attribute_slot(&self) -> bool {
        self.text.contains(ATTRIBUTE_PLACEHOLDER)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetWord {
    pub token: String,
    #[serde(default = "default_any")]
    pub number: NumberAgreement,
}

impl TargetWord {
    pub fn new(token: impl Into<String>, number: NumberAgreement) -> Self {
        TargetWord {
            token: token.into(),
            number,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TargetSet {
    pub label: String,
    pub words: Vec<TargetWord>,
}

impl TargetSet {
    pub fn validate(&self) -> Result<()> {
        if self.words.is_empty() {
            return Err(BiasError::Validation(format!(
                "target set `{}` is empty",
                self.label
            )));
        }
        let mut seen = std::collections::BTreeSet::new();
        for w in &self.words {
            if !seen.insert(&w.token) {
                return Err(BiasError::Validation(format!(
                    "duplicate target `{}` in set `{}`",
                    w.token, self.label
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttributeSet {
    pub label: String,
    pub words: Vec<String>,
}

impl AttributeSet {
    pub fn validate(&self) -> Result<()> {
        if self.words.is_empty() {
            return Err(BiasError::Validation(format!(
                "attribute set `{}` is empty",
                self.label
            )));
        }
        let mut seen = std::collections::BTreeSet::new();
        for w in &self.words {
            if !seen.insert(w) {
                return Err(BiasError::Validation(format!(
                    "duplicate attribute `{w}` in set `{}`",
                    self.label
                )));
            }
        }
        Ok(())
    }
}

/// One bias test: two target sets, two attribute sets, a template list.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WeatCategory {
    pub name: String,
    pub templates: Vec<Template>,
    pub targets: TargetPair,
    pub attributes: AttributePair,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TargetPair {
    #[serde(rename = "X")]
    pub x: TargetSet,
    #[serde(rename = "Y")]
    pub y: TargetSet,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttributePair {
    #[serde(rename = "A")]
    pub a: AttributeSet,
    #[serde(rename = "B")]
    pub b: AttributeSet,
}

impl WeatCategory {
    pub fn validate(&self) -> Result<()> {
        if self.templates.is_empty() {
            return Err(BiasError::Validation(format!(
                "category `{}` has no templates",
                self.name
            )));
        }
        for t in &self.templates {
            t.validate()?;
        }
        self.targets.x.validate()?;
        self.targets.y.validate()?;
        self.attributes.a.validate()?;
        self.attributes.b.validate()?;
        Ok(())
    }
}

/// Loads a category file, assigns template ids where missing, and checks
/// every invariant.
pub fn load_category(path: impl AsRef<Path>) -> Result<WeatCategory> {
    let path = path.as_ref();
    let raw = crate::error::read_file(path)?;
    let mut category: WeatCategory = serde_json::from_str(&raw).map_err(|e| BiasError::Parse {
        path: path.display().to_string(),
        detail: e.to_string(),
    })?;
    for (i, t) in category.templates.iter_mut().enumerate() {
        if t.id.is_empty() {
            t.id = format!("t{}", i + 1);
        }
    }
    category.validate()?;
    Ok(category)
}

/// What goes into a template slot.
#[derive(Debug, Clone, Copy)]
pub enum Fill<'a> {
    Mask,
    Word(&'a str),
}

/// Renders a template into a tokenized query. Target agreement is
/// checked against `target_number` when a concrete word fills the slot;
/// text is lowercased before tokenization and any filled word must stay
/// a single token under the backend's tokenizer.
pub fn render(
    backend: &dyn ModelBackend,
    template: &Template,
    target: Fill<'_>,
    target_number: Option<NumberAgreement>,
    attribute: Fill<'_>,
) -> Result<MaskedQuery> {
    template.validate()?;
    if let (Fill::Word(word), Some(number)) = (target, target_number) {
        if !template.number.accepts(number) {
            return Err(BiasError::Agreement {
                template: template.text.clone(),
                template_number: template.number.to_string(),
                word: word.to_string(),
                word_number: number.to_string(),
            });
        }
    }
    if !template.has_attribute_slot() {
        if let Fill::Word(word) = attribute {
            return Err(BiasError::Validation(format!(
                "template `{}` has no {ATTRIBUTE_PLACEHOLDER} slot for `{word}`",
                template.text
            )));
        }
    }

    // Split the raw template into literal segments and role slots, then
    // assemble the final text with lowercased literals and fills; the
    // mask token is inserted verbatim.
    #[derive(Clone, Copy, PartialEq)]
    enum Piece {
        Literal,
        Target,
        Attribute,
    }
    let mut pieces: Vec<(Piece, String)> = Vec::new();
    let mut rest = template.text.as_str();
    loop {
        let t_pos = rest.find(TARGET_PLACEHOLDER);
        let a_pos = rest.find(ATTRIBUTE_PLACEHOLDER);
        let (pos, piece, len) = match (t_pos, a_pos) {
            (Some(t), Some(a)) if t < a => (t, Piece::Target, TARGET_PLACEHOLDER.len()),
            (Some(_), Some(a)) => (a, Piece::Attribute, ATTRIBUTE_PLACEHOLDER.len()),
            (Some(t), None) => (t, Piece::Target, TARGET_PLACEHOLDER.len()),
            (None, Some(a)) => (a, Piece::Attribute, ATTRIBUTE_PLACEHOLDER.len()),
            (None, None) => break,
        };
        if pos > 0 {
            pieces.push((Piece::Literal, rest[..pos].to_string()));
        }
        pieces.push((piece, String::new()));
        rest = &rest[pos + len..];
    }
    if !rest.is_empty() {
        pieces.push((Piece::Literal, rest.to_string()));
    }

    let mask = backend.mask_token().to_string();
    let mut text = String::new();
    // Character ranges each fill occupies in the assembled text.
    let mut fill_ranges: Vec<(SlotRole, bool, usize, usize)> = Vec::new();
    for (piece, literal) in &pieces {
        match piece {
            Piece::Literal => text.push_str(&literal.to_lowercase()),
            Piece::Target | Piece::Attribute => {
                let (role, fill) = if *piece == Piece::Target {
                    (SlotRole::Target, target)
                } else {
                    (SlotRole::Attribute, attribute)
                };
                let (word, masked) = match fill {
                    Fill::Mask => (mask.clone(), true),
                    Fill::Word(w) => (w.to_lowercase(), false),
                };
                let start = text.chars().count();
                text.push_str(&word);
                let end = text.chars().count();
                fill_ranges.push((role, masked, start, end));
            }
        }
    }

    let spans = backend.encode(&text)?;
    let mut mask_slots = Vec::new();
    let mut filled_slots = Vec::new();
    for (role, masked, start, end) in fill_ranges {
        let covering: Vec<usize> = spans
            .iter()
            .enumerate()
            .filter(|(_, s)| s.start >= start && s.end <= end)
            .map(|(i, _)| i)
            .collect();
        if covering.len() != 1 {
            let word: String = text
                .chars()
                .skip(start)
                .take(end - start)
                .collect();
            return Err(BiasError::MultiToken {
                word,
                pieces: covering.len(),
            });
        }
        if masked {
            mask_slots.push((covering[0], role));
        } else {
            filled_slots.push((covering[0], role));
        }
    }

    let query = MaskedQuery {
        tokens: spans.into_iter().map(|s| s.token).collect(),
        mask_slots,
        filled_slots,
        template_id: template.id.clone(),
    };
    query.validate(&mask)?;
    Ok(query)
}

/// Keeps only words that are a single token of the backend vocabulary,
/// preserving order. Words absent from the vocabulary are removed.
pub fn filter_oov(words: &[String], backend: &dyn ModelBackend) -> Result<Vec<String>> {
    let mut out = Vec::new();
    for word in words {
        if is_single_vocab_token(word, backend)? {
            out.push(word.clone());
        }
    }
    Ok(out)
}

/// Same filtering for number-tagged target words.
pub fn filter_oov_targets(set: &TargetSet, backend: &dyn ModelBackend) -> Result<TargetSet> {
    let mut words = Vec::new();
    for w in &set.words {
        if is_single_vocab_token(&w.token, backend)? {
            words.push(w.clone());
        }
    }
    Ok(TargetSet {
        label: set.label.clone(),
        words,
    })
}

/// A word survives when it lowercases to exactly one token that the
/// backend vocabulary contains.
pub fn is_single_vocab_token(word: &str, backend: &dyn ModelBackend) -> Result<bool> {
    let lowered = word.to_lowercase();
    let tokens = backend.tokenize(&lowered)?;
    if tokens.len() != 1 {
        return Ok(false);
    }
    backend.vocab_contains(&tokens[0])
}

/// Equalizes two sets by removing uniform-random words from the larger
/// one; reproducible for a fixed seed. Returns the surviving sets and
/// the removed tokens.
pub fn balance_sets(
    x: &TargetSet,
    y: &TargetSet,
    seed: u64,
) -> Result<(TargetSet, TargetSet, Vec<String>)> {
    if x.words.is_empty() || y.words.is_empty() {
        return Err(BiasError::Validation(
            "balance_sets requires nonempty sets".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut x, mut y) = (x.clone(), y.clone());
    let removed = if x.words.len() > y.words.len() {
        let surplus = x.words.len() - y.words.len();
        remove_random(&mut x.words, surplus, &mut rng)
    } else if y.words.len() > x.words.len() {
        let surplus = y.words.len() - x.words.len();
        remove_random(&mut y.words, surplus, &mut rng)
    } else {
        Vec::new()
    };
    Ok((x, y, removed))
}

fn remove_random(words: &mut Vec<TargetWord>, count: usize, rng: &mut ChaCha8Rng) -> Vec<String> {
    let mut indices: Vec<usize> = (0..words.len()).collect();
    indices.shuffle(rng);
    let mut drop: Vec<usize> = indices.into_iter().take(count).collect();
    drop.sort_unstable_by(|a, b| b.cmp(a));
    let mut removed = Vec::new();
    for i in drop {
        removed.push(words.remove(i).token);
    }
    removed.reverse();
    removed
}

/// Generic balancing over plain word lists, used when attribute sets
/// come out unequal after vocabulary filtering.
pub fn balance_word_lists(
    a: &[String],
    b: &[String],
    seed: u64,
) -> (Vec<String>, Vec<String>, Vec<String>) {
    let to_set = |label: &str, words: &[String]| TargetSet {
        label: label.into(),
        words: words
            .iter()
            .map(|w| TargetWord::new(w.clone(), NumberAgreement::Any))
            .collect(),
    };
    let (x, y, removed) = balance_sets(&to_set("a", a), &to_set("b", b), seed)
        .expect("nonempty lists");
    (
        x.words.into_iter().map(|w| w.token).collect(),
        y.words.into_iter().map(|w| w.token).collect(),
        removed,
    )
}

/// X and Y words paired by grammatical number, file order within each
/// number group. Leftovers without a same-number partner are skipped.
pub fn pair_targets<'a>(x: &'a TargetSet, y: &'a TargetSet) -> Vec<(&'a TargetWord, &'a TargetWord)> {
    let mut pairs = Vec::new();
    for number in [
        NumberAgreement::Singular,
        NumberAgreement::Plural,
        NumberAgreement::Any,
    ] {
        let xs = x.words.iter().filter(|w| w.number == number);
        let ys = y.words.iter().filter(|w| w.number == number);
        pairs.extend(xs.zip(ys));
    }
    pairs
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::MockBackend;

    fn open_mock() -> MockBackend {
        MockBackend::from_config(serde_json::from_value(serde_json::json!({
            "vocabulary": ["he", "she", "men", "is", "a", "programmer", "likes", "reading",
                           "flower", "flowers", "sun-hat"],
            "distributions": {
                "[MASK] is a programmer": {"0": {"he": 0.2, "she": 0.05, "is": 0.75}}
            }
        }))
        .unwrap())
        .unwrap()
    }

    #[test]
    fn render_masks_target_and_keeps_attribute() {
        let backend = open_mock();
        let t = Template::new("t1", "[TARGET] is a [ATTRIBUTE]", NumberAgreement::Singular).unwrap();
        let q = render(&backend, &t, Fill::Mask, None, Fill::Word("programmer")).unwrap();
        assert_eq!(q.text(), "[MASK] is a programmer");
        assert_eq!(q.mask_slots, vec![(0, SlotRole::Target)]);
        assert_eq!(q.filled_slots, vec![(3, SlotRole::Attribute)]);
    }

    #[test]
    fn render_masks_both_roles_with_distinct_slots() {
        let backend = open_mock();
        let t = Template::new("t1", "[TARGET] is a [ATTRIBUTE]", NumberAgreement::Singular).unwrap();
        let q = render(&backend, &t, Fill::Mask, None, Fill::Mask).unwrap();
        assert_eq!(q.text(), "[MASK] is a [MASK]");
        assert_eq!(
            q.mask_slots,
            vec![(0, SlotRole::Target), (3, SlotRole::Attribute)]
        );
    }

    #[test]
    fn render_lowercases_fills() {
        let backend = open_mock();
        let t = Template::new("t1", "[TARGET] likes [ATTRIBUTE]", NumberAgreement::Singular).unwrap();
        let q = render(&backend, &t, Fill::Word("He"), Some(NumberAgreement::Singular), Fill::Word("Reading")).unwrap();
        assert_eq!(q.text(), "he likes reading");
        assert_eq!(q.filled_slots.len(), 2);
    }

    #[test]
    fn plural_target_in_singular_template_is_agreement_error() {
        let backend = open_mock();
        let t = Template::new("t1", "[TARGET] likes [ATTRIBUTE]", NumberAgreement::Singular).unwrap();
        let err = render(
            &backend,
            &t,
            Fill::Word("men"),
            Some(NumberAgreement::Plural),
            Fill::Word("reading"),
        )
        .unwrap_err();
        assert!(matches!(err, BiasError::Agreement { .. }));
    }

    #[test]
    fn multi_token_substitution_is_rejected() {
        let backend = open_mock();
        let t = Template::new("t1", "[TARGET] likes [ATTRIBUTE]", NumberAgreement::Any).unwrap();
        let err = render(
            &backend,
            &t,
            Fill::Word("he"),
            Some(NumberAgreement::Any),
            Fill::Word("ice cream"),
        )
        .unwrap_err();
        assert!(matches!(err, BiasError::MultiToken { .. }));
    }

    #[test]
    fn render_is_deterministic() {
        let backend = open_mock();
        let t = Template::new("t1", "[TARGET] is a [ATTRIBUTE]", NumberAgreement::Any).unwrap();
        let q1 = render(&backend, &t, Fill::Mask, None, Fill::Word("programmer")).unwrap();
        let q2 = render(&backend, &t, Fill::Mask, None, Fill::Word("programmer")).unwrap();
        assert_eq!(q1, q2);
    }

    #[test]
    fn filter_oov_preserves_order_and_is_idempotent() {
        let backend = open_mock();
        let words: Vec<String> = ["he", "plumber", "she", "ice cream", "flowers"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let once = filter_oov(&words, &backend).unwrap();
        assert_eq!(once, vec!["he", "she", "flowers"]);
        let twice = filter_oov(&once, &backend).unwrap();
        assert_eq!(once, twice);
        assert!(filter_oov(&[], &backend).unwrap().is_empty());
    }

    #[test]
    fn balance_keeps_equal_sets_unchanged() {
        let x = TargetSet {
            label: "x".into(),
            words: vec![
                TargetWord::new("a", NumberAgreement::Singular),
                TargetWord::new("b", NumberAgreement::Singular),
            ],
        };
        let (bx, by, removed) = balance_sets(&x, &x, 7).unwrap();
        assert_eq!(bx.words.len(), 2);
        assert_eq!(by.words.len(), 2);
        assert!(removed.is_empty());
    }

    #[test]
    fn balance_removal_is_reproducible_for_a_seed() {
        let words = |names: &[&str]| TargetSet {
            label: "s".into(),
            words: names
                .iter()
                .map(|n| TargetWord::new(*n, NumberAgreement::Singular))
                .collect(),
        };
        let x = words(&["w0", "w1", "w2", "w3", "w4", "w5", "w6", "w7", "w8", "w9"]);
        let y = words(&["v0", "v1", "v2", "v3", "v4", "v5", "v6", "v7"]);
        let (bx, by, removed) = balance_sets(&x, &y, 7).unwrap();
        assert_eq!(bx.words.len(), 8);
        assert_eq!(by.words.len(), 8);
        // Frozen fixture for seed 7.
        assert_eq!(removed, vec!["w0".to_string(), "w7".to_string()]);
        let survivors: Vec<&str> = bx.words.iter().map(|w| w.token.as_str()).collect();
        assert_eq!(survivors, vec!["w1", "w2", "w3", "w4", "w5", "w6", "w8", "w9"]);
        // Output is a subset of the input.
        for w in &bx.words {
            assert!(x.words.contains(w));
        }
    }

    #[test]
    fn balance_shrinks_to_smaller_side() {
        let x = TargetSet {
            label: "x".into(),
            words: vec![TargetWord::new("a", NumberAgreement::Singular)],
        };
        let y = TargetSet {
            label: "y".into(),
            words: ["b", "c", "d", "e", "f"]
                .iter()
                .map(|n| TargetWord::new(*n, NumberAgreement::Singular))
                .collect(),
        };
        let (bx, by, removed) = balance_sets(&x, &y, 1).unwrap();
        assert_eq!(bx.words.len(), 1);
        assert_eq!(by.words.len(), 1);
        assert_eq!(removed.len(), 4);
    }

    proptest::proptest! {
        // Balanced outputs are equal-sized subsets of the inputs.
        #[test]
        fn balance_outputs_are_equal_subsets(
            nx in 1usize..12,
            ny in 1usize..12,
            seed in 0u64..1000,
        ) {
            let make = |prefix: &str, n: usize| TargetSet {
                label: prefix.into(),
                words: (0..n)
                    .map(|i| TargetWord::new(format!("{prefix}{i}"), NumberAgreement::Singular))
                    .collect(),
            };
            let x = make("x", nx);
            let y = make("y", ny);
            let (bx, by, removed) = balance_sets(&x, &y, seed).unwrap();
            proptest::prop_assert_eq!(bx.words.len(), by.words.len());
            proptest::prop_assert_eq!(bx.words.len(), nx.min(ny));
            proptest::prop_assert_eq!(removed.len(), nx.max(ny) - nx.min(ny));
            for w in bx.words.iter().chain(by.words.iter()) {
                proptest::prop_assert!(x.words.contains(w) || y.words.contains(w));
            }
        }
    }

    #[test]
    fn pairing_matches_numbers_in_file_order() {
        let x = TargetSet {
            label: "male".into(),
            words: vec![
                TargetWord::new("he", NumberAgreement::Singular),
                TargetWord::new("boys", NumberAgreement::Plural),
                TargetWord::new("men", NumberAgreement::Plural),
            ],
        };
        let y = TargetSet {
            label: "female".into(),
            words: vec![
                TargetWord::new("she", NumberAgreement::Singular),
                TargetWord::new("girls", NumberAgreement::Plural),
                TargetWord::new("women", NumberAgreement::Plural),
            ],
        };
        let pairs = pair_targets(&x, &y);
        let names: Vec<(&str, &str)> = pairs
            .iter()
            .map(|(a, b)| (a.token.as_str(), b.token.as_str()))
            .collect();
        assert_eq!(
            names,
            vec![("he", "she"), ("boys", "girls"), ("men", "women")]
        );
    }
}
