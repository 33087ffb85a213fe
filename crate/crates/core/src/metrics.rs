//! WER, scale-invariant SNR, and session-level speaker-attributed WER.
//!
//! `cpwer_us` concatenates each speaker's words in chronological order and
//! takes the minimum error over injective maps from reference speakers into
//! hypothesis speakers. Surplus hypothesis speakers are dropped before
//! scoring; missing ones are padded with empty streams.

use std::collections::BTreeMap;
use std::path::Path;

use pathfinding::kuhn_munkres::kuhn_munkres_min;
use pathfinding::matrix::Matrix;
use serde::{Deserialize, Serialize};

use crate::combinatorics::lex_permutations;
use crate::error::{Error, Result};
use crate::objectives::{Permutation, MAX_PERMUTATION_SOURCES};
use crate::signal::Waveform;

/// Largest reference speaker count scored by exhaustive mapping enumeration.
pub const MAX_ENUMERATED_SPEAKERS: usize = 10;

/// Error energy at or below this fraction of target energy counts as a
/// perfect reconstruction (about 240 dB).
const PERFECT_ERROR_RATIO: f64 = 1e-24;

/// Lowercases `text`, treats every character other than letters, digits,
/// and apostrophes as whitespace, and collapses runs of whitespace.
pub fn normalize_text(text: &str) -> String {
    text.chars()
        .map(|c| if c.is_alphanumeric() || c == '\'' { c } else { ' ' })
        .collect::<String>()
        .to_lowercase()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

/// Normalized word sequence.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Transcript {
    tokens: Vec<String>,
}

impl Transcript {
    pub fn from_text(text: &str) -> Self {
        Transcript {
            tokens: normalize_text(text).split_whitespace().map(str::to_owned).collect(),
        }
    }

    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        if tokens.iter().any(|t| t.is_empty() || t.contains(char::is_whitespace)) {
            return Err(Error::invalid("tokens must be non-empty single words"));
        }
        Ok(Transcript { tokens })
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn text(&self) -> String {
        self.tokens.join(" ")
    }
}

/// Levenshtein distance with unit substitution, insertion, and deletion costs.
pub fn edit_distance<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    let mut prev: Vec<usize> = (0..=a.len()).collect();
    let mut cur = vec![0; a.len() + 1];
    for (j, bj) in b.iter().enumerate() {
        cur[0] = j + 1;
        for (i, ai) in a.iter().enumerate() {
            let sub = prev[i] + usize::from(ai != bj);
            cur[i + 1] = sub.min(prev[i + 1] + 1).min(cur[i] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[a.len()]
}

/// `(S + D + I) / len(reference)`.
pub fn wer(hyp: &Transcript, reference: &Transcript) -> Result<f64> {
    if reference.is_empty() {
        return Err(Error::invalid("WER is undefined for an empty reference"));
    }
    Ok(edit_distance(hyp.tokens(), reference.tokens()) as f64 / reference.len() as f64)
}

fn centered(x: &[f64]) -> Vec<f64> {
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    x.iter().map(|v| v - mean).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Scale-invariant SNR in dB of `est` against `reference` after mean removal.
///
/// Returns `f64::INFINITY` for a perfect (up to scale) estimate and
/// `f64::NEG_INFINITY` for an estimate with no energy after mean removal.
pub fn si_snr(est: &Waveform, reference: &Waveform) -> Result<f64> {
    si_snr_slices(est.samples(), reference.samples())
}

pub fn si_snr_slices(est: &[f64], reference: &[f64]) -> Result<f64> {
    if est.len() != reference.len() {
        return Err(Error::invalid(format!(
            "length mismatch: estimate {} vs reference {}",
            est.len(),
            reference.len()
        )));
    }
    if est.is_empty() {
        return Err(Error::invalid("empty signals"));
    }
    let r = centered(reference);
    let e = centered(est);
    let ref_energy = dot(&r, &r);
    if ref_energy == 0.0 {
        return Err(Error::invalid("reference has zero energy after mean removal"));
    }
    let alpha = dot(&e, &r) / ref_energy;
    let target_energy = alpha * alpha * ref_energy;
    let noise_energy: f64 = e.iter().zip(&r).map(|(ev, rv)| (ev - alpha * rv).powi(2)).sum();
    if target_energy == 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    if noise_energy <= PERFECT_ERROR_RATIO * target_energy {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (target_energy / noise_energy).log10())
}

/// Highest mean SI-SNR over all pairings of estimates to references.
/// `perm[i]` is the reference matched to estimate `i`.
pub fn best_perm_si_snr(ests: &[Waveform], refs: &[Waveform]) -> Result<(f64, Permutation)> {
    let n = refs.len();
    if ests.len() != n || n == 0 {
        return Err(Error::invalid(format!(
            "need equal non-zero counts, got {} estimates and {n} references",
            ests.len()
        )));
    }
    if n > MAX_PERMUTATION_SOURCES {
        return Err(Error::invalid(format!("{n} sources exceeds the enumeration cap")));
    }
    let mut pair = vec![vec![0.0; n]; n];
    for (i, e) in ests.iter().enumerate() {
        for (j, r) in refs.iter().enumerate() {
            pair[i][j] = si_snr(e, r)?;
        }
    }
    let mut best: Option<(f64, Vec<usize>)> = None;
    for p in lex_permutations(n) {
        let mean = p.iter().enumerate().map(|(i, &j)| pair[i][j]).sum::<f64>() / n as f64;
        if best.as_ref().is_none_or(|(b, _)| mean > *b) {
            best = Some((mean, p));
        }
    }
    let (score, p) = best.expect("at least one permutation");
    Ok((score, Permutation(p)))
}

/// Per-speaker, time-stamped transcripts of one session.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SessionHypothesis {
    pub speakers: BTreeMap<String, Vec<(f64, Transcript)>>,
}

impl SessionHypothesis {
    pub fn push(&mut self, speaker: &str, start_s: f64, transcript: Transcript) {
        self.speakers
            .entry(speaker.to_owned())
            .or_default()
            .push((start_s, transcript));
    }

    /// Each speaker's words concatenated by start time. Utterances sharing a
    /// start time are ordered by their normalized text, so input order never
    /// matters.
    pub fn concatenated(&self) -> BTreeMap<String, Vec<String>> {
        self.speakers
            .iter()
            .map(|(spk, utts)| {
                let mut sorted: Vec<&(f64, Transcript)> = utts.iter().collect();
                sorted.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.tokens().cmp(b.1.tokens())));
                let words = sorted
                    .into_iter()
                    .flat_map(|(_, t)| t.tokens().iter().cloned())
                    .collect();
                (spk.clone(), words)
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CpWerOptions {
    /// Count every word of an unmapped hypothesis speaker as an insertion.
    pub redundant_as_insertions: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpeakerPair {
    pub reference: String,
    /// `None` when the reference speaker was matched to a padded empty stream.
    pub hypothesis: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CpWerResult {
    pub cpwer: f64,
    pub errors: usize,
    pub reference_words: usize,
    pub mapping: Vec<SpeakerPair>,
}

struct CpWerProblem {
    ref_ids: Vec<String>,
    hyp_ids: Vec<String>,
    /// `cost[r][h]` over real and padded hypothesis columns.
    cost: Vec<Vec<usize>>,
    hyp_lens: Vec<usize>,
    reference_words: usize,
    options: CpWerOptions,
}

impl CpWerProblem {
    fn new(hyp: &SessionHypothesis, reference: &SessionHypothesis, options: CpWerOptions) -> Result<Self> {
        let refs = reference.concatenated();
        let reference_words: usize = refs.values().map(Vec::len).sum();
        if refs.is_empty() || reference_words == 0 {
            return Err(Error::invalid("reference session has no words"));
        }
        let hyps = hyp.concatenated();
        let columns = hyps.len().max(refs.len());
        let empty = Vec::new();
        let hyp_streams: Vec<&Vec<String>> = hyps
            .values()
            .chain(std::iter::repeat_n(&empty, columns - hyps.len()))
            .collect();
        let cost = refs
            .values()
            .map(|r| hyp_streams.iter().map(|h| edit_distance(r, h)).collect())
            .collect();
        Ok(CpWerProblem {
            ref_ids: refs.keys().cloned().collect(),
            hyp_ids: hyps.keys().cloned().collect(),
            cost,
            hyp_lens: hyp_streams.iter().map(|h| h.len()).collect(),
            reference_words,
            options,
        })
    }

    fn result(&self, mapping: &[usize]) -> CpWerResult {
        let mut errors: usize = mapping.iter().enumerate().map(|(r, &h)| self.cost[r][h]).sum();
        if self.options.redundant_as_insertions {
            errors += (0..self.hyp_lens.len())
                .filter(|h| !mapping.contains(h))
                .map(|h| self.hyp_lens[h])
                .sum::<usize>();
        }
        CpWerResult {
            cpwer: errors as f64 / self.reference_words as f64,
            errors,
            reference_words: self.reference_words,
            mapping: mapping
                .iter()
                .enumerate()
                .map(|(r, &h)| SpeakerPair {
                    reference: self.ref_ids[r].clone(),
                    hypothesis: self.hyp_ids.get(h).cloned(),
                })
                .collect(),
        }
    }

    /// Column cost with the redundant-speaker penalty folded in: mapping a
    /// hypothesis column removes its would-be insertions.
    fn adjusted(&self, r: usize, h: usize) -> i64 {
        let base = self.cost[r][h] as i64;
        if self.options.redundant_as_insertions {
            base - self.hyp_lens[h] as i64
        } else {
            base
        }
    }
}

/// cpWER-us with the default options.
pub fn cpwer_us(hyp: &SessionHypothesis, reference: &SessionHypothesis) -> Result<CpWerResult> {
    cpwer_us_with(hyp, reference, CpWerOptions::default())
}

/// Exhaustive lexicographic search over injective speaker maps.
pub fn cpwer_us_with(
    hyp: &SessionHypothesis,
    reference: &SessionHypothesis,
    options: CpWerOptions,
) -> Result<CpWerResult> {
    let problem = CpWerProblem::new(hyp, reference, options)?;
    let k = problem.ref_ids.len();
    if k > MAX_ENUMERATED_SPEAKERS {
        return Err(Error::invalid(format!(
            "{k} reference speakers exceeds the enumeration cap of {MAX_ENUMERATED_SPEAKERS}; \
             use cpwer_us_hungarian"
        )));
    }
    let m = problem.hyp_lens.len();
    let mut best: (i64, Vec<usize>) = (i64::MAX, Vec::new());
    let mut cur = Vec::with_capacity(k);
    let mut used = vec![false; m];
    search(&problem, &mut cur, &mut used, 0, &mut best);
    Ok(problem.result(&best.1))
}

fn search(p: &CpWerProblem, cur: &mut Vec<usize>, used: &mut [bool], acc: i64, best: &mut (i64, Vec<usize>)) {
    let r = cur.len();
    if r == p.ref_ids.len() {
        if acc < best.0 {
            *best = (acc, cur.clone());
        }
        return;
    }
    for h in 0..used.len() {
        if !used[h] {
            used[h] = true;
            cur.push(h);
            search(p, cur, used, acc + p.adjusted(r, h), best);
            cur.pop();
            used[h] = false;
        }
    }
}

/// cpWER-us via a minimum-cost assignment; no speaker-count cap. Agrees with
/// [`cpwer_us_with`] on the error count (the mapping may differ under ties).
pub fn cpwer_us_hungarian(
    hyp: &SessionHypothesis,
    reference: &SessionHypothesis,
    options: CpWerOptions,
) -> Result<CpWerResult> {
    let problem = CpWerProblem::new(hyp, reference, options)?;
    let rows: Vec<Vec<i64>> = (0..problem.ref_ids.len())
        .map(|r| (0..problem.hyp_lens.len()).map(|h| problem.adjusted(r, h)).collect())
        .collect();
    let weights = Matrix::from_rows(rows).map_err(|e| Error::invalid(e.to_string()))?;
    let (_, mapping) = kuhn_munkres_min(&weights);
    Ok(problem.result(&mapping))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub speaker: String,
    pub start_s: f64,
    pub text: String,
}

/// On-disk session transcript, used for both hypotheses and references.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionTranscript {
    pub session_id: String,
    pub entries: Vec<TranscriptEntry>,
}

impl SessionTranscript {
    pub fn to_hypothesis(&self) -> SessionHypothesis {
        let mut s = SessionHypothesis::default();
        for e in &self.entries {
            s.push(&e.speaker, e.start_s, Transcript::from_text(&e.text));
        }
        s
    }

    /// Reads a file holding either one session object or an array of them.
    pub fn load_all(path: impl AsRef<Path>) -> Result<Vec<SessionTranscript>> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        Self::parse_all(&text).map_err(|e| match e {
            Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn parse_all(text: &str) -> Result<Vec<SessionTranscript>> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum OneOrMany {
            Many(Vec<SessionTranscript>),
            One(SessionTranscript),
        }
        // Untagged enums lose position info, so locate syntax errors first.
        serde_json::from_str::<serde_json::Value>(text)?;
        match serde_json::from_str::<OneOrMany>(text) {
            Ok(OneOrMany::Many(v)) => Ok(v),
            Ok(OneOrMany::One(s)) => Ok(vec![s]),
            // Re-parse in the layout the document uses to get a located error message.
            Err(_) if text.trim_start().starts_with('[') => Err(serde_json::from_str::<Vec<SessionTranscript>>(text)
                .err()
                .map_or_else(|| Error::format("unrecognized session transcript layout"), Error::from)),
            Err(_) => Err(serde_json::from_str::<SessionTranscript>(text)
                .err()
                .map_or_else(|| Error::format("unrecognized session transcript layout"), Error::from)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn t(s: &str) -> Transcript {
        Transcript::from_text(s)
    }

    fn wave(v: Vec<f64>) -> Waveform {
        Waveform::new(v, 16_000).unwrap()
    }

    /// Minimum edit count over every alignment path, enumerated recursively.
    fn exhaustive_edits(a: &[u8], b: &[u8]) -> usize {
        match (a.split_first(), b.split_first()) {
            (None, _) => b.len(),
            (_, None) => a.len(),
            (Some((x, ra)), Some((y, rb))) => {
                let sub = usize::from(x != y) + exhaustive_edits(ra, rb);
                let del = 1 + exhaustive_edits(ra, b);
                let ins = 1 + exhaustive_edits(a, rb);
                sub.min(del).min(ins)
            }
        }
    }

    #[test]
    fn normalization() {
        assert_eq!(normalize_text("  Hello, World!  It's   OK. "), "hello world it's ok");
        assert_eq!(t("well-known").tokens(), &["well", "known"]);
        assert!(t("...").is_empty());
        assert!(Transcript::from_tokens(vec!["".into()]).is_err());
    }

    #[test]
    fn wer_basics() {
        let r = t("a b c d e f g h i j");
        assert_eq!(wer(&r, &r).unwrap(), 0.0);
        assert!((wer(&t("a b c d e f g h i x"), &r).unwrap() - 0.1).abs() < 1e-12);
        assert_eq!(wer(&t(""), &t("a b")).unwrap(), 1.0);
        assert_eq!(wer(&t("a b c"), &t("a")).unwrap(), 2.0);
        assert!(wer(&t("a"), &t("")).is_err());
    }

    #[test]
    fn wer_matches_exhaustive_alignment() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let (la, lb) = if rng.random_bool(0.5) {
                (rng.random_range(0..=12), rng.random_range(0..=5))
            } else {
                (rng.random_range(0..=5), rng.random_range(1..=12))
            };
            let a: Vec<u8> = (0..la).map(|_| rng.random_range(0..4)).collect();
            let b: Vec<u8> = (0..lb).map(|_| rng.random_range(0..4)).collect();
            assert_eq!(edit_distance(&a, &b), exhaustive_edits(&a, &b), "{a:?} {b:?}");
        }
    }

    proptest! {
        #[test]
        fn edit_triangle(a in prop::collection::vec(0u8..4, 0..10),
                         b in prop::collection::vec(0u8..4, 0..10),
                         c in prop::collection::vec(0u8..4, 0..10)) {
            prop_assert!(edit_distance(&a, &c) <= edit_distance(&a, &b) + edit_distance(&b, &c));
            prop_assert_eq!(edit_distance(&a, &b), edit_distance(&b, &a));
        }

        #[test]
        fn si_snr_scale_invariance(seed in any::<u64>(), alpha in 0.01f64..100.0, beta in 0.01f64..100.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let r: Vec<f64> = (0..256).map(|_| rng.random_range(-1.0..1.0)).collect();
            let e: Vec<f64> = r.iter().map(|v| v + rng.random_range(-0.5..0.5)).collect();
            let base = si_snr_slices(&e, &r).unwrap();
            let scaled_est: Vec<f64> = e.iter().map(|v| v * alpha).collect();
            let scaled_ref: Vec<f64> = r.iter().map(|v| v * beta).collect();
            prop_assert!((si_snr_slices(&scaled_est, &r).unwrap() - base).abs() < 1e-9);
            prop_assert!((si_snr_slices(&e, &scaled_ref).unwrap() - base).abs() < 1e-9);
        }
    }

    #[test]
    fn si_snr_perfect_and_scaled() {
        let r = wave((0..100).map(|i| ((i * 7) % 13) as f64 - 6.0).collect());
        assert_eq!(si_snr(&r, &r).unwrap(), f64::INFINITY);
        assert_eq!(si_snr(&r.scaled(3.0), &r).unwrap(), f64::INFINITY);
        assert!(si_snr(&r, &wave(vec![1.0; 100])).is_err());
        assert!(si_snr(&r, &wave(vec![1.0; 99])).is_err());
        assert_eq!(si_snr(&wave(vec![0.0; 100]), &r).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn si_snr_orthogonal_noise_oracle() {
        // Zero-mean reference and a zero-mean noise orthogonal to it.
        let n = 64;
        let r: Vec<f64> = (0..n)
            .map(|i| (2.0 * std::f64::consts::PI * 3.0 * i as f64 / n as f64).sin())
            .collect();
        let noise: Vec<f64> = (0..n)
            .map(|i| (2.0 * std::f64::consts::PI * 5.0 * i as f64 / n as f64).cos())
            .collect();
        let scale = 1.7;
        let gain = 0.3;
        let est: Vec<f64> = r.iter().zip(&noise).map(|(a, b)| scale * a + gain * b).collect();
        let ref_e: f64 = r.iter().map(|v| v * v).sum();
        let noise_e: f64 = noise.iter().map(|v| (gain * v).powi(2)).sum();
        let expected = 10.0 * (ref_e * scale * scale / noise_e).log10();
        assert!((si_snr_slices(&est, &r).unwrap() - expected).abs() < 1e-9);
    }

    #[test]
    fn best_permutation() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let refs: Vec<Waveform> = (0..2)
            .map(|_| wave((0..200).map(|_| rng.random_range(-1.0..1.0)).collect()))
            .collect();
        let (score, p) = best_perm_si_snr(&refs, &refs).unwrap();
        assert_eq!((score, p), (f64::INFINITY, Permutation(vec![0, 1])));
        let swapped = vec![refs[1].clone(), refs[0].clone()];
        let (score, p) = best_perm_si_snr(&swapped, &refs).unwrap();
        assert_eq!((score, p), (f64::INFINITY, Permutation(vec![1, 0])));
        assert!(best_perm_si_snr(&refs[..1], &refs).is_err());
    }

    fn session(entries: &[(&str, f64, &str)]) -> SessionHypothesis {
        let mut s = SessionHypothesis::default();
        for (spk, start, text) in entries {
            s.push(spk, *start, t(text));
        }
        s
    }

    #[test]
    fn cpwer_relabel_and_redundant() {
        let reference = session(&[
            ("A", 0.0, "hello there"),
            ("B", 1.0, "good morning"),
            ("A", 2.0, "how are you"),
        ]);
        let renamed = session(&[
            ("x", 0.0, "hello there"),
            ("y", 1.0, "good morning"),
            ("x", 2.0, "how are you"),
        ]);
        let r = cpwer_us(&renamed, &reference).unwrap();
        assert_eq!(r.cpwer, 0.0);
        assert_eq!(r.mapping[0].hypothesis.as_deref(), Some("x"));

        let mut garbage = renamed.clone();
        garbage.push("z", 0.5, t("lorem ipsum dolor"));
        assert_eq!(cpwer_us(&garbage, &reference).unwrap().cpwer, 0.0);
        let strict = cpwer_us_with(
            &garbage,
            &reference,
            CpWerOptions {
                redundant_as_insertions: true,
            },
        )
        .unwrap();
        assert_eq!(strict.errors, 3);
    }

    #[test]
    fn cpwer_under_clustered() {
        let reference = session(&[("A", 0.0, "one two"), ("B", 1.0, "three four five")]);
        let hyp = session(&[("h", 0.0, "three four five")]);
        let r = cpwer_us(&hyp, &reference).unwrap();
        assert_eq!(r.errors, 2);
        assert_eq!(r.reference_words, 5);
        let a = r.mapping.iter().find(|p| p.reference == "A").unwrap();
        assert_eq!(a.hypothesis, None);
    }

    #[test]
    fn cpwer_chronological_concatenation() {
        let reference = session(&[("A", 2.0, "c d"), ("A", 0.0, "a b")]);
        let hyp = session(&[("h", 0.0, "a b c d")]);
        assert_eq!(cpwer_us(&hyp, &reference).unwrap().cpwer, 0.0);
        // Equal timestamps use a content order, independent of insertion order.
        let x = session(&[("A", 1.0, "q"), ("A", 1.0, "p")]);
        let y = session(&[("A", 1.0, "p"), ("A", 1.0, "q")]);
        assert_eq!(x.concatenated(), y.concatenated());
    }

    #[test]
    fn cpwer_errors() {
        assert!(cpwer_us(&session(&[("h", 0.0, "a")]), &SessionHypothesis::default()).is_err());
        let mut big = SessionHypothesis::default();
        for i in 0..11 {
            big.push(&format!("s{i}"), 0.0, t("w"));
        }
        assert!(cpwer_us(&big, &big).is_err());
        let fast = cpwer_us_hungarian(&big, &big, CpWerOptions::default()).unwrap();
        assert_eq!(fast.errors, 0);
    }

    #[test]
    fn transcript_file_parsing() {
        let one = r#"{"session_id": "s1", "entries": [{"speaker": "A", "start_s": 0.0, "text": "Hi"}]}"#;
        let parsed = SessionTranscript::parse_all(one).unwrap();
        assert_eq!(parsed.len(), 1);
        let many = format!("[{one}, {one}]");
        assert_eq!(SessionTranscript::parse_all(&many).unwrap().len(), 2);
        let broken = "{\n  \"session_id\": \"s1\",\n  \"entries\": [\n    {\"speaker\": 3}\n  ]\n}";
        match SessionTranscript::parse_all(broken) {
            Err(Error::Format(m)) => assert!(m.contains("line 4"), "{m}"),
            other => panic!("expected format error, got {other:?}"),
        }
        match SessionTranscript::parse_all("{\n\"session_id\": ") {
            Err(Error::Format(m)) => assert!(m.contains("line 2"), "{m}"),
            other => panic!("expected format error, got {other:?}"),
        }
    }
}
