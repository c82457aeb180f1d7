//! Deterministic synthetic multilingual corpora with known graded relevance.
//!
//! Every language draws from one shared concept inventory: facts grouped into
//! topics, plus named entities ("pivots") spelled identically in every
//! language. A passage mentions one entity, one topic word and a few facts of
//! that topic. A query names an entity and asks about one fact, using a
//! query-side word for the fact that differs from the passage-side word, so
//! surface overlap alone only recovers the entity.
//!
//! Grades of a passage for a query asking about `(entity, fact)`:
//!
//! | grade | passage content                                  |
//! |-------|--------------------------------------------------|
//! | 3     | the fact and the entity (unique: the source)     |
//! | 2     | the fact, another entity                         |
//! | 1     | the fact's topic but not the fact                |
//! | 0     | anything else                                    |

use std::collections::{BTreeMap, BTreeSet, HashSet};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::Qrels;
use crate::model::{
    Dataset, GradedInstance, LanguageTag, Passage, Query, RelevanceScore, ResourceTier,
};
use crate::noise::{annotate_synthetic, NoiseProfile};
use crate::seed;

/// Annotator id of the ground-truth instances.
pub const TRUTH_ANNOTATOR: &str = "oracle";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub seed: u64,
    pub languages: Vec<LanguageTag>,
    pub passages_per_language: usize,
    pub queries_per_language: usize,
    pub heldout_queries_per_language: usize,
    /// Candidates attached to each training query (`k`).
    pub candidates_per_query: usize,
    /// Number of fact concepts available to a language of each tier.
    pub vocab_size_by_tier: BTreeMap<ResourceTier, usize>,
    /// Entity names shared verbatim across languages.
    pub pivot_token_count: usize,
    pub facts_per_topic: usize,
    pub facts_per_passage: usize,
    pub noise_profile: NoiseProfile,
    /// Annotator id given to the noisy observed instances.
    pub annotator_id: String,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 0,
            languages: Vec::new(),
            passages_per_language: 2000,
            queries_per_language: 400,
            heldout_queries_per_language: 100,
            candidates_per_query: 5,
            vocab_size_by_tier: [
                (ResourceTier::Low, 64),
                (ResourceTier::Medium, 96),
                (ResourceTier::High, 128),
                (ResourceTier::VeryHigh, 160),
            ]
            .into_iter()
            .collect(),
            pivot_token_count: 500,
            facts_per_topic: 8,
            facts_per_passage: 4,
            noise_profile: NoiseProfile::tiered(),
            annotator_id: "synth".into(),
        }
    }
}

impl SynthConfig {
    fn vocab(&self, tier: ResourceTier) -> Result<usize> {
        let v = *self.vocab_size_by_tier.get(&tier).ok_or_else(|| {
            Error::InvalidConfig(format!("no vocabulary size for tier {}", tier.name()))
        })?;
        Ok(v - v % self.facts_per_topic.max(1))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.languages.is_empty() {
            return bad("no languages".into());
        }
        let codes: BTreeSet<&str> = self.languages.iter().map(LanguageTag::code).collect();
        if codes.len() != self.languages.len() {
            return bad("duplicate language codes".into());
        }
        if self.candidates_per_query < 2 {
            return bad("candidates_per_query must be at least 2".into());
        }
        if self.candidates_per_query > self.passages_per_language {
            return bad("candidates_per_query exceeds passages_per_language".into());
        }
        if self.facts_per_passage == 0 || self.facts_per_passage >= self.facts_per_topic {
            return bad(format!(
                "facts_per_passage ({}) must be in 1..facts_per_topic ({}) so a topic \
                 passage can miss the asked fact (grade 1)",
                self.facts_per_passage, self.facts_per_topic
            ));
        }
        if self.pivot_token_count == 0 {
            return bad("pivot_token_count must be positive".into());
        }
        if self.queries_per_language == 0 {
            return bad("queries_per_language must be positive".into());
        }
        for lang in &self.languages {
            let v = self.vocab(lang.tier())?;
            if v < 2 * self.facts_per_topic {
                return bad(format!(
                    "language {}: vocabulary of {} facts gives fewer than two topics of {}; \
                     grade 0 (off-topic) cannot be realized",
                    lang,
                    self.vocab_size_by_tier[&lang.tier()],
                    self.facts_per_topic
                ));
            }
        }
        let pairs = self.passages_per_language * self.facts_per_passage;
        if self.queries_per_language + self.heldout_queries_per_language > pairs {
            return bad("more queries requested than distinct (passage, fact) pairs".into());
        }
        Ok(())
    }
}

/// Output of [`generate`].
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub queries: Vec<Query>,
    pub heldout_queries: Vec<Query>,
    pub passages: Vec<Passage>,
    /// k candidates per training query with their true grades, annotator
    /// [`TRUTH_ANNOTATOR`].
    pub true_instances: Vec<GradedInstance>,
    /// `true_instances` passed through the configured noise profile.
    pub observed_instances: Vec<GradedInstance>,
    /// Exhaustive ground truth (grades > 0) of every held-out query against
    /// the passages of every language.
    pub qrels: Qrels,
}

impl SyntheticCorpus {
    /// Training queries, all passages, and both truth and observed instances.
    pub fn training_dataset(&self) -> Dataset {
        Dataset {
            queries: self.queries.clone(),
            passages: self.passages.clone(),
            instances: self
                .true_instances
                .iter()
                .chain(&self.observed_instances)
                .cloned()
                .collect(),
        }
    }

    /// Held-out queries with the full passage corpus and no instances.
    pub fn evaluation_dataset(&self) -> Dataset {
        Dataset {
            queries: self.heldout_queries.clone(),
            passages: self.passages.clone(),
            instances: Vec::new(),
        }
    }
}

#[derive(Debug, Clone)]
struct PassageSpec {
    entity: usize,
    topic: usize,
    facts: Vec<usize>,
}

#[derive(Debug, Clone, Copy)]
struct QuerySpec {
    entity: usize,
    fact: usize,
}

fn grade(q: QuerySpec, p: &PassageSpec, facts_per_topic: usize) -> u8 {
    if p.facts.contains(&q.fact) {
        if p.entity == q.entity {
            3
        } else {
            2
        }
    } else if p.topic == q.fact / facts_per_topic {
        1
    } else {
        0
    }
}

enum Script {
    /// consonant-vowel syllables
    Alphabetic { consonants: Vec<char>, vowels: Vec<char> },
    /// one symbol per syllable
    Syllabary(Vec<char>),
    /// consonantal letters only
    Abjad(Vec<char>),
}

const LATIN_C: &str = "bcdfghjklmnprstvz";
const LATIN_V: &str = "aeiou";
const CYRILLIC_C: &str = "бвгджзклмнпрстфх";
const CYRILLIC_V: &str = "аеиоуыя";
const GREEK_C: &str = "βγδζθκλμνξπρστφχ";
const GREEK_V: &str = "αεηιουω";
const KANA: &str = "かきくけこさしすせそたちつてとなにぬねのはひふへほまみむめもやゆよらりるれろわ";
const ARABIC: &str = "بتثجحخدذرزسشصضطظعغفقكلمنهوي";

fn subset(rng: &mut ChaCha8Rng, letters: &str, keep: f64) -> Vec<char> {
    let mut chars: Vec<char> = letters.chars().collect();
    chars.shuffle(rng);
    let n = ((chars.len() as f64 * keep).ceil() as usize).max(2);
    chars.truncate(n);
    chars.sort_unstable();
    chars
}

impl Script {
    fn for_language(code: &str, rng: &mut ChaCha8Rng) -> Script {
        let alphabetic = |rng: &mut ChaCha8Rng, c: &str, v: &str| Script::Alphabetic {
            consonants: subset(rng, c, 0.7),
            vowels: subset(rng, v, 0.8),
        };
        match code {
            "ja" => Script::Syllabary(subset(rng, KANA, 0.8)),
            "ar" => Script::Abjad(subset(rng, ARABIC, 0.8)),
            "ru" => alphabetic(rng, CYRILLIC_C, CYRILLIC_V),
            "el" => alphabetic(rng, GREEK_C, GREEK_V),
            "fi" | "es" | "en" => alphabetic(rng, LATIN_C, LATIN_V),
            _ => match seed::fnv1a(0, code.as_bytes()) % 4 {
                0 => alphabetic(rng, CYRILLIC_C, CYRILLIC_V),
                1 => alphabetic(rng, GREEK_C, GREEK_V),
                _ => alphabetic(rng, LATIN_C, LATIN_V),
            },
        }
    }

    fn word(&self, rng: &mut ChaCha8Rng) -> String {
        let mut w = String::new();
        match self {
            Script::Alphabetic { consonants, vowels } => {
                for _ in 0..rng.random_range(2..=3) {
                    w.push(*consonants.choose(rng).unwrap());
                    w.push(*vowels.choose(rng).unwrap());
                    if rng.random_bool(0.2) {
                        w.push(*consonants.choose(rng).unwrap());
                    }
                }
            }
            Script::Syllabary(kana) => {
                for _ in 0..rng.random_range(2..=4) {
                    w.push(*kana.choose(rng).unwrap());
                }
            }
            Script::Abjad(letters) => {
                for _ in 0..rng.random_range(3..=5) {
                    w.push(*letters.choose(rng).unwrap());
                }
            }
        }
        w
    }
}

struct Lexicon {
    passage_fact: Vec<String>,
    query_fact: Vec<String>,
    topic: Vec<String>,
    filler: Vec<String>,
    question: Vec<String>,
}

impl Lexicon {
    fn build(code: &str, facts: usize, topics: usize, rng: &mut ChaCha8Rng) -> Lexicon {
        let script = Script::for_language(code, rng);
        let mut used = HashSet::new();
        let mut fresh = |n: usize, rng: &mut ChaCha8Rng| -> Vec<String> {
            let mut out = Vec::with_capacity(n);
            while out.len() < n {
                let w = script.word(rng);
                if used.insert(w.clone()) {
                    out.push(w);
                }
            }
            out
        };
        Lexicon {
            passage_fact: fresh(facts, rng),
            query_fact: fresh(facts, rng),
            topic: fresh(topics, rng),
            filler: fresh(12, rng),
            question: fresh(4, rng),
        }
    }
}

fn pivots(count: usize, master: u64) -> Vec<String> {
    let mut rng = seed::rng(master, "synth/pivots");
    let consonants: Vec<char> = LATIN_C.chars().collect();
    let vowels: Vec<char> = LATIN_V.chars().collect();
    let mut used = HashSet::new();
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let mut w = String::new();
        for i in 0..rng.random_range(2..=3) {
            let c = *consonants.choose(&mut rng).unwrap();
            w.push(if i == 0 { c.to_ascii_uppercase() } else { c });
            w.push(*vowels.choose(&mut rng).unwrap());
        }
        if rng.random_bool(0.3) {
            w.push(char::from(b'0' + rng.random_range(0..10u8)));
        }
        if used.insert(w.clone()) {
            out.push(w);
        }
    }
    out
}

struct LanguageCorpus {
    lang: LanguageTag,
    passages: Vec<PassageSpec>,
    passage_text: Vec<String>,
    train: Vec<(QuerySpec, usize, String)>,
    heldout: Vec<(QuerySpec, String)>,
    candidates: Vec<Vec<(usize, u8)>>,
}

fn passage_id(lang: &LanguageTag, i: usize) -> String {
    format!("{}-p{i:06}", lang.code())
}

fn build_language(cfg: &SynthConfig, lang: &LanguageTag, pivot_words: &[String]) -> Result<LanguageCorpus> {
    let fpt = cfg.facts_per_topic;
    let facts = cfg.vocab(lang.tier())?;
    let topics = facts / fpt;
    let mut rng = seed::rng(cfg.seed, &format!("synth/{}", lang.code()));
    let lex = Lexicon::build(lang.code(), facts, topics, &mut rng);

    let mut used_pairs: HashSet<(usize, usize)> = HashSet::new();
    let mut passages = Vec::with_capacity(cfg.passages_per_language);
    let mut passage_text = Vec::with_capacity(cfg.passages_per_language);
    let topic_facts: Vec<usize> = (0..fpt).collect();
    for i in 0..cfg.passages_per_language {
        let topic = rng.random_range(0..topics);
        let mut chosen: Vec<usize> = topic_facts
            .choose_multiple(&mut rng, cfg.facts_per_passage)
            .map(|f| topic * fpt + f)
            .collect();
        chosen.sort_unstable();
        let mut entity = None;
        for _ in 0..64 {
            let e = rng.random_range(0..cfg.pivot_token_count);
            if chosen.iter().all(|&f| !used_pairs.contains(&(e, f))) {
                entity = Some(e);
                break;
            }
        }
        // dense usage: fall back to the first entity still free for these facts
        let entity = entity.or_else(|| {
            (0..cfg.pivot_token_count).find(|e| chosen.iter().all(|&f| !used_pairs.contains(&(*e, f))))
        });
        let entity = entity.ok_or_else(|| {
            Error::InvalidConfig(format!(
                "language {lang}: could not give passage {i} an entity with unique facts; \
                 raise pivot_token_count ({})",
                cfg.pivot_token_count
            ))
        })?;
        used_pairs.extend(chosen.iter().map(|&f| (entity, f)));

        let mut tokens: Vec<&str> = vec![&pivot_words[entity], &lex.topic[topic]];
        tokens.extend(chosen.iter().map(|&f| lex.passage_fact[f].as_str()));
        for _ in 0..rng.random_range(2..=3) {
            tokens.push(lex.filler.choose(&mut rng).unwrap());
        }
        tokens.shuffle(&mut rng);
        passage_text.push(tokens.join(" "));
        passages.push(PassageSpec {
            entity,
            topic,
            facts: chosen,
        });
    }

    let mut by_fact: Vec<Vec<usize>> = vec![Vec::new(); facts];
    let mut by_topic: Vec<Vec<usize>> = vec![Vec::new(); topics];
    for (i, p) in passages.iter().enumerate() {
        by_topic[p.topic].push(i);
        for &f in &p.facts {
            by_fact[f].push(i);
        }
    }

    let query_text = |q: QuerySpec, rng: &mut ChaCha8Rng| -> String {
        let entity = pivot_words[q.entity].as_str();
        let fact = lex.query_fact[q.fact].as_str();
        if rng.random_bool(0.5) {
            let qw = lex.question.choose(rng).unwrap();
            format!("{qw} {fact} {entity}")
        } else {
            format!("{entity} {fact}")
        }
    };

    let mut asked: HashSet<(usize, usize)> = HashSet::new();
    let mut draw_query = |rng: &mut ChaCha8Rng| -> (QuerySpec, usize) {
        loop {
            let source = rng.random_range(0..passages.len());
            let fact = *passages[source].facts.choose(rng).unwrap();
            if asked.insert((source, fact)) {
                return (
                    QuerySpec {
                        entity: passages[source].entity,
                        fact,
                    },
                    source,
                );
            }
        }
    };

    let k = cfg.candidates_per_query;
    let mut train = Vec::with_capacity(cfg.queries_per_language);
    let mut candidates = Vec::with_capacity(cfg.queries_per_language);
    for _ in 0..cfg.queries_per_language {
        let (q, source) = draw_query(&mut rng);
        let text = query_text(q, &mut rng);
        let same_fact: Vec<usize> = by_fact[q.fact].iter().copied().filter(|&p| p != source).collect();
        let same_topic: Vec<usize> = by_topic[q.fact / fpt]
            .iter()
            .copied()
            .filter(|&p| !passages[p].facts.contains(&q.fact))
            .collect();
        let mut picked: BTreeSet<usize> = BTreeSet::from([source]);
        let mut cands = vec![(source, 3u8)];
        while cands.len() < k {
            let want = match rng.random_range(0..10) {
                0..=2 => 2u8,
                3..=5 => 1,
                _ => 0,
            };
            let pool: Vec<usize> = match want {
                2 => same_fact.iter().copied().filter(|p| !picked.contains(p)).collect(),
                1 => same_topic.iter().copied().filter(|p| !picked.contains(p)).collect(),
                _ => Vec::new(),
            };
            let p = match pool.choose(&mut rng) {
                Some(&p) => p,
                None => {
                    // off-topic draw, rejection-sampled
                    let mut p;
                    let mut tries = 0;
                    loop {
                        p = rng.random_range(0..passages.len());
                        tries += 1;
                        if !picked.contains(&p) || tries > 10_000 {
                            break;
                        }
                    }
                    if picked.contains(&p) {
                        return Err(Error::InvalidConfig(format!(
                            "language {lang}: cannot find {k} distinct candidates"
                        )));
                    }
                    p
                }
            };
            picked.insert(p);
            cands.push((p, grade(q, &passages[p], fpt)));
        }
        train.push((q, source, text));
        candidates.push(cands);
    }

    let mut hrng = seed::rng(cfg.seed, &format!("synth/{}/heldout", lang.code()));
    let mut heldout = Vec::with_capacity(cfg.heldout_queries_per_language);
    for _ in 0..cfg.heldout_queries_per_language {
        let (q, _) = draw_query(&mut hrng);
        let text = query_text(q, &mut hrng);
        heldout.push((q, text));
    }

    Ok(LanguageCorpus {
        lang: lang.clone(),
        passages,
        passage_text,
        train,
        heldout,
        candidates,
    })
}

/// Generate a corpus. Languages are emitted in language-code order.
pub fn generate(cfg: &SynthConfig) -> Result<SyntheticCorpus> {
    cfg.validate()?;
    let pivot_words = pivots(cfg.pivot_token_count, cfg.seed);
    let mut langs = cfg.languages.clone();
    langs.sort();
    let corpora: Vec<LanguageCorpus> = langs
        .iter()
        .map(|l| build_language(cfg, l, &pivot_words))
        .collect::<Result<_>>()?;

    let mut out = SyntheticCorpus {
        queries: Vec::new(),
        heldout_queries: Vec::new(),
        passages: Vec::new(),
        true_instances: Vec::new(),
        observed_instances: Vec::new(),
        qrels: Qrels::new(),
    };
    for c in &corpora {
        for (i, text) in c.passage_text.iter().enumerate() {
            out.passages
                .push(Passage::new(passage_id(&c.lang, i), text, c.lang.clone())?);
        }
        let mut realized = [false; 4];
        for (qi, ((_, _, text), cands)) in c.train.iter().zip(&c.candidates).enumerate() {
            let qid = format!("{}-q{qi:06}", c.lang.code());
            out.queries.push(Query::new(qid.clone(), text, c.lang.clone())?);
            for &(p, g) in cands {
                realized[usize::from(g)] = true;
                out.true_instances.push(GradedInstance {
                    query_id: qid.clone(),
                    passage_id: passage_id(&c.lang, p),
                    score: RelevanceScore::new(i64::from(g))?,
                    language: c.lang.clone(),
                    annotator_id: TRUTH_ANNOTATOR.into(),
                });
            }
        }
        if let Some(g) = realized.iter().position(|r| !r) {
            return Err(Error::InvalidConfig(format!(
                "language {}: grade {g} never occurs among the candidates; \
                 increase queries_per_language, candidates_per_query or passages_per_language",
                c.lang
            )));
        }
        for (hi, (_, text)) in c.heldout.iter().enumerate() {
            let qid = format!("{}-h{hi:06}", c.lang.code());
            out.heldout_queries
                .push(Query::new(qid, text, c.lang.clone())?);
        }
    }

    for qc in &corpora {
        for (hi, (q, _)) in qc.heldout.iter().enumerate() {
            let qid = format!("{}-h{hi:06}", qc.lang.code());
            for pc in &corpora {
                for (pi, p) in pc.passages.iter().enumerate() {
                    let g = grade(*q, p, cfg.facts_per_topic);
                    if g > 0 {
                        out.qrels.insert(
                            &qid,
                            &passage_id(&pc.lang, pi),
                            RelevanceScore::new(i64::from(g))?,
                        );
                    }
                }
            }
        }
    }

    out.observed_instances = annotate_synthetic(
        &out.true_instances,
        &cfg.noise_profile,
        &cfg.annotator_id,
        seed::derive(cfg.seed, "synth/annotate"),
    );
    Ok(out)
}
