//! Utterance manifests and speaker-disjoint train/dev/test splitting.
//!
//! A manifest is line-delimited JSON, one [`UtteranceRecord`] per line.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Size of the read-prompt set; sentence ids are 1-based indices into it.
pub const PROMPT_SET_SIZE: u32 = 1132;

/// Every split needs its own speaker in every class.
pub const MIN_SPEAKERS_PER_CLASS: usize = 3;

/// Accent labels, in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Accent {
    Edo,
    Yoruba,
    Igbo,
    EfikIbibio,
    Igala,
}

impl Accent {
    pub const ALL: [Accent; 5] = [
        Accent::Edo,
        Accent::Yoruba,
        Accent::Igbo,
        Accent::EfikIbibio,
        Accent::Igala,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Accent::Edo => "edo",
            Accent::Yoruba => "yoruba",
            Accent::Igbo => "igbo",
            Accent::EfikIbibio => "efik_ibibio",
            Accent::Igala => "igala",
        }
    }
}

impl fmt::Display for Accent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Accent {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Accent::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| Error::Argument(format!("unknown accent label {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gender {
    Female,
    Male,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Dev, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Split::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::Argument(format!("unknown split {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UtteranceRecord {
    /// Audio path, relative to the manifest's directory.
    pub path: String,
    pub speaker_id: String,
    pub accent: Accent,
    pub gender: Gender,
    pub sentence_id: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
}

impl UtteranceRecord {
    fn check(&self) -> std::result::Result<(), String> {
        if self.path.trim().is_empty() {
            return Err("empty path".into());
        }
        if self.speaker_id.trim().is_empty() {
            return Err("empty speaker_id".into());
        }
        if !(1..=PROMPT_SET_SIZE).contains(&self.sentence_id) {
            return Err(format!(
                "sentence_id {} outside 1..={PROMPT_SET_SIZE}",
                self.sentence_id
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Manifest {
    pub records: Vec<UtteranceRecord>,
    /// Accent labels in scope, canonical order.
    pub class_set: Vec<Accent>,
}

impl Manifest {
    /// Builds a manifest whose class set is the labels present in `records`.
    pub fn from_records(records: Vec<UtteranceRecord>) -> Self {
        let present: BTreeSet<Accent> = records.iter().map(|r| r.accent).collect();
        Self {
            records,
            class_set: present.into_iter().collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Index of `accent` in the class set.
    pub fn class_index(&self, accent: Accent) -> Option<usize> {
        self.class_set.iter().position(|&a| a == accent)
    }

    pub fn split_records(&self, split: Split) -> Vec<&UtteranceRecord> {
        self.records
            .iter()
            .filter(|r| r.split == Some(split))
            .collect()
    }

    /// Returns the sub-manifest of one split, keeping the full class set.
    pub fn subset(&self, split: Split) -> Manifest {
        Manifest {
            records: self.split_records(split).into_iter().cloned().collect(),
            class_set: self.class_set.clone(),
        }
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    /// Checks that every speaker carries exactly one split and that the
    /// splits share no speaker. Unassigned records are ignored.
    pub fn check_speaker_disjoint(&self) -> Result<()> {
        let mut seen: BTreeMap<&str, Split> = BTreeMap::new();
        for r in &self.records {
            if let Some(s) = r.split {
                match seen.insert(&r.speaker_id, s) {
                    Some(prev) if prev != s => {
                        return Err(Error::Argument(format!(
                            "speaker {} appears in both {} and {}",
                            r.speaker_id,
                            prev.as_str(),
                            s.as_str()
                        )))
                    }
                    _ => {}
                }
            }
        }
        Ok(())
    }
}

/// Parses line-delimited JSON; `source` names the input in error messages.
pub fn parse_manifest(text: &str, source: &str) -> Result<Manifest> {
    let mut records = Vec::new();
    let mut paths = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let invalid = |message: String| Error::Validation {
            path: source.to_string(),
            line: i + 1,
            message,
        };
        let record: UtteranceRecord =
            serde_json::from_str(line).map_err(|e| invalid(e.to_string()))?;
        record.check().map_err(invalid)?;
        if !paths.insert(record.path.clone()) {
            return Err(invalid(format!("duplicate path {:?}", record.path)));
        }
        records.push(record);
    }
    let manifest = Manifest::from_records(records);
    manifest.check_speaker_disjoint()?;
    Ok(manifest)
}

pub fn load_manifest(path: &Path) -> Result<Manifest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_manifest(&text, &path.display().to_string())
}

pub fn save_manifest(manifest: &Manifest, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, manifest.to_jsonl()).map_err(|e| Error::io(path, e))
}

/// Keeps only records whose accent is in `keep`.
pub fn filter_classes(m: &Manifest, keep: &[Accent]) -> Result<Manifest> {
    if keep.is_empty() {
        return Err(Error::Argument("keep set is empty".into()));
    }
    let keep: BTreeSet<Accent> = keep.iter().copied().collect();
    Ok(Manifest {
        records: m
            .records
            .iter()
            .filter(|r| keep.contains(&r.accent))
            .cloned()
            .collect(),
        class_set: keep.into_iter().collect(),
    })
}

pub fn class_distribution(m: &Manifest) -> BTreeMap<Accent, usize> {
    let mut counts = BTreeMap::new();
    for r in &m.records {
        *counts.entry(r.accent).or_insert(0) += 1;
    }
    counts
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitFractions {
    pub train: f64,
    pub dev: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self {
            train: 0.8,
            dev: 0.1,
            test: 0.1,
        }
    }
}

impl SplitFractions {
    pub fn validate(&self) -> Result<()> {
        let all = [self.train, self.dev, self.test];
        if all.iter().any(|f| !(*f > 0.0)) {
            return Err(Error::Argument("split fractions must be positive".into()));
        }
        if (all.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Argument("split fractions must sum to 1".into()));
        }
        Ok(())
    }
}

// Index in 1..=hi of the cumulative count closest to `target` (ties → lower).
fn closest_cut(cumulative: &[usize], lo: usize, hi: usize, target: f64) -> usize {
    (lo..=hi)
        .min_by(|&a, &b| {
            let da = (cumulative[a] as f64 - target).abs();
            let db = (cumulative[b] as f64 - target).abs();
            da.partial_cmp(&db).unwrap()
        })
        .expect("non-empty cut range")
}

/// Assigns every speaker to exactly one split, stratified by accent.
///
/// Speakers of each class (sorted by id, then shuffled by a ChaCha8 stream
/// seeded with `seed`) are laid out in a row and cut twice. Each cut sits at
/// the speaker boundary whose cumulative utterance count is closest to the
/// target; targets carry over the error accumulated by earlier classes, so
/// the global fractions stay within one speaker's utterance count of the
/// requested ones. Every split receives at least one speaker per class.
pub fn speaker_disjoint_split(m: &Manifest, fractions: SplitFractions, seed: u64) -> Result<Manifest> {
    fractions.validate()?;

    let mut speaker_accent: BTreeMap<&str, Accent> = BTreeMap::new();
    let mut speaker_count: BTreeMap<&str, usize> = BTreeMap::new();
    for r in &m.records {
        if let Some(prev) = speaker_accent.insert(&r.speaker_id, r.accent) {
            if prev != r.accent {
                return Err(Error::Argument(format!(
                    "speaker {} has records labelled {} and {}",
                    r.speaker_id, prev, r.accent
                )));
            }
        }
        *speaker_count.entry(&r.speaker_id).or_insert(0) += 1;
    }

    let classes: BTreeSet<Accent> = speaker_accent.values().copied().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment: BTreeMap<&str, Split> = BTreeMap::new();
    let (mut seen, mut assigned_train, mut assigned_dev) = (0usize, 0usize, 0usize);

    for class in classes {
        // BTreeMap iteration gives speakers sorted by id
        let mut speakers: Vec<&str> = speaker_accent
            .iter()
            .filter(|(_, a)| **a == class)
            .map(|(s, _)| *s)
            .collect();
        if speakers.len() < MIN_SPEAKERS_PER_CLASS {
            return Err(Error::InsufficientSpeakers {
                class: class.to_string(),
                found: speakers.len(),
                required: MIN_SPEAKERS_PER_CLASS,
            });
        }
        speakers.shuffle(&mut rng);

        let mut cumulative = vec![0usize];
        for s in &speakers {
            cumulative.push(cumulative.last().unwrap() + speaker_count[s]);
        }
        let n_speakers = speakers.len();
        seen += cumulative[n_speakers];

        let train_target = fractions.train * seen as f64 - assigned_train as f64;
        let cut_train = closest_cut(&cumulative, 1, n_speakers - 2, train_target);
        let dev_target = (fractions.train + fractions.dev) * seen as f64
            - (assigned_train + assigned_dev) as f64;
        let cut_dev = closest_cut(&cumulative, cut_train + 1, n_speakers - 1, dev_target);

        assigned_train += cumulative[cut_train];
        assigned_dev += cumulative[cut_dev] - cumulative[cut_train];

        for (i, s) in speakers.into_iter().enumerate() {
            let split = if i < cut_train {
                Split::Train
            } else if i < cut_dev {
                Split::Dev
            } else {
                Split::Test
            };
            assignment.insert(s, split);
        }
    }

    let records = m
        .records
        .iter()
        .map(|r| UtteranceRecord {
            split: Some(assignment[r.speaker_id.as_str()]),
            ..r.clone()
        })
        .collect();
    Ok(Manifest {
        records,
        class_set: m.class_set.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn record(path: &str, speaker: &str, accent: Accent) -> UtteranceRecord {
        UtteranceRecord {
            path: path.into(),
            speaker_id: speaker.into(),
            accent,
            gender: Gender::Female,
            sentence_id: 1,
            split: None,
        }
    }

    fn uniform_manifest(classes: &[Accent], speakers: usize, utts: usize) -> Manifest {
        let mut records = Vec::new();
        for &c in classes {
            for s in 0..speakers {
                for u in 0..utts {
                    records.push(record(&format!("{c}/{s}/{u}.wav"), &format!("{c}-{s}"), c));
                }
            }
        }
        Manifest::from_records(records)
    }

    #[test]
    fn empty_manifest_parses() {
        let m = parse_manifest("", "m.jsonl").unwrap();
        assert!(m.is_empty());
        assert!(m.class_set.is_empty());
    }

    #[test]
    fn valid_lines_keep_file_order() {
        let text = r#"{"path":"b.wav","speaker_id":"s1","accent":"igbo","gender":"male","sentence_id":3}
{"path":"a.wav","speaker_id":"s2","accent":"edo","gender":"female","sentence_id":1132}
{"path":"c.wav","speaker_id":"s1","accent":"igbo","gender":"male","sentence_id":7,"split":"dev"}
"#;
        let m = parse_manifest(text, "m.jsonl").unwrap();
        let paths: Vec<_> = m.records.iter().map(|r| r.path.as_str()).collect();
        assert_eq!(paths, ["b.wav", "a.wav", "c.wav"]);
        assert_eq!(m.class_set, vec![Accent::Edo, Accent::Igbo]);
        assert_eq!(m.records[2].split, Some(Split::Dev));
    }

    fn line_of(err: Error) -> usize {
        match err {
            Error::Validation { line, .. } => line,
            other => panic!("expected validation error, got {other}"),
        }
    }

    #[test]
    fn validation_errors_name_the_line() {
        let good = r#"{"path":"a.wav","speaker_id":"s","accent":"edo","gender":"male","sentence_id":1}"#;
        let bad_gender = r#"{"path":"b.wav","speaker_id":"s","accent":"edo","gender":"x","sentence_id":1}"#;
        let err = parse_manifest(&format!("{good}\n{bad_gender}\n"), "m").unwrap_err();
        assert_eq!(line_of(err), 2);

        let bad_accent = r#"{"path":"b.wav","speaker_id":"s","accent":"hausa","gender":"male","sentence_id":1}"#;
        assert_eq!(line_of(parse_manifest(bad_accent, "m").unwrap_err()), 1);

        let missing = r#"{"path":"b.wav","accent":"edo","gender":"male","sentence_id":1}"#;
        assert_eq!(line_of(parse_manifest(missing, "m").unwrap_err()), 1);

        let out_of_range = r#"{"path":"b.wav","speaker_id":"s","accent":"edo","gender":"male","sentence_id":1133}"#;
        assert_eq!(line_of(parse_manifest(out_of_range, "m").unwrap_err()), 1);

        let dup = format!("{good}\n\n{good}\n");
        assert_eq!(line_of(parse_manifest(&dup, "m").unwrap_err()), 3);
    }

    #[test]
    fn filter_examples() {
        let m = uniform_manifest(&Accent::ALL, 2, 3);
        assert_eq!(filter_classes(&m, &Accent::ALL).unwrap(), m);

        let edo = filter_classes(&m, &[Accent::Edo]).unwrap();
        assert!(edo.records.iter().all(|r| r.accent == Accent::Edo));
        assert_eq!(edo.class_set, vec![Accent::Edo]);

        assert!(matches!(filter_classes(&m, &[]), Err(Error::Argument(_))));
    }

    #[test]
    fn filter_count_matches_distribution() {
        let mut records = Vec::new();
        for (i, c) in Accent::ALL.into_iter().enumerate() {
            for k in 0..(3 + 7 * i) {
                records.push(record(&format!("{c}{k}"), &format!("{c}{}", k % 4), c));
            }
        }
        let m = Manifest::from_records(records);
        let keep = [Accent::Igbo, Accent::Edo, Accent::Yoruba];
        let dist = class_distribution(&m);
        let expected: usize = keep.iter().map(|a| dist[a]).sum();
        let f = filter_classes(&m, &keep).unwrap();
        assert_eq!(f.len(), expected);
        assert_eq!(f.class_set, vec![Accent::Edo, Accent::Yoruba, Accent::Igbo]);
    }

    #[test]
    fn distribution_counts() {
        assert!(class_distribution(&Manifest::default()).is_empty());
        let m = Manifest::from_records(vec![
            record("a", "1", Accent::Edo),
            record("b", "1", Accent::Edo),
            record("c", "2", Accent::Igbo),
        ]);
        let d = class_distribution(&m);
        assert_eq!(d.len(), 2);
        assert_eq!(d[&Accent::Edo], 2);
        assert_eq!(d[&Accent::Igbo], 1);
    }

    fn speakers_in(m: &Manifest, split: Split) -> BTreeSet<String> {
        m.split_records(split)
            .into_iter()
            .map(|r| r.speaker_id.clone())
            .collect()
    }

    #[test]
    fn three_speakers_get_one_split_each() {
        let m = uniform_manifest(&[Accent::Igbo], 3, 5);
        let s = speaker_disjoint_split(&m, SplitFractions::default(), 1).unwrap();
        for split in Split::ALL {
            assert_eq!(speakers_in(&s, split).len(), 1);
        }
    }

    #[test]
    fn thirty_speakers_cut_24_3_3() {
        let m = uniform_manifest(&[Accent::Edo], 30, 10);
        for seed in 0..5 {
            let s = speaker_disjoint_split(&m, SplitFractions::default(), seed).unwrap();
            assert_eq!(speakers_in(&s, Split::Train).len(), 24);
            assert_eq!(speakers_in(&s, Split::Dev).len(), 3);
            assert_eq!(speakers_in(&s, Split::Test).len(), 3);
            s.check_speaker_disjoint().unwrap();
        }
    }

    #[test]
    fn split_is_deterministic_and_seed_sensitive() {
        let m = uniform_manifest(&[Accent::Edo, Accent::Igbo], 12, 4);
        let a = speaker_disjoint_split(&m, SplitFractions::default(), 9).unwrap();
        let b = speaker_disjoint_split(&m, SplitFractions::default(), 9).unwrap();
        assert_eq!(a.to_jsonl(), b.to_jsonl());
        let differs = (0..20u64).any(|seed| {
            speaker_disjoint_split(&m, SplitFractions::default(), seed)
                .unwrap()
                .to_jsonl()
                != a.to_jsonl()
        });
        assert!(differs);
    }

    #[test]
    fn split_rejects_small_classes_and_bad_fractions() {
        let mut m = uniform_manifest(&[Accent::Edo], 5, 2);
        m.records.extend(uniform_manifest(&[Accent::Igala], 2, 2).records);
        match speaker_disjoint_split(&m, SplitFractions::default(), 0) {
            Err(Error::InsufficientSpeakers { class, found, .. }) => {
                assert_eq!(class, "igala");
                assert_eq!(found, 2);
            }
            other => panic!("unexpected {other:?}"),
        }
        let bad = SplitFractions {
            train: 0.8,
            dev: 0.1,
            test: 0.2,
        };
        assert!(matches!(
            speaker_disjoint_split(&m, bad, 0),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn jsonl_round_trip() {
        let m = uniform_manifest(&[Accent::Edo, Accent::Yoruba, Accent::Igbo], 4, 2);
        let s = speaker_disjoint_split(&m, SplitFractions::default(), 3).unwrap();
        let back = parse_manifest(&s.to_jsonl(), "x").unwrap();
        assert_eq!(back, s);
    }
}
