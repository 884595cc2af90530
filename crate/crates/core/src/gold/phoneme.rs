//! Articulatory feature tables for phoneme dissimilarities.

use std::collections::BTreeMap;

use thiserror::Error;

/// English vowel features (syl, son, cons, cont, voi, lab, hi, lo, back,
/// round, tense, long).
pub const ENGLISH_VOWELS_CSV: &str = include_str!("../../data/english_vowels.csv");

#[derive(Debug, Error, PartialEq)]
pub enum PhonemeError {
    #[error("csv: {0}")]
    Csv(String),
    #[error("row {row}: expected {expected} features, found {found}")]
    Width {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("row {row}: feature value {value:?} is not -1, 0 or 1")]
    Value { row: usize, value: String },
    #[error("unknown phoneme {0:?}")]
    Unknown(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhonemeFeatureTable {
    features: Vec<String>,
    table: BTreeMap<String, Vec<i8>>,
}

impl PhonemeFeatureTable {
    /// Reads `symbol,f1,...,fF` with entries in {-1, 0, 1}.
    pub fn from_csv(text: &str) -> Result<Self, PhonemeError> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let headers = reader
            .headers()
            .map_err(|e| PhonemeError::Csv(e.to_string()))?
            .clone();
        let features: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
        let mut table = BTreeMap::new();
        for (i, record) in reader.records().enumerate() {
            let record = record.map_err(|e| PhonemeError::Csv(e.to_string()))?;
            let row = i + 2;
            if record.len() != features.len() + 1 {
                return Err(PhonemeError::Width {
                    row,
                    expected: features.len(),
                    found: record.len().saturating_sub(1),
                });
            }
            let values = record
                .iter()
                .skip(1)
                .map(|v| match v {
                    "-1" => Ok(-1),
                    "0" => Ok(0),
                    "1" | "+1" => Ok(1),
                    other => Err(PhonemeError::Value {
                        row,
                        value: other.to_string(),
                    }),
                })
                .collect::<Result<Vec<i8>, _>>()?;
            table.insert(record[0].to_string(), values);
        }
        Ok(Self { features, table })
    }

    pub fn english_vowels() -> Self {
        Self::from_csv(ENGLISH_VOWELS_CSV).expect("bundled table parses")
    }

    pub fn feature_count(&self) -> usize {
        self.features.len()
    }

    pub fn symbols(&self) -> impl Iterator<Item = &str> {
        self.table.keys().map(String::as_str)
    }

    pub fn features(&self, symbol: &str) -> Result<&[i8], PhonemeError> {
        self.table
            .get(symbol)
            .map(Vec::as_slice)
            .ok_or_else(|| PhonemeError::Unknown(symbol.to_string()))
    }
}

/// Number of coordinates whose feature values differ. An unspecified (0)
/// value differs from both +1 and -1.
pub fn phoneme_dissimilarity(
    p: &str,
    q: &str,
    table: &PhonemeFeatureTable,
) -> Result<u32, PhonemeError> {
    let (a, b) = (table.features(p)?, table.features(q)?);
    Ok(a.iter().zip(b).filter(|(x, y)| x != y).count() as u32)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_is_zero() {
        let t = PhonemeFeatureTable::english_vowels();
        assert_eq!(t.feature_count(), 12);
        for s in t.symbols() {
            assert_eq!(phoneme_dissimilarity(s, s, &t).unwrap(), 0);
        }
    }

    #[test]
    fn all_features_differ() {
        let header = (1..=12)
            .map(|i| format!("f{i}"))
            .collect::<Vec<_>>()
            .join(",");
        let csv = format!(
            "symbol,{header}\na,{}\nb,{}\n",
            ["1"; 12].join(","),
            ["-1"; 12].join(",")
        );
        let t = PhonemeFeatureTable::from_csv(&csv).unwrap();
        assert_eq!(phoneme_dissimilarity("a", "b", &t).unwrap(), 12);
    }

    #[test]
    fn hand_counted_vowels() {
        let t = PhonemeFeatureTable::english_vowels();
        // i vs u: lab, back, round differ
        assert_eq!(phoneme_dissimilarity("i", "u", &t).unwrap(), 3);
        // i vs ɪ: tense only
        assert_eq!(phoneme_dissimilarity("i", "ɪ", &t).unwrap(), 1);
        // æ vs ʊ: lab, hi, lo, back, round
        assert_eq!(phoneme_dissimilarity("æ", "ʊ", &t).unwrap(), 5);
        // ə has unspecified backness: differs from both ɛ (-1) and ʌ (+1)
        assert_eq!(phoneme_dissimilarity("ə", "ɛ", &t).unwrap(), 1);
        assert_eq!(phoneme_dissimilarity("ə", "ʌ", &t).unwrap(), 1);
    }

    #[test]
    fn errors() {
        let t = PhonemeFeatureTable::english_vowels();
        assert_eq!(
            phoneme_dissimilarity("i", "q", &t).unwrap_err(),
            PhonemeError::Unknown("q".into())
        );
        assert!(matches!(
            PhonemeFeatureTable::from_csv("symbol,a,b\nx,1,2\n").unwrap_err(),
            PhonemeError::Value { row: 2, .. }
        ));
        assert!(PhonemeFeatureTable::from_csv("symbol,a,b\nx,1\n").is_err());
    }
}
