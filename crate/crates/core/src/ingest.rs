//! Score time series: parsing, validation and summary moments.
//!
//! The on-disk format is a flat CSV with one innings per row:
//!
//! ```text
//! # comment
//! team_id,format_tag,score
//! IND,ODI,254
//! ```
//!
//! The header line is optional. Rows are grouped by `(team_id, format_tag)`;
//! within a group the file order is the chronology.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum FormatTag {
    Test,
    Odi,
    T20,
}

impl FromStr for FormatTag {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "TEST" => Ok(FormatTag::Test),
            "ODI" => Ok(FormatTag::Odi),
            "T20" => Ok(FormatTag::T20),
            other => Err(format!("unknown format tag {other:?} (expected TEST, ODI or T20)")),
        }
    }
}

impl fmt::Display for FormatTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FormatTag::Test => "TEST",
            FormatTag::Odi => "ODI",
            FormatTag::T20 => "T20",
        })
    }
}

/// One team's chronologically ordered innings scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSeries {
    team_id: String,
    format_tag: FormatTag,
    scores: Vec<f64>,
}

impl ScoreSeries {
    /// Validates and wraps a score sequence. Scores must be finite and non-negative.
    pub fn new(team_id: impl Into<String>, format_tag: FormatTag, scores: Vec<f64>) -> Result<Self> {
        let team_id = team_id.into();
        if scores.is_empty() {
            return Err(Error::Empty(format!("series for team {team_id} has no scores")));
        }
        if let Some((i, &v)) = scores.iter().enumerate().find(|(_, v)| !v.is_finite() || **v < 0.0) {
            return Err(Error::InvalidScore { team: team_id, line: i + 1, value: v });
        }
        Ok(Self { team_id, format_tag, scores })
    }

    pub fn team_id(&self) -> &str {
        &self.team_id
    }

    pub fn format_tag(&self) -> FormatTag {
        self.format_tag
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesSummary {
    pub mean: f64,
    pub std: f64,
    pub length: usize,
}

/// Arithmetic mean and population (1/n) standard deviation.
pub fn series_summary(series: &ScoreSeries) -> SeriesSummary {
    let (mean, std) = mean_std(series.scores());
    SeriesSummary { mean, std, length: series.len() }
}

/// Two-pass mean and population standard deviation of a non-empty slice.
pub(crate) fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Parses the score CSV format into one series per `(team_id, format_tag)`,
/// sorted by team id (then format tag).
pub fn parse_scores<R: BufRead>(source: R) -> Result<Vec<ScoreSeries>> {
    let mut groups: BTreeMap<(String, FormatTag), Vec<f64>> = BTreeMap::new();
    let mut seen_data = false;

    for (idx, line) in source.lines().enumerate() {
        let lineno = idx + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(Error::Parse { line: lineno, message: format!("expected 3 fields, found {}", fields.len()) });
        }
        let first = !seen_data;
        seen_data = true;
        let score = match fields[2].parse::<f64>() {
            Ok(v) => v,
            Err(_) if first => continue, // header row
            Err(_) => return Err(Error::Parse { line: lineno, message: format!("non-numeric score {:?}", fields[2]) }),
        };
        let team = fields[0];
        if team.is_empty() {
            return Err(Error::Parse { line: lineno, message: "empty team id".into() });
        }
        let tag = fields[1].parse::<FormatTag>().map_err(|message| Error::Parse { line: lineno, message })?;
        if !score.is_finite() || score < 0.0 {
            return Err(Error::InvalidScore { team: team.to_string(), line: lineno, value: score });
        }
        groups.entry((team.to_string(), tag)).or_default().push(score);
    }

    Ok(groups.into_iter().map(|((team_id, format_tag), scores)| ScoreSeries { team_id, format_tag, scores }).collect())
}

/// Writes series in the CSV format accepted by [`parse_scores`], with a header.
/// Scores use the shortest representation that parses back to the same value.
pub fn write_scores<W: Write>(mut out: W, series: &[ScoreSeries]) -> Result<()> {
    writeln!(out, "team_id,format_tag,score")?;
    for s in series {
        for &v in s.scores() {
            writeln!(out, "{},{},{}", s.team_id, s.format_tag, v)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn parse(s: &str) -> Result<Vec<ScoreSeries>> {
        parse_scores(s.as_bytes())
    }

    #[test]
    fn two_rows_one_series() {
        let out = parse("IND,ODI,54\nIND,ODI,210\n").unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].scores(), &[54.0, 210.0]);
        assert_eq!(out[0].len(), 2);
        assert_eq!(out[0].format_tag(), FormatTag::Odi);
    }

    #[test]
    fn negative_score_rejected_with_line() {
        let err = parse("IND,ODI,12\nIND,ODI,-3\n").unwrap_err();
        match err {
            Error::InvalidScore { team, line, .. } => {
                assert_eq!(team, "IND");
                assert_eq!(line, 2);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_finite_rejected() {
        assert!(matches!(parse("IND,ODI,inf\n"), Err(Error::InvalidScore { .. })));
        assert!(matches!(parse("x,y,z\nIND,ODI,NaN\n"), Err(Error::InvalidScore { line: 2, .. })));
    }

    #[test]
    fn malformed_rows() {
        assert!(matches!(parse("IND,ODI\n"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse("IND,ODI,1\nIND,ODI,abc\n"), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(parse("IND,XYZ,1\n"), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn header_comments_blank_lines_and_interleaving() {
        let src = "# exported\n\nteam_id,format_tag,score\nPAK,odi,1\nAUS,ODI,2\nPAK,ODI,3\nAUS,test,9\n";
        let out = parse(src).unwrap();
        let keys: Vec<_> = out.iter().map(|s| (s.team_id(), s.format_tag())).collect();
        assert_eq!(keys, vec![("AUS", FormatTag::Test), ("AUS", FormatTag::Odi), ("PAK", FormatTag::Odi)]);
        assert_eq!(out[2].scores(), &[1.0, 3.0]);
    }

    #[test]
    fn summary_examples() {
        let s = ScoreSeries::new("A", FormatTag::Odi, vec![1.0, 2.0, 3.0]).unwrap();
        let sm = series_summary(&s);
        assert_eq!(sm.mean, 2.0);
        assert!((sm.std - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!((sm.std - 0.81650).abs() < 1e-5);
        assert_eq!(sm.length, 3);

        let one = series_summary(&ScoreSeries::new("A", FormatTag::Odi, vec![5.0]).unwrap());
        assert_eq!((one.mean, one.std, one.length), (5.0, 0.0, 1));

        let c = series_summary(&ScoreSeries::new("A", FormatTag::T20, vec![7.25; 40]).unwrap());
        assert_eq!(c.std, 0.0);
    }

    fn naive_summary(xs: &[f64]) -> (f64, f64) {
        let mut sum = 0.0;
        for x in xs {
            sum += x;
        }
        let mean = sum / xs.len() as f64;
        let mut ss = 0.0;
        for x in xs {
            ss += (x - mean).powi(2);
        }
        (mean, (ss / xs.len() as f64).sqrt())
    }

    proptest! {
        #[test]
        fn summary_matches_naive(xs in prop::collection::vec(0.0f64..500.0, 1..200)) {
            let s = ScoreSeries::new("T", FormatTag::Test, xs.clone()).unwrap();
            let sm = series_summary(&s);
            let (m, sd) = naive_summary(&xs);
            prop_assert!((sm.mean - m).abs() <= 1e-12 * m.abs().max(1.0));
            prop_assert!((sm.std - sd).abs() <= 1e-12 * sd.abs().max(1.0));
        }

        #[test]
        fn write_parse_round_trip(
            a in prop::collection::vec(0.0f64..1e4, 1..30),
            b in prop::collection::vec(0.0f64..1e4, 1..30),
        ) {
            let series = vec![
                ScoreSeries::new("AUS", FormatTag::Test, a).unwrap(),
                ScoreSeries::new("IND", FormatTag::Odi, b).unwrap(),
            ];
            let mut buf = Vec::new();
            write_scores(&mut buf, &series).unwrap();
            let back = parse_scores(buf.as_slice()).unwrap();
            prop_assert_eq!(&back, &series);
            let mut buf2 = Vec::new();
            write_scores(&mut buf2, &back).unwrap();
            prop_assert_eq!(buf, buf2);
        }
    }
}
