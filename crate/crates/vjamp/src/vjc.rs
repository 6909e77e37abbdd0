//! `VJC1` cascade text format.
//!
//! ```text
//! VJC1 <n_stages> <window_w> <window_h>
//! STAGE <n_weak> <stage_threshold>
//! x1 y1 w1 h1 wt1 x2 y2 w2 h2 wt2 x3 y3 w3 h3 wt3 threshold left right
//! ```
//!
//! A missing third rectangle is five zeros. Blank lines are ignored.

use std::fmt::Write;

use vjamp_core::cascade::ModelError;
use vjamp_core::{Cascade, HaarFeature, Stage, WeakClassifier, WeightedRect};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("line {line}: {kind}")]
pub struct ParseError {
    pub line: usize,
    pub kind: ParseErrorKind,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseErrorKind {
    #[error("expected `VJC1 <n_stages> <window_w> <window_h>`")]
    Header,
    #[error("expected `STAGE <n_weak> <threshold>`")]
    StageHeader,
    #[error("stage has no weak classifiers")]
    EmptyStage,
    #[error("weak classifier has {0} numbers, expected 18")]
    TokenCount(usize),
    #[error("`{0}` is not a number in range")]
    Number(String),
    #[error("unexpected end of file")]
    Eof,
    #[error("trailing content after the last stage")]
    Trailing,
    #[error(transparent)]
    Model(ModelError),
}

fn num<T: std::str::FromStr>(tok: &str, line: usize) -> Result<T, ParseError> {
    tok.parse().map_err(|_| ParseError {
        line,
        kind: ParseErrorKind::Number(tok.to_string()),
    })
}

fn rect(t: &[&str], line: usize) -> Result<Option<WeightedRect>, ParseError> {
    let x: usize = num(t[0], line)?;
    let y: usize = num(t[1], line)?;
    let w: usize = num(t[2], line)?;
    let h: usize = num(t[3], line)?;
    let wt: i32 = num(t[4], line)?;
    if (x, y, w, h, wt) == (0, 0, 0, 0, 0) {
        return Ok(None);
    }
    Ok(Some(WeightedRect::new(x, y, w, h, wt)))
}

pub fn parse_cascade(text: &str) -> Result<Cascade, ParseError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split_whitespace().collect::<Vec<_>>()))
        .filter(|(_, t)| !t.is_empty());
    let err = |line, kind| ParseError { line, kind };
    let last_line = text.lines().count().max(1);

    let (hl, head) = lines.next().ok_or(err(1, ParseErrorKind::Header))?;
    if head.len() != 4 || head[0] != "VJC1" {
        return Err(err(hl, ParseErrorKind::Header));
    }
    let n_stages: usize = num(head[1], hl)?;
    let window_w: usize = num(head[2], hl)?;
    let window_h: usize = num(head[3], hl)?;

    let mut stages = Vec::with_capacity(n_stages.min(1024));
    for _ in 0..n_stages {
        let (sl, st) = lines.next().ok_or(err(last_line, ParseErrorKind::Eof))?;
        if st.len() != 3 || st[0] != "STAGE" {
            return Err(err(sl, ParseErrorKind::StageHeader));
        }
        let n_weak: usize = num(st[1], sl)?;
        let threshold: i32 = num(st[2], sl)?;
        if n_weak == 0 {
            return Err(err(sl, ParseErrorKind::EmptyStage));
        }
        let mut weak = Vec::with_capacity(n_weak.min(4096));
        for _ in 0..n_weak {
            let (wl, t) = lines.next().ok_or(err(last_line, ParseErrorKind::Eof))?;
            if t.len() != 18 {
                return Err(err(wl, ParseErrorKind::TokenCount(t.len())));
            }
            let rects = [rect(&t[0..5], wl)?, rect(&t[5..10], wl)?, rect(&t[10..15], wl)?];
            let feature = HaarFeature { rects };
            feature
                .validate(window_w, window_h)
                .map_err(|e| err(wl, ParseErrorKind::Model(e)))?;
            weak.push(WeakClassifier {
                feature,
                threshold: num(t[15], wl)?,
                left: num(t[16], wl)?,
                right: num(t[17], wl)?,
            });
        }
        stages.push(Stage { weak, threshold });
    }
    if let Some((l, _)) = lines.next() {
        return Err(err(l, ParseErrorKind::Trailing));
    }
    Cascade::new(window_w, window_h, stages).map_err(|e| err(hl, ParseErrorKind::Model(e)))
}

pub fn serialize_cascade(c: &Cascade) -> String {
    let mut out = String::new();
    writeln!(out, "VJC1 {} {} {}", c.stages.len(), c.window_w, c.window_h).unwrap();
    for s in &c.stages {
        writeln!(out, "STAGE {} {}", s.weak.len(), s.threshold).unwrap();
        for w in &s.weak {
            for r in &w.feature.rects {
                match r {
                    Some(r) => write!(out, "{} {} {} {} {} ", r.rect.x, r.rect.y, r.rect.w, r.rect.h, r.weight),
                    None => write!(out, "0 0 0 0 0 "),
                }
                .unwrap();
            }
            writeln!(out, "{} {} {}", w.threshold, w.left, w.right).unwrap();
        }
    }
    out
}
