//! Scoring OCR output against page ground truth by edit distance.

use std::fmt::Write as _;

use glyphocr::langmodel::Vocabulary;
use glyphocr::synth::PageTruth;

/// Minimal edit script between a reference and a hypothesis.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct EditCounts {
    pub substitutions: usize,
    pub insertions: usize,
    pub deletions: usize,
}

impl EditCounts {
    pub fn total(&self) -> usize {
        self.substitutions + self.insertions + self.deletions
    }

    fn add(&mut self, o: EditCounts) {
        self.substitutions += o.substitutions;
        self.insertions += o.insertions;
        self.deletions += o.deletions;
    }
}

/// Levenshtein alignment of `truth` to `hyp`. Among minimal scripts the
/// backtrace prefers substitutions, then deletions.
pub fn edit_distance<T: PartialEq>(truth: &[T], hyp: &[T]) -> EditCounts {
    let (n, m) = (truth.len(), hyp.len());
    let mut d = vec![vec![0usize; m + 1]; n + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = i;
    }
    for (j, v) in d[0].iter_mut().enumerate() {
        *v = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            let sub = d[i - 1][j - 1] + (truth[i - 1] != hyp[j - 1]) as usize;
            d[i][j] = sub.min(d[i - 1][j] + 1).min(d[i][j - 1] + 1);
        }
    }
    let (mut i, mut j) = (n, m);
    let mut c = EditCounts::default();
    while i > 0 || j > 0 {
        if i > 0 && j > 0 && d[i][j] == d[i - 1][j - 1] + (truth[i - 1] != hyp[j - 1]) as usize {
            c.substitutions += (truth[i - 1] != hyp[j - 1]) as usize;
            i -= 1;
            j -= 1;
        } else if i > 0 && d[i][j] == d[i - 1][j] + 1 {
            c.deletions += 1;
            i -= 1;
        } else {
            c.insertions += 1;
            j -= 1;
        }
    }
    c
}

/// Parses OCR output: one line of whitespace-separated tokens per text
/// line. Unknown tokens become `None` and never match the truth.
pub fn parse_ocr_text(text: &str, vocab: &Vocabulary) -> Vec<Vec<Option<usize>>> {
    text.lines()
        .map(|l| l.split_whitespace().map(|t| vocab.id(t)).collect())
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct PageScore {
    pub page: String,
    pub glyphs: usize,
    pub edits: EditCounts,
    /// Glyphs split by an erasure.
    pub broken: usize,
    /// Neighbouring glyphs whose boxes touch or overlap.
    pub attached: usize,
}

impl PageScore {
    pub fn errors(&self) -> usize {
        self.edits.total()
    }

    pub fn error_rate(&self) -> f64 {
        self.errors() as f64 / self.glyphs as f64
    }
}

/// Scores `ocr` line by line against `truth`; missing or extra lines count
/// as wholesale deletions or insertions.
pub fn score_page(page: &str, truth: &PageTruth, ocr: &[Vec<Option<usize>>]) -> glyphocr::Result<PageScore> {
    let glyphs = truth.glyph_count();
    if glyphs == 0 {
        return Err(glyphocr::Error::Empty("ground truth"));
    }
    let mut edits = EditCounts::default();
    let empty = Vec::new();
    for i in 0..truth.lines.len().max(ocr.len()) {
        let t: Vec<Option<usize>> = truth
            .lines
            .get(i)
            .map(|l| l.text().into_iter().map(Some).collect())
            .unwrap_or_default();
        edits.add(edit_distance(&t, ocr.get(i).unwrap_or(&empty)));
    }
    let attached = truth
        .lines
        .iter()
        .map(|l| l.glyphs.windows(2).filter(|w| w[1].bbox.x0 <= w[0].bbox.x1).count())
        .sum();
    Ok(PageScore {
        page: page.to_string(),
        glyphs,
        edits,
        broken: truth.broken_count(),
        attached,
    })
}

/// Sum over pages, named `TOTAL`.
pub fn aggregate(scores: &[PageScore]) -> PageScore {
    let mut total = PageScore {
        page: "TOTAL".into(),
        glyphs: 0,
        edits: EditCounts::default(),
        broken: 0,
        attached: 0,
    };
    for s in scores {
        total.glyphs += s.glyphs;
        total.edits.add(s.edits);
        total.broken += s.broken;
        total.attached += s.attached;
    }
    total
}

fn rows(scores: &[PageScore]) -> Vec<PageScore> {
    let mut all = scores.to_vec();
    all.push(aggregate(scores));
    all
}

pub fn report_csv(scores: &[PageScore]) -> String {
    let mut out = String::from("page,glyphs,substitutions,insertions,deletions,errors,error_rate,broken,attached\n");
    for s in rows(scores) {
        writeln!(
            out,
            "{},{},{},{},{},{},{:.6},{},{}",
            s.page,
            s.glyphs,
            s.edits.substitutions,
            s.edits.insertions,
            s.edits.deletions,
            s.errors(),
            s.error_rate(),
            s.broken,
            s.attached
        )
        .unwrap();
    }
    out
}

pub fn report_text(scores: &[PageScore]) -> String {
    let width = rows(scores).iter().map(|s| s.page.len()).max().unwrap_or(4).max(4);
    let mut out = format!(
        "{:<width$} {:>7} {:>5} {:>5} {:>5} {:>7} {:>8} {:>7} {:>8}\n",
        "page", "glyphs", "sub", "ins", "del", "errors", "rate", "broken", "attached"
    );
    for s in rows(scores) {
        writeln!(
            out,
            "{:<width$} {:>7} {:>5} {:>5} {:>5} {:>7} {:>7.2}% {:>7} {:>8}",
            s.page,
            s.glyphs,
            s.edits.substitutions,
            s.edits.insertions,
            s.edits.deletions,
            s.errors(),
            100.0 * s.error_rate(),
            s.broken,
            s.attached
        )
        .unwrap();
    }
    out
}
