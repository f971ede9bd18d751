//! Design-choice grid: one named variant per configuration change, each
//! trained over several seeds and summarized by median error.

use std::fmt::Write as _;

use glyphocr::net::{confusion_matrix, error_rate, train, Activation, Sample};
use glyphocr::synth::Dataset;

use crate::config::Config;
use crate::UsageError;

#[derive(Clone, Debug, PartialEq)]
pub enum Variant {
    /// The configuration as given.
    Baseline,
    NoDistortion,
    NoDropout,
    NoRegularization,
    Activation(Activation),
    Inverted,
    NoLocation,
    Dropout(f64),
}

impl Variant {
    pub fn parse(name: &str) -> Result<Variant, UsageError> {
        let v = match name {
            "baseline" => Variant::Baseline,
            "no-distortion" => Variant::NoDistortion,
            "no-dropout" => Variant::NoDropout,
            "no-regularization" => Variant::NoRegularization,
            "tanh" => Variant::Activation(Activation::Tanh),
            "relu" => Variant::Activation(Activation::Relu),
            "leaky" => Variant::Activation(Activation::Leaky),
            "inverted" => Variant::Inverted,
            "no-location" => Variant::NoLocation,
            _ => match name.strip_prefix("dropout-").and_then(|r| r.parse::<f64>().ok()) {
                Some(r) if (0.0..1.0).contains(&r) => Variant::Dropout(r),
                _ => return Err(UsageError(format!("unknown ablation variant {name:?}"))),
            },
        };
        Ok(v)
    }

    /// `base` with this variant's change applied.
    pub fn apply(&self, base: &Config) -> Config {
        let mut c = base.clone();
        match self {
            Variant::Baseline => {}
            Variant::NoDistortion => c.distortion = false,
            Variant::NoDropout => c.dropout = 0.0,
            Variant::NoRegularization => {
                c.distortion = false;
                c.dropout = 0.0;
            }
            Variant::Activation(a) => c.activation = *a,
            Variant::Inverted => c.invert = true,
            Variant::NoLocation => c.location = false,
            Variant::Dropout(r) => c.dropout = *r,
        }
        c
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationRow {
    pub variant: String,
    pub seed: u64,
    pub train_err: f64,
    pub test_err: f64,
    /// Test glyphs of a twin class predicted as its twin.
    pub twin_confusion: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct AblationReport {
    pub rows: Vec<AblationRow>,
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VariantSummary {
    pub variant: String,
    pub runs: usize,
    pub median_train_err: f64,
    pub median_test_err: f64,
    pub median_twin_confusion: f64,
}

impl AblationReport {
    pub fn rows_for(&self, variant: &str) -> Vec<&AblationRow> {
        self.rows.iter().filter(|r| r.variant == variant).collect()
    }

    /// One summary per variant, in first-seen order.
    pub fn summary(&self) -> Vec<VariantSummary> {
        let mut names: Vec<&str> = Vec::new();
        for r in &self.rows {
            if !names.contains(&r.variant.as_str()) {
                names.push(&r.variant);
            }
        }
        names
            .into_iter()
            .map(|name| {
                let rows = self.rows_for(name);
                let pick = |f: fn(&AblationRow) -> f64| median(&rows.iter().map(|r| f(r)).collect::<Vec<_>>());
                VariantSummary {
                    variant: name.to_string(),
                    runs: rows.len(),
                    median_train_err: pick(|r| r.train_err),
                    median_test_err: pick(|r| r.test_err),
                    median_twin_confusion: pick(|r| r.twin_confusion as f64),
                }
            })
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("variant,seed,train_err,test_err,twin_confusion\n");
        for r in &self.rows {
            writeln!(out, "{},{},{},{},{}", r.variant, r.seed, r.train_err, r.test_err, r.twin_confusion).unwrap();
        }
        out
    }

    pub fn summary_csv(&self) -> String {
        let mut out = String::from("variant,runs,median_train_err,median_test_err,median_twin_confusion\n");
        for s in self.summary() {
            writeln!(
                out,
                "{},{},{},{},{}",
                s.variant, s.runs, s.median_train_err, s.median_test_err, s.median_twin_confusion
            )
            .unwrap();
        }
        out
    }

    pub fn summary_text(&self) -> String {
        let mut out = format!("{:<20} {:>4} {:>10} {:>10} {:>6}\n", "variant", "runs", "train_err", "test_err", "twins");
        for s in self.summary() {
            writeln!(
                out,
                "{:<20} {:>4} {:>9.2}% {:>9.2}% {:>6.1}",
                s.variant,
                s.runs,
                100.0 * s.median_train_err,
                100.0 * s.median_test_err,
                s.median_twin_confusion
            )
            .unwrap();
        }
        out
    }
}

/// Trains every variant of `base.ablate_variants` with seeds
/// `base.seed, base.seed + 1, …` (`base.ablate_runs` of them) on
/// `data.train`/`data.valid`, scoring on `test`. `twins` lists class pairs
/// whose mutual confusions are counted.
pub fn run_ablation(
    base: &Config,
    data: &Dataset,
    test: &[Sample],
    twins: &[(usize, usize)],
    mut progress: impl FnMut(&AblationRow),
) -> anyhow::Result<AblationReport> {
    if data.train.is_empty() || test.is_empty() {
        return Err(glyphocr::Error::Empty("ablation dataset").into());
    }
    let variants: Vec<(String, Variant)> = base
        .ablate_variants
        .iter()
        .map(|n| Ok((n.clone(), Variant::parse(n)?)))
        .collect::<Result<_, UsageError>>()?;
    // test glyphs stay out of the per-epoch curve
    let fit = Dataset {
        train: data.train.clone(),
        valid: data.valid.clone(),
        test: Vec::new(),
    };
    let mut report = AblationReport::default();
    for (name, variant) in &variants {
        for r in 0..base.ablate_runs {
            let mut cfg = variant.apply(base);
            cfg.seed = base.seed.wrapping_add(r as u64);
            let spec = cfg.network_spec().map_err(|e| UsageError(e.to_string()))?;
            let (net, _) = train(&spec, &cfg.train_config(), &fit)?;
            let confusion = confusion_matrix(&net, test)?;
            let twin_confusion = twins.iter().map(|&(a, b)| confusion[a][b] + confusion[b][a]).sum();
            let row = AblationRow {
                variant: name.clone(),
                seed: cfg.seed,
                train_err: error_rate(&net, &fit.train)?,
                test_err: error_rate(&net, test)?,
                twin_confusion,
            };
            progress(&row);
            report.rows.push(row);
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn medians() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 3.0, 2.0]), 2.5);
        assert!(median(&[]).is_nan());
    }

    #[test]
    fn variant_names() {
        let base = Config::default();
        assert_eq!(Variant::parse("dropout-0.2").unwrap(), Variant::Dropout(0.2));
        assert!(Variant::parse("dropout-1").is_err());
        assert!(Variant::parse("sigmoid").is_err());
        let c = Variant::parse("no-regularization").unwrap().apply(&base);
        assert!(!c.distortion && c.dropout == 0.0);
        assert!(!Variant::NoLocation.apply(&base).location);
        assert!(Variant::Inverted.apply(&base).invert);
        assert_eq!(Variant::Baseline.apply(&base), base);
    }

    #[test]
    fn summary_groups_by_variant() {
        let row = |v: &str, seed, e| AblationRow {
            variant: v.into(),
            seed,
            train_err: 0.0,
            test_err: e,
            twin_confusion: 0,
        };
        let report = AblationReport {
            rows: vec![row("a", 1, 0.3), row("b", 1, 0.1), row("a", 2, 0.1), row("a", 3, 0.2)],
        };
        let s = report.summary();
        assert_eq!(s.len(), 2);
        assert_eq!((s[0].variant.as_str(), s[0].runs, s[0].median_test_err), ("a", 3, 0.2));
        assert_eq!(s[1].runs, 1);
        assert_eq!(report.to_csv().lines().count(), 5);
    }
}
