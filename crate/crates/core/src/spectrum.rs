//! Binned-spectrum data model, CSV I/O, validation, and toy generation.
//!
//! File format is plain text CSV with a fixed header
//! (`bin_low_keV,bin_high_keV,counts` for spectra, `...,expected` for
//! backgrounds); `#` lines carry free-form metadata and survive a round trip.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::rng::{sample_poisson, stream};

pub const SPECTRUM_HEADER: &str = "bin_low_keV,bin_high_keV,counts";
pub const BACKGROUND_HEADER: &str = "bin_low_keV,bin_high_keV,expected";

/// Energy-bin edges: N+1 strictly increasing keV values for N bins.
#[derive(Debug, Clone, PartialEq)]
pub struct Binning {
    edges: Vec<f64>,
}

impl Binning {
    pub fn new(edges: Vec<f64>) -> Result<Self> {
        if edges.len() < 2 {
            return Err(Error::validation(
                None,
                format!("binning needs at least 2 edges, got {}", edges.len()),
            ));
        }
        for w in edges.windows(2) {
            if !w[0].is_finite() || !w[1].is_finite() || !(w[0] < w[1]) {
                return Err(Error::validation(
                    None,
                    format!("bin edges must be finite and strictly increasing, got {} then {}", w[0], w[1]),
                ));
            }
        }
        Ok(Binning { edges })
    }

    /// `n` equal-width bins over `[lo, hi]`.
    pub fn uniform(lo: f64, hi: f64, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::validation(None, "binning needs at least one bin"));
        }
        let edges = (0..=n)
            .map(|k| lo + (hi - lo) * k as f64 / n as f64)
            .collect();
        Binning::new(edges)
    }

    pub fn n_bins(&self) -> usize {
        self.edges.len() - 1
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn bins(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.edges.windows(2).map(|w| (w[0], w[1]))
    }

    pub fn span(&self) -> (f64, f64) {
        (self.edges[0], *self.edges.last().unwrap())
    }
}

/// Measured (or simulated) integer counts per bin.
#[derive(Debug, Clone, PartialEq)]
pub struct BinnedSpectrum {
    pub binning: Binning,
    pub counts: Vec<u64>,
    pub exposure_seconds: Option<f64>,
    pub metadata: Vec<String>,
}

impl BinnedSpectrum {
    pub fn new(
        binning: Binning,
        counts: Vec<u64>,
        exposure_seconds: Option<f64>,
        metadata: Vec<String>,
    ) -> Result<Self> {
        if counts.len() != binning.n_bins() {
            return Err(Error::validation(
                None,
                format!(
                    "counts length {} does not match {} bins",
                    counts.len(),
                    binning.n_bins()
                ),
            ));
        }
        if let Some(t) = exposure_seconds {
            if !(t > 0.0) {
                return Err(Error::validation(
                    None,
                    format!("exposure must be > 0 s, got {t}"),
                ));
            }
        }
        Ok(BinnedSpectrum {
            binning,
            counts,
            exposure_seconds,
            metadata,
        })
    }

    pub fn total_counts(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// MC-expected background counts per bin.
#[derive(Debug, Clone, PartialEq)]
pub struct BackgroundModel {
    pub binning: Binning,
    pub expected: Vec<f64>,
    pub metadata: Vec<String>,
}

impl BackgroundModel {
    pub fn new(binning: Binning, expected: Vec<f64>, metadata: Vec<String>) -> Result<Self> {
        if expected.len() != binning.n_bins() {
            return Err(Error::validation(
                None,
                format!(
                    "expected-counts length {} does not match {} bins",
                    expected.len(),
                    binning.n_bins()
                ),
            ));
        }
        for (i, &b) in expected.iter().enumerate() {
            if !b.is_finite() || b < 0.0 {
                return Err(Error::validation(
                    None,
                    format!("expected counts must be finite and >= 0, got {b} in bin {i}"),
                ));
            }
        }
        Ok(BackgroundModel {
            binning,
            expected,
            metadata,
        })
    }
}

struct ParsedRows {
    edges: Vec<f64>,
    third_column: Vec<String>,
    metadata: Vec<String>,
    row_lines: Vec<usize>,
}

fn parse_rows(path: &Path, contents: &str, header: &str) -> Result<ParsedRows> {
    let mut metadata = Vec::new();
    let mut edges: Vec<f64> = Vec::new();
    let mut third = Vec::new();
    let mut row_lines = Vec::new();
    let mut header_seen = false;

    for (idx, raw) in contents.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            metadata.push(comment.trim().to_string());
            continue;
        }
        if !header_seen {
            if line != header {
                return Err(Error::parse(
                    path,
                    line_no,
                    format!("expected header `{header}`, got `{line}`"),
                ));
            }
            header_seen = true;
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(Error::parse(
                path,
                line_no,
                format!("expected 3 comma-separated fields, got {}", fields.len()),
            ));
        }
        let lo: f64 = fields[0].parse().map_err(|_| {
            Error::parse(path, line_no, format!("cannot parse bin edge `{}`", fields[0]))
        })?;
        let hi: f64 = fields[1].parse().map_err(|_| {
            Error::parse(path, line_no, format!("cannot parse bin edge `{}`", fields[1]))
        })?;
        if !lo.is_finite() || !hi.is_finite() {
            return Err(Error::validation(
                Some(path.to_path_buf()),
                format!("non-finite bin edge on line {line_no}"),
            ));
        }
        if !(lo < hi) {
            return Err(Error::validation(
                Some(path.to_path_buf()),
                format!("zero-width or inverted bin [{lo}, {hi}] on line {line_no}"),
            ));
        }
        match edges.last() {
            None => {
                edges.push(lo);
                edges.push(hi);
            }
            Some(&prev_hi) => {
                if lo != prev_hi {
                    return Err(Error::validation(
                        Some(path.to_path_buf()),
                        format!(
                            "bins must be contiguous and monotone: line {line_no} starts at {lo} \
                             but the previous bin ends at {prev_hi}"
                        ),
                    ));
                }
                edges.push(hi);
            }
        }
        third.push(fields[2].to_string());
        row_lines.push(line_no);
    }

    if !header_seen {
        return Err(Error::parse(path, 1, format!("missing header `{header}`")));
    }
    if third.is_empty() {
        return Err(Error::validation(
            Some(path.to_path_buf()),
            "file contains no bins",
        ));
    }
    Ok(ParsedRows {
        edges,
        third_column: third,
        metadata,
        row_lines,
    })
}

fn extract_exposure(metadata: &[String]) -> Option<f64> {
    metadata.iter().find_map(|m| {
        m.strip_prefix("exposure_seconds:")
            .and_then(|v| v.trim().parse::<f64>().ok())
    })
}

pub fn load_spectrum(path: impl AsRef<Path>) -> Result<BinnedSpectrum> {
    let path = path.as_ref();
    let contents = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let rows = parse_rows(path, &contents, SPECTRUM_HEADER)?;
    let mut counts = Vec::with_capacity(rows.third_column.len());
    for (raw, line_no) in rows.third_column.iter().zip(&rows.row_lines) {
        let signed: i64 = raw.parse().map_err(|_| {
            Error::parse(path, *line_no, format!("cannot parse count `{raw}` as an integer"))
        })?;
        if signed < 0 {
            return Err(Error::validation(
                Some(path.to_path_buf()),
                format!("negative count {signed} on line {line_no}"),
            ));
        }
        counts.push(signed as u64);
    }
    let binning = Binning::new(rows.edges).map_err(|e| match e {
        Error::Validation { message, .. } => Error::validation(Some(path.to_path_buf()), message),
        other => other,
    })?;
    let exposure = extract_exposure(&rows.metadata);
    BinnedSpectrum::new(binning, counts, exposure, rows.metadata)
        .map_err(|e| attach_path(e, path))
}

pub fn load_background(path: impl AsRef<Path>) -> Result<BackgroundModel> {
    let path = path.as_ref();
    let contents = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let rows = parse_rows(path, &contents, BACKGROUND_HEADER)?;
    let mut expected = Vec::with_capacity(rows.third_column.len());
    for (raw, line_no) in rows.third_column.iter().zip(&rows.row_lines) {
        let value: f64 = raw.parse().map_err(|_| {
            Error::parse(path, *line_no, format!("cannot parse expected count `{raw}`"))
        })?;
        if !value.is_finite() || value < 0.0 {
            return Err(Error::validation(
                Some(path.to_path_buf()),
                format!("expected count must be finite and >= 0, got {raw} on line {line_no}"),
            ));
        }
        expected.push(value);
    }
    let binning = Binning::new(rows.edges).map_err(|e| attach_path(e, path))?;
    BackgroundModel::new(binning, expected, rows.metadata).map_err(|e| attach_path(e, path))
}

fn attach_path(e: Error, path: &Path) -> Error {
    match e {
        Error::Validation { message, .. } => Error::validation(Some(path.to_path_buf()), message),
        other => other,
    }
}

fn render_metadata(out: &mut String, metadata: &[String]) {
    for m in metadata {
        let _ = writeln!(out, "# {m}");
    }
}

/// Serializes a spectrum; integers exact, edges in shortest round-trip form.
pub fn spectrum_to_string(spectrum: &BinnedSpectrum) -> String {
    let mut out = String::new();
    render_metadata(&mut out, &spectrum.metadata);
    if let Some(t) = spectrum.exposure_seconds {
        if !spectrum.metadata.iter().any(|m| m.starts_with("exposure_seconds:")) {
            let _ = writeln!(out, "# exposure_seconds: {t}");
        }
    }
    let _ = writeln!(out, "{SPECTRUM_HEADER}");
    for ((lo, hi), c) in spectrum.binning.bins().zip(&spectrum.counts) {
        let _ = writeln!(out, "{lo},{hi},{c}");
    }
    out
}

pub fn save_spectrum(spectrum: &BinnedSpectrum, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, spectrum_to_string(spectrum)).map_err(|e| Error::io(path, e))
}

pub fn background_to_string(background: &BackgroundModel) -> String {
    let mut out = String::new();
    render_metadata(&mut out, &background.metadata);
    let _ = writeln!(out, "{BACKGROUND_HEADER}");
    for ((lo, hi), b) in background.binning.bins().zip(&background.expected) {
        let _ = writeln!(out, "{lo},{hi},{b}");
    }
    out
}

pub fn save_background(background: &BackgroundModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, background_to_string(background)).map_err(|e| Error::io(path, e))
}

/// Verifies two binnings agree edge-by-edge within 1e-9 keV.
pub fn check_compatible(spectrum: &BinnedSpectrum, background: &BackgroundModel) -> Result<()> {
    let a = spectrum.binning.edges();
    let b = background.binning.edges();
    if a.len() != b.len() {
        return Err(Error::Mismatch(format!(
            "spectrum has {} bins but background has {}; first structural difference at bin index {}",
            a.len() - 1,
            b.len() - 1,
            a.len().min(b.len()) - 1
        )));
    }
    for (i, (ea, eb)) in a.iter().zip(b.iter()).enumerate() {
        if (ea - eb).abs() > 1e-9 {
            return Err(Error::Mismatch(format!(
                "edge {i} differs: spectrum {ea} keV vs background {eb} keV"
            )));
        }
    }
    Ok(())
}

/// Draws one toy spectrum with counts_i ~ Poisson(b_i + Y_true * s_i).
///
/// Each bin uses its own seed-derived stream, so the result is independent
/// of evaluation order and thread count.
pub fn simulate_toy(
    background: &BackgroundModel,
    y_true: f64,
    signal_column: &[f64],
    seed: u64,
) -> Result<BinnedSpectrum> {
    if signal_column.len() != background.expected.len() {
        return Err(Error::Mismatch(format!(
            "signal column length {} does not match background length {}",
            signal_column.len(),
            background.expected.len()
        )));
    }
    if !(y_true >= 0.0) {
        return Err(Error::domain(format!("Y_true must be >= 0, got {y_true}")));
    }
    if let Some(s) = signal_column.iter().find(|s| !s.is_finite() || **s < 0.0) {
        return Err(Error::domain(format!(
            "signal column entries must be finite and >= 0, got {s}"
        )));
    }
    let counts: Vec<u64> = background
        .expected
        .iter()
        .zip(signal_column)
        .enumerate()
        .map(|(i, (&b, &s))| {
            let mut rng = stream(seed, &[i as u64]);
            sample_poisson(&mut rng, b + y_true * s)
        })
        .collect();
    let metadata = vec![
        "origin: toy simulation".to_string(),
        format!("seed: {seed}"),
        format!("y_true: {y_true}"),
    ];
    BinnedSpectrum::new(background.binning.clone(), counts, None, metadata)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn flat_background(n: usize, level: f64) -> BackgroundModel {
        let binning = Binning::uniform(1300.0, 1300.0 + 5.0 * n as f64, n).unwrap();
        BackgroundModel::new(binning, vec![level; n], vec![]).unwrap()
    }

    #[test]
    fn binning_rejects_non_monotone_edges() {
        assert!(Binning::new(vec![1300.0, 1305.0, 1305.0]).is_err());
        assert!(Binning::new(vec![1300.0, 1295.0]).is_err());
        assert!(Binning::new(vec![1300.0]).is_err());
        assert!(Binning::new(vec![1300.0, f64::NAN]).is_err());
    }

    #[test]
    fn load_well_formed_spectrum() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("spec.csv");
        std::fs::write(
            &path,
            "# provenance: unit test\n# exposure_seconds: 3600\nbin_low_keV,bin_high_keV,counts\n1300,1305,4\n1305,1310,0\n1310,1315,12\n",
        )
        .unwrap();
        let s = load_spectrum(&path).unwrap();
        assert_eq!(s.binning.n_bins(), 3);
        assert_eq!(s.counts, vec![4, 0, 12]);
        assert_eq!(s.exposure_seconds, Some(3600.0));
        assert!(s.metadata.iter().any(|m| m.contains("unit test")));
    }

    #[test]
    fn load_rejects_negative_count_naming_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("neg.csv");
        std::fs::write(
            &path,
            "bin_low_keV,bin_high_keV,counts\n1300,1305,4\n1305,1310,-2\n",
        )
        .unwrap();
        let err = load_spectrum(&path).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("negative count"), "{msg}");
        assert!(msg.contains("line 3"), "{msg}");
    }

    #[test]
    fn load_rejects_zero_width_bin() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("zw.csv");
        std::fs::write(
            &path,
            "bin_low_keV,bin_high_keV,counts\n1300,1305,4\n1305,1305,1\n",
        )
        .unwrap();
        let err = load_spectrum(&path).unwrap_err();
        assert!(err.to_string().contains("zero-width"), "{err}");
    }

    #[test]
    fn load_rejects_gap_between_bins() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gap.csv");
        std::fs::write(
            &path,
            "bin_low_keV,bin_high_keV,counts\n1300,1305,4\n1306,1310,1\n",
        )
        .unwrap();
        let err = load_spectrum(&path).unwrap_err();
        assert!(err.to_string().contains("contiguous"), "{err}");
    }

    #[test]
    fn load_rejects_nan_background() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nan.csv");
        std::fs::write(
            &path,
            "bin_low_keV,bin_high_keV,expected\n1300,1305,NaN\n",
        )
        .unwrap();
        assert!(load_background(&path).is_err());
    }

    #[test]
    fn compatible_binnings_pass() {
        let bg = flat_background(3, 10.0);
        let s = BinnedSpectrum::new(bg.binning.clone(), vec![1, 2, 3], None, vec![]).unwrap();
        check_compatible(&s, &bg).unwrap();
    }

    #[test]
    fn extra_bin_is_reported_at_last_index() {
        let bg = flat_background(3, 10.0);
        let wide = Binning::uniform(1300.0, 1320.0, 4).unwrap();
        let s = BinnedSpectrum::new(wide, vec![1, 2, 3, 4], None, vec![]).unwrap();
        let err = check_compatible(&s, &bg).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("4 bins") && msg.contains("background has 3"), "{msg}");
        assert!(msg.contains("bin index 3"), "{msg}");
    }

    #[test]
    fn shifted_edge_is_named() {
        let bg = flat_background(3, 10.0);
        let shifted = Binning::new(vec![1300.0, 1305.5, 1310.0, 1315.0]).unwrap();
        let s = BinnedSpectrum::new(shifted, vec![1, 2, 3], None, vec![]).unwrap();
        let err = check_compatible(&s, &bg).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("edge 1"), "{msg}");
        assert!(msg.contains("1305.5"), "{msg}");
    }

    #[test]
    fn toy_zero_background_zero_yield_is_empty() {
        let bg = flat_background(5, 0.0);
        let toy = simulate_toy(&bg, 0.0, &[0.0; 5], 1).unwrap();
        assert_eq!(toy.counts, vec![0; 5]);
    }

    #[test]
    fn toy_is_deterministic() {
        let bg = flat_background(8, 37.5);
        let s = vec![1.0; 8];
        let a = simulate_toy(&bg, 2.0, &s, 12345).unwrap();
        let b = simulate_toy(&bg, 2.0, &s, 12345).unwrap();
        assert_eq!(a, b);
        let c = simulate_toy(&bg, 2.0, &s, 12346).unwrap();
        assert_ne!(a.counts, c.counts);
    }

    #[test]
    fn toy_ensemble_matches_poisson_moments() {
        // 10^4 toys over 60 bins with b_i = 100: per-bin mean within 0.3 of
        // 100 (3 sigma) and variance/mean within [0.95, 1.05].
        let n_bins = 60;
        let n_toys = 10_000usize;
        let bg = flat_background(n_bins, 100.0);
        let s = vec![0.0; n_bins];
        let mut sum = vec![0.0_f64; n_bins];
        let mut sumsq = vec![0.0_f64; n_bins];
        for t in 0..n_toys {
            let toy_seed = crate::rng::derive_seed(777, &[t as u64]);
            let toy = simulate_toy(&bg, 0.0, &s, toy_seed).unwrap();
            for (i, &c) in toy.counts.iter().enumerate() {
                sum[i] += c as f64;
                sumsq[i] += (c as f64) * (c as f64);
            }
        }
        for i in 0..n_bins {
            let mean = sum[i] / n_toys as f64;
            let var = (sumsq[i] - sum[i] * sum[i] / n_toys as f64) / (n_toys as f64 - 1.0);
            assert!((mean - 100.0).abs() < 0.3, "bin {i}: mean {mean}");
            let ratio = var / mean;
            assert!((0.95..=1.05).contains(&ratio), "bin {i}: var/mean {ratio}");
        }
    }

    proptest! {
        #[test]
        fn spectrum_round_trip_is_exact(
            start in 100.0_f64..2000.0,
            widths in proptest::collection::vec(0.25_f64..40.0, 1..40),
            seed in any::<u64>(),
        ) {
            let mut edges = vec![start];
            for w in &widths {
                edges.push(edges.last().unwrap() + w);
            }
            let binning = Binning::new(edges).unwrap();
            let n = binning.n_bins();
            let counts: Vec<u64> = (0..n)
                .map(|i| crate::rng::derive_seed(seed, &[i as u64]) % 5000)
                .collect();
            let spectrum = BinnedSpectrum::new(
                binning,
                counts,
                Some(1234.5),
                vec!["provenance: proptest".to_string()],
            ).unwrap();

            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("round.csv");
            save_spectrum(&spectrum, &path).unwrap();
            let reloaded = load_spectrum(&path).unwrap();
            prop_assert_eq!(reloaded.counts, spectrum.counts);
            prop_assert_eq!(reloaded.binning.edges(), spectrum.binning.edges());
            prop_assert_eq!(reloaded.exposure_seconds, spectrum.exposure_seconds);
        }
    }
}
