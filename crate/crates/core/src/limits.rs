//! Upper limits, credible intervals, the Y -> R_K transform, exclusion
//! verdicts, and toy-ensemble coverage of the limit-setting machinery.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::inference::{
    grid_posterior, ChainSet, GridSpec, LikelihoodInputs, PosteriorGrid, PriorKind, PriorSpec,
};
use crate::rng::derive_seed;
use crate::spectrum::{simulate_toy, BackgroundModel};

/// One-sided upper limit from the grid cumulative: the smallest value whose
/// cumulative reaches `level`.
pub fn upper_limit_grid(posterior: &PosteriorGrid, level: f64) -> Result<f64> {
    posterior.quantile(level)
}

/// One-sided upper limit as the empirical quantile of pooled chain samples.
pub fn upper_limit_chains(chains: &ChainSet, level: f64) -> Result<f64> {
    chains.quantile(level)
}

/// Highest-posterior-density region at one probability level; possibly a
/// union of intervals for multimodal densities.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct CredibleLevel {
    pub level: f64,
    pub hpd_intervals: Vec<(f64, f64)>,
    pub upper_limit: f64,
}

/// Modes and credible regions of a gridded posterior.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct CredibleSummary {
    pub global_mode: f64,
    pub local_modes: Vec<f64>,
    pub levels: Vec<CredibleLevel>,
}

pub const DEFAULT_CREDIBLE_LEVELS: [f64; 3] = [0.66, 0.90, 0.95];

/// Mass of the region where the linearly interpolated density is >= `c`.
fn mass_above(nodes: &[f64], density: &[f64], c: f64) -> f64 {
    let mut mass = 0.0;
    for k in 0..nodes.len() - 1 {
        let (d0, d1) = (density[k], density[k + 1]);
        let h = nodes[k + 1] - nodes[k];
        if h <= 0.0 {
            continue;
        }
        if d0 >= c && d1 >= c {
            mass += 0.5 * (d0 + d1) * h;
        } else if d0 < c && d1 < c {
            continue;
        } else {
            // single crossing inside the segment
            let t = (c - d0) / (d1 - d0) * h;
            if d1 > d0 {
                mass += 0.5 * (c + d1) * (h - t);
            } else {
                mass += 0.5 * (d0 + c) * t;
            }
        }
    }
    mass
}

/// Interval union where the interpolated density is >= `c`.
fn region_above(nodes: &[f64], density: &[f64], c: f64) -> Vec<(f64, f64)> {
    let mut intervals: Vec<(f64, f64)> = Vec::new();
    let mut open: Option<f64> = None;
    for k in 0..nodes.len() - 1 {
        let (d0, d1) = (density[k], density[k + 1]);
        let h = nodes[k + 1] - nodes[k];
        if k == 0 && d0 >= c {
            open = Some(nodes[0]);
        }
        if h <= 0.0 {
            continue;
        }
        if d0 < c && d1 >= c {
            let t = (c - d0) / (d1 - d0) * h;
            open = Some(nodes[k] + t);
        } else if d0 >= c && d1 < c {
            let t = (c - d0) / (d1 - d0) * h;
            let start = open.take().unwrap_or(nodes[0]);
            intervals.push((start, nodes[k] + t));
        }
    }
    if let Some(start) = open {
        intervals.push((start, *nodes.last().unwrap()));
    }
    intervals
}

/// HPD intervals at the requested levels plus the mode structure.
pub fn credible_summary(posterior: &PosteriorGrid, levels: &[f64]) -> Result<CredibleSummary> {
    let nodes = posterior.nodes();
    let density = posterior.density();
    let peak = density[posterior.argmax()];
    if !(peak > 0.0) {
        return Err(Error::domain("posterior density is identically zero"));
    }

    let mut out_levels = Vec::with_capacity(levels.len());
    for &level in levels {
        if !(level > 0.0 && level < 1.0) {
            return Err(Error::domain(format!(
                "credible level must be in (0, 1), got {level}"
            )));
        }
        // Bisection on the density waterline; mass_above is decreasing in c.
        let mut lo = 0.0_f64;
        let mut hi = peak;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mass_above(nodes, density, mid) > level {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let c = 0.5 * (lo + hi);
        out_levels.push(CredibleLevel {
            level,
            hpd_intervals: region_above(nodes, density, c),
            upper_limit: posterior.quantile(level)?,
        });
    }

    let argmax = posterior.argmax();
    let local_modes = posterior
        .local_maxima()
        .into_iter()
        .filter(|&k| k != argmax)
        .map(|k| nodes[k])
        .collect();
    Ok(CredibleSummary {
        global_mode: nodes[argmax],
        local_modes,
        levels: out_levels,
    })
}

/// Lower limit on the correlation length from an upper limit on the yield.
pub fn rk_lower_limit(y_upper: f64) -> Result<f64> {
    if !(y_upper > 0.0) {
        return Err(Error::domain(format!(
            "yield upper limit must be > 0, got {y_upper}"
        )));
    }
    Ok(1.0 / y_upper.sqrt())
}

/// Yield corresponding to a correlation length, Y = 1/R_K^2.
pub fn y_from_rk(rk_m: f64) -> Result<f64> {
    if !(rk_m > 0.0) {
        return Err(Error::domain(format!(
            "correlation length must be > 0, got {rk_m}"
        )));
    }
    Ok(1.0 / (rk_m * rk_m))
}

/// Posterior of R_K obtained by transforming a Y-space grid with the exact
/// Jacobian |dY/dR| = 2/R^3; serves as the direct route for the
/// change-of-variables consistency check.
pub fn rk_posterior_from_y(posterior: &PosteriorGrid) -> Result<PosteriorGrid> {
    let y_nodes = posterior.nodes();
    let y_density = posterior.density();
    let n = y_nodes.len();
    let mut r_nodes: Vec<f64> = Vec::with_capacity(n);
    let mut r_density = Vec::with_capacity(n);
    for k in (0..n).rev() {
        let y = y_nodes[k];
        let r = 1.0 / y.sqrt();
        // skip nodes that collide after rounding through 1/sqrt
        if let Some(&last) = r_nodes.last() {
            if r <= last {
                continue;
            }
        }
        // q(R) = p(Y(R)) * 2 Y^(3/2)
        r_nodes.push(r);
        r_density.push(y_density[k] * 2.0 * y * y.sqrt());
    }
    PosteriorGrid::from_tabulated(r_nodes, r_density)
}

/// Direct Pi-quantile route: lower limit on R_K as the (1 - level) quantile
/// of the transformed R_K posterior.
pub fn rk_lower_limit_direct(posterior_y: &PosteriorGrid, level: f64) -> Result<f64> {
    let rk_grid = rk_posterior_from_y(posterior_y)?;
    rk_grid.quantile(1.0 - level)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    ModelExcluded,
    WindowRemains,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Verdict::ModelExcluded => write!(f, "model_excluded"),
            Verdict::WindowRemains => write!(f, "window_remains"),
        }
    }
}

/// Strict comparison: the model is excluded only when the experimental lower
/// limit lies strictly above the theoretical upper bound.
pub fn exclusion_verdict(rk_lower_m: f64, rk_theory_upper_m: f64) -> Verdict {
    debug_assert!(rk_lower_m > 0.0 && rk_theory_upper_m > 0.0);
    if rk_lower_m > rk_theory_upper_m {
        Verdict::ModelExcluded
    } else {
        Verdict::WindowRemains
    }
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct PriorDescription {
    pub kind: String,
    pub rk_min_m: f64,
    pub rk_max_m: f64,
}

impl From<&PriorSpec> for PriorDescription {
    fn from(p: &PriorSpec) -> Self {
        let (rk_min_m, rk_max_m) = p.rk_range_m();
        PriorDescription {
            kind: p.kind().as_str().to_string(),
            rk_min_m,
            rk_max_m,
        }
    }
}

/// Final limit statement with its provenance.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct LimitReport {
    pub level: f64,
    pub y_upper: f64,
    pub rk_lower_m: f64,
    pub rk_theory_upper_m: f64,
    pub verdict: Verdict,
    pub method: String,
    pub prior: PriorDescription,
    pub seeds: Vec<u64>,
    pub r_hat: Option<f64>,
    pub grid_y_upper: Option<f64>,
    pub mcmc_y_upper: Option<f64>,
    /// Set when `method = both` and the two routes disagree beyond 2%; the
    /// grid value is authoritative in that case.
    pub methods_disagree: Option<bool>,
}

/// Assembles the report from whichever routes ran. With both routes the grid
/// is authoritative and a disagreement beyond 2% is flagged.
#[allow(clippy::too_many_arguments)]
pub fn assemble_report(
    grid_y_upper: Option<f64>,
    mcmc_y_upper: Option<f64>,
    level: f64,
    rk_theory_upper_m: f64,
    prior: &PriorSpec,
    seeds: Vec<u64>,
    r_hat: Option<f64>,
) -> Result<LimitReport> {
    let (method, y_upper) = match (grid_y_upper, mcmc_y_upper) {
        (Some(g), Some(_)) => ("both", g),
        (Some(g), None) => ("grid", g),
        (None, Some(m)) => ("mcmc", m),
        (None, None) => {
            return Err(Error::domain("no posterior route produced an upper limit"));
        }
    };
    let methods_disagree = match (grid_y_upper, mcmc_y_upper) {
        (Some(g), Some(m)) => Some(((m - g) / g).abs() > 0.02),
        _ => None,
    };
    let rk_lower_m = rk_lower_limit(y_upper)?;
    Ok(LimitReport {
        level,
        y_upper,
        rk_lower_m,
        rk_theory_upper_m,
        verdict: exclusion_verdict(rk_lower_m, rk_theory_upper_m),
        method: method.to_string(),
        prior: prior.into(),
        seeds,
        r_hat,
        grid_y_upper,
        mcmc_y_upper,
        methods_disagree,
    })
}

/// Result of a toy-ensemble coverage study.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct CoverageResult {
    pub y_true: f64,
    pub level: f64,
    pub n_toys: usize,
    pub n_covered: usize,
    pub coverage: f64,
    pub binomial_error: f64,
    pub seed: u64,
}

/// Fraction of toys whose level-Pi grid upper limit covers the injected
/// Y_true. Uses the flat-in-Y prior over the default R_K range, as a coverage
/// check should not weight the parameter.
pub fn coverage_study(
    background: &BackgroundModel,
    signal_column: &[f64],
    y_true: f64,
    n_toys: usize,
    level: f64,
    seed: u64,
) -> Result<CoverageResult> {
    if n_toys < 100 {
        return Err(Error::domain(format!(
            "coverage study needs at least 100 toys, got {n_toys}"
        )));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::domain(format!(
            "coverage level must be in (0, 1), got {level}"
        )));
    }
    let default_rk = PriorSpec::default().rk_range_m();
    let prior = PriorSpec::new(PriorKind::UniformInY, default_rk.0, default_rk.1)?;
    let grid_spec = GridSpec::default();

    let covered: Vec<bool> = (0..n_toys)
        .into_par_iter()
        .map(|t| -> Result<bool> {
            let toy_seed = derive_seed(seed, &[t as u64]);
            let toy = simulate_toy(background, y_true, signal_column, toy_seed)?;
            let inputs = LikelihoodInputs::new(
                toy.counts.clone(),
                background.expected.clone(),
                signal_column.to_vec(),
            )?;
            let grid = grid_posterior(&inputs, &prior, &grid_spec)?;
            Ok(grid.quantile(level)? >= y_true)
        })
        .collect::<Result<Vec<bool>>>()?;

    let n_covered = covered.iter().filter(|&&c| c).count();
    let coverage = n_covered as f64 / n_toys as f64;
    Ok(CoverageResult {
        y_true,
        level,
        n_toys,
        n_covered,
        coverage,
        binomial_error: (coverage * (1.0 - coverage) / n_toys as f64).sqrt(),
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectrum::Binning;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    /// Gamma(4,1) pdf, the conjugate single-bin reference.
    fn gamma4_pdf(y: f64) -> f64 {
        y * y * y * (-y).exp() / 6.0
    }

    fn gamma4_grid(n: usize, hi: f64) -> PosteriorGrid {
        let nodes: Vec<f64> = (0..n).map(|k| hi * k as f64 / (n - 1) as f64).collect();
        let weights: Vec<f64> = nodes.iter().map(|&y| gamma4_pdf(y)).collect();
        PosteriorGrid::from_tabulated(nodes, weights).unwrap()
    }

    const GAMMA4_Q95_GOLDEN: f64 = 7.7536565279327269;
    const GAMMA4_HPD90_GOLDEN: (f64, f64) = (0.937295004381745, 6.94611351599596);

    #[test]
    fn uniform_density_quantile_is_linear() {
        let grid =
            PosteriorGrid::from_tabulated(vec![0.0, 0.25, 0.5, 0.75, 1.0], vec![1.0; 5]).unwrap();
        let q = upper_limit_grid(&grid, 0.95).unwrap();
        assert!((q - 0.95).abs() < 1e-12, "q = {q}");
    }

    #[test]
    fn gamma_quantile_matches_golden() {
        let grid = gamma4_grid(400_000, 60.0);
        let q = upper_limit_grid(&grid, 0.95).unwrap();
        assert!(rel(q, GAMMA4_Q95_GOLDEN) < 1e-6, "q = {q}");
    }

    #[test]
    fn upper_limit_monotone_in_level() {
        let grid = gamma4_grid(50_000, 60.0);
        let q90 = upper_limit_grid(&grid, 0.90).unwrap();
        let q95 = upper_limit_grid(&grid, 0.95).unwrap();
        assert!(q90 < q95);
    }

    #[test]
    fn hpd_symmetric_density_is_centered() {
        // triangle density on [0, 2], peak at 1
        let n = 20_001;
        let nodes: Vec<f64> = (0..n).map(|k| 2.0 * k as f64 / (n - 1) as f64).collect();
        let weights: Vec<f64> = nodes.iter().map(|&y| 1.0 - (y - 1.0).abs()).collect();
        let grid = PosteriorGrid::from_tabulated(nodes, weights).unwrap();
        let summary = credible_summary(&grid, &[0.66]).unwrap();
        let (lo, hi) = summary.levels[0].hpd_intervals[0];
        assert!(((lo + hi) / 2.0 - 1.0).abs() < 1e-6, "[{lo}, {hi}]");
        assert!((summary.global_mode - 1.0).abs() < 1e-9);
    }

    #[test]
    fn hpd_decreasing_density_starts_at_support_minimum() {
        let n = 20_001;
        let nodes: Vec<f64> = (0..n).map(|k| 10.0 * k as f64 / (n - 1) as f64).collect();
        let weights: Vec<f64> = nodes.iter().map(|&y| (-y).exp()).collect();
        let grid = PosteriorGrid::from_tabulated(nodes, weights).unwrap();
        let summary = credible_summary(&grid, &DEFAULT_CREDIBLE_LEVELS).unwrap();
        for lvl in &summary.levels {
            assert_eq!(lvl.hpd_intervals.len(), 1);
            assert!(lvl.hpd_intervals[0].0 < 1e-9, "{:?}", lvl.hpd_intervals);
        }
    }

    #[test]
    fn hpd_gamma_matches_dense_oracle() {
        let grid = gamma4_grid(400_000, 60.0);
        let summary = credible_summary(&grid, &[0.90]).unwrap();
        let (lo, hi) = summary.levels[0].hpd_intervals[0];
        assert!((lo - GAMMA4_HPD90_GOLDEN.0).abs() < 1e-5, "lo = {lo}");
        assert!((hi - GAMMA4_HPD90_GOLDEN.1).abs() < 1e-5, "hi = {hi}");
    }

    #[test]
    fn hpd_levels_are_nested() {
        let grid = gamma4_grid(100_000, 60.0);
        let summary = credible_summary(&grid, &DEFAULT_CREDIBLE_LEVELS).unwrap();
        let narrow = summary.levels[0].hpd_intervals[0];
        let mid = summary.levels[1].hpd_intervals[0];
        let wide = summary.levels[2].hpd_intervals[0];
        assert!(wide.0 <= mid.0 && mid.0 <= narrow.0);
        assert!(narrow.1 <= mid.1 && mid.1 <= wide.1);
        assert!(summary.levels[0].upper_limit <= summary.levels[1].upper_limit);
        assert!(summary.levels[1].upper_limit <= summary.levels[2].upper_limit);
    }

    #[test]
    fn rk_transform_round_trip() {
        assert_eq!(y_from_rk(1.0).unwrap(), 1.0);
        let y = y_from_rk(4.64).unwrap();
        assert!(rel(y, 0.046447681331747919) < 1e-12);
        assert!(rel(rk_lower_limit(y).unwrap(), 4.64) < 1e-15);
        for k in 1..=1000 {
            let rk = 10.0_f64.powf(-6.0 + 12.0 * k as f64 / 1000.0);
            let back = rk_lower_limit(y_from_rk(rk).unwrap()).unwrap();
            assert!(rel(back, rk) < 1e-15, "rk = {rk}");
        }
        assert!(y_from_rk(0.0).is_err());
        assert!(rk_lower_limit(0.0).is_err());
    }

    #[test]
    fn verdict_cases() {
        assert_eq!(exclusion_verdict(4.64, 1.98), Verdict::ModelExcluded);
        assert_eq!(exclusion_verdict(0.11, 1.98), Verdict::WindowRemains);
        // boundary is strict
        assert_eq!(exclusion_verdict(1.98, 1.98), Verdict::WindowRemains);
    }

    #[test]
    fn change_of_variables_consistency_on_gamma() {
        // Quantile in Y mapped to R_K equals the direct R_K-space quantile.
        let lo = 1e-4;
        let n = 200_000;
        let nodes: Vec<f64> = (0..n)
            .map(|k| lo + (60.0 - lo) * k as f64 / (n - 1) as f64)
            .collect();
        let weights: Vec<f64> = nodes.iter().map(|&y| gamma4_pdf(y)).collect();
        let grid = PosteriorGrid::from_tabulated(nodes, weights).unwrap();
        for level in [0.90, 0.95] {
            let via_y = rk_lower_limit(grid.quantile(level).unwrap()).unwrap();
            let direct = rk_lower_limit_direct(&grid, level).unwrap();
            assert!(rel(via_y, direct) < 1e-3, "{via_y} vs {direct}");
        }
    }

    #[test]
    fn report_assembly_flags_method_disagreement() {
        let prior = PriorSpec::default();
        let report =
            assemble_report(Some(1.0), Some(1.05), 0.95, 1.98, &prior, vec![1, 2], Some(1.002))
                .unwrap();
        assert_eq!(report.method, "both");
        assert_eq!(report.y_upper, 1.0, "grid is authoritative");
        assert_eq!(report.methods_disagree, Some(true));
        assert_eq!(report.rk_lower_m, 1.0);
        assert_eq!(report.verdict, Verdict::WindowRemains);

        let close = assemble_report(Some(1.0), Some(1.01), 0.95, 1.98, &prior, vec![], None)
            .unwrap();
        assert_eq!(close.methods_disagree, Some(false));
        assert!(assemble_report(None, None, 0.95, 1.98, &prior, vec![], None).is_err());
    }

    #[test]
    fn coverage_is_exact_at_zero_injection() {
        let binning = Binning::uniform(1300.0, 1325.0, 5).unwrap();
        let bg = BackgroundModel::new(binning, vec![8.0; 5], vec![]).unwrap();
        let result = coverage_study(&bg, &[1.0; 5], 0.0, 100, 0.95, 3).unwrap();
        assert_eq!(result.n_covered, 100);
        assert_eq!(result.coverage, 1.0);
    }

    #[test]
    fn coverage_rejects_tiny_ensembles() {
        let binning = Binning::uniform(1300.0, 1325.0, 5).unwrap();
        let bg = BackgroundModel::new(binning, vec![8.0; 5], vec![]).unwrap();
        assert!(coverage_study(&bg, &[1.0; 5], 0.0, 0, 0.95, 3).is_err());
        assert!(coverage_study(&bg, &[1.0; 5], 0.0, 99, 0.95, 3).is_err());
    }
}
