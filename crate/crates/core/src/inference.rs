//! Posterior inference for the yield Y = 1/R_K^2.
//!
//! Two routes compute the same posterior: a deterministic grid quadrature
//! (the oracle, also used for coverage studies) and multi-chain
//! Metropolis-Hastings in ln Y with a Jacobian-corrected target. Both work in
//! log space with max-subtraction before exponentiation.

use rand::Rng;
use rayon::prelude::*;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::rng::{derive_seed, stream};

/// Prior over the physical parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PriorKind {
    /// Uniform in R_K on [rk_min, rk_max], transformed to Y with the
    /// Jacobian of R_K = Y^(-1/2); density proportional to Y^(-3/2).
    UniformInRk,
    /// Uniform in Y on the support induced by the same R_K interval.
    UniformInY,
}

impl PriorKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            PriorKind::UniformInRk => "uniform-rk",
            PriorKind::UniformInY => "uniform-y",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "uniform-rk" => Ok(PriorKind::UniformInRk),
            "uniform-y" => Ok(PriorKind::UniformInY),
            other => Err(Error::config(format!(
                "unknown prior kind `{other}` (expected uniform-rk or uniform-y)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriorSpec {
    kind: PriorKind,
    rk_min_m: f64,
    rk_max_m: f64,
}

impl Default for PriorSpec {
    fn default() -> Self {
        PriorSpec {
            kind: PriorKind::UniformInRk,
            rk_min_m: 1e-10,
            rk_max_m: 1e9,
        }
    }
}

impl PriorSpec {
    pub fn new(kind: PriorKind, rk_min_m: f64, rk_max_m: f64) -> Result<Self> {
        if !(rk_min_m > 0.0 && rk_min_m < rk_max_m && rk_max_m.is_finite()) {
            return Err(Error::config(format!(
                "prior needs 0 < rk_min < rk_max (finite), got [{rk_min_m}, {rk_max_m}]"
            )));
        }
        Ok(PriorSpec {
            kind,
            rk_min_m,
            rk_max_m,
        })
    }

    pub fn kind(&self) -> PriorKind {
        self.kind
    }

    pub fn rk_range_m(&self) -> (f64, f64) {
        (self.rk_min_m, self.rk_max_m)
    }

    /// Lower edge of the Y support, 1/rk_max^2.
    pub fn y_min(&self) -> f64 {
        1.0 / (self.rk_max_m * self.rk_max_m)
    }

    /// Upper edge of the Y support, 1/rk_min^2.
    pub fn y_max(&self) -> f64 {
        1.0 / (self.rk_min_m * self.rk_min_m)
    }

    /// Normalized log prior density in Y space; -inf outside the support.
    pub fn log_density(&self, y: f64) -> f64 {
        if !(y >= self.y_min() && y <= self.y_max()) {
            return f64::NEG_INFINITY;
        }
        match self.kind {
            PriorKind::UniformInY => -(self.y_max() - self.y_min()).ln(),
            PriorKind::UniformInRk => {
                // p(Y) = (1/(rk_max - rk_min)) * 0.5 * Y^(-3/2)
                -(self.rk_max_m - self.rk_min_m).ln() - std::f64::consts::LN_2 - 1.5 * y.ln()
            }
        }
    }
}

/// Per-bin inputs of the Poisson likelihood with lambda_i(Y) = b_i + Y s_i.
#[derive(Debug, Clone, PartialEq)]
pub struct LikelihoodInputs {
    counts: Vec<u64>,
    background: Vec<f64>,
    signal: Vec<f64>,
    ln_factorial_sum: f64,
}

impl LikelihoodInputs {
    pub fn new(counts: Vec<u64>, background: Vec<f64>, signal: Vec<f64>) -> Result<Self> {
        if counts.len() != background.len() || counts.len() != signal.len() {
            return Err(Error::validation(
                None,
                format!(
                    "likelihood inputs must have equal lengths, got counts {}, background {}, signal {}",
                    counts.len(),
                    background.len(),
                    signal.len()
                ),
            ));
        }
        if counts.is_empty() {
            return Err(Error::validation(None, "likelihood inputs must not be empty"));
        }
        for (i, (&b, &s)) in background.iter().zip(&signal).enumerate() {
            if !b.is_finite() || b < 0.0 {
                return Err(Error::validation(
                    None,
                    format!("background must be finite and >= 0, got {b} in bin {i}"),
                ));
            }
            if !s.is_finite() || s < 0.0 {
                return Err(Error::validation(
                    None,
                    format!("signal column must be finite and >= 0, got {s} in bin {i}"),
                ));
            }
            if counts[i] > 0 && b == 0.0 && s == 0.0 {
                return Err(Error::validation(
                    None,
                    format!(
                        "bin {i} has {} counts but zero background and zero signal \
                         sensitivity; the model cannot produce these data",
                        counts[i]
                    ),
                ));
            }
        }
        let ln_factorial_sum = counts.iter().map(|&n| ln_gamma(n as f64 + 1.0)).sum();
        Ok(LikelihoodInputs {
            counts,
            background,
            signal,
            ln_factorial_sum,
        })
    }

    pub fn n_bins(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn background(&self) -> &[f64] {
        &self.background
    }

    pub fn signal(&self) -> &[f64] {
        &self.signal
    }
}

/// Poisson log likelihood sum_i [n_i ln lambda_i - lambda_i - ln n_i!],
/// with 0 ln 0 = 0 and a -inf sentinel when some lambda_i = 0 with n_i > 0.
pub fn log_likelihood(y: f64, inputs: &LikelihoodInputs) -> f64 {
    if !(y >= 0.0) {
        return f64::NEG_INFINITY;
    }
    let mut acc = 0.0_f64;
    for ((&n, &b), &s) in inputs
        .counts
        .iter()
        .zip(&inputs.background)
        .zip(&inputs.signal)
    {
        let lambda = b + y * s;
        if lambda > 0.0 {
            acc += n as f64 * lambda.ln() - lambda;
        } else if n > 0 {
            return f64::NEG_INFINITY;
        }
        // lambda = 0 with n = 0 contributes 0 ln 0 - 0 = 0
    }
    acc - inputs.ln_factorial_sum
}

/// Unnormalized log posterior in Y space.
pub fn log_posterior(y: f64, inputs: &LikelihoodInputs, prior: &PriorSpec) -> f64 {
    let lp = prior.log_density(y);
    if lp == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    lp + log_likelihood(y, inputs)
}

/// Node layout for the grid posterior.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    /// Log-spaced nodes across the whole prior support.
    pub n_log: usize,
    /// Linearly spaced nodes concentrated around the likelihood peak.
    pub n_linear: usize,
    /// Overrides the automatic layout entirely when set.
    pub explicit_nodes: Option<Vec<f64>>,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            n_log: 1000,
            n_linear: 3000,
            explicit_nodes: None,
        }
    }
}

impl GridSpec {
    pub fn with_resolution(n_log: usize, n_linear: usize) -> Self {
        GridSpec {
            n_log,
            n_linear,
            explicit_nodes: None,
        }
    }

    pub fn explicit(nodes: Vec<f64>) -> Self {
        GridSpec {
            n_log: 0,
            n_linear: 0,
            explicit_nodes: Some(nodes),
        }
    }
}

/// Normalized posterior density tabulated on ordered Y nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorGrid {
    y: Vec<f64>,
    density: Vec<f64>,
    cumulative: Vec<f64>,
    log_norm: f64,
}

impl PosteriorGrid {
    /// Normalizes tabulated non-negative density values on ordered nodes into
    /// a grid posterior; `log_norm` becomes the log of the raw integral.
    pub fn from_tabulated(y: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if y.len() != weights.len() || y.len() < 2 {
            return Err(Error::domain(format!(
                "tabulated grid needs matching node/value lengths >= 2, got {} and {}",
                y.len(),
                weights.len()
            )));
        }
        for w in y.windows(2) {
            if !(w[0] < w[1]) {
                return Err(Error::domain(
                    "tabulated grid nodes must be strictly increasing",
                ));
            }
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::domain(
                "tabulated density values must be finite and >= 0",
            ));
        }

        // Fixed-order trapezoid accumulation keeps the reduction deterministic.
        let mut partial = Vec::with_capacity(y.len());
        partial.push(0.0_f64);
        let mut acc = 0.0_f64;
        for k in 0..y.len() - 1 {
            acc += 0.5 * (weights[k] + weights[k + 1]) * (y[k + 1] - y[k]);
            partial.push(acc);
        }
        let total = acc;
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::domain(
                "posterior normalization failed: zero or non-finite integral",
            ));
        }
        let density: Vec<f64> = weights.iter().map(|w| w / total).collect();
        let cumulative: Vec<f64> = partial.iter().map(|p| p / total).collect();
        Ok(PosteriorGrid {
            y,
            density,
            cumulative,
            log_norm: total.ln(),
        })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.y
    }

    pub fn density(&self) -> &[f64] {
        &self.density
    }

    pub fn cumulative(&self) -> &[f64] {
        &self.cumulative
    }

    /// Log of the evidence integral of likelihood times prior.
    pub fn log_norm(&self) -> f64 {
        self.log_norm
    }

    /// Trapezoid cumulative at an arbitrary point, with linear density
    /// interpolation inside segments.
    pub fn cdf_at(&self, y: f64) -> f64 {
        if y <= self.y[0] {
            return 0.0;
        }
        if y >= *self.y.last().unwrap() {
            return 1.0;
        }
        let k = self.y.partition_point(|&node| node <= y) - 1;
        let h = self.y[k + 1] - self.y[k];
        if h <= 0.0 {
            return self.cumulative[k];
        }
        let t = y - self.y[k];
        let slope = (self.density[k + 1] - self.density[k]) / h;
        (self.cumulative[k] + self.density[k] * t + 0.5 * slope * t * t).clamp(0.0, 1.0)
    }

    /// Smallest value whose cumulative reaches `p`.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::domain(format!(
                "quantile probability must be in (0, 1), got {p}"
            )));
        }
        let k = match self.cumulative.partition_point(|&c| c < p) {
            0 => return Ok(self.y[0]),
            idx if idx >= self.y.len() => self.y.len() - 2,
            idx => idx - 1,
        };
        let h = self.y[k + 1] - self.y[k];
        let d0 = self.density[k];
        let d1 = self.density[k + 1];
        let m = (p - self.cumulative[k]).max(0.0);
        if h <= 0.0 {
            return Ok(self.y[k]);
        }
        let slope = (d1 - d0) / h;
        // Solve 0.5 slope t^2 + d0 t = m on [0, h]; stable root form.
        let disc = (d0 * d0 + 2.0 * slope * m).max(0.0);
        let denom = d0 + disc.sqrt();
        let t = if denom > 0.0 { 2.0 * m / denom } else { 0.0 };
        Ok(self.y[k] + t.clamp(0.0, h))
    }

    /// Index of the global density maximum.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (k, &d) in self.density.iter().enumerate() {
            if d > self.density[best] {
                best = k;
            }
        }
        best
    }

    /// Indices of strict local maxima, boundaries included.
    pub fn local_maxima(&self) -> Vec<usize> {
        let n = self.density.len();
        let mut out = Vec::new();
        for k in 0..n {
            let left_ok = k == 0 || self.density[k] > self.density[k - 1];
            let right_ok = k + 1 == n || self.density[k] > self.density[k + 1];
            if left_ok && right_ok && self.density[k] > 0.0 {
                out.push(k);
            }
        }
        out
    }
}

/// Summary of a scan of a unimodal log target over u = ln Y.
struct ScanSummary {
    u_star: f64,
    g_star: f64,
    sigma_u: f64,
}

const SCAN_POINTS: usize = 600;
/// Log-posterior drop below the peak regarded as negligible tail.
const TAIL_LOG_DROP: f64 = 45.0;

fn scan_log_target(f: &dyn Fn(f64) -> f64, u_min: f64, u_max: f64) -> ScanSummary {
    let n = SCAN_POINTS;
    let us: Vec<f64> = (0..n)
        .map(|k| u_min + (u_max - u_min) * k as f64 / (n - 1) as f64)
        .collect();
    let gs: Vec<f64> = us.iter().map(|&u| f(u)).collect();
    let mut k_best = 0;
    for (k, &g) in gs.iter().enumerate() {
        if g > gs[k_best] {
            k_best = k;
        }
    }

    // Golden-section refinement inside the bracketing neighbours.
    let mut lo = us[k_best.saturating_sub(1)];
    let mut hi = us[(k_best + 1).min(n - 1)];
    let ratio = 0.5 * (5.0_f64.sqrt() - 1.0);
    let mut x1 = hi - ratio * (hi - lo);
    let mut x2 = lo + ratio * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..120 {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + ratio * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - ratio * (hi - lo);
            f1 = f(x1);
        }
    }
    let u_star = 0.5 * (lo + hi);
    let g_star = f(u_star).max(gs[k_best]);

    // Moment-based width from the scan, robust for boundary-peaked targets.
    let mut mass = 0.0;
    let mut mean = 0.0;
    let mut second = 0.0;
    for k in 0..n - 1 {
        let w0 = (gs[k] - g_star).exp();
        let w1 = (gs[k + 1] - g_star).exp();
        let h = us[k + 1] - us[k];
        let seg = 0.5 * (w0 + w1) * h;
        let mid = 0.5 * (us[k] + us[k + 1]);
        mass += seg;
        mean += seg * mid;
        second += seg * mid * mid;
    }
    let sigma_u = if mass > 0.0 {
        let mu = mean / mass;
        (second / mass - mu * mu).max(0.0).sqrt()
    } else {
        0.0
    };
    let fallback = (u_max - u_min) / n as f64;
    ScanSummary {
        u_star,
        g_star,
        sigma_u: if sigma_u > 0.0 { sigma_u } else { fallback },
    }
}

/// Expands from `u_star` until the log target drops `TAIL_LOG_DROP` below its
/// peak or the support edge is reached.
fn tail_bound(f: &dyn Fn(f64) -> f64, u_star: f64, g_star: f64, limit: f64, upward: bool) -> f64 {
    let mut u = u_star;
    let mut step = 0.05_f64;
    for _ in 0..400 {
        let next = if upward { u + step } else { u - step };
        let next = if upward { next.min(limit) } else { next.max(limit) };
        if f(next) < g_star - TAIL_LOG_DROP {
            return next;
        }
        u = next;
        if (upward && u >= limit) || (!upward && u <= limit) {
            return limit;
        }
        step *= 1.3;
    }
    limit
}

fn build_nodes(inputs: &LikelihoodInputs, prior: &PriorSpec, spec: &GridSpec) -> Result<Vec<f64>> {
    let y_lo = prior.y_min();
    let y_hi = prior.y_max();

    if let Some(nodes) = &spec.explicit_nodes {
        if nodes.len() < 2 {
            return Err(Error::config("explicit grid needs at least 2 nodes"));
        }
        for w in nodes.windows(2) {
            if !(w[0] < w[1]) {
                return Err(Error::config(
                    "explicit grid nodes must be strictly increasing",
                ));
            }
        }
        if nodes[0] < y_lo || *nodes.last().unwrap() > y_hi {
            return Err(Error::config(format!(
                "explicit grid nodes must lie inside the prior support [{y_lo:e}, {y_hi:e}]"
            )));
        }
        return Ok(nodes.clone());
    }

    if spec.n_log + spec.n_linear < 1000 {
        return Err(Error::config(format!(
            "grid must have at least 1000 nodes, got {}",
            spec.n_log + spec.n_linear
        )));
    }
    if spec.n_log < 2 || spec.n_linear < 2 {
        return Err(Error::config(
            "grid needs at least 2 log and 2 linear nodes",
        ));
    }

    let u_min = y_lo.ln();
    let u_max = y_hi.ln();
    let like = |u: f64| log_likelihood(u.exp(), inputs);
    let scan = scan_log_target(&like, u_min, u_max);

    let u_dn = tail_bound(&like, scan.u_star, scan.g_star, u_min, false);
    let u_up = tail_bound(&like, scan.u_star, scan.g_star, u_max, true);
    let fine_lo = u_dn.exp().max(y_lo);
    let fine_hi = u_up.exp().min(y_hi);

    let mut nodes = Vec::with_capacity(spec.n_log + spec.n_linear + 2);
    for k in 0..spec.n_log {
        let u = u_min + (u_max - u_min) * k as f64 / (spec.n_log - 1) as f64;
        // exp(ln(y)) can overshoot the support edge by an ulp
        nodes.push(u.exp().clamp(y_lo, y_hi));
    }
    if fine_hi > fine_lo {
        for k in 0..spec.n_linear {
            let y = fine_lo + (fine_hi - fine_lo) * k as f64 / (spec.n_linear - 1) as f64;
            nodes.push(y.clamp(y_lo, y_hi));
        }
    }
    nodes.push(y_lo);
    nodes.push(y_hi);
    nodes.sort_unstable_by(f64::total_cmp);
    nodes.dedup();
    Ok(nodes)
}

/// Deterministic grid posterior: the oracle against which MCMC results are
/// checked. Log-spaced nodes cover the full support and a linear refinement
/// resolves the likelihood peak; everything is evaluated in log space and
/// normalized by the trapezoid rule.
pub fn grid_posterior(
    inputs: &LikelihoodInputs,
    prior: &PriorSpec,
    spec: &GridSpec,
) -> Result<PosteriorGrid> {
    let y = build_nodes(inputs, prior, spec)?;

    let log_post: Vec<f64> = if y.len() >= 20_000 {
        y.par_iter().map(|&v| log_posterior(v, inputs, prior)).collect()
    } else {
        y.iter().map(|&v| log_posterior(v, inputs, prior)).collect()
    };
    let m = log_post.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return Err(Error::domain(
            "posterior vanishes everywhere on the grid; data and model are incompatible",
        ));
    }
    let weights: Vec<f64> = log_post.iter().map(|&t| (t - m).exp()).collect();
    let mut grid = PosteriorGrid::from_tabulated(y, weights)?;
    // Undo the max-subtraction so log_norm is the true log evidence.
    grid.log_norm += m;
    Ok(grid)
}

/// Metropolis-Hastings settings; `n_samples` counts all iterations per chain,
/// of which the leading `burn_in_fraction` are discarded.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McmcSettings {
    pub n_chains: usize,
    pub n_samples: usize,
    pub burn_in_fraction: f64,
    pub seed: u64,
}

impl Default for McmcSettings {
    fn default() -> Self {
        McmcSettings {
            n_chains: 4,
            n_samples: 1_000_000,
            burn_in_fraction: 0.1,
            seed: 0,
        }
    }
}

impl McmcSettings {
    fn validate(&self) -> Result<()> {
        if self.n_chains == 0 {
            return Err(Error::config("need at least one chain"));
        }
        if self.n_samples < 100 {
            return Err(Error::config(format!(
                "need at least 100 samples per chain, got {}",
                self.n_samples
            )));
        }
        if !(self.burn_in_fraction >= 0.0 && self.burn_in_fraction < 1.0) {
            return Err(Error::config(format!(
                "burn-in fraction must be in [0, 1), got {}",
                self.burn_in_fraction
            )));
        }
        Ok(())
    }
}

/// Retained samples and diagnostics from a multi-chain run.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainSet {
    chains: Vec<Vec<f64>>,
    seeds: Vec<u64>,
    acceptance_rates: Vec<f64>,
    proposal_scales: Vec<f64>,
    n_total_per_chain: usize,
    n_burn: usize,
    r_hat: Option<f64>,
}

impl ChainSet {
    /// Retained Y samples per chain, in chain order.
    pub fn chains(&self) -> &[Vec<f64>] {
        &self.chains
    }

    pub fn seeds(&self) -> &[u64] {
        &self.seeds
    }

    pub fn acceptance_rates(&self) -> &[f64] {
        &self.acceptance_rates
    }

    /// Frozen post-burn-in random-walk scales in ln Y.
    pub fn proposal_scales(&self) -> &[f64] {
        &self.proposal_scales
    }

    pub fn n_total_per_chain(&self) -> usize {
        self.n_total_per_chain
    }

    pub fn n_burn(&self) -> usize {
        self.n_burn
    }

    /// Split-chain potential scale reduction on ln Y; None for single-chain
    /// runs, +inf when within-chain variance degenerates.
    pub fn r_hat(&self) -> Option<f64> {
        self.r_hat
    }

    pub fn converged(&self, threshold: f64) -> bool {
        match self.r_hat {
            Some(r) => r <= threshold,
            None => true,
        }
    }

    /// All retained samples pooled in chain order.
    pub fn pooled(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.chains.iter().map(Vec::len).sum());
        for c in &self.chains {
            out.extend_from_slice(c);
        }
        out
    }

    /// Empirical quantile of the pooled samples: the smallest sample with at
    /// least a fraction `p` of the pool at or below it.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::domain(format!(
                "quantile probability must be in (0, 1), got {p}"
            )));
        }
        let mut pooled = self.pooled();
        if pooled.is_empty() {
            return Err(Error::domain("no retained samples"));
        }
        pooled.sort_unstable_by(f64::total_cmp);
        let rank = (p * pooled.len() as f64).ceil() as usize;
        Ok(pooled[rank.clamp(1, pooled.len()) - 1])
    }
}

struct SingleChain {
    samples: Vec<f64>,
    acceptance_rate: f64,
    scale: f64,
    seed: u64,
}

fn run_chain(
    inputs: &LikelihoodInputs,
    prior: &PriorSpec,
    settings: &McmcSettings,
    chain_idx: usize,
    u_init: f64,
    scale_init: f64,
) -> SingleChain {
    let u_min = prior.y_min().ln();
    let u_max = prior.y_max().ln();
    // Target in u = ln Y includes the e^u Jacobian; the clamp absorbs the
    // ulp-level mismatch between exp(ln(y)) and the support edges.
    let target = |u: f64| {
        if u < u_min || u > u_max {
            f64::NEG_INFINITY
        } else {
            log_posterior(u.exp().clamp(prior.y_min(), prior.y_max()), inputs, prior) + u
        }
    };

    let seed = derive_seed(settings.seed, &[0xC4A1, chain_idx as u64]);
    let mut rng = stream(seed, &[]);
    let n_burn = (settings.burn_in_fraction * settings.n_samples as f64).floor() as usize;
    let n_keep = settings.n_samples - n_burn;

    let mut u = u_init.clamp(u_min, u_max);
    let mut g = target(u);
    let mut scale = scale_init;
    let mut samples = Vec::with_capacity(n_keep);
    let mut accepted_window = 0usize;
    let mut accepted_kept = 0usize;
    const WINDOW: usize = 100;

    for step in 0..settings.n_samples {
        // Box-Muller; u1 in (0, 1] avoids ln(0).
        let u1: f64 = 1.0 - rng.gen::<f64>();
        let u2: f64 = rng.gen();
        let z = (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
        let proposal = u + scale * z;
        let g_new = target(proposal);
        let accept_u: f64 = rng.gen();
        let accept = g_new - g > accept_u.ln();
        if accept {
            u = proposal;
            g = g_new;
        }

        if step < n_burn {
            if accept {
                accepted_window += 1;
            }
            // Adapt the scale toward acceptance in [0.2, 0.5]; frozen after
            // burn-in to keep the retained samples Markovian.
            if (step + 1) % WINDOW == 0 {
                let rate = accepted_window as f64 / WINDOW as f64;
                let factor = if rate < 0.2 {
                    0.7
                } else if rate > 0.5 {
                    1.4
                } else {
                    (0.5 * (rate - 0.4)).exp()
                };
                scale = (scale * factor).clamp(1e-9, 1e4);
                accepted_window = 0;
            }
        } else {
            if accept {
                accepted_kept += 1;
            }
            samples.push(u.exp());
        }
    }

    SingleChain {
        samples,
        acceptance_rate: accepted_kept as f64 / n_keep.max(1) as f64,
        scale,
        seed,
    }
}

/// Multi-chain Metropolis-Hastings in ln Y with burn-in adaptation.
///
/// Identical settings (including the seed) give identical output regardless
/// of thread count; each chain owns a seed-derived stream.
pub fn run_mcmc(
    inputs: &LikelihoodInputs,
    prior: &PriorSpec,
    settings: &McmcSettings,
) -> Result<ChainSet> {
    settings.validate()?;
    let u_min = prior.y_min().ln();
    let u_max = prior.y_max().ln();
    let target =
        |u: f64| log_posterior(u.exp().clamp(prior.y_min(), prior.y_max()), inputs, prior) + u;
    let scan = scan_log_target(&target, u_min, u_max);
    let sigma = scan.sigma_u.max(1e-3);
    let scale_init = (2.4 * sigma).clamp(1e-3, 20.0);

    let n = settings.n_chains;
    let results: Vec<SingleChain> = (0..n)
        .into_par_iter()
        .map(|c| {
            // Overdispersed deterministic starts around the target peak.
            let offset = if n == 1 {
                0.0
            } else {
                3.0 * sigma * (c as f64 / (n - 1) as f64 - 0.5)
            };
            let u_init = (scan.u_star + offset).clamp(u_min, u_max);
            run_chain(inputs, prior, settings, c, u_init, scale_init)
        })
        .collect();

    let chains: Vec<Vec<f64>> = results.iter().map(|r| r.samples.clone()).collect();
    let r_hat = if n >= 2 && chains[0].len() >= 100 {
        let ln_chains: Vec<Vec<f64>> = chains
            .iter()
            .map(|c| c.iter().map(|y| y.ln()).collect())
            .collect();
        Some(gelman_rubin(&ln_chains)?)
    } else {
        None
    };

    let n_burn = (settings.burn_in_fraction * settings.n_samples as f64).floor() as usize;
    Ok(ChainSet {
        seeds: results.iter().map(|r| r.seed).collect(),
        acceptance_rates: results.iter().map(|r| r.acceptance_rate).collect(),
        proposal_scales: results.iter().map(|r| r.scale).collect(),
        chains,
        n_total_per_chain: settings.n_samples,
        n_burn,
        r_hat,
    })
}

/// Split-chain potential scale reduction (Gelman-Rubin R-hat).
///
/// Chains are split in half, so `m = 2 * chains.len()` groups enter the
/// between/within variance ratio. Returns +inf when the within-chain
/// variance degenerates to zero.
pub fn gelman_rubin(chains: &[Vec<f64>]) -> Result<f64> {
    if chains.len() < 2 {
        return Err(Error::domain(format!(
            "need at least 2 chains, got {}",
            chains.len()
        )));
    }
    let min_len = chains.iter().map(Vec::len).min().unwrap();
    if min_len < 100 {
        return Err(Error::domain(format!(
            "need at least 100 samples per chain, got {min_len}"
        )));
    }
    let half = min_len / 2;
    let mut groups: Vec<&[f64]> = Vec::with_capacity(chains.len() * 2);
    for c in chains {
        groups.push(&c[..half]);
        groups.push(&c[half..2 * half]);
    }

    let m = groups.len() as f64;
    let n = half as f64;
    let means: Vec<f64> = groups
        .iter()
        .map(|g| g.iter().sum::<f64>() / n)
        .collect();
    let variances: Vec<f64> = groups
        .iter()
        .zip(&means)
        .map(|(g, &mu)| g.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / (n - 1.0))
        .collect();

    let w = variances.iter().sum::<f64>() / m;
    let grand = means.iter().sum::<f64>() / m;
    let b = n / (m - 1.0) * means.iter().map(|&x| (x - grand) * (x - grand)).sum::<f64>();

    if w <= 0.0 {
        return Ok(f64::INFINITY);
    }
    let v = (n - 1.0) / n * w + b / n;
    Ok((v / w).sqrt())
}

/// Kolmogorov-Smirnov distance between an empirical sample (sorted ascending)
/// and a reference CDF.
pub fn ks_statistic(sorted: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let n = sorted.len() as f64;
    let mut d = 0.0_f64;
    for (i, &x) in sorted.iter().enumerate() {
        let f = cdf(x);
        d = d.max((f - i as f64 / n).abs());
        d = d.max(((i + 1) as f64 / n - f).abs());
    }
    d
}
