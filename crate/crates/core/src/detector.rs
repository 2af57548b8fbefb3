//! Setup components, MC-fitted detection efficiencies, and the expected
//! signal shape with its exact per-bin integrals.

use std::sync::atomic::{AtomicU64, Ordering};

use crate::constants::{beta_k, PhysicalConstants, UnitSystem};
use crate::error::{Error, Result};
use crate::spectrum::Binning;

/// One atom type inside a material: proton number, electrons bound per atom,
/// stoichiometric multiplicity, and molar mass.
#[derive(Debug, Clone, PartialEq)]
pub struct ElementCount {
    pub symbol: String,
    pub z: u32,
    pub electrons_per_atom: u32,
    pub atoms_per_formula_unit: f64,
    pub molar_mass_g_mol: f64,
}

impl ElementCount {
    pub fn new(
        symbol: impl Into<String>,
        z: u32,
        electrons_per_atom: u32,
        atoms_per_formula_unit: f64,
        molar_mass_g_mol: f64,
    ) -> Result<Self> {
        let symbol = symbol.into();
        if z < 1 {
            return Err(Error::config(format!("element {symbol}: Z must be >= 1")));
        }
        if !(molar_mass_g_mol > 0.0) {
            return Err(Error::config(format!(
                "element {symbol}: molar mass must be > 0, got {molar_mass_g_mol}"
            )));
        }
        if !(atoms_per_formula_unit > 0.0) {
            return Err(Error::config(format!(
                "element {symbol}: stoichiometry must be > 0, got {atoms_per_formula_unit}"
            )));
        }
        Ok(ElementCount {
            symbol,
            z,
            electrons_per_atom,
            atoms_per_formula_unit,
            molar_mass_g_mol,
        })
    }
}

/// Polynomial detection-efficiency curve epsilon(E) = sum_j xi_j E^j with E in keV.
///
/// Trusted only on `valid_range`; evaluation outside it is an error. Negative
/// values inside the range (possible when the declared range exceeds the fit
/// window) clamp to zero and bump a diagnostic counter.
#[derive(Debug)]
pub struct EfficiencyCurve {
    coefficients: Vec<f64>,
    coefficient_errors: Option<Vec<f64>>,
    valid_range: (f64, f64),
    clamp_events: AtomicU64,
}

impl Clone for EfficiencyCurve {
    fn clone(&self) -> Self {
        EfficiencyCurve {
            coefficients: self.coefficients.clone(),
            coefficient_errors: self.coefficient_errors.clone(),
            valid_range: self.valid_range,
            clamp_events: AtomicU64::new(self.clamp_events.load(Ordering::Relaxed)),
        }
    }
}

impl PartialEq for EfficiencyCurve {
    fn eq(&self, other: &Self) -> bool {
        self.coefficients == other.coefficients
            && self.coefficient_errors == other.coefficient_errors
            && self.valid_range == other.valid_range
    }
}

impl EfficiencyCurve {
    pub fn new(
        coefficients: Vec<f64>,
        coefficient_errors: Option<Vec<f64>>,
        valid_range: (f64, f64),
    ) -> Result<Self> {
        if coefficients.is_empty() {
            return Err(Error::config("efficiency curve needs at least one coefficient"));
        }
        if coefficients.iter().any(|c| !c.is_finite()) {
            return Err(Error::config("efficiency coefficients must be finite"));
        }
        if let Some(errs) = &coefficient_errors {
            if errs.len() != coefficients.len() {
                return Err(Error::config(format!(
                    "coefficient errors length {} does not match coefficients length {}",
                    errs.len(),
                    coefficients.len()
                )));
            }
        }
        if !(valid_range.0 < valid_range.1) || !valid_range.0.is_finite() || !valid_range.1.is_finite() {
            return Err(Error::config(format!(
                "efficiency valid range must be a non-empty finite interval, got [{}, {}]",
                valid_range.0, valid_range.1
            )));
        }
        Ok(EfficiencyCurve {
            coefficients,
            coefficient_errors,
            valid_range,
            clamp_events: AtomicU64::new(0),
        })
    }

    pub fn degree(&self) -> usize {
        self.coefficients.len() - 1
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn coefficient_errors(&self) -> Option<&[f64]> {
        self.coefficient_errors.as_deref()
    }

    pub fn valid_range(&self) -> (f64, f64) {
        self.valid_range
    }

    /// Number of evaluations that produced a negative polynomial value and
    /// were clamped to zero.
    pub fn clamp_count(&self) -> u64 {
        self.clamp_events.load(Ordering::Relaxed)
    }

    pub fn contains(&self, e_kev: f64) -> bool {
        e_kev >= self.valid_range.0 && e_kev <= self.valid_range.1
    }

    /// Horner evaluation at `e_kev`.
    pub fn evaluate(&self, e_kev: f64) -> Result<f64> {
        if !e_kev.is_finite() || !self.contains(e_kev) {
            return Err(Error::domain(format!(
                "energy {e_kev} keV outside efficiency valid range [{}, {}]",
                self.valid_range.0, self.valid_range.1
            )));
        }
        let mut value = 0.0_f64;
        for &c in self.coefficients.iter().rev() {
            value = value * e_kev + c;
        }
        if value < 0.0 {
            self.clamp_events.fetch_add(1, Ordering::Relaxed);
            return Ok(0.0);
        }
        Ok(value)
    }

    /// Raw polynomial value without range check or clamping. Used by the
    /// non-negativity scan; tests also use it to probe behavior outside the
    /// trusted window.
    fn horner_unchecked(&self, e_kev: f64) -> f64 {
        let mut value = 0.0_f64;
        for &c in self.coefficients.iter().rev() {
            value = value * e_kev + c;
        }
        value
    }

    /// Antiderivative of epsilon(E) * E^(-2/3): sum_j xi_j E^(j+1/3) / (j+1/3).
    fn weighted_antiderivative(&self, e_kev: f64) -> f64 {
        let cbrt_e = e_kev.cbrt();
        let mut power = cbrt_e; // E^(j+1/3) starting at j = 0
        let mut total = 0.0;
        for (j, &c) in self.coefficients.iter().enumerate() {
            total += c * power / (j as f64 + 1.0 / 3.0);
            power *= e_kev;
        }
        total
    }
}

/// One component of the setup: mass, elemental composition, and its linked
/// efficiency curve.
#[derive(Debug, Clone, PartialEq)]
pub struct Material {
    name: String,
    mass_kg: f64,
    composition: Vec<ElementCount>,
    efficiency: EfficiencyCurve,
}

impl Material {
    pub fn new(
        name: impl Into<String>,
        mass_kg: f64,
        composition: Vec<ElementCount>,
        efficiency: EfficiencyCurve,
    ) -> Result<Self> {
        let name = name.into();
        if !(mass_kg > 0.0) {
            return Err(Error::config(format!(
                "material {name}: mass must be > 0, got {mass_kg}"
            )));
        }
        if composition.is_empty() {
            return Err(Error::config(format!(
                "material {name}: composition must not be empty"
            )));
        }
        Ok(Material {
            name,
            mass_kg,
            composition,
            efficiency,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn mass_kg(&self) -> f64 {
        self.mass_kg
    }

    pub fn composition(&self) -> &[ElementCount] {
        &self.composition
    }

    pub fn efficiency(&self) -> &EfficiencyCurve {
        &self.efficiency
    }

    /// Molar mass of one formula unit, g/mol.
    fn formula_unit_mass(&self) -> f64 {
        self.composition
            .iter()
            .map(|e| e.atoms_per_formula_unit * e.molar_mass_g_mol)
            .sum()
    }

    /// Material weight alpha = sum over atom types of
    /// N_atoms * (Z^2 [+ electrons_per_atom]).
    pub fn alpha_factor(&self, include_electron_term: bool, constants: &PhysicalConstants) -> f64 {
        let formula_units = self.mass_kg * 1000.0 / self.formula_unit_mass() * constants.avogadro;
        self.composition
            .iter()
            .map(|e| {
                let atoms = formula_units * e.atoms_per_formula_unit;
                let z = e.z as f64;
                let per_atom = if include_electron_term {
                    z * z + e.electrons_per_atom as f64
                } else {
                    z * z
                };
                atoms * per_atom
            })
            .sum()
    }
}

/// Full signal model: all setup components plus the acquisition time.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalModel {
    materials: Vec<Material>,
    t_exp_seconds: f64,
    include_electron_term: bool,
    systematic_fraction: f64,
}

impl SignalModel {
    /// Builds the model and verifies every efficiency polynomial is
    /// non-negative across its declared valid range, which is what lets the
    /// analytic bin integral skip clamping.
    pub fn new(
        materials: Vec<Material>,
        t_exp_seconds: f64,
        include_electron_term: bool,
    ) -> Result<Self> {
        if !(t_exp_seconds > 0.0) {
            return Err(Error::config(format!(
                "exposure must be > 0 s, got {t_exp_seconds}"
            )));
        }
        if materials.is_empty() {
            return Err(Error::config("signal model needs at least one material"));
        }
        for m in &materials {
            let (lo, hi) = m.efficiency.valid_range();
            let steps = 3000;
            for k in 0..=steps {
                let e = lo + (hi - lo) * k as f64 / steps as f64;
                let v = m.efficiency.horner_unchecked(e);
                if v < 0.0 {
                    return Err(Error::config(format!(
                        "material {}: efficiency is negative ({v:e}) at {e} keV inside its \
                         declared valid range [{lo}, {hi}]; shrink the range to the trusted fit window",
                        m.name
                    )));
                }
            }
        }
        Ok(SignalModel {
            materials,
            t_exp_seconds,
            include_electron_term,
            systematic_fraction: 0.0,
        })
    }

    /// Inflates every signal integral by `1 + fraction` as a crude efficiency
    /// systematic. Off (0) by default.
    pub fn with_systematic_fraction(mut self, fraction: f64) -> Result<Self> {
        if !(fraction >= 0.0) || !fraction.is_finite() {
            return Err(Error::config(format!(
                "systematic fraction must be a finite value >= 0, got {fraction}"
            )));
        }
        self.systematic_fraction = fraction;
        Ok(self)
    }

    pub fn materials(&self) -> &[Material] {
        &self.materials
    }

    pub fn t_exp_seconds(&self) -> f64 {
        self.t_exp_seconds
    }

    pub fn include_electron_term(&self) -> bool {
        self.include_electron_term
    }

    pub fn systematic_fraction(&self) -> f64 {
        self.systematic_fraction
    }

    /// Errors unless `[lo, hi]` lies inside every material's valid range.
    pub fn check_window(&self, lo: f64, hi: f64) -> Result<()> {
        if !(lo < hi) {
            return Err(Error::config(format!(
                "analysis window must be a non-empty interval, got [{lo}, {hi}]"
            )));
        }
        for m in &self.materials {
            let (rlo, rhi) = m.efficiency.valid_range();
            if lo < rlo || hi > rhi {
                return Err(Error::config(format!(
                    "analysis window [{lo}, {hi}] exceeds efficiency valid range [{rlo}, {rhi}] \
                     of material {}",
                    m.name
                )));
            }
        }
        Ok(())
    }
}

/// Expected signal density f_S(E, Y) = Y T_exp beta_K E^(-2/3) sum_i alpha_i eps_i(E),
/// in counts per keV.
pub fn signal_shape(
    e_kev: f64,
    y: f64,
    model: &SignalModel,
    constants: &PhysicalConstants,
) -> Result<f64> {
    if !(y >= 0.0) {
        return Err(Error::domain(format!("yield Y must be >= 0, got {y}")));
    }
    let beta = beta_k(constants, UnitSystem::ANALYSIS);
    let mut weighted = 0.0;
    for m in model.materials() {
        let alpha = m.alpha_factor(model.include_electron_term(), constants);
        weighted += alpha * m.efficiency().evaluate(e_kev)?;
    }
    let boost = 1.0 + model.systematic_fraction();
    Ok(y * model.t_exp_seconds() * beta * weighted * boost / (e_kev * e_kev).cbrt())
}

/// Exact integral of `signal_shape` over one energy bin, using the
/// term-by-term antiderivative of E^(j - 2/3).
pub fn bin_signal(
    e_lo: f64,
    e_hi: f64,
    y: f64,
    model: &SignalModel,
    constants: &PhysicalConstants,
) -> Result<f64> {
    if !(e_lo < e_hi) {
        return Err(Error::domain(format!(
            "bin must have positive width, got [{e_lo}, {e_hi}]"
        )));
    }
    if !(y >= 0.0) {
        return Err(Error::domain(format!("yield Y must be >= 0, got {y}")));
    }
    let beta = beta_k(constants, UnitSystem::ANALYSIS);
    let mut total = 0.0;
    for m in model.materials() {
        let curve = m.efficiency();
        if !curve.contains(e_lo) || !curve.contains(e_hi) {
            let (lo, hi) = curve.valid_range();
            return Err(Error::domain(format!(
                "bin [{e_lo}, {e_hi}] keV outside efficiency valid range [{lo}, {hi}] of material {}",
                m.name()
            )));
        }
        let alpha = m.alpha_factor(model.include_electron_term(), constants);
        total += alpha * (curve.weighted_antiderivative(e_hi) - curve.weighted_antiderivative(e_lo));
    }
    let boost = 1.0 + model.systematic_fraction();
    Ok((y * model.t_exp_seconds() * beta * boost * total).max(0.0))
}

/// Per-bin signal coefficients s_i = bin_signal(bin_i, Y = 1), so that
/// lambda_i(Y) = b_i + Y s_i.
pub fn signal_column(
    binning: &Binning,
    model: &SignalModel,
    constants: &PhysicalConstants,
) -> Result<Vec<f64>> {
    binning
        .bins()
        .map(|(lo, hi)| bin_signal(lo, hi, 1.0, model, constants))
        .collect()
}

/// Least-squares polynomial fit to raw MC efficiency samples.
///
/// Solves in the scaled variable t = (E - mid)/half for conditioning, then
/// expands back to monomial coefficients in E. The shipped analysis uses the
/// published fit coefficients verbatim; this exists for refitting studies.
pub fn fit_efficiency(
    samples: &[(f64, f64)],
    degree: usize,
    valid_range: (f64, f64),
) -> Result<EfficiencyCurve> {
    if samples.len() < degree + 1 {
        return Err(Error::config(format!(
            "need at least {} samples for a degree-{degree} fit, got {}",
            degree + 1,
            samples.len()
        )));
    }
    let mid = 0.5 * (valid_range.0 + valid_range.1);
    let half = 0.5 * (valid_range.1 - valid_range.0);
    if !(half > 0.0) {
        return Err(Error::config("fit range must be non-empty"));
    }

    // Normal equations in the scaled basis.
    let n = degree + 1;
    let mut ata = vec![vec![0.0_f64; n]; n];
    let mut aty = vec![0.0_f64; n];
    for &(e, eff) in samples {
        let t = (e - mid) / half;
        let mut powers = Vec::with_capacity(n);
        let mut p = 1.0;
        for _ in 0..n {
            powers.push(p);
            p *= t;
        }
        for i in 0..n {
            aty[i] += powers[i] * eff;
            for j in 0..n {
                ata[i][j] += powers[i] * powers[j];
            }
        }
    }
    let scaled = solve_linear(&mut ata, &mut aty)?;

    // Expand sum_k a_k ((E - mid)/half)^k into monomials of E.
    let mut mono = vec![0.0_f64; n];
    for (k, &a) in scaled.iter().enumerate() {
        // ((E - mid)/half)^k = sum_j C(k,j) E^j (-mid)^(k-j) / half^k
        let mut binom = 1.0_f64;
        for j in 0..=k {
            if j > 0 {
                binom = binom * (k - j + 1) as f64 / j as f64;
            }
            mono[j] += a * binom * (-mid).powi((k - j) as i32) / half.powi(k as i32);
        }
    }
    EfficiencyCurve::new(mono, None, valid_range)
}

/// Gaussian elimination with partial pivoting; consumes its inputs.
fn solve_linear(a: &mut [Vec<f64>], b: &mut [f64]) -> Result<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        if a[pivot][col].abs() < 1e-300 {
            return Err(Error::config("singular system in polynomial fit"));
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in (col + 1)..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0_f64; n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for k in (row + 1)..n {
            acc -= a[row][k] * x[k];
        }
        x[row] = acc / a[row][row];
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectrum::Binning;

    // Published fit coefficients for the Ge crystal; same values as the
    // shipped materials data file.
    fn ge_curve() -> EfficiencyCurve {
        EfficiencyCurve::new(
            vec![4.82e-1, -4.42e-4, 2.10e-7, -4.87e-11, 4.32e-15],
            Some(vec![3e-3, 3e-6, 1e-9, 3e-13, 7e-17]),
            (1300.0, 1600.0),
        )
        .unwrap()
    }

    fn ge_material() -> Material {
        Material::new(
            "ge_crystal",
            1.996,
            vec![ElementCount::new("Ge", 32, 32, 1.0, 72.630).unwrap()],
            ge_curve(),
        )
        .unwrap()
    }

    fn ge_model() -> SignalModel {
        SignalModel::new(vec![ge_material()], 62.0 * 86400.0, false).unwrap()
    }

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    // Frozen golden values from the independent high-precision oracle.
    const ALPHA_GE_GOLDEN: f64 = 1.6947098427546523e28;
    const EFF_GE_1300_GOLDEN: f64 = 0.167644452;
    const FS_GE_1300_GOLDEN: f64 = 2.2678177452756975e-7;
    const S0_GE_FIRST_BIN_GOLDEN: f64 = 2.4343309843730363e-5;

    #[test]
    fn alpha_factor_ge_crystal() {
        let c = PhysicalConstants::codata2018();
        let alpha = ge_material().alpha_factor(false, &c);
        assert!(rel(alpha, ALPHA_GE_GOLDEN) < 1e-12, "alpha = {alpha:e}");
    }

    #[test]
    fn alpha_factor_hydrogen_like_with_electrons() {
        let c = PhysicalConstants::codata2018();
        let curve = EfficiencyCurve::new(vec![0.5], None, (1300.0, 1600.0)).unwrap();
        let m = Material::new(
            "h_test",
            1.0,
            vec![ElementCount::new("H", 1, 1, 1.0, 1.008).unwrap()],
            curve,
        )
        .unwrap();
        let n_at = 1000.0 / 1.008 * c.avogadro;
        assert!(rel(m.alpha_factor(true, &c), 2.0 * n_at) < 1e-12);
        assert!(rel(m.alpha_factor(false, &c), n_at) < 1e-12);
    }

    #[test]
    fn material_rejects_zero_mass_and_empty_composition() {
        assert!(Material::new("bad", 0.0, vec![], ge_curve()).is_err());
        let el = ElementCount::new("Ge", 32, 32, 1.0, 72.63).unwrap();
        assert!(Material::new("bad", -1.0, vec![el.clone()], ge_curve()).is_err());
        assert!(Material::new("bad", 0.0, vec![el], ge_curve()).is_err());
    }

    #[test]
    fn efficiency_golden_value_at_1300() {
        let v = ge_curve().evaluate(1300.0).unwrap();
        assert!(rel(v, EFF_GE_1300_GOLDEN) < 1e-9, "eff = {v}");
    }

    #[test]
    fn efficiency_constant_polynomial() {
        let curve = EfficiencyCurve::new(vec![0.5], None, (1300.0, 1600.0)).unwrap();
        assert_eq!(curve.evaluate(1372.5).unwrap(), 0.5);
        assert_eq!(curve.degree(), 0);
    }

    #[test]
    fn efficiency_out_of_range_is_error() {
        let curve = ge_curve();
        assert!(curve.evaluate(1299.0).is_err());
        assert!(curve.evaluate(1600.0001).is_err());
        assert!(curve.evaluate(f64::NAN).is_err());
        // boundary is inclusive
        assert!(curve.evaluate(1300.0).is_ok());
        assert!(curve.evaluate(1600.0).is_ok());
    }

    #[test]
    fn efficiency_clamps_negative_values_and_counts() {
        // x - 10 is negative below 10
        let curve = EfficiencyCurve::new(vec![-10.0, 1.0], None, (0.0, 100.0)).unwrap();
        assert_eq!(curve.clamp_count(), 0);
        assert_eq!(curve.evaluate(5.0).unwrap(), 0.0);
        assert_eq!(curve.clamp_count(), 1);
        assert_eq!(curve.evaluate(50.0).unwrap(), 40.0);
        assert_eq!(curve.clamp_count(), 1);
    }

    #[test]
    fn signal_model_rejects_negative_efficiency_in_valid_range() {
        let curve = EfficiencyCurve::new(vec![-10.0, 1.0], None, (0.0, 100.0)).unwrap();
        let m = Material::new(
            "neg",
            1.0,
            vec![ElementCount::new("Cu", 29, 29, 1.0, 63.546).unwrap()],
            curve,
        )
        .unwrap();
        let err = SignalModel::new(vec![m], 1.0, false).unwrap_err();
        assert!(err.to_string().contains("negative"));
    }

    #[test]
    fn signal_shape_linear_in_y() {
        let c = PhysicalConstants::codata2018();
        let model = ge_model();
        assert_eq!(signal_shape(1400.0, 0.0, &model, &c).unwrap(), 0.0);
        let one = signal_shape(1400.0, 1.0, &model, &c).unwrap();
        let two = signal_shape(1400.0, 2.0, &model, &c).unwrap();
        assert_eq!(two, 2.0 * one);
    }

    #[test]
    fn signal_shape_golden_spot_value() {
        // Ge only, T_exp = 62 days, E = 1300 keV, Y = 1/4.64^2
        let c = PhysicalConstants::codata2018();
        let y = 1.0 / (4.64_f64 * 4.64);
        let v = signal_shape(1300.0, y, &ge_model(), &c).unwrap();
        assert!(rel(v, FS_GE_1300_GOLDEN) < 1e-12, "f_S = {v:e}");
    }

    #[test]
    fn bin_signal_golden_first_bin() {
        let c = PhysicalConstants::codata2018();
        let v = bin_signal(1300.0, 1305.0, 1.0, &ge_model(), &c).unwrap();
        assert!(rel(v, S0_GE_FIRST_BIN_GOLDEN) < 1e-12, "s_0 = {v:e}");
    }

    #[test]
    fn bin_signal_rejects_degenerate_bins_and_zero_yield_is_zero() {
        let c = PhysicalConstants::codata2018();
        let model = ge_model();
        assert!(bin_signal(1305.0, 1305.0, 1.0, &model, &c).is_err());
        assert!(bin_signal(1310.0, 1305.0, 1.0, &model, &c).is_err());
        assert_eq!(bin_signal(1300.0, 1305.0, 0.0, &model, &c).unwrap(), 0.0);
    }

    #[test]
    fn bin_signal_additive_over_splits() {
        let c = PhysicalConstants::codata2018();
        let model = ge_model();
        let whole = bin_signal(1300.0, 1600.0, 1.0, &model, &c).unwrap();
        let left = bin_signal(1300.0, 1417.0, 1.0, &model, &c).unwrap();
        let right = bin_signal(1417.0, 1600.0, 1.0, &model, &c).unwrap();
        assert!(rel(left + right, whole) < 1e-12);
    }

    #[test]
    fn signal_column_matches_bin_signal_and_splits_sum() {
        let c = PhysicalConstants::codata2018();
        let model = ge_model();
        let single = Binning::uniform(1300.0, 1600.0, 1).unwrap();
        let split = Binning::uniform(1300.0, 1600.0, 2).unwrap();
        let s1 = signal_column(&single, &model, &c).unwrap();
        let s2 = signal_column(&split, &model, &c).unwrap();
        assert_eq!(s1.len(), 1);
        assert_eq!(s1[0], bin_signal(1300.0, 1600.0, 1.0, &model, &c).unwrap());
        assert!(rel(s2[0] + s2[1], s1[0]) < 1e-12);
    }

    #[test]
    fn signal_column_monotone_in_mass() {
        let c = PhysicalConstants::codata2018();
        let binning = Binning::uniform(1300.0, 1600.0, 60).unwrap();
        let base = signal_column(&binning, &ge_model(), &c).unwrap();
        let heavier = Material::new(
            "ge_crystal",
            2.5,
            vec![ElementCount::new("Ge", 32, 32, 1.0, 72.630).unwrap()],
            ge_curve(),
        )
        .unwrap();
        let model = SignalModel::new(vec![heavier], 62.0 * 86400.0, false).unwrap();
        let boosted = signal_column(&binning, &model, &c).unwrap();
        for (s, b) in boosted.iter().zip(base.iter()) {
            assert!(s >= b);
        }
    }

    #[test]
    fn systematic_fraction_inflates_column() {
        let c = PhysicalConstants::codata2018();
        let binning = Binning::uniform(1300.0, 1600.0, 10).unwrap();
        let base = signal_column(&binning, &ge_model(), &c).unwrap();
        let inflated_model = ge_model().with_systematic_fraction(0.25).unwrap();
        let inflated = signal_column(&binning, &inflated_model, &c).unwrap();
        for (s, b) in inflated.iter().zip(base.iter()) {
            assert!(rel(*s, 1.25 * b) < 1e-15);
        }
        assert!(ge_model().with_systematic_fraction(-0.1).is_err());
    }

    #[test]
    fn electron_term_flag_raises_alpha() {
        let c = PhysicalConstants::codata2018();
        let m = ge_material();
        let without = m.alpha_factor(false, &c);
        let with = m.alpha_factor(true, &c);
        assert!(rel(with / without, (1024.0 + 32.0) / 1024.0) < 1e-12);
    }

    #[test]
    fn fit_efficiency_recovers_known_polynomial() {
        let truth = ge_curve();
        let samples: Vec<(f64, f64)> = (0..=60)
            .map(|k| {
                let e = 1300.0 + 5.0 * k as f64;
                (e, truth.horner_unchecked(e))
            })
            .collect();
        let fitted = fit_efficiency(&samples, 4, (1300.0, 1600.0)).unwrap();
        for k in 0..=30 {
            let e = 1300.0 + 10.0 * k as f64;
            let a = truth.evaluate(e).unwrap();
            let b = fitted.evaluate(e).unwrap();
            assert!(rel(b, a) < 1e-8, "at {e}: {b} vs {a}");
        }
    }

    #[test]
    fn fit_efficiency_needs_enough_samples() {
        assert!(fit_efficiency(&[(1300.0, 0.1), (1400.0, 0.1)], 4, (1300.0, 1600.0)).is_err());
    }
}
