//! Model parameters and pointwise physics.
//!
//! Concentrations are per-voxel quantities; physical volumes are divided
//! by `dh^3` once at load so the far-field balance is a pure
//! count-weighted average. The gas constant and temperature never appear
//! individually: the free-energy coefficients are stored as the
//! dimensionless ratios `A/RT`.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::geometry::PhaseGrid;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhaseKind {
    Solid,
    Liquid,
}

/// Full parameter set for one simulation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysParams {
    /// Voxel edge length [m].
    pub dh: f64,
    /// Macro time step [s].
    pub dt_macro: f64,
    /// Explicit-FD substep [s].
    pub dt_fd: f64,
    /// Solid diffusivity [m^2/s].
    pub d_s: f64,
    /// Liquid diffusivity [m^2/s].
    pub d_l: f64,
    pub a_s_over_rt: f64,
    pub a_l_over_rt: f64,
    pub c_s_eq: f64,
    pub c_l_eq: f64,
    pub c_s_0: f64,
    pub c_l_0: f64,
    /// Interface absorption rate constant [1/s].
    pub k: f64,
    /// Far-field liquid volume [m^3].
    pub v_far: f64,
    /// Total initial mass in per-voxel concentration units.
    pub total_mass_0: f64,
}

pub const CONFIG_KEYS: [&str; 14] = [
    "dh", "dt_macro", "dt_fd", "D_S", "D_L", "A_S_over_RT", "A_L_over_RT", "c_S_eq", "c_L_eq",
    "c_S_0", "c_L_0", "k", "V_far", "total_mass_0",
];

impl PhysParams {
    pub fn validate(&self) -> Result<()> {
        let positive: [(&str, f64); 9] = [
            ("dh", self.dh),
            ("dt_macro", self.dt_macro),
            ("dt_fd", self.dt_fd),
            ("D_S", self.d_s),
            ("D_L", self.d_l),
            ("A_S_over_RT", self.a_s_over_rt),
            ("A_L_over_RT", self.a_l_over_rt),
            ("k", self.k),
            ("V_far", self.v_far),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be strictly positive, got {v}")));
            }
        }
        if !(self.c_s_0 < self.c_s_eq) {
            return Err(Error::Config(format!(
                "c_S_0 = {} must be below c_S_eq = {} (initial state must drive absorption)",
                self.c_s_0, self.c_s_eq
            )));
        }
        if !(self.c_l_0 > self.c_l_eq) {
            return Err(Error::Config(format!(
                "c_L_0 = {} must exceed c_L_eq = {} (initial state must drive absorption)",
                self.c_l_0, self.c_l_eq
            )));
        }
        self.substeps_per_macro()?;
        Ok(())
    }

    /// `dt_macro / dt_fd`, which must be a whole number of substeps.
    pub fn substeps_per_macro(&self) -> Result<u64> {
        let ratio = self.dt_macro / self.dt_fd;
        let n = ratio.round();
        if n < 1.0 || (ratio - n).abs() > 1.0e-9 * ratio.abs() {
            return Err(Error::StepRatio { dt_macro: self.dt_macro, dt_fd: self.dt_fd });
        }
        Ok(n as u64)
    }

    /// Far-field reservoir volume in voxel-volume units.
    pub fn n_far_equiv(&self) -> f64 {
        self.v_far / self.dh.powi(3)
    }

    pub fn eff_diffusivity(&self, phase: PhaseKind) -> f64 {
        match phase {
            PhaseKind::Solid => self.d_s * self.a_s_over_rt,
            PhaseKind::Liquid => self.d_l * self.a_l_over_rt,
        }
    }

    /// Relative gap between the configured total mass and the mass implied
    /// by the initial concentrations and the domain counts. Gaps beyond a
    /// few percent usually mean the configuration belongs to a different
    /// geometry.
    pub fn mass_consistency_gap(&self, n_solid: usize, n_near: usize) -> f64 {
        let implied = self.c_l_0 * (n_near as f64 + self.n_far_equiv()) + self.c_s_0 * n_solid as f64;
        ((self.total_mass_0 - implied) / implied).abs()
    }

    pub fn to_config_string(&self) -> String {
        let mut s = String::new();
        let pairs: [(&str, f64); 14] = [
            ("dh", self.dh),
            ("dt_macro", self.dt_macro),
            ("dt_fd", self.dt_fd),
            ("D_S", self.d_s),
            ("D_L", self.d_l),
            ("A_S_over_RT", self.a_s_over_rt),
            ("A_L_over_RT", self.a_l_over_rt),
            ("c_S_eq", self.c_s_eq),
            ("c_L_eq", self.c_l_eq),
            ("c_S_0", self.c_s_0),
            ("c_L_0", self.c_l_0),
            ("k", self.k),
            ("V_far", self.v_far),
            ("total_mass_0", self.total_mass_0),
        ];
        for (k, v) in pairs {
            let _ = writeln!(s, "{k} = {v:e}");
        }
        s
    }

    /// Parses the flat `key = value` configuration format. Every key must
    /// appear exactly once; unknown keys are errors.
    pub fn from_config_str(text: &str) -> Result<PhysParams> {
        let mut seen: Vec<(&str, f64)> = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected `key = value`, got `{raw}`", lineno + 1))
            })?;
            let key = key.trim();
            let value = value.trim();
            let canon = CONFIG_KEYS
                .iter()
                .find(|&&k| k == key)
                .ok_or_else(|| Error::Config(format!("unknown key `{key}` on line {}", lineno + 1)))?;
            if seen.iter().any(|&(k, _)| k == *canon) {
                return Err(Error::Config(format!("duplicate key `{key}` on line {}", lineno + 1)));
            }
            let parsed: f64 = value.parse().map_err(|_| {
                Error::Config(format!("key `{key}`: `{value}` is not a number"))
            })?;
            seen.push((canon, parsed));
        }
        let get = |k: &str| -> Result<f64> {
            seen.iter()
                .find(|&&(key, _)| key == k)
                .map(|&(_, v)| v)
                .ok_or_else(|| Error::Config(format!("missing key `{k}`")))
        };
        let params = PhysParams {
            dh: get("dh")?,
            dt_macro: get("dt_macro")?,
            dt_fd: get("dt_fd")?,
            d_s: get("D_S")?,
            d_l: get("D_L")?,
            a_s_over_rt: get("A_S_over_RT")?,
            a_l_over_rt: get("A_L_over_RT")?,
            c_s_eq: get("c_S_eq")?,
            c_l_eq: get("c_L_eq")?,
            c_s_0: get("c_S_0")?,
            c_l_0: get("c_L_0")?,
            k: get("k")?,
            v_far: get("V_far")?,
            total_mass_0: get("total_mass_0")?,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn from_config_file(path: &std::path::Path) -> Result<PhysParams> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading config {}", path.display()), e))?;
        Self::from_config_str(&text)
    }
}

/// Applies the physical far-field volume to a partitioned grid.
pub fn apply_far_field(grid: &mut PhaseGrid, params: &PhysParams) {
    grid.n_far_equiv = params.n_far_equiv();
}

/// Dimensionless chemical potential `mu/RT = (A/RT) (c - c_eq)`.
pub fn chem_potential(c: f64, phase: PhaseKind, params: &PhysParams) -> f64 {
    match phase {
        PhaseKind::Solid => params.a_s_over_rt * (c - params.c_s_eq),
        PhaseKind::Liquid => params.a_l_over_rt * (c - params.c_l_eq),
    }
}

/// Pseudo-second-order interface absorption rate.
///
/// Returns `(rate_solid, rate_liquid)` with `rate_liquid = -rate_solid`
/// exactly. Absorption only: the liquid factor vanishes at or below the
/// liquid equilibrium, and the solid factor is clamped at zero once the
/// solid is saturated.
pub fn reaction_rate(c_l: f64, c_s: f64, params: &PhysParams) -> (f64, f64) {
    let f_l = if c_l <= params.c_l_eq { 0.0 } else { (c_l - params.c_l_eq) / params.c_l_eq };
    let f_s = ((params.c_s_eq - c_s) / params.c_s_eq).max(0.0);
    let r_s = params.k * f_l * f_s;
    (r_s, -r_s)
}

/// Far-field concentration from global mass conservation. A negative
/// result signals model breakdown (over-absorbed mass) but is still
/// returned; callers count and report it.
pub fn far_field_update(total_mass_0: f64, sum_near: f64, sum_solid: f64, n_far_equiv: f64) -> f64 {
    debug_assert!(n_far_equiv > 0.0);
    (total_mass_0 - sum_near - sum_solid) / n_far_equiv
}

/// Largest stable explicit time step for pure diffusion in one phase:
/// `dh^2 / (2 d D_eff)` with `d = 3`. Infinite when the phase does not
/// diffuse.
pub fn stability_limit(params: &PhysParams, phase: PhaseKind) -> f64 {
    let d_eff = params.eff_diffusivity(phase);
    if d_eff == 0.0 {
        return f64::INFINITY;
    }
    params.dh * params.dh / (6.0 * d_eff)
}

/// Harmonic mean of the two diffusivities; the cross-interface coupling
/// coefficient.
pub fn interface_diffusivity(params: &PhysParams) -> f64 {
    2.0 * params.d_s * params.d_l / (params.d_s + params.d_l)
}

/// Stable step bound for the interface exchange, using the harmonic-mean
/// coupling scaled by the steeper free-energy ratio.
pub fn interface_stability_limit(params: &PhysParams) -> f64 {
    let d_eff = interface_diffusivity(params) * params.a_s_over_rt.max(params.a_l_over_rt);
    if d_eff == 0.0 {
        return f64::INFINITY;
    }
    params.dh * params.dh / (6.0 * d_eff)
}

/// Table-style reference parameter set used by tests and as the bundled
/// example configuration.
pub fn reference_params() -> PhysParams {
    PhysParams {
        dh: 1.0e-8,
        dt_macro: 5.0e-4,
        dt_fd: 5.0e-7,
        d_s: 1.0e-17,
        d_l: 1.0e-14,
        a_s_over_rt: 2.0e3,
        a_l_over_rt: 2.0e3,
        c_s_eq: 1.0,
        c_l_eq: 1.0e-5,
        c_s_0: 1.0e-6,
        c_l_0: 2.12e-3,
        k: 0.05,
        v_far: 1.80e-16,
        total_mass_0: 388_716.10,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn potential_vanishes_at_equilibrium() {
        let p = reference_params();
        assert_eq!(chem_potential(p.c_s_eq, PhaseKind::Solid, &p), 0.0);
        assert_eq!(chem_potential(p.c_l_eq, PhaseKind::Liquid, &p), 0.0);
    }

    #[test]
    fn potential_matches_hand_evaluation() {
        let p = reference_params();
        let mu_l = chem_potential(2.12e-3, PhaseKind::Liquid, &p);
        assert!((mu_l - 4.22).abs() < 1.0e-12, "liquid potential {mu_l}");
        let mu_s = chem_potential(1.0e-6, PhaseKind::Solid, &p);
        assert!((mu_s - (-1999.998)).abs() < 1.0e-9, "solid potential {mu_s}");
    }

    #[test]
    fn potential_slope_by_finite_differences() {
        let p = reference_params();
        let h = 1.0e-6;
        for (phase, a) in [(PhaseKind::Solid, p.a_s_over_rt), (PhaseKind::Liquid, p.a_l_over_rt)] {
            let c = 0.3;
            let slope = (chem_potential(c + h, phase, &p) - chem_potential(c, phase, &p)) / h;
            assert!((slope - a).abs() / a < 1.0e-6);
        }
    }

    #[test]
    fn reaction_examples() {
        let p = reference_params();
        assert_eq!(reaction_rate(p.c_l_eq, 0.5, &p), (0.0, 0.0));
        let (rs, rl) = reaction_rate(2.0 * p.c_l_eq, 0.0, &p);
        assert!((rs - 0.05).abs() < 1.0e-15);
        assert_eq!(rl, -rs);
        let (rs, rl) = reaction_rate(2.0 * p.c_l_eq, 0.25 * p.c_s_eq, &p);
        assert!((rs - 0.0375).abs() < 1.0e-15);
        assert!((rl + 0.0375).abs() < 1.0e-15);
    }

    #[test]
    fn reaction_clamps_saturated_solid() {
        let p = reference_params();
        let (rs, rl) = reaction_rate(2.0 * p.c_l_eq, 1.5 * p.c_s_eq, &p);
        assert_eq!(rs, 0.0);
        assert_eq!(rl, 0.0);
    }

    proptest! {
        #[test]
        fn reaction_is_antisymmetric_and_nonnegative(
            c_l in 0.0f64..1.0,
            c_s in 0.0f64..2.0,
        ) {
            let p = reference_params();
            let (rs, rl) = reaction_rate(c_l, c_s, &p);
            prop_assert!(rs >= 0.0);
            prop_assert_eq!(rl.to_bits(), (-rs).to_bits());
        }

        #[test]
        fn far_field_restores_conservation(
            total in 1.0f64..1.0e6,
            near_frac in 0.0f64..0.5,
            solid_frac in 0.0f64..0.5,
            n_far in 1.0f64..1.0e9,
        ) {
            let sum_near = total * near_frac;
            let sum_solid = total * solid_frac;
            let c_far = far_field_update(total, sum_near, sum_solid, n_far);
            let restored = sum_near + sum_solid + c_far * n_far;
            prop_assert!(((restored - total) / total).abs() < 1.0e-14);
        }
    }

    #[test]
    fn far_field_examples() {
        assert_eq!(far_field_update(100.0, 30.0, 20.0, 25.0), 2.0);
        let c0 = 2.12e-3;
        let n_far = 1.8e8;
        assert!((far_field_update(c0 * n_far, 0.0, 0.0, n_far) - c0).abs() < 1.0e-18);
    }

    #[test]
    fn far_field_with_reference_table_values() {
        // cross-check against the published parameter table: the implied
        // initial far-field concentration lands within 2% of c_L_0
        // because the table's totals are rounded.
        let sum_near = 329_404.0 * 2.12e-3;
        let sum_solid = 366_713.0 * 1.0e-6;
        let n_far = 1.80e-16 / 1.0e-24;
        let c_far = far_field_update(388_716.10, sum_near, sum_solid, n_far);
        let expected: f64 = (388_716.10 - 329_404.0 * 2.12e-3 - 366_713.0 * 1.0e-6) / 1.8e8;
        assert_eq!(c_far.to_bits(), expected.to_bits());
        assert!(((c_far - 2.12e-3) / 2.12e-3).abs() < 0.02, "c_far = {c_far}");
    }

    #[test]
    fn far_field_negative_is_returned() {
        let c = far_field_update(10.0, 8.0, 5.0, 2.0);
        assert!(c < 0.0);
    }

    #[test]
    fn stability_limits_cover_reference_steps() {
        let p = reference_params();
        let liq = stability_limit(&p, PhaseKind::Liquid);
        assert!((liq - 8.333333333333333e-7).abs() / liq < 1.0e-12);
        assert!(liq >= p.dt_fd);
        let sol = stability_limit(&p, PhaseKind::Solid);
        assert!((sol - 8.333333333333333e-4).abs() / sol < 1.0e-12);
        assert!(sol >= p.dt_macro);
        let mut frozen = p;
        frozen.d_s = 0.0;
        assert_eq!(stability_limit(&frozen, PhaseKind::Solid), f64::INFINITY);
    }

    #[test]
    fn interface_limit_sits_between_substep_and_macro_step() {
        let p = reference_params();
        let lim = interface_stability_limit(&p);
        // Harmonic-mean coupling at reference values gives ~4.2e-4 s,
        // slightly under the macro step: the interface step must substep.
        assert!(lim > 4.0e-4 && lim < 4.3e-4, "interface limit {lim:e}");
        assert!(lim < p.dt_macro);
    }

    #[test]
    fn config_round_trip_and_errors() {
        let p = reference_params();
        let text = p.to_config_string();
        let q = PhysParams::from_config_str(&text).unwrap();
        assert_eq!(p, q);

        let err = PhysParams::from_config_str("bogus = 1.0").unwrap_err().to_string();
        assert!(err.contains("unknown key"));

        let missing = PhysParams::from_config_str("dh = 1e-8").unwrap_err().to_string();
        assert!(missing.contains("missing key"));

        let dup = PhysParams::from_config_str(&format!("{text}dh = 2e-8\n")).unwrap_err().to_string();
        assert!(dup.contains("duplicate"));

        let mut bad = p;
        bad.c_s_0 = 2.0;
        assert!(PhysParams::from_config_str(&bad.to_config_string()).is_err());
    }

    #[test]
    fn step_ratio_must_divide() {
        let mut p = reference_params();
        p.dt_fd = 3.0e-7;
        assert!(matches!(p.substeps_per_macro(), Err(Error::StepRatio { .. })));
        p.dt_fd = 5.0e-7;
        assert_eq!(p.substeps_per_macro().unwrap(), 1000);
    }

    #[test]
    fn consistency_gap_on_reference_counts() {
        let p = reference_params();
        // Published counts for the mid-sized particle: the configured
        // total sits within a couple percent of the implied one.
        let gap = p.mass_consistency_gap(366_713, 329_404);
        assert!(gap > 0.0 && gap < 0.05, "gap = {gap}");
    }
}
