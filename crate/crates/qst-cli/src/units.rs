//! Conversion between internal couplings (t = 1) and laboratory units.
//! Physical units exist only at this boundary.

/// Planck constant in meV ns.
pub const H_MEV_NS: f64 = 4.135667696e-3;
/// Reduced Planck constant in meV ns.
pub const HBAR_MEV_NS: f64 = 6.582119569e-4;
/// Boltzmann constant in meV per kelvin.
pub const KB_MEV_PER_K: f64 = 0.08617;

/// Which Planck constant divides the hopping energy when dimensionless
/// times become nanoseconds. `H` is the documented default.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlanckConvention {
    H,
    Hbar,
}

impl PlanckConvention {
    pub fn constant(&self) -> f64 {
        match self {
            PlanckConvention::H => H_MEV_NS,
            PlanckConvention::Hbar => HBAR_MEV_NS,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            PlanckConvention::H => "h",
            PlanckConvention::Hbar => "hbar",
        }
    }
}

/// Dimensionless time t*tau to nanoseconds for a hopping energy in meV.
pub fn to_physical_units(tau_in_inverse_t: f64, t_mev: f64, convention: PlanckConvention) -> f64 {
    tau_in_inverse_t * convention.constant() / t_mev
}

/// Thermal energy in units of t to kelvin for a hopping energy in meV.
pub fn to_kelvin(kt_in_t: f64, t_mev: f64) -> f64 {
    kt_in_t * t_mev / KB_MEV_PER_K
}
