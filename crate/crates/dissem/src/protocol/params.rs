//! Parameters of the oblivious multi-source protocol.
//!
//! All logs are base 2, derived quantities are ceilinged, and f is clamped to
//! n (the raw formula exceeds n at desk scale). The multipliers and hard
//! overrides exist because at small n the asymptotic constants dominate;
//! experiments pin them explicitly.

/// Multipliers (defaults 1) and hard overrides for the derived parameters.
#[derive(Debug, Clone, Copy)]
pub struct ObliviousOverrides {
    pub c_f: f64,
    pub c_gamma: f64,
    pub c_ell: f64,
    /// Center target override (still clamped to n).
    pub f: Option<u32>,
    /// Phase-1 length override.
    pub ell: Option<u64>,
    /// Source-count threshold override for the multi-source delegation.
    pub s_threshold: Option<u64>,
}

impl Default for ObliviousOverrides {
    fn default() -> Self {
        ObliviousOverrides {
            c_f: 1.0,
            c_gamma: 1.0,
            c_ell: 1.0,
            f: None,
            ell: None,
            s_threshold: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ObliviousParams {
    /// Expected number of centers; election probability is f/n.
    pub f: u32,
    /// Degree threshold: nodes with d >= gamma hand tokens to neighboring
    /// centers instead of walking.
    pub gamma: u64,
    /// Number of phase-1 (random walk) rounds.
    pub ell: u64,
    /// Delegate to plain multi-source when s <= s_threshold.
    pub s_threshold: u64,
}

/// f = ⌈c_f · n^{1/2} k^{1/4} log^{5/4} n⌉ clamped to n,
/// γ = ⌈c_γ · (n log n)/f⌉, ℓ = ⌈c_ℓ · k^{1/4} n^{5/2} log^{9/4} n⌉,
/// s_threshold = ⌈n^{2/3} log^{5/3} n⌉.
pub fn oblivious_params(n: u32, k: u32, overrides: &ObliviousOverrides) -> ObliviousParams {
    assert!(n >= 2 && k >= 1, "parameters need n >= 2, k >= 1");
    let nf = n as f64;
    let kf = k as f64;
    let log = nf.log2();

    let f = match overrides.f {
        Some(f) => f.clamp(1, n),
        None => {
            let raw = overrides.c_f * nf.sqrt() * kf.powf(0.25) * log.powf(1.25);
            (raw.ceil() as u32).clamp(1, n)
        }
    };
    let gamma = ((overrides.c_gamma * nf * log / f as f64).ceil() as u64).max(1);
    let ell = match overrides.ell {
        Some(ell) => ell.max(1),
        None => {
            let raw = overrides.c_ell * kf.powf(0.25) * nf.powf(2.5) * log.powf(2.25);
            (raw.ceil() as u64).max(1)
        }
    };
    let s_threshold = match overrides.s_threshold {
        Some(s) => s,
        None => (nf.powf(2.0 / 3.0) * log.powf(5.0 / 3.0)).ceil() as u64,
    };
    ObliviousParams {
        f,
        gamma,
        ell,
        s_threshold,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn f_clamps_to_n() {
        // n=16, k=16: raw f = 4 * 2 * 4^{5/4} ≈ 45.3 -> clamped to 16.
        let p = oblivious_params(16, 16, &ObliviousOverrides::default());
        assert_eq!(p.f, 16);
    }

    #[test]
    fn gamma_from_overridden_f() {
        // f = n/4 at n=16: gamma = 16*4/4 = 16.
        let ov = ObliviousOverrides {
            f: Some(4),
            ..Default::default()
        };
        let p = oblivious_params(16, 16, &ov);
        assert_eq!(p.gamma, 16);
    }

    #[test]
    fn gamma_times_f_is_n_log_n_without_rounding() {
        // n=16, f=8: gamma = 8, gamma*f = 64 = 16*log2(16).
        let ov = ObliviousOverrides {
            f: Some(8),
            ..Default::default()
        };
        let p = oblivious_params(16, 4, &ov);
        assert_eq!(p.gamma * p.f as u64, 16 * 4);
    }

    #[test]
    fn all_parameters_at_least_one() {
        let p = oblivious_params(2, 1, &ObliviousOverrides::default());
        assert!(p.f >= 1 && p.gamma >= 1 && p.ell >= 1 && p.s_threshold >= 1);
    }

    #[test]
    fn ell_matches_formula() {
        // n=4, k=1: ell = ceil(4^{2.5} * 2^{2.25}) = ceil(32 * 4.7568...) = 153.
        let p = oblivious_params(4, 1, &ObliviousOverrides::default());
        assert_eq!(p.ell, 153);
    }
}
