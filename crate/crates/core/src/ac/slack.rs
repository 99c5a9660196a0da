use serde::{Deserialize, Serialize};

use crate::grid::Generator;

use super::AcError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SlackMode {
    /// Shares proportional to upward headroom `p_max − p_sp`.
    Headroom,
    /// Every unit sits at `p_max`; shares proportional to capacity instead.
    CapacityFallback,
    /// One unit at the reference bus absorbs the whole mismatch.
    SingleSlack,
}

/// How the AC active-power mismatch `ell_tot` is spread over generators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlackAllocation {
    /// Participation factor per generator in case order.
    pub pi_g: Vec<f64>,
    pub ell_tot: f64,
    pub mode: SlackMode,
}

impl SlackAllocation {
    /// `p_sp + π ℓ` for every generator.
    pub fn dispatch(&self, setpoints: &[f64]) -> Vec<f64> {
        setpoints
            .iter()
            .zip(&self.pi_g)
            .map(|(p, pi)| p + pi * self.ell_tot)
            .collect()
    }
}

/// Participation factors from the headroom against the setpoints, with the
/// capacity-proportional fallback when no unit has headroom left.
/// Out-of-service units get `π = 0`.
pub fn distribute_slack(generators: &[Generator], setpoints: &[f64], ell_tot: f64) -> Result<SlackAllocation, AcError> {
    assert_eq!(generators.len(), setpoints.len());
    let active: Vec<usize> = (0..generators.len()).filter(|&g| generators[g].in_service).collect();
    if active.is_empty() {
        return Err(AcError::NoGenerators);
    }
    let headroom: Vec<f64> = active
        .iter()
        .map(|&g| (generators[g].p_max - setpoints[g]).max(0.0))
        .collect();
    let total: f64 = headroom.iter().sum();
    let (weights, mode) = if total > 0.0 {
        (headroom, SlackMode::Headroom)
    } else {
        let cap: Vec<f64> = active.iter().map(|&g| generators[g].p_max.max(0.0)).collect();
        if cap.iter().sum::<f64>() > 0.0 {
            (cap, SlackMode::CapacityFallback)
        } else {
            (vec![1.0; active.len()], SlackMode::CapacityFallback)
        }
    };
    let sum: f64 = weights.iter().sum();
    let mut pi_g = vec![0.0; generators.len()];
    for (&g, w) in active.iter().zip(&weights) {
        pi_g[g] = w / sum;
    }
    Ok(SlackAllocation { pi_g, ell_tot, mode })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{generator, linear_cost};

    fn gens(p_max: &[f64]) -> Vec<Generator> {
        p_max.iter().map(|&p| generator(1, 0.0, p, linear_cost(1.0))).collect()
    }

    #[test]
    fn single_unit_takes_everything() {
        let a = distribute_slack(&gens(&[1.0]), &[0.4], 0.1).unwrap();
        assert_eq!(a.pi_g, vec![1.0]);
        assert_eq!(a.mode, SlackMode::Headroom);
        assert!((a.dispatch(&[0.4])[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn shares_follow_headroom() {
        let a = distribute_slack(&gens(&[0.2, 0.5]), &[0.1, 0.2], 0.0).unwrap();
        assert!((a.pi_g[0] - 0.25).abs() < 1e-15);
        assert!((a.pi_g[1] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn capacity_fallback_when_saturated() {
        let a = distribute_slack(&gens(&[1.0, 3.0]), &[1.0, 3.0], 0.1).unwrap();
        assert_eq!(a.mode, SlackMode::CapacityFallback);
        assert!((a.pi_g[0] - 0.25).abs() < 1e-15);
        assert!((a.pi_g[1] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn out_of_service_units_do_not_participate() {
        let mut g = gens(&[1.0, 1.0]);
        g[0].in_service = false;
        let a = distribute_slack(&g, &[0.0, 0.0], 0.1).unwrap();
        assert_eq!(a.pi_g, vec![0.0, 1.0]);
        g[1].in_service = false;
        assert!(matches!(distribute_slack(&g, &[0.0, 0.0], 0.1), Err(AcError::NoGenerators)));
    }
}
