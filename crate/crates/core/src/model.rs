//! One-stop construction of everything attached to a potential.

use crate::error::{Error, Result};
use crate::laxpair::LaxSystem;
use crate::moments::{certified_recurrence, CertifiedRecurrence, RecurrenceCoefficients, SolveOptions};
use crate::potential::Potential;
use crate::wavefunction::WaveState;

/// Certified recurrence coefficients, the Lax system and the wavefunctions
/// for one potential at one truncation order and precision.
#[derive(Debug, Clone)]
pub struct Model {
    pub potential: Potential,
    pub order: usize,
    pub prec: u32,
    pub certified: Option<CertifiedRecurrence>,
    pub lax: LaxSystem,
    pub waves: WaveState,
}

impl Model {
    /// Runs both recurrence backends and builds the operators with `Q^k` cached up to `max(d, max_k + 1)`.
    pub fn build(potential: &Potential, order: usize, prec: u32, max_k: usize) -> Result<Self> {
        Self::build_with(potential, order, prec, max_k, &SolveOptions::default())
    }

    pub fn build_with(
        potential: &Potential,
        order: usize,
        prec: u32,
        max_k: usize,
        opts: &SolveOptions,
    ) -> Result<Self> {
        if order < 2 {
            return Err(Error::InvalidIndex("truncation order N must be at least 2".into()));
        }
        let potential = potential.with_prec(prec);
        potential.check_admissible()?;
        let cert = certified_recurrence(&potential, order, prec, opts)?;
        let mut m = Self::from_coefficients(&potential, &cert.coefficients, max_k)?;
        m.certified = Some(cert);
        Ok(m)
    }

    /// Builds the operators from given coefficients (e.g. after fault injection).
    pub fn from_coefficients(
        potential: &Potential,
        rc: &RecurrenceCoefficients,
        max_k: usize,
    ) -> Result<Self> {
        let prec = rc.prec;
        let potential = potential.with_prec(prec);
        Ok(Model {
            lax: LaxSystem::new(&potential, rc, max_k),
            waves: WaveState::new(&potential, rc)?,
            order: rc.order(),
            prec,
            potential,
            certified: None,
        })
    }

    pub fn recurrence(&self) -> &RecurrenceCoefficients {
        self.lax.recurrence()
    }

    /// Default truncation order for checks up to index `n_max` with `deg V' = d`.
    pub fn default_order(n_max: usize, d: usize) -> usize {
        n_max + 2 * d + 4
    }
}
