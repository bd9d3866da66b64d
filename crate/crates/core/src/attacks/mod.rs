//! Adversarial example crafting against the MLP: the C-W L2 attack and the
//! FGSM single-step baseline.

mod batch;
mod cw;
mod fgsm;

pub use batch::{
    attack_batch, read_metadata_csv, write_metadata_csv, AttackMethod, BatchOutput, MetadataRow, METADATA_HEADER,
};
pub use cw::{cw_l2, cw_objective_and_gradient, CStep, CwConfig, CwEval};
pub use fgsm::{fgsm, fgsm_smallest_success, FgsmConfig};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttackMode {
    Untargeted,
    Targeted(usize),
}

/// What counts as success: any label but `true_label`, or exactly the target.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AttackGoal {
    pub mode: AttackMode,
    pub true_label: usize,
}

impl AttackGoal {
    pub fn untargeted(true_label: usize) -> Self {
        Self {
            mode: AttackMode::Untargeted,
            true_label,
        }
    }

    pub fn targeted(true_label: usize, target: usize) -> Result<Self> {
        if target == true_label {
            return Err(Error::invalid("target label must differ from the true label"));
        }
        Ok(Self {
            mode: AttackMode::Targeted(target),
            true_label,
        })
    }

    pub fn is_success(&self, predicted: usize) -> bool {
        match self.mode {
            AttackMode::Untargeted => predicted != self.true_label,
            AttackMode::Targeted(t) => predicted == t,
        }
    }

    pub(crate) fn check(&self, n_classes: usize) -> Result<()> {
        let t = match self.mode {
            AttackMode::Untargeted => self.true_label,
            AttackMode::Targeted(t) => t,
        };
        if self.true_label >= n_classes || t >= n_classes {
            return Err(Error::invalid(format!("attack goal refers to a class outside 0..{n_classes}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackResult {
    pub original: Vec<f64>,
    pub adversarial: Vec<f64>,
    pub perturbation: Vec<f64>,
    pub l2: f64,
    pub success: bool,
    /// Trade-off constant of the reported C-W solution; 0 for FGSM and for
    /// inputs that needed no perturbation.
    pub c_used: f64,
    pub iterations: usize,
    pub goal: AttackGoal,
    /// One entry per C-W constant tried, in search order.
    pub trace: Vec<CStep>,
}

impl AttackResult {
    pub(crate) fn new(
        original: Vec<f64>,
        adversarial: Vec<f64>,
        success: bool,
        c_used: f64,
        iterations: usize,
        goal: AttackGoal,
        trace: Vec<CStep>,
    ) -> Self {
        let perturbation: Vec<f64> = adversarial.iter().zip(&original).map(|(a, o)| a - o).collect();
        let l2 = crate::numerics::l2_norm(&perturbation);
        Self {
            original,
            adversarial,
            perturbation,
            l2,
            success,
            c_used,
            iterations,
            goal,
            trace,
        }
    }
}
