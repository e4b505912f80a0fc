//! On-policy rollouts as recorded by episode collection.

use ndarray::Array2;

use crate::envs::EnvState;
use crate::policy::{ActionVector, DirichletMatrix, PolicyLogits};

/// One environment step together with the sampling variables that produced it.
#[derive(Debug, Clone)]
pub struct Step {
    pub state: Vec<f64>,
    /// `None` when the action was not drawn through the Dirichlet argmin rule.
    pub dirichlet: Option<DirichletMatrix>,
    pub logits: PolicyLogits,
    pub action: ActionVector,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub done: bool,
}

#[derive(Debug, Clone, Default)]
pub struct Trajectory {
    pub steps: Vec<Step>,
    /// Environment snapshots taken before each step, when requested.
    pub snapshots: Vec<EnvState>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn rewards(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.reward).collect()
    }

    pub fn dones(&self) -> Vec<bool> {
        self.steps.iter().map(|s| s.done).collect()
    }

    pub fn total_reward(&self) -> f64 {
        self.steps.iter().map(|s| s.reward).sum()
    }

    /// States stacked one per row.
    pub fn state_matrix(&self) -> Array2<f64> {
        stack_rows(self.steps.iter().map(|s| s.state.as_slice()))
    }
}

pub(crate) fn stack_rows<'a>(rows: impl Iterator<Item = &'a [f64]>) -> Array2<f64> {
    let mut data = Vec::new();
    let mut n = 0;
    let mut width = 0;
    for r in rows {
        width = r.len();
        data.extend_from_slice(r);
        n += 1;
    }
    Array2::from_shape_vec((n, width), data).expect("rows of equal width")
}
