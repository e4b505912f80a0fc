use std::ops::{Deref, DerefMut};

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Result};

/// Flat view of every weight and bias of a network, layer-major: for each
/// layer the row-major weight matrix followed by the bias vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterVector(pub Vec<f64>);

/// Gradient with the same layout as [`ParameterVector`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterGradient(pub Vec<f64>);

macro_rules! flat_vector {
    ($name:ident) => {
        impl $name {
            pub fn zeros(len: usize) -> Self {
                Self(vec![0.0; len])
            }

            pub fn into_inner(self) -> Vec<f64> {
                self.0
            }

            pub fn dot(&self, other: &[f64]) -> f64 {
                self.0.iter().zip(other).map(|(a, b)| a * b).sum()
            }

            pub fn norm(&self) -> f64 {
                self.dot(&self.0).sqrt()
            }

            /// `self += alpha * other`
            pub fn axpy(&mut self, alpha: f64, other: &[f64]) -> Result<()> {
                check_len(concat!(stringify!($name), "::axpy"), self.0.len(), other.len())?;
                for (a, b) in self.0.iter_mut().zip(other) {
                    *a += alpha * b;
                }
                Ok(())
            }

            pub fn scale(&mut self, alpha: f64) {
                self.0.iter_mut().for_each(|v| *v *= alpha);
            }

            pub fn is_finite(&self) -> bool {
                self.0.iter().all(|v| v.is_finite())
            }
        }

        impl Deref for $name {
            type Target = [f64];
            fn deref(&self) -> &[f64] {
                &self.0
            }
        }

        impl DerefMut for $name {
            fn deref_mut(&mut self) -> &mut [f64] {
                &mut self.0
            }
        }

        impl From<Vec<f64>> for $name {
            fn from(v: Vec<f64>) -> Self {
                Self(v)
            }
        }
    };
}

flat_vector!(ParameterVector);
flat_vector!(ParameterGradient);

impl ParameterGradient {
    pub fn negated(mut self) -> Self {
        self.scale(-1.0);
        self
    }
}
