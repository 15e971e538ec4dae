//! Certified robustness verification for feed-forward and convolutional
//! networks with sigmoid, tanh and arctan activations.
//!
//! Verification bounds every hidden neuron's pre-activation by backward
//! substitution of per-neuron linear relaxations and concretization over an
//! `ℓ∞` input ball. The relaxations can be guided by an under-approximation
//! of each neuron's reachable range, found by sampling or by one signed
//! gradient step, which places tangent points close to where the neuron
//! actually operates while staying sound on the full over-approximation.

pub mod activation;
pub mod dataset;
pub mod error;
pub mod model;
pub mod oracle;
pub mod propagation;
pub mod relaxation;
pub mod report;
pub mod under_approx;
pub mod verifier;
pub mod zoo;

pub use activation::Activation;
pub use error::{Error, Result};
pub use model::{Forward, LayerValues, Network};
pub use dataset::Sample;
pub use propagation::{InputBox, LayerDomains, MarginBound, PropagationConfig, SymbolicBound, UnderMethod};
pub use relaxation::{Baseline, DomainPair, Line, NeuronRelaxation, Strategy};
pub use under_approx::UnderDomains;

pub use verifier::{CertifiedBound, Status, VerificationOutcome};
