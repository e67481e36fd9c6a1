//! Linear probes on scattering features, the sign-gradient attack and the
//! angular-frequency analysis of trained weights.

mod angular;
mod attack;
mod linear;

pub use angular::{
    angular_spectrum, angular_spectrum_of, sparsify_angular, spectral_flatness, AngularSpectrum,
    SparsifyStats,
};
pub use attack::{fgsm_attack, fgsm_attack_with, AttackGoal, AttackOutcome};
pub use linear::{
    accuracy, accuracy_pixels, argmax, predict, predict_pixels, train_linear, train_linear_pixels,
    FeatureLayout, LinearModel, ModelMeta, Prediction, TrainConfig,
};
