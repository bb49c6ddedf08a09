//! Optimization problems over measures: feature models, measures, the
//! square-loss objective with its first variation, and the optimality
//! certificate.

pub mod certificate;
pub mod features;
pub mod measure;
pub mod spec;

pub use certificate::{certify_optimality, Certificate, CertificateOptions};
pub use features::{
    make_dirichlet_features, make_relu_hom_features, make_scalar_features, DirichletFeatures, EmpiricalFeatures,
    FeatureMode, FeatureModel, ReluFeatures, ScalarFeatures, ScalarFunction, ScalarSource,
};
pub use measure::{Atom, DiscreteMeasure};
pub use spec::{generic_objective, generic_optimal_mass, generic_scalar_problem, FirstVariation, ProblemSpec};
