//! Semantic reasoning: threshold rules, fuzzy classification, evidence
//! fusion, a Bayesian network, case retrieval, and the aggregator that
//! turns their outputs into ranked recommendations.

pub mod aggregate;
pub mod bayes;
pub mod cases;
pub mod engine;
pub mod evidence;
pub mod fuzzy;
pub mod rules;

pub use aggregate::aggregate;
pub use bayes::{
    bn_query, BayesNet, BnError, BnEvidence, Distribution, Irrigation, Moisture, Node, Weather,
};
pub use cases::{cbr_retrieve, Case, CaseBase};
pub use engine::{FuzzyConfig, FuzzyVariable, Inference, KnowledgeBase, Reasoner, Snapshot};
pub use evidence::{combine_all, conflict, ds_combine, Bba, BbaError, FocalSet};
pub use fuzzy::{
    fuzzy_classify, fuzzy_membership, soil_moisture_sets, Classification, FuzzyLabel, FuzzySet,
};
pub use rules::{evaluate_rules, Bound, Comparator, RuleSet, ThresholdRule};
