//! Concept activation vectors: concept sets, linear classifiers, directional
//! sensitivities and TCAV statistics.

mod classifier;
mod concept;
mod tcav;

pub use classifier::{train_cav, Cav, CavConfig, CavFile, CAV_FORMAT};
pub use concept::{
    ConceptFile, ConceptRecipe, ConceptSet, ConceptSource, Counter, LatentPool, DEFAULT_RANDOM_COUNTER,
};
pub use tcav::{
    score_sensitivities, sensitivities, sensitivity, sensitivity_field, sensitivity_field_at,
    sensitivity_of_drag, significance_test, tcav_score, two_sample_t_test, CounterSet,
    SignificanceConfig, TTest, Target, TcavReport, TcavRow, TcavScore, CSV_HEADER,
};
