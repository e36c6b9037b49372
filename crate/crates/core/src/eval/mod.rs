//! Perplexity, number-line decoding and the analysis reports.

pub mod analysis;
pub mod numberline;
pub mod perplexity;
pub mod report;

pub use analysis::{
    adjacent_neighbour_count, benford_reference, corpus_digit_distribution, digit_similarity, model_leading_digits,
    numeral_similarity, selection_csv, selection_rankings, strategy_selection, total_variation, BenfordTable,
    SelectionRow, SimilarityMatrix,
};
pub use numberline::{
    build_candidate_set, choose_decimal_limit, decode_number, predict_numerals, regression_metrics, score_corpus,
    Prediction, RegressionMetrics,
};
pub use perplexity::{adjusted_perplexity, adjusted_perplexity_redistributed, perplexity, ClassFilter, OovClass, OovSets};
pub use report::{evaluate, EvalReport, Evaluation, DEFAULT_COVERAGE};
