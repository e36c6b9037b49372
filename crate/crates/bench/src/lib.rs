//! Shared fixtures for the benchmarks.

use numlm::corpus::{tokenize, Document};

/// A small clinical-style corpus with mixed integers and decimals.
pub fn corpus(documents: usize) -> Vec<Document> {
    (0..documents)
        .map(|i| {
            tokenize(&format!(
                "the ejection fraction is {}.{} % and heart rate {} bpm , measured {} x {} mm",
                40 + i % 30,
                i % 10,
                55 + i % 50,
                1 + i % 17,
                3 + i % 11
            ))
        })
        .collect()
}
