//! Bias-conditioned co-occurrence statistics and embedding evaluation.
//!
//! The crate is organised as a pipeline:
//!
//! * [`text`] normalises raw lines into token sentences and builds a [`text::Vocabulary`].
//! * [`scoring`] assigns every vocabulary word an integer bias score from two seed sets.
//! * [`cooccur`] counts word–context pairs, bucketing each context occurrence by the sign
//!   of the summed scores around it.
//! * [`correction`] rewrites the co-occurrence matrix so that neutralised contexts no longer
//!   depend on the bias bucket.
//! * [`glove`] trains GloVe vectors with AdaGrad from any co-occurrence matrix.
//! * [`weat`] and [`semantic`] evaluate the resulting vectors.
//! * [`synthetic`] generates the controlled stereotype corpus.
//! * [`pipeline`] and [`report`] wire the stages together.

pub mod cooccur;
pub mod correction;
pub mod error;
pub mod glove;
pub mod pipeline;
pub mod report;
pub mod scoring;
pub mod semantic;
pub mod synthetic;
pub mod text;
pub mod vectors;
pub mod weat;
pub mod wordlists;

pub use error::{Error, Result};
