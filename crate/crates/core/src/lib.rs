//! Best subset of groups selection for linear regression.
//!
//! Groups of predictors are selected by *group splicing*: a fixed-size active
//! set is improved by exchanging its weakest groups for the strongest inactive
//! ones while the least-squares loss drops by more than a threshold. The
//! model size is chosen with a group information criterion, either by a
//! warm-started sweep over sizes or by golden-section search.
//!
//! ```no_run
//! use bsgs::{design, selector, synth};
//!
//! let spec: synth::SyntheticSpec = serde_json::from_str(
//!     r#"{"n":200,"J":200,"K":3,"structure":"iid","sigma1":1,"s_star":5,"fixed_coefficient":2}"#,
//! ).unwrap();
//! let truth = synth::generate(&spec).unwrap();
//! let d = design::preprocess(&truth.design_raw, &truth.response, spec.structure_of_groups()).unwrap();
//! let fit = selector::sgsplicing_fit(&d, &selector::SelectorConfig::new(&d).with_t_max(15)).unwrap();
//! println!("selected {:?}", fit.best.support);
//! ```

pub mod design;
pub mod error;
pub mod exec;
pub mod linalg;
pub mod metrics;
pub mod oracle;
pub mod rng;
pub mod selector;
pub mod splicing;
pub mod study;
pub mod synth;

pub use error::{Error, ErrorKind, Result};
pub use exec::Execution;
