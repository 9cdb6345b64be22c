//! Static Android malware detection on semantic token sequences.
//!
//! The pipeline reads an APK, decodes `AndroidManifest.xml` and every
//! `classesN.dex`, keeps the permissions, intent values and framework API
//! calls found in the feature dictionaries, removes repeated elements,
//! encodes the result as integer ids and classifies it with a
//! bidirectional LSTM.
//!
//! ```no_run
//! use apkseq::engine::{load_weights, PredictMode};
//! use apkseq::features::{LookupTable, DEFAULT_MAX_LEN};
//! use apkseq::scan::Detector;
//!
//! let table = LookupTable::load_dir("dicts".as_ref())?;
//! let weights = load_weights(&std::fs::read("model.sqmw")?)?;
//! let detector = Detector::new(table, weights, PredictMode::Dynamic, DEFAULT_MAX_LEN)?;
//! let report = detector.scan("app.apk", &std::fs::read("app.apk")?)?;
//! println!("{}", report.verdict);
//! # Ok::<(), Box<dyn std::error::Error>>(())
//! ```

pub mod apk;
pub mod bench;
pub mod dex;
pub mod engine;
pub mod features;
pub mod fixture;
pub mod manifest;
pub mod scan;
